//! Imagery providers and the fetch step.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GeoPoint, ManifestEntry, SampleStatus};
use crate::net::ImagePatch;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FetchError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("transport: {0}")]
    Transport(String),
    #[error("configuration: {0}")]
    Config(String),
}

impl FetchError {
    fn retryable(&self) -> bool {
        match self {
            FetchError::Status(s) => *s == 429 || *s >= 500,
            FetchError::Transport(_) => true,
            _ => false,
        }
    }
}

/// Source of encoded image bytes for a location.
pub trait ImageProvider: Send + Sync {
    /// `key` identifies the sample (record id or grid cell); providers may
    /// use either it or the coordinates.
    fn fetch(&self, key: &str, point: &GeoPoint) -> Result<Vec<u8>, FetchError>;
}

/// File-system safe form of an id.
pub fn safe_file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect()
}

/// Reads `{dir}/{safe id}.png` (or `.jpg` / `.jpeg`).
#[derive(Clone, Debug)]
pub struct LocalDirProvider {
    dir: PathBuf,
}

impl LocalDirProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl ImageProvider for LocalDirProvider {
    fn fetch(&self, key: &str, _point: &GeoPoint) -> Result<Vec<u8>, FetchError> {
        let stem = safe_file_stem(key);
        for ext in ["png", "jpg", "jpeg"] {
            let p = self.dir.join(format!("{stem}.{ext}"));
            if p.is_file() {
                return std::fs::read(&p).map_err(|e| FetchError::Transport(format!("{}: {e}", p.display())));
            }
        }
        Err(FetchError::NotFound(format!("{}/{stem}.png", self.dir.display())))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 4, initial_backoff_ms: 500, max_backoff_ms: 8_000 }
    }
}

impl RetryPolicy {
    /// Delay after failed attempt number `attempt` (0-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.initial_backoff_ms.saturating_mul(1u64 << attempt.min(32)).min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }

    pub fn run<T>(&self, mut f: impl FnMut() -> Result<T, FetchError>) -> Result<T, FetchError> {
        let mut attempt = 0;
        loop {
            match f() {
                Err(e) if e.retryable() && attempt + 1 < self.max_attempts.max(1) => {
                    log::debug!("attempt {} failed ({e}), retrying", attempt + 1);
                    std::thread::sleep(self.backoff(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Spaces out calls to at most `per_second` per second, across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    /// `per_second <= 0` disables limiting.
    pub fn new(per_second: f64) -> Self {
        let interval = if per_second > 0.0 { Duration::from_secs_f64(1.0 / per_second) } else { Duration::ZERO };
        Self { interval, next: Mutex::new(Instant::now()) }
    }

    pub fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Settings for [`UrlTemplateProvider`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UrlProviderConfig {
    /// May contain `{lat}`, `{lon}` and `{key}`.
    pub url_template: String,
    /// Environment variable holding the API key substituted for `{key}`.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_rate")]
    pub requests_per_second: f64,
}

fn default_timeout() -> f64 {
    30.0
}

fn default_rate() -> f64 {
    10.0
}

pub struct UrlTemplateProvider {
    template: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    limiter: RateLimiter,
    agent: ureq::Agent,
}

/// Substitute `{lat}` and `{lon}` with 6-decimal coordinates, and `{key}`.
pub fn fill_template(template: &str, point: &GeoPoint, key: Option<&str>) -> String {
    let mut s = template.replace("{lat}", &format!("{:.6}", point.lat())).replace("{lon}", &format!("{:.6}", point.lon()));
    if let Some(k) = key {
        s = s.replace("{key}", k);
    }
    s
}

impl UrlTemplateProvider {
    pub fn new(config: &UrlProviderConfig) -> Result<Self, FetchError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| FetchError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        if config.url_template.contains("{key}") && api_key.is_none() {
            return Err(FetchError::Config("template uses {key} but no api_key_env is configured".into()));
        }
        if !(config.timeout_secs > 0.0) {
            return Err(FetchError::Config("timeout_secs must be positive".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            template: config.url_template.clone(),
            api_key,
            retry: config.retry,
            limiter: RateLimiter::new(config.requests_per_second),
            agent,
        })
    }

    pub fn url_for(&self, point: &GeoPoint) -> String {
        fill_template(&self.template, point, self.api_key.as_deref())
    }
}

impl ImageProvider for UrlTemplateProvider {
    fn fetch(&self, _key: &str, point: &GeoPoint) -> Result<Vec<u8>, FetchError> {
        let url = self.url_for(point);
        self.retry.run(|| {
            self.limiter.acquire();
            let mut resp = self.agent.get(&url).call().map_err(|e| FetchError::Transport(e.to_string()))?;
            let status = resp.status().as_u16();
            if status == 404 {
                return Err(FetchError::NotFound(format!("HTTP 404 for {}", redact(&url, self.api_key.as_deref()))));
            }
            if !(200..300).contains(&status) {
                return Err(FetchError::Status(status));
            }
            resp.body_mut()
                .with_config()
                .limit(64 << 20)
                .read_to_vec()
                .map_err(|e| FetchError::Transport(e.to_string()))
        })
    }
}

fn redact(url: &str, key: Option<&str>) -> String {
    match key {
        Some(k) if !k.is_empty() => url.replace(k, "***"),
        _ => url.to_string(),
    }
}

/// A fetched and persisted image.
#[derive(Clone, Debug)]
pub struct FetchedImage {
    pub image: ImagePatch,
    pub path: PathBuf,
    pub byte_size: u64,
}

/// Fetch, decode and check the size of one image, then persist the encoded
/// bytes atomically to `out_dir`. Nothing is written on failure.
pub fn fetch_image(
    id: &str,
    point: &GeoPoint,
    provider: &dyn ImageProvider,
    out_dir: &Path,
    expected_side: usize,
) -> Result<FetchedImage, (SampleStatus, String)> {
    let bytes = provider.fetch(id, point).map_err(|e| (SampleStatus::FetchFailed, e.to_string()))?;
    let image = ImagePatch::decode(&bytes).map_err(|e| (SampleStatus::Invalid, e.to_string()))?;
    if image.width() != expected_side || image.height() != expected_side {
        return Err((
            SampleStatus::Invalid,
            format!("image is {}x{}, expected {expected_side}x{expected_side}", image.width(), image.height()),
        ));
    }
    let ext = if bytes.starts_with(&[0x89, b'P', b'N', b'G']) { "png" } else { "jpg" };
    let path = out_dir.join(format!("{}.{ext}", safe_file_stem(id)));
    crate::io::write_atomic(&path, &bytes).map_err(|e| (SampleStatus::FetchFailed, format!("persist: {e}")))?;
    Ok(FetchedImage { image, path, byte_size: bytes.len() as u64 })
}

/// Fetch every `(id, point)` with at most `parallelism` concurrent requests.
/// Entries come back in input order.
pub fn fetch_all(
    items: &[(String, GeoPoint)],
    provider: &dyn ImageProvider,
    out_dir: &Path,
    expected_side: usize,
    parallelism: usize,
) -> std::io::Result<Vec<ManifestEntry>> {
    std::fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(std::io::Error::other)?;
    let entries = pool.install(|| {
        items
            .par_iter()
            .map(|(id, point)| {
                let fetched_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
                match fetch_image(id, point, provider, out_dir, expected_side) {
                    Ok(f) => ManifestEntry {
                        id: id.clone(),
                        image_path: Some(f.path),
                        byte_size: Some(f.byte_size),
                        fetched_at: Some(fetched_at),
                        status: SampleStatus::Kept,
                        reason: None,
                    },
                    Err((status, reason)) => {
                        log::warn!("{id}: {reason}");
                        ManifestEntry {
                            id: id.clone(),
                            image_path: None,
                            byte_size: None,
                            fetched_at: Some(fetched_at),
                            status,
                            reason: Some(reason),
                        }
                    }
                }
            })
            .collect()
    });
    Ok(entries)
}
