//! Binary checkpoint files.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! "CLTR" | version | len | JSON header (kind, config, metadata)
//! then per tensor: len | UTF-8 name | rank | dims... | f32 values
//! ```
//!
//! Tensors run to the end of the file; the set of expected names follows
//! from the configuration in the header.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_network, normalize, center_crop, ImagePatch, ModelKind, NetConfig, NetError};
use crate::nn::{Head, Network, Tensor};

pub const MAGIC: &[u8; 4] = b"CLTR";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epochs: usize,
    pub final_validation_accuracy: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: ModelKind,
    config: NetConfig,
    metadata: TrainingMetadata,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (supported: {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("truncated checkpoint at byte {offset} while reading {what}")]
    Truncated { what: String, offset: usize },
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint tensor {name}: {problem}")]
    Tensor { name: String, problem: String },
    #[error("checkpoint is missing tensor {0}")]
    MissingTensor(String),
    #[error("checkpoint/config mismatch: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// A trained (or freshly initialized) network with its role and provenance.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    kind: ModelKind,
    config: NetConfig,
    pub metadata: TrainingMetadata,
    network: Network<f32>,
}

impl Checkpoint {
    pub fn new(
        kind: ModelKind,
        config: NetConfig,
        network: Network<f32>,
        metadata: TrainingMetadata,
    ) -> Result<Self, CheckpointError> {
        if config.head != kind.head() {
            return Err(CheckpointError::Mismatch(format!(
                "{kind} needs head {:?}, config has {:?}",
                kind.head(),
                config.head
            )));
        }
        let kinds = config.layer_kinds().map_err(|e| CheckpointError::Mismatch(e.to_string()))?;
        if network.kinds() != kinds {
            return Err(CheckpointError::Mismatch("network layers differ from config".into()));
        }
        Ok(Self { kind, config, metadata, network })
    }

    pub fn initialize(kind: ModelKind, config: NetConfig, seed: u64) -> Result<Self, NetError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let network = build_network(&config, &mut rng)?;
        let metadata = TrainingMetadata { seed, ..Default::default() };
        Ok(Self::new(kind, config, network, metadata)?)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn network(&self) -> &Network<f32> {
        &self.network
    }

    pub fn head(&self) -> Head {
        self.config.head
    }

    pub fn into_network(self) -> Network<f32> {
        self.network
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header { kind: self.kind, config: self.config.clone(), metadata: self.metadata.clone() };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_u32(&mut out, json.len());
        out.extend_from_slice(&json);
        for nt in self.network.named_tensors() {
            put_u32(&mut out, nt.name.len());
            out.extend_from_slice(nt.name.as_bytes());
            put_u32(&mut out, nt.tensor.rank());
            for &d in nt.tensor.shape() {
                put_u32(&mut out, d);
            }
            for v in nt.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let found = r.u32("version")?;
        if found != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion { found });
        }
        let len = r.u32("header length")? as usize;
        let header: Header = serde_json::from_slice(r.take(len, "header")?)
            .map_err(|e| CheckpointError::Header(e.to_string()))?;
        // Initialization values are overwritten below; the seed is irrelevant.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut network: Network<f32> = build_network(&header.config, &mut rng)
            .map_err(|e| CheckpointError::Header(e.to_string()))?;
        let expected: Vec<(String, Vec<usize>)> = network
            .named_tensors()
            .into_iter()
            .map(|t| (t.name, t.tensor.shape().to_vec()))
            .collect();
        let mut seen = vec![false; expected.len()];
        while !r.at_end() {
            let name_len = r.u32("tensor name length")? as usize;
            let name = String::from_utf8(r.take(name_len, "tensor name")?.to_vec())
                .map_err(|_| CheckpointError::Header("tensor name is not UTF-8".into()))?;
            let slot = expected.iter().position(|(n, _)| *n == name).ok_or_else(|| {
                CheckpointError::Tensor { name: name.clone(), problem: "not part of this architecture".into() }
            })?;
            if seen[slot] {
                return Err(CheckpointError::Tensor { name, problem: "appears twice".into() });
            }
            let rank = r.u32(&format!("rank of {name}"))? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32(&format!("dims of {name}"))? as usize);
            }
            if dims != expected[slot].1 {
                return Err(CheckpointError::Tensor {
                    name,
                    problem: format!("shape {dims:?}, expected {:?}", expected[slot].1),
                });
            }
            let n: usize = dims.iter().product();
            let raw = r.take(n * 4, &format!("values of {name}"))?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            network
                .set_tensor(&name, values)
                .map_err(|e| CheckpointError::Tensor { name: name.clone(), problem: e.to_string() })?;
            seen[slot] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(CheckpointError::MissingTensor(expected[i].0.clone()));
        }
        Self::new(header.kind, header.config, network, header.metadata)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        crate::io::write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Class probabilities for one preprocessed `3 x side x side` image, in
    /// evaluation mode. A sigmoid head yields `[p, 1 - p]`.
    pub fn predict(&self, image: &Tensor<f32>) -> Result<Vec<f32>, NetError> {
        let side = self.config.input_side;
        if image.shape() != [self.config.input_channels, side, side] {
            return Err(NetError::Config(format!(
                "{} model expects input {:?}, got {:?}",
                self.kind,
                [self.config.input_channels, side, side],
                image.shape()
            )));
        }
        let logits = self.network.infer(image)?;
        Ok(self.config.head.probabilities(logits.data()))
    }

    /// Batched evaluation; every tensor must be `3 x side x side`.
    pub fn predict_batch(&self, images: &[&Tensor<f32>]) -> Result<Vec<Vec<f32>>, NetError> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let side = self.config.input_side;
        let c = self.config.input_channels;
        let per = c * side * side;
        let mut data = Vec::with_capacity(images.len() * per);
        for img in images {
            if img.shape() != [c, side, side] {
                return Err(NetError::Config(format!("unexpected input shape {:?}", img.shape())));
            }
            data.extend_from_slice(img.data());
        }
        let batch = Tensor::new(vec![images.len(), c, side, side], data)?;
        let logits = self.network.infer(&batch)?;
        let width = self.config.head.num_logits();
        Ok(logits.data().chunks(width).map(|z| self.config.head.probabilities(z)).collect())
    }

    /// Crop, normalize and classify a raw image.
    pub fn predict_image(&self, image: &ImagePatch) -> Result<Vec<f32>, NetError> {
        let crop = center_crop(image, self.config.input_side)?;
        self.predict(&normalize(&crop))
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Truncated { what: what.to_string(), offset: self.pos });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_input(seed: u32) -> Tensor<f32> {
        Tensor::from_fn(vec![3, 112, 112], |i| (((i as u32).wrapping_mul(2654435761u32) ^ seed) % 1000) as f32 / 1000.0)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = Checkpoint::initialize(ModelKind::Stage1, ModelKind::Stage1.default_config(), 5).unwrap();
        let x = sample_input(1);
        let before = ck.predict(&x).unwrap();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        let after = back.predict(&x).unwrap();
        assert_eq!(before.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   after.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(back.kind(), ModelKind::Stage1);
        assert_eq!(back.metadata.seed, 5);
    }

    #[test]
    fn header_fields_are_little_endian() {
        let ck = Checkpoint::initialize(ModelKind::Stage2Tree, ModelKind::Stage2Tree.default_config(), 1).unwrap();
        let b = ck.to_bytes();
        assert_eq!(&b[..4], b"CLTR");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        let len = u32::from_le_bytes([b[8], b[9], b[10], b[11]]) as usize;
        let json: serde_json::Value = serde_json::from_slice(&b[12..12 + len]).unwrap();
        assert_eq!(json["kind"], "stage2_tree");
    }

    #[test]
    fn truncated_file_names_the_tensor() {
        let ck = Checkpoint::initialize(ModelKind::Stage1, ModelKind::Stage1.default_config(), 2).unwrap();
        let mut b = ck.to_bytes();
        b.truncate(b.len() - 10);
        let err = Checkpoint::from_bytes(&b).unwrap_err().to_string();
        assert!(err.contains("fc.bias"), "{err}");
        assert!(err.contains("byte"), "{err}");
    }

    #[test]
    fn version_and_magic_errors() {
        let ck = Checkpoint::initialize(ModelKind::Stage1, ModelKind::Stage1.default_config(), 2).unwrap();
        let mut b = ck.to_bytes();
        b[4] = 2;
        assert!(matches!(Checkpoint::from_bytes(&b), Err(CheckpointError::UnsupportedVersion { found: 2 })));
        b[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&b), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn missing_tensor_detected() {
        let ck = Checkpoint::initialize(ModelKind::Stage2Building, ModelKind::Stage2Building.default_config(), 2).unwrap();
        let b = ck.to_bytes();
        // drop the final tensor (fc.bias: name + rank + 1 dim + 1 value)
        let name = ck.network().named_tensors().last().unwrap().name.clone();
        let tail = 4 + name.len() + 4 + 4 + 4;
        let err = Checkpoint::from_bytes(&b[..b.len() - tail]).unwrap_err();
        assert!(matches!(err, CheckpointError::MissingTensor(ref n) if *n == name), "{err}");
    }

    #[test]
    fn rejects_kind_head_mismatch_and_bad_input() {
        let net = build_network(&ModelKind::Stage1.default_config(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(Checkpoint::new(ModelKind::SingleStage, ModelKind::Stage1.default_config(), net, Default::default()).is_err());
        let ck = Checkpoint::initialize(ModelKind::Stage1, ModelKind::Stage1.default_config(), 2).unwrap();
        assert!(ck.predict(&Tensor::zeros(vec![3, 64, 64])).is_err());
    }

    #[test]
    fn sigmoid_head_probabilities_complement() {
        let ck = Checkpoint::initialize(ModelKind::Stage2Tree, ModelKind::Stage2Tree.default_config(), 9).unwrap();
        let p = ck.predict(&sample_input(3)).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[1], 1.0 - p[0]);
        let again = ck.predict(&sample_input(3)).unwrap();
        assert_eq!(p, again);
        let batch = ck.predict_batch(&[&sample_input(3), &sample_input(4)]).unwrap();
        assert_eq!(batch[0], p);
    }
}
