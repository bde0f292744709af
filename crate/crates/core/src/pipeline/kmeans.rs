use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    /// Cluster index of each input point.
    pub labels: Vec<usize>,
    /// Planar-metre centroids.
    pub centroids: Vec<[f64; 2]>,
    /// Within-cluster sum of squares after each assignment step.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ClusterAssignment {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == cluster).collect()
    }
}

fn d2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Nearest centroid, ties to the lowest index.
pub fn nearest(p: &[f64; 2], centroids: &[[f64; 2]]) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = d2(p, c);
        if d < bd {
            bd = d;
            best = j;
        }
    }
    best
}

fn assign(points: &[[f64; 2]], centroids: &[[f64; 2]], labels: &mut [usize]) -> bool {
    let mut changed = false;
    for (p, l) in points.iter().zip(labels.iter_mut()) {
        let j = nearest(p, centroids);
        changed |= *l != j;
        *l = j;
    }
    changed
}

fn wcss(points: &[[f64; 2]], centroids: &[[f64; 2]], labels: &[usize]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| d2(p, &centroids[l])).sum()
}

fn distinct_count(points: &[[f64; 2]], cap: usize) -> usize {
    let mut seen: Vec<[u64; 2]> = Vec::new();
    for p in points {
        let key = [p[0].to_bits(), p[1].to_bits()];
        if !seen.contains(&key) {
            seen.push(key);
            if seen.len() >= cap {
                break;
            }
        }
    }
    seen.len()
}

/// Lloyd's algorithm from k-means++ seeding. Stops when assignments stop
/// changing or after `max_iters` update steps. An emptied cluster takes
/// over the point farthest from its current centroid.
pub fn kmeans_geo(points: &[[f64; 2]], k: usize, seed: u64, max_iters: usize) -> Result<ClusterAssignment, PipelineError> {
    if k == 0 {
        return Err(PipelineError::Config("k must be at least 1".into()));
    }
    if distinct_count(points, k) < k {
        return Err(PipelineError::Config(format!("k = {k} exceeds the number of distinct locations")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<[f64; 2]> = vec![points[rng.random_range(0..points.len())]];
    let mut dist: Vec<f64> = points.iter().map(|p| d2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = None;
        for (i, &d) in dist.iter().enumerate() {
            if d > 0.0 {
                chosen = Some(i);
                if pick < d {
                    break;
                }
                pick -= d;
            }
        }
        let c = points[chosen.expect("a point off every centroid exists")];
        centroids.push(c);
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(d2(p, &c));
        }
    }
    let mut labels = vec![usize::MAX; points.len()];
    assign(points, &centroids, &mut labels);
    repair_empty(points, &mut centroids, &mut labels);
    let mut history = vec![wcss(points, &centroids, &labels)];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l][0] += p[0];
            sums[l][1] += p[1];
            counts[l] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64];
            }
        }
        let changed = assign(points, &centroids, &mut labels);
        let repaired = repair_empty(points, &mut centroids, &mut labels);
        history.push(wcss(points, &centroids, &labels));
        if !changed && !repaired {
            converged = true;
            break;
        }
    }
    Ok(ClusterAssignment { k, labels, centroids, wcss_history: history, iterations, converged })
}

fn repair_empty(points: &[[f64; 2]], centroids: &mut [[f64; 2]], labels: &mut [usize]) -> bool {
    let k = centroids.len();
    let mut repaired = false;
    for _ in 0..k {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
        let far = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| {
                d2(&points[a], &centroids[labels[a]])
                    .total_cmp(&d2(&points[b], &centroids[labels[b]]))
                    .then(b.cmp(&a))
            })
            .expect("more points than clusters");
        centroids[empty] = points[far];
        assign(points, centroids, labels);
        repaired = true;
    }
    repaired
}
