//! Central finite-difference checks of the analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{head_loss, LayerKind, Mode, Network, NnError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Gradients smaller than this in magnitude are compared on an absolute
    /// scale: the relative error divides by `max(|analytic|, |numeric|, floor)`.
    pub floor: f64,
    /// Check at most this many randomly chosen coordinates per tensor.
    pub max_coords_per_tensor: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { epsilon: 1e-6, floor: 1e-5, max_coords_per_tensor: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WorstCoordinate {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckResult {
    pub case: String,
    pub checked: usize,
    /// Coordinates sitting on a non-differentiable point, not compared.
    pub kinks: usize,
    pub max_rel_error: f64,
    pub worst: Option<WorstCoordinate>,
}

/// One network, input batch and targets to check.
#[derive(Clone, Debug)]
pub struct GradCase {
    pub name: String,
    pub network: Network<f64>,
    pub input: Tensor<f64>,
    pub targets: Vec<usize>,
    pub mode: Mode,
    /// Seed of the dropout masks; the same masks are used for every evaluation.
    pub seed: u64,
}

/// Loss and the branch signature of the pass that produced it.
fn loss(net: &Network<f64>, case: &GradCase, input: &Tensor<f64>) -> Result<(f64, u64), NnError> {
    let mut n = net.clone();
    let logits = n.forward(input, case.mode, &mut ChaCha8Rng::seed_from_u64(case.seed))?;
    let head = n.head().ok_or_else(|| NnError::Config("network has no head".into()))?;
    let sig = n.branch_signature().expect("forward recorded");
    Ok((head_loss(head, &logits, &case.targets)?.0, sig))
}

/// Central difference of `f` at step `h`, shrinking the step while the two
/// evaluations straddle a ReLU or pooling switch. `None` when every step
/// straddles one: the loss is not differentiable there.
fn central_difference(
    base_sig: u64,
    h: f64,
    mut f: impl FnMut(f64) -> Result<(f64, u64), NnError>,
) -> Result<Option<f64>, NnError> {
    let mut step = h;
    for _ in 0..KINK_RETRIES {
        let (lp, sp) = f(step)?;
        let (lm, sm) = f(-step)?;
        if sp == base_sig && sm == base_sig {
            return Ok(Some((lp - lm) / (2.0 * step)));
        }
        step /= 10.0;
    }
    Ok(None)
}

/// Step reductions tried before a coordinate is declared a kink.
pub const KINK_RETRIES: usize = 3;

fn coords(len: usize, cfg: &GradCheckConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match cfg.max_coords_per_tensor {
        Some(m) if m < len => {
            let mut v = sample(rng, len, m).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..len).collect(),
    }
}

/// Compare backprop against central differences for every parameter and
/// the input.
pub fn check_case(case: &GradCase, cfg: &GradCheckConfig) -> Result<GradCheckResult, NnError> {
    let mut net = case.network.clone();
    net.zero_grad();
    let logits = net.forward(&case.input, case.mode, &mut ChaCha8Rng::seed_from_u64(case.seed))?;
    let head = net.head().ok_or_else(|| NnError::Config("network has no head".into()))?;
    let (_, g) = head_loss(head, &logits, &case.targets)?;
    let base_sig = net.branch_signature().expect("forward recorded");
    let input_grad = net.backward(&g)?;

    let mut pick = ChaCha8Rng::seed_from_u64(case.seed ^ 0x9e37_79b9);
    let h = cfg.epsilon;
    let mut result = GradCheckResult { case: case.name.clone(), checked: 0, kinks: 0, max_rel_error: 0.0, worst: None };
    let mut record = |tensor: String, index: usize, analytic: f64, numeric: Option<f64>| {
        let Some(numeric) = numeric else {
            result.kinks += 1;
            return;
        };
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(cfg.floor);
        result.checked += 1;
        if rel > result.max_rel_error || result.worst.is_none() {
            result.max_rel_error = result.max_rel_error.max(rel);
            result.worst = Some(WorstCoordinate { tensor, index, analytic, numeric });
        }
    };

    let names: Vec<String> =
        case.network.named_tensors().into_iter().filter(|t| t.learnable).map(|t| t.name).collect();
    let grads: Vec<Vec<f64>> =
        net.parameters().map(|p| p.grad().map_or_else(|| vec![0.0; p.numel()], <[f64]>::to_vec)).collect();
    for (j, (name, grad)) in names.iter().zip(&grads).enumerate() {
        for i in coords(grad.len(), cfg, &mut pick) {
            let numeric = central_difference(base_sig, h, |d| {
                let mut n = case.network.clone();
                n.parameters_mut()[j].data_mut()[i] += d;
                loss(&n, case, &case.input)
            })?;
            record(name.clone(), i, grad[i], numeric);
        }
    }
    for i in coords(case.input.numel(), cfg, &mut pick) {
        let numeric = central_difference(base_sig, h, |d| {
            let mut x = case.input.clone_values();
            x.data_mut()[i] += d;
            loss(&case.network, case, &x)
        })?;
        record("input".into(), i, input_grad.data()[i], numeric);
    }
    Ok(result)
}

/// A random small network. `variant` selects which optional layer kinds
/// appear, so consecutive variants cover every kind.
pub fn random_case(seed: u64, variant: usize) -> Result<GradCase, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bit = |b: usize| variant >> b & 1 == 1;
    let batch = rng.random_range(2..=3);
    let mut c = rng.random_range(1..=3);
    let mut side = rng.random_range(5..=8);
    let input_shape = vec![batch, c, side, side];
    let mut kinds = Vec::new();
    let blocks = 1 + bit(0) as usize;
    for b in 0..blocks {
        let same = !(b == 0 && bit(1));
        let kernel_size = if same { [1, 3][rng.random_range(0..2)] } else { 2 };
        let out = rng.random_range(1..=4);
        kinds.push(LayerKind::Conv { in_channels: c, out_channels: out, kernel_size, same_padding: same, bias: !bit(2) || b > 0 });
        c = out;
        if !same {
            side -= kernel_size - 1;
        }
        if bit(3) || b > 0 {
            kinds.push(LayerKind::Relu);
        }
        if bit(4) {
            kinds.push(LayerKind::BatchNorm { channels: c, momentum: 0.1, epsilon: 1e-5 });
        }
        if side >= 2 && (bit(5) || b == 0) {
            kinds.push(LayerKind::MaxPool { window: 2, stride: 2 });
            side /= 2;
        }
    }
    if bit(6) {
        kinds.push(LayerKind::Dropout { probability: 0.4 });
    }
    let sigmoid = bit(7);
    let classes = if sigmoid { 1 } else { rng.random_range(2..=4) };
    kinds.push(LayerKind::FullyConnected { in_features: c * side * side, out_features: classes });
    kinds.push(if sigmoid { LayerKind::SigmoidHead } else { LayerKind::SoftmaxHead });
    let mut network = Network::new(&kinds, &mut rng)?;
    // nonzero biases keep pre-activations off exact zeros
    for p in network.parameters_mut() {
        for v in p.data_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let input = Tensor::from_fn(input_shape, |_| rng.random_range(-1.0..1.0));
    let n_classes = if sigmoid { 2 } else { classes };
    let targets = (0..batch).map(|_| rng.random_range(0..n_classes)).collect();
    Ok(GradCase { name: format!("random-{variant}-{seed:x}"), network, input, targets, mode: Mode::Train, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variants_cover_all_kinds() {
        let mut seen = std::collections::BTreeSet::new();
        for v in 0..20 {
            for k in random_case(v as u64, v * 13).unwrap().network.kinds() {
                let tag = match k {
                    LayerKind::Conv { same_padding: false, .. } => "conv-valid".to_string(),
                    LayerKind::Conv { bias: false, .. } => "conv-nobias".to_string(),
                    other => format!("{other:?}").split([' ', '{']).next().unwrap().to_string(),
                };
                seen.insert(tag);
            }
        }
        for want in ["Conv", "conv-valid", "conv-nobias", "MaxPool", "Relu", "BatchNorm", "Dropout", "FullyConnected", "SoftmaxHead", "SigmoidHead"] {
            assert!(seen.contains(want), "{want} missing from {seen:?}");
        }
    }

    #[test]
    fn small_cases_pass() {
        for v in 0..8 {
            let case = random_case(100 + v as u64, v * 37).unwrap();
            let r = check_case(&case, &GradCheckConfig::default()).unwrap();
            assert!(r.max_rel_error <= 1e-4, "{r:?}");
        }
    }

    #[test]
    fn coordinate_budget() {
        let case = random_case(5, 0).unwrap();
        let cfg = GradCheckConfig { max_coords_per_tensor: Some(3), ..Default::default() };
        let r = check_case(&case, &cfg).unwrap();
        let tensors = case.network.parameters().count() + 1;
        let cap: usize = case.network.parameters().map(|p| p.numel().min(3)).sum::<usize>() + case.input.numel().min(3);
        assert_eq!(r.checked + r.kinks, cap);
        assert!(r.checked <= 3 * tensors);
    }
}
