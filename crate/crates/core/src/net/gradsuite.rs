//! The gradient suite: randomized small networks plus the full default
//! architecture of every model kind, all in double precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_network, ModelKind, NetError};
use crate::nn::gradcheck::{check_case, random_case, GradCase, GradCheckConfig, GradCheckResult};
use crate::nn::{Mode, Network, Tensor};

/// Number of randomized networks in [`gradient_suite`].
pub const RANDOM_CASES: usize = 24;
/// Coordinates checked per tensor of the full architecture.
pub const FULL_ARCH_COORDS: usize = 24;

/// The full default network of `kind` on a batch of two images.
pub fn default_architecture_case(kind: ModelKind, seed: u64) -> Result<GradCase, NetError> {
    let cfg = kind.default_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let network: Network<f64> = build_network(&cfg, &mut rng)?;
    let s = cfg.input_side;
    let input = Tensor::from_fn(vec![2, cfg.input_channels, s, s], |_| rng.random_range(-1.0..1.0));
    let classes = kind.classes().len();
    let targets = vec![0, classes - 1];
    Ok(GradCase { name: format!("default-{kind}"), network, input, targets, mode: Mode::Train, seed })
}

/// Every case of the suite with its check budget.
pub fn suite_cases(seed: u64) -> Result<Vec<(GradCase, GradCheckConfig)>, NetError> {
    let mut out = Vec::new();
    for i in 0..RANDOM_CASES {
        let case = random_case(seed.wrapping_mul(1_000_003).wrapping_add(i as u64), i * 11 + seed as usize)?;
        out.push((case, GradCheckConfig::default()));
    }
    let full = GradCheckConfig { max_coords_per_tensor: Some(FULL_ARCH_COORDS), ..Default::default() };
    for kind in [ModelKind::Stage1, ModelKind::Stage2Tree, ModelKind::SingleStage] {
        out.push((default_architecture_case(kind, seed ^ kind as u64)?, full));
    }
    Ok(out)
}

pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheckResult>, NetError> {
    suite_cases(seed)?.into_iter().map(|(c, cfg)| Ok(check_case(&c, &cfg)?)).collect()
}
