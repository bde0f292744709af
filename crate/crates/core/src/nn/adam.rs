//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use super::{NnError, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let ok = self.learning_rate > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::Config(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

/// Moment estimates for an ordered list of parameter arrays.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, sizes: impl IntoIterator<Item = usize>) -> Result<Self, NnError> {
        config.validate()?;
        let sizes: Vec<usize> = sizes.into_iter().collect();
        Ok(Self {
            config,
            step_count: 0,
            first_moment: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        })
    }

    pub fn for_tensors<'a>(
        config: AdamConfig,
        params: impl IntoIterator<Item = &'a Tensor<T>>,
    ) -> Result<Self, NnError> {
        Self::new(config, params.into_iter().map(Tensor::numel))
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Vec<T>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<T>] {
        &self.second_moment
    }

    /// One update over `(parameter, gradient)` slice pairs. A non-finite
    /// gradient anywhere rejects the whole step; nothing is modified.
    pub fn step_slices(&mut self, pairs: &mut [(&mut [T], &[T])]) -> Result<(), NnError> {
        if pairs.len() != self.first_moment.len() {
            return Err(NnError::Shape(format!(
                "optimizer tracks {} parameters, got {}",
                self.first_moment.len(),
                pairs.len()
            )));
        }
        for (i, (p, g)) in pairs.iter().enumerate() {
            if p.len() != self.first_moment[i].len() || g.len() != p.len() {
                return Err(NnError::Shape(format!("parameter {i} changed size")));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient { parameter: i });
            }
        }
        self.step_count += 1;
        let c = self.config;
        let t = self.step_count as i32;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::of(1.0 - c.beta1.powi(t));
        let bc2 = T::of(1.0 - c.beta2.powi(t));
        let lr = T::of(c.learning_rate);
        let eps = T::of(c.epsilon);
        for (i, (p, g)) in pairs.iter_mut().enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + (T::one() - b1) * gj;
                v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Update tensors in place from their gradient buffers.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>]) -> Result<(), NnError> {
        let mut missing = None;
        for (i, p) in params.iter().enumerate() {
            if p.grad().is_none() {
                missing = Some(i);
                break;
            }
        }
        if let Some(i) = missing {
            return Err(NnError::MissingGradient(i));
        }
        let mut grads: Vec<Vec<T>> = Vec::with_capacity(params.len());
        for p in params.iter() {
            grads.push(p.grad().expect("checked").to_vec());
        }
        let mut pairs: Vec<(&mut [T], &[T])> = params
            .iter_mut()
            .zip(&grads)
            .map(|(p, g)| (p.data_mut(), g.as_slice()))
            .collect();
        self.step_slices(&mut pairs)
    }
}

/// Functional form: one Adam update of `params` given `grads`.
pub fn adam_step<T: Real>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
) -> Result<(), NnError> {
    state.step_slices(&mut [(params, grads)])
}
