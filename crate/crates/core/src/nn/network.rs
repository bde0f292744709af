use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{self, BatchNormTrace};
use super::{Head, NnError, Real, Tensor};

/// Layer descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        same_padding: bool,
        bias: bool,
    },
    MaxPool {
        window: usize,
        stride: usize,
    },
    Relu,
    BatchNorm {
        channels: usize,
        momentum: f64,
        epsilon: f64,
    },
    Dropout {
        probability: f64,
    },
    FullyConnected {
        in_features: usize,
        out_features: usize,
    },
    SoftmaxHead,
    SigmoidHead,
}

impl LayerKind {
    pub fn validate(&self) -> Result<(), NnError> {
        match *self {
            LayerKind::Conv { kernel_size, same_padding, in_channels, out_channels, .. } => {
                if kernel_size == 0 || in_channels == 0 || out_channels == 0 {
                    return Err(NnError::Config(format!("degenerate conv {self:?}")));
                }
                if same_padding && kernel_size % 2 == 0 {
                    return Err(NnError::Config(format!(
                        "same padding needs an odd kernel, got {kernel_size}"
                    )));
                }
            }
            LayerKind::MaxPool { window, stride } if window == 0 || stride == 0 => {
                return Err(NnError::Config("pool window and stride must be positive".into()));
            }
            LayerKind::BatchNorm { channels, momentum, epsilon } => {
                if channels == 0 || !(0.0..=1.0).contains(&momentum) || epsilon <= 0.0 {
                    return Err(NnError::Config(format!("invalid batch norm {self:?}")));
                }
            }
            LayerKind::Dropout { probability } if !(0.0..1.0).contains(&probability) => {
                return Err(NnError::Config(format!(
                    "dropout probability {probability} outside [0,1)"
                )));
            }
            LayerKind::FullyConnected { in_features, out_features }
                if in_features == 0 || out_features == 0 =>
            {
                return Err(NnError::Config("degenerate fully connected layer".into()));
            }
            _ => {}
        }
        Ok(())
    }

    fn tag(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::MaxPool { .. } => "max_pool",
            LayerKind::Relu => "relu",
            LayerKind::BatchNorm { .. } => "batch_norm",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::FullyConnected { .. } => "fc",
            LayerKind::SoftmaxHead => "softmax",
            LayerKind::SigmoidHead => "sigmoid",
        }
    }

    /// Learnable element count.
    pub fn learnable_parameters(&self) -> usize {
        match *self {
            LayerKind::Conv { in_channels, out_channels, kernel_size, bias, .. } => {
                out_channels * in_channels * kernel_size * kernel_size
                    + if bias { out_channels } else { 0 }
            }
            LayerKind::BatchNorm { channels, .. } => 2 * channels,
            LayerKind::FullyConnected { in_features, out_features } => {
                out_features * in_features + out_features
            }
            _ => 0,
        }
    }
}

/// A layer with its learnable parameters and non-learnable buffers.
///
/// Conv: `params = [weight, bias?]`. BatchNorm: `params = [scale, shift]`,
/// `buffers = [running_mean, running_var]`. FullyConnected: `[weight, bias]`.
#[derive(Clone, Debug)]
pub struct Layer<T> {
    kind: LayerKind,
    params: Vec<Tensor<T>>,
    buffers: Vec<Tensor<T>>,
}

impl<T: Real> Layer<T> {
    pub fn new<R: Rng + ?Sized>(kind: LayerKind, rng: &mut R) -> Result<Self, NnError> {
        kind.validate()?;
        let (params, buffers) = match kind {
            LayerKind::Conv { in_channels, out_channels, kernel_size, bias, .. } => {
                let fan_in = in_channels * kernel_size * kernel_size;
                let bound = (6.0 / fan_in as f64).sqrt();
                let w = Tensor::from_fn(
                    vec![out_channels, in_channels, kernel_size, kernel_size],
                    |_| T::of(rng.random_range(-bound..bound)),
                );
                let mut p = vec![w];
                if bias {
                    p.push(Tensor::zeros(vec![out_channels]));
                }
                (p, vec![])
            }
            LayerKind::BatchNorm { channels, .. } => (
                vec![Tensor::filled(vec![channels], T::one()), Tensor::zeros(vec![channels])],
                vec![Tensor::zeros(vec![channels]), Tensor::filled(vec![channels], T::one())],
            ),
            LayerKind::FullyConnected { in_features, out_features } => {
                let bound = 1.0 / (in_features as f64).sqrt();
                let w = Tensor::from_fn(vec![out_features, in_features], |_| {
                    T::of(rng.random_range(-bound..bound))
                });
                (vec![w, Tensor::zeros(vec![out_features])], vec![])
            }
            _ => (vec![], vec![]),
        };
        Ok(Self { kind, params, buffers })
    }

    pub fn kind(&self) -> &LayerKind {
        &self.kind
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Tensor<T>] {
        &self.buffers
    }

    fn param_names(&self) -> &'static [&'static str] {
        match self.kind {
            LayerKind::Conv { bias: true, .. } | LayerKind::FullyConnected { .. } => {
                &["weight", "bias"]
            }
            LayerKind::Conv { bias: false, .. } => &["weight"],
            LayerKind::BatchNorm { .. } => &["scale", "shift"],
            _ => &[],
        }
    }

    fn buffer_names(&self) -> &'static [&'static str] {
        match self.kind {
            LayerKind::BatchNorm { .. } => &["running_mean", "running_var"],
            _ => &[],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Cache<T> {
    Conv { input: Tensor<T> },
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Relu { mask: Vec<bool> },
    BatchNorm { trace: BatchNormTrace<T> },
    Dropout { mask: Option<Vec<T>> },
    Fc { input: Tensor<T> },
    Identity,
}

/// Named tensor view used for serialization.
pub struct NamedTensor<'a, T> {
    pub name: String,
    pub tensor: &'a Tensor<T>,
    pub learnable: bool,
}

/// Sequential network. The recorded forward state is owned by the instance,
/// so training requires `&mut self`; [`Network::infer`] needs only `&self`.
#[derive(Debug)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
    caches: Option<Vec<Cache<T>>>,
}

impl<T: Real> Clone for Network<T> {
    fn clone(&self) -> Self {
        Self { layers: self.layers.clone(), caches: None }
    }
}

impl<T: Real> Network<T> {
    pub fn new<R: Rng + ?Sized>(kinds: &[LayerKind], rng: &mut R) -> Result<Self, NnError> {
        let mut layers = Vec::with_capacity(kinds.len());
        for (i, k) in kinds.iter().enumerate() {
            if matches!(k, LayerKind::SoftmaxHead | LayerKind::SigmoidHead) && i + 1 != kinds.len() {
                return Err(NnError::Config("an output head must be the last layer".into()));
            }
            layers.push(Layer::new(k.clone(), rng)?);
        }
        Ok(Self { layers, caches: None })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn kinds(&self) -> Vec<LayerKind> {
        self.layers.iter().map(|l| l.kind.clone()).collect()
    }

    /// Output activation; `None` when the last layer is not a head.
    pub fn head(&self) -> Option<Head> {
        let last = self.layers.last()?;
        let logits = self.layers.iter().rev().find_map(|l| match l.kind {
            LayerKind::FullyConnected { out_features, .. } => Some(out_features),
            _ => None,
        })?;
        match last.kind {
            LayerKind::SoftmaxHead => Some(Head::Softmax { classes: logits }),
            LayerKind::SigmoidHead if logits == 1 => Some(Head::Sigmoid),
            _ => None,
        }
    }

    pub fn count_parameters(&self) -> usize {
        self.layers.iter().flat_map(|l| &l.params).map(Tensor::numel).sum()
    }

    pub fn parameters(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut()).collect()
    }

    /// Every parameter and buffer, in a stable order with stable names.
    pub fn named_tensors(&self) -> Vec<NamedTensor<'_, T>> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let tag = l.kind.tag();
            for (t, n) in l.params.iter().zip(l.param_names()) {
                out.push(NamedTensor { name: format!("{i}.{tag}.{n}"), tensor: t, learnable: true });
            }
            for (t, n) in l.buffers.iter().zip(l.buffer_names()) {
                out.push(NamedTensor { name: format!("{i}.{tag}.{n}"), tensor: t, learnable: false });
            }
        }
        out
    }

    /// Replace a parameter or buffer by name; the shape must match.
    pub fn set_tensor(&mut self, name: &str, values: Vec<T>) -> Result<(), NnError> {
        for (i, l) in self.layers.iter_mut().enumerate() {
            let tag = l.kind.tag();
            let pn = l.param_names();
            let bn = l.buffer_names();
            let slots = l
                .params
                .iter_mut()
                .zip(pn)
                .chain(l.buffers.iter_mut().zip(bn));
            for (t, n) in slots {
                if format!("{i}.{tag}.{n}") == name {
                    if t.numel() != values.len() {
                        return Err(NnError::Shape(format!(
                            "tensor {name} has {} elements, got {}",
                            t.numel(),
                            values.len()
                        )));
                    }
                    t.data_mut().copy_from_slice(&values);
                    return Ok(());
                }
            }
        }
        Err(NnError::Config(format!("no tensor named {name}")))
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    /// Element-type conversion of all parameters and buffers.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    kind: l.kind.clone(),
                    params: l.params.iter().map(Tensor::cast).collect(),
                    buffers: l.buffers.iter().map(Tensor::cast).collect(),
                })
                .collect(),
            caches: None,
        }
    }

    /// Forward pass recording the state backward needs. Returns logits.
    /// Batch-norm running statistics are updated in training mode.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        input: &Tensor<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Tensor<T>, NnError> {
        self.caches = None;
        let train = mode == Mode::Train;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = batched(input)?;
        for layer in &mut self.layers {
            let (y, cache) = match layer.kind {
                LayerKind::Conv { same_padding, .. } => {
                    let y = ops::conv2d_forward(&x, &layer.params[0], layer.params.get(1), same_padding)?;
                    (y, Cache::Conv { input: x })
                }
                LayerKind::MaxPool { window, stride } => {
                    let p = ops::maxpool_forward(&x, window, stride)?;
                    (p.output, Cache::Pool { input_shape: x.shape().to_vec(), argmax: p.argmax })
                }
                LayerKind::Relu => {
                    let (y, mask) = ops::relu_forward(&x);
                    (y, Cache::Relu { mask })
                }
                LayerKind::BatchNorm { momentum, epsilon, .. } => {
                    let (y, trace) = ops::batchnorm_forward(
                        &x,
                        layer.params[0].data(),
                        layer.params[1].data(),
                        layer.buffers[0].data(),
                        layer.buffers[1].data(),
                        T::of(epsilon),
                        train,
                    )?;
                    if train {
                        let count = (x.numel() / trace.batch_mean.len()) as f64;
                        let unbias = T::of(count / (count - 1.0).max(1.0));
                        let m = T::of(momentum);
                        let keep = T::one() - m;
                        for (r, &b) in layer.buffers[0].data_mut().iter_mut().zip(&trace.batch_mean) {
                            *r = keep * *r + m * b;
                        }
                        for (r, &b) in layer.buffers[1].data_mut().iter_mut().zip(&trace.batch_var) {
                            *r = keep * *r + m * b * unbias;
                        }
                    }
                    (y, Cache::BatchNorm { trace })
                }
                LayerKind::Dropout { probability } => {
                    let (y, mask) = ops::dropout_forward(&x, probability, train, rng)?;
                    (y, Cache::Dropout { mask })
                }
                LayerKind::FullyConnected { .. } => {
                    let y = ops::fully_connected_forward(&x, &layer.params[0], &layer.params[1])?;
                    (y, Cache::Fc { input: x })
                }
                LayerKind::SoftmaxHead | LayerKind::SigmoidHead => (x, Cache::Identity),
            };
            caches.push(cache);
            x = y;
        }
        self.caches = Some(caches);
        Ok(x)
    }

    /// Evaluation-mode forward pass without recorded state. Returns logits.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut x = batched(input)?;
        for layer in &self.layers {
            x = match layer.kind {
                LayerKind::Conv { same_padding, .. } => {
                    ops::conv2d_forward(&x, &layer.params[0], layer.params.get(1), same_padding)?
                }
                LayerKind::MaxPool { window, stride } => ops::maxpool_forward(&x, window, stride)?.output,
                LayerKind::Relu => ops::relu_forward(&x).0,
                LayerKind::BatchNorm { epsilon, .. } => {
                    ops::batchnorm_forward(
                        &x,
                        layer.params[0].data(),
                        layer.params[1].data(),
                        layer.buffers[0].data(),
                        layer.buffers[1].data(),
                        T::of(epsilon),
                        false,
                    )?
                    .0
                }
                LayerKind::Dropout { .. }
                | LayerKind::SoftmaxHead
                | LayerKind::SigmoidHead => x,
                LayerKind::FullyConnected { .. } => {
                    ops::fully_connected_forward(&x, &layer.params[0], &layer.params[1])?
                }
            };
        }
        Ok(x)
    }

    /// Reverse pass from the gradient of the loss with respect to the logits.
    /// Parameter gradients are accumulated into each parameter's buffer; the
    /// input gradient is returned. Consumes the recorded forward state.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let caches = self.caches.take().ok_or(NnError::BackwardWithoutForward)?;
        let mut g = grad_logits.clone_values();
        for (layer, cache) in self.layers.iter_mut().zip(caches).rev() {
            g = match (cache, &layer.kind) {
                (Cache::Conv { input }, &LayerKind::Conv { same_padding, .. }) => {
                    let grads = ops::conv2d_backward(&input, &layer.params[0], &g, same_padding)?;
                    accumulate(&mut layer.params[0], grads.weights.data());
                    if let Some(b) = layer.params.get_mut(1) {
                        accumulate(b, grads.bias.data());
                    }
                    grads.input
                }
                (Cache::Pool { input_shape, argmax }, _) => {
                    ops::maxpool_backward(&input_shape, &argmax, &g)?
                }
                (Cache::Relu { mask }, _) => ops::relu_backward(&mask, &g),
                (Cache::BatchNorm { trace }, _) => {
                    let grads = ops::batchnorm_backward(&trace, layer.params[0].data(), &g)?;
                    accumulate(&mut layer.params[0], &grads.gamma);
                    accumulate(&mut layer.params[1], &grads.beta);
                    grads.input
                }
                (Cache::Dropout { mask }, _) => ops::dropout_backward(mask.as_deref(), &g),
                (Cache::Fc { input }, _) => {
                    let grads = ops::fully_connected_backward(&input, &layer.params[0], &g)?;
                    accumulate(&mut layer.params[0], grads.weights.data());
                    accumulate(&mut layer.params[1], grads.bias.data());
                    grads.input
                }
                (Cache::Identity, _) => g,
                (_, kind) => {
                    return Err(NnError::Config(format!("recorded state does not match layer {kind:?}")))
                }
            };
        }
        Ok(g)
    }

    /// Hash of every piecewise-linear branch taken in the last recorded
    /// forward pass (ReLU signs, pooling winners). Two passes with equal
    /// signatures lie on the same smooth piece of the loss surface.
    pub fn branch_signature(&self) -> Option<u64> {
        let caches = self.caches.as_ref()?;
        let mut h = DefaultHasher::new();
        for c in caches {
            match c {
                Cache::Relu { mask } => mask.hash(&mut h),
                Cache::Pool { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        Some(h.finish())
    }
}

fn accumulate<T: Real>(param: &mut Tensor<T>, grad: &[T]) {
    for (a, &b) in param.grad_mut().iter_mut().zip(grad) {
        *a += b;
    }
}

/// A lone `CxHxW` image becomes a batch of one.
fn batched<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let x = input.clone_values();
    if x.rank() == 3 {
        let mut shape = vec![1];
        shape.extend_from_slice(x.shape());
        return x.reshape(shape);
    }
    Ok(x)
}
