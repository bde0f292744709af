use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PipelineError, Sample};
use crate::net::{argmax_first, build_network, Checkpoint, ModelKind, NetConfig, TrainingMetadata, D4};
use crate::nn::{head_loss, AdamConfig, AdamState, Mode, Network, Tensor};

/// How training and validation samples are expanded with the eight
/// dihedral transforms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augmentation {
    None,
    /// Every sample appears under all eight transforms each epoch.
    Full,
    /// Every sample appears once per epoch under a random transform.
    RandomPerEpoch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub augmentation: Augmentation,
    /// Score validation on all eight transforms of each sample.
    pub augment_validation: bool,
    /// Stop once validation accuracy reaches this value.
    pub target_validation_accuracy: Option<f64>,
    /// Stop after this many epochs without improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            adam: AdamConfig::default(),
            augmentation: Augmentation::Full,
            augment_validation: true,
            target_validation_accuracy: None,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.batch_size < 2 {
            return Err(PipelineError::Config("batch_size must be at least 2 (batch normalization)".into()));
        }
        self.adam.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// `None` for epoch 0, the untrained weights.
    pub train_loss: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub checkpoint: Checkpoint,
    /// Entry 0 scores the initial weights.
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Samples this kind trains on, with their targets.
fn targeted<'a>(kind: ModelKind, samples: &[&'a Sample]) -> Vec<(&'a Sample, usize)> {
    samples.iter().filter_map(|s| kind.target(s.label).map(|t| (*s, t))).collect()
}

fn batch_tensor(items: &[(&Sample, usize, D4)], side: usize, channels: usize) -> Result<Tensor<f32>, PipelineError> {
    let per = channels * side * side;
    let mut data = Vec::with_capacity(items.len() * per);
    for (s, _, t) in items {
        if *t == D4::IDENTITY {
            data.extend_from_slice(s.image.data());
        } else {
            data.extend(t.apply_planar(s.image.data(), side, channels));
        }
    }
    Ok(Tensor::new(vec![items.len(), channels, side, side], data)?)
}

/// Predicted class index per row.
pub(crate) fn predict_indices(net: &Network<f32>, batch: &Tensor<f32>) -> Result<Vec<usize>, PipelineError> {
    let head = net.head().expect("network ends in a head");
    let logits = net.infer(batch)?;
    Ok(logits.data().chunks(head.num_logits()).map(|z| argmax_first(&head.probabilities(z))).collect())
}

fn accuracy(net: &Network<f32>, items: &[(&Sample, usize)], transforms: &[D4], side: usize, channels: usize) -> Result<Option<f64>, PipelineError> {
    if items.is_empty() {
        return Ok(None);
    }
    let expanded: Vec<(&Sample, usize, D4)> =
        items.iter().flat_map(|&(s, t)| transforms.iter().map(move |&d| (s, t, d))).collect();
    let mut correct = 0usize;
    for chunk in expanded.chunks(64) {
        let pred = predict_indices(net, &batch_tensor(chunk, side, channels)?)?;
        correct += pred.iter().zip(chunk).filter(|(p, c)| **p == c.1).count();
    }
    Ok(Some(correct as f64 / expanded.len() as f64))
}

/// Mini-batch Adam training keeping the best-validation weights.
pub fn train_model(
    kind: ModelKind,
    train: &[&Sample],
    validation: &[&Sample],
    config: &TrainConfig,
    net_config: &NetConfig,
    seed: u64,
) -> Result<TrainedModel, PipelineError> {
    config.validate()?;
    if net_config.head != kind.head() {
        return Err(PipelineError::Config(format!("{kind} needs head {:?}", kind.head())));
    }
    let train = targeted(kind, train);
    let validation = targeted(kind, validation);
    for i in 0..kind.classes().len() {
        if !train.iter().any(|&(_, t)| t == i) {
            return Err(PipelineError::MissingClass { kind, class: kind.class_name(i) });
        }
    }
    if train.len() < 2 {
        return Err(PipelineError::Data(format!("{kind}: need at least 2 training samples")));
    }
    let (side, channels) = (net_config.input_side, net_config.input_channels);
    for (s, _) in train.iter().chain(&validation) {
        if s.image.shape() != [channels, side, side] {
            return Err(PipelineError::Data(format!("sample {} has shape {:?}", s.id, s.image.shape())));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net: Network<f32> = build_network(net_config, &mut rng)?;
    let mut adam = AdamState::for_tensors(config.adam, net.parameters())?;
    let val_transforms: Vec<D4> = if config.augment_validation { D4::ALL.to_vec() } else { vec![D4::IDENTITY] };

    let initial = accuracy(&net, &validation, &val_transforms, side, channels)?;
    let mut log = vec![EpochLog { epoch: 0, train_loss: None, train_accuracy: None, validation_accuracy: initial }];
    let mut best = (initial.unwrap_or(f64::NEG_INFINITY), 0usize, net.clone());
    let mut epochs_run = 0;
    for epoch in 1..=config.epochs {
        if config.target_validation_accuracy.is_some_and(|t| best.0 >= t) {
            break;
        }
        epochs_run = epoch;
        let mut items: Vec<(&Sample, usize, D4)> = match config.augmentation {
            Augmentation::None => train.iter().map(|&(s, t)| (s, t, D4::IDENTITY)).collect(),
            Augmentation::Full => train.iter().flat_map(|&(s, t)| D4::ALL.into_iter().map(move |d| (s, t, d))).collect(),
            Augmentation::RandomPerEpoch => train.iter().map(|&(s, t)| (s, t, D4::ALL[rng.random_range(0..8)])).collect(),
        };
        items.shuffle(&mut rng);
        let mut bounds: Vec<(usize, usize)> =
            (0..items.len()).step_by(config.batch_size).map(|a| (a, (a + config.batch_size).min(items.len()))).collect();
        if bounds.len() > 1 && bounds.last().is_some_and(|&(a, b)| b - a == 1) {
            let (_, end) = bounds.pop().expect("nonempty");
            bounds.last_mut().expect("nonempty").1 = end;
        }
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for (a, b) in bounds {
            let chunk = &items[a..b];
            let x = batch_tensor(chunk, side, channels)?;
            let targets: Vec<usize> = chunk.iter().map(|c| c.1).collect();
            net.zero_grad();
            let logits = net.forward(&x, Mode::Train, &mut rng)?;
            let head = net.head().expect("head");
            let (loss, grad) = head_loss(head, &logits, &targets)?;
            for (z, &t) in logits.data().chunks(head.num_logits()).zip(&targets) {
                correct += (argmax_first(&head.probabilities(z)) == t) as usize;
            }
            loss_sum += loss as f64 * chunk.len() as f64;
            net.backward(&grad)?;
            adam.step(&mut net.parameters_mut())?;
        }
        let val = accuracy(&net, &validation, &val_transforms, side, channels)?;
        let entry = EpochLog {
            epoch,
            train_loss: Some(loss_sum / items.len() as f64),
            train_accuracy: Some(correct as f64 / items.len() as f64),
            validation_accuracy: val,
        };
        log::info!(
            "{kind} epoch {epoch}: loss {:.4} train acc {:.3} val acc {}",
            loss_sum / items.len() as f64,
            correct as f64 / items.len() as f64,
            val.map_or("n/a".to_string(), |v| format!("{v:.3}"))
        );
        log.push(entry);
        // without validation data the latest weights win
        let score = val.unwrap_or(f64::NEG_INFINITY);
        if val.is_none() || score > best.0 {
            best = (score, epoch, net.clone());
        }
        if config.patience.is_some_and(|p| epoch - best.1 >= p) {
            break;
        }
    }
    let (score, best_epoch, best_net) = best;
    let metadata = TrainingMetadata {
        seed,
        epochs: epochs_run,
        final_validation_accuracy: score.is_finite().then_some(score),
    };
    let checkpoint = Checkpoint::new(kind, net_config.clone(), best_net, metadata)?;
    Ok(TrainedModel { checkpoint, log, best_epoch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use crate::net::ClutterLabel;
    use std::sync::Arc;

    fn tiny_config(kind: ModelKind) -> NetConfig {
        NetConfig { input_side: 16, conv_block_channels: vec![4, 4], ..kind.default_config() }
    }

    fn sample(label: ClutterLabel, i: usize) -> Sample {
        // the class lights up its own channel
        let hot = label.index() % 3;
        let img = Tensor::from_fn(vec![3, 16, 16], |j| {
            let base = if j / 256 == hot { 1.0 } else { -1.0 };
            base + 0.1 * (((i * 31 + j * 7) % 11) as f32 / 11.0 - 0.5)
        });
        Sample { id: format!("{label}{i}"), label, point: GeoPoint::new(0.0, 0.0).unwrap(), image: Arc::new(img) }
    }

    #[test]
    fn missing_class_is_named() {
        let s: Vec<Sample> = (0..4).map(|i| sample(ClutterLabel::Deciduous, i)).collect();
        let refs: Vec<&Sample> = s.iter().collect();
        let err = train_model(ModelKind::Stage2Tree, &refs, &[], &TrainConfig::default(), &tiny_config(ModelKind::Stage2Tree), 1)
            .unwrap_err();
        match err {
            PipelineError::MissingClass { class, .. } => assert_eq!(class, "coniferous"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn zero_epochs_returns_initial_weights() {
        let s: Vec<Sample> = (0..6).flat_map(|i| [sample(ClutterLabel::Deciduous, i), sample(ClutterLabel::Coniferous, i)]).collect();
        let refs: Vec<&Sample> = s.iter().collect();
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let nc = tiny_config(ModelKind::Stage2Tree);
        let m = train_model(ModelKind::Stage2Tree, &refs, &refs, &cfg, &nc, 9).unwrap();
        assert_eq!(m.best_epoch, 0);
        assert_eq!(m.log.len(), 1);
        let init: Network<f32> = build_network(&nc, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let a: Vec<_> = m.checkpoint.network().named_tensors().into_iter().map(|t| t.tensor.data().to_vec()).collect();
        let b: Vec<_> = init.named_tensors().into_iter().map(|t| t.tensor.data().to_vec()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn learns_separable_and_is_deterministic() {
        let s: Vec<Sample> = (0..12)
            .flat_map(|i| [ClutterLabel::Deciduous, ClutterLabel::Residential, ClutterLabel::Other].map(|l| sample(l, i))).collect();
        let refs: Vec<&Sample> = s.iter().collect();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 8,
            adam: AdamConfig { learning_rate: 0.01, ..Default::default() },
            augmentation: Augmentation::RandomPerEpoch,
            ..Default::default()
        };
        let nc = tiny_config(ModelKind::Stage1);
        let a = train_model(ModelKind::Stage1, &refs, &refs, &cfg, &nc, 4).unwrap();
        assert!(a.checkpoint.metadata.final_validation_accuracy.unwrap() >= 0.95, "{:?}", a.log);
        let b = train_model(ModelKind::Stage1, &refs, &refs, &cfg, &nc, 4).unwrap();
        assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
    }
}
