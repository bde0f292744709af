use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClutterLabel, CoarseLabel, NetError};
use crate::nn::{Head, LayerKind, Network, Real};

/// Architecture description of the clutter network.
///
/// Each entry of `conv_block_channels` is a block `conv(same) -> ReLU ->
/// [batch norm] -> 2x2/2 max pool`; batch norm only in the last block when
/// `batchnorm_on_last_conv`. An optional extra pool, dropout, a fully
/// connected layer and the head follow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub input_side: usize,
    pub input_channels: usize,
    pub conv_block_channels: Vec<usize>,
    pub kernel_size: usize,
    pub batchnorm_on_last_conv: bool,
    pub extra_final_pool: bool,
    pub dropout_probability: f64,
    pub batchnorm_momentum: f64,
    pub batchnorm_epsilon: f64,
    pub head: Head,
}

impl NetConfig {
    pub fn with_head(head: Head) -> Self {
        Self {
            input_side: 112,
            input_channels: 3,
            conv_block_channels: vec![16; 4],
            kernel_size: 3,
            batchnorm_on_last_conv: true,
            extra_final_pool: true,
            dropout_probability: 0.5,
            batchnorm_momentum: 0.1,
            batchnorm_epsilon: 1e-5,
            head,
        }
    }

    /// Spatial side after the input and after every pooling stage.
    pub fn feature_trace(&self) -> Vec<usize> {
        let pools = self.conv_block_channels.len() + usize::from(self.extra_final_pool);
        let mut trace = vec![self.input_side];
        let mut side = self.input_side;
        for _ in 0..pools {
            side = if side >= 2 { (side - 2) / 2 + 1 } else { 0 };
            trace.push(side);
        }
        trace
    }

    pub fn final_side(&self) -> usize {
        *self.feature_trace().last().expect("trace starts with the input side")
    }

    pub fn head_input_features(&self) -> usize {
        let channels = self.conv_block_channels.last().copied().unwrap_or(self.input_channels);
        channels * self.final_side() * self.final_side()
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.conv_block_channels.is_empty() || self.conv_block_channels.contains(&0) {
            return Err(NetError::Config("need at least one conv block with nonzero channels".into()));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(NetError::Config(format!(
                "same padding needs an odd kernel, got {}",
                self.kernel_size
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_probability) {
            return Err(NetError::Config("dropout probability outside [0,1)".into()));
        }
        let trace = self.feature_trace();
        if trace.iter().any(|&s| s < 1) {
            return Err(NetError::Config(format!(
                "feature map shrinks below one pixel: {trace:?}"
            )));
        }
        if let Head::Softmax { classes } = self.head {
            if classes < 2 {
                return Err(NetError::Config("softmax head needs at least 2 classes".into()));
            }
        }
        Ok(())
    }

    pub fn layer_kinds(&self) -> Result<Vec<LayerKind>, NetError> {
        self.validate()?;
        let mut kinds = Vec::new();
        let mut in_c = self.input_channels;
        let last = self.conv_block_channels.len() - 1;
        for (i, &out_c) in self.conv_block_channels.iter().enumerate() {
            kinds.push(LayerKind::Conv {
                in_channels: in_c,
                out_channels: out_c,
                kernel_size: self.kernel_size,
                same_padding: true,
                bias: true,
            });
            kinds.push(LayerKind::Relu);
            if i == last && self.batchnorm_on_last_conv {
                kinds.push(LayerKind::BatchNorm {
                    channels: out_c,
                    momentum: self.batchnorm_momentum,
                    epsilon: self.batchnorm_epsilon,
                });
            }
            kinds.push(LayerKind::MaxPool { window: 2, stride: 2 });
            in_c = out_c;
        }
        if self.extra_final_pool {
            kinds.push(LayerKind::MaxPool { window: 2, stride: 2 });
        }
        kinds.push(LayerKind::Dropout { probability: self.dropout_probability });
        kinds.push(LayerKind::FullyConnected {
            in_features: self.head_input_features(),
            out_features: self.head.num_logits(),
        });
        kinds.push(match self.head {
            Head::Softmax { .. } => LayerKind::SoftmaxHead,
            Head::Sigmoid => LayerKind::SigmoidHead,
        });
        Ok(kinds)
    }

    /// Learnable parameter count implied by the configuration.
    pub fn count_parameters(&self) -> Result<usize, NetError> {
        Ok(self.layer_kinds()?.iter().map(LayerKind::learnable_parameters).sum())
    }
}

/// Build a freshly initialized network for `config`.
pub fn build_network<T: Real, R: Rng + ?Sized>(
    config: &NetConfig,
    rng: &mut R,
) -> Result<Network<T>, NetError> {
    Ok(Network::new(&config.layer_kinds()?, rng)?)
}

pub fn count_parameters<T: Real>(network: &Network<T>) -> usize {
    network.count_parameters()
}

/// Role of a trained network within the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Tree / building / other.
    Stage1,
    /// Deciduous vs coniferous.
    Stage2Tree,
    /// Residential vs non-residential.
    Stage2Building,
    /// All five classes at once.
    SingleStage,
}

/// What an output index of a model means.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelClass {
    Coarse(CoarseLabel),
    Fine(ClutterLabel),
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] =
        [ModelKind::Stage1, ModelKind::Stage2Tree, ModelKind::Stage2Building, ModelKind::SingleStage];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Stage1 => "stage1",
            ModelKind::Stage2Tree => "stage2_tree",
            ModelKind::Stage2Building => "stage2_building",
            ModelKind::SingleStage => "single_stage",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "stage1" | "stage_1" => Some(ModelKind::Stage1),
            "stage2" | "stage2_tree" | "stage_2_tree" => Some(ModelKind::Stage2Tree),
            "stage2_building" | "stage_2_building" => Some(ModelKind::Stage2Building),
            "single_stage" | "single" => Some(ModelKind::SingleStage),
            _ => None,
        }
    }

    pub fn head(self) -> Head {
        match self {
            ModelKind::Stage1 => Head::Softmax { classes: 3 },
            ModelKind::Stage2Tree | ModelKind::Stage2Building => Head::Sigmoid,
            ModelKind::SingleStage => Head::Softmax { classes: 5 },
        }
    }

    pub fn default_config(self) -> NetConfig {
        NetConfig::with_head(self.head())
    }

    pub fn classes(self) -> Vec<ModelClass> {
        match self {
            ModelKind::Stage1 => CoarseLabel::ALL.into_iter().map(ModelClass::Coarse).collect(),
            ModelKind::Stage2Tree => CoarseLabel::Tree.fine().iter().copied().map(ModelClass::Fine).collect(),
            ModelKind::Stage2Building => {
                CoarseLabel::Building.fine().iter().copied().map(ModelClass::Fine).collect()
            }
            ModelKind::SingleStage => ClutterLabel::ALL.into_iter().map(ModelClass::Fine).collect(),
        }
    }

    /// Training target for a sample of `label`, or `None` when this model
    /// does not see such samples.
    pub fn target(self, label: ClutterLabel) -> Option<usize> {
        match self {
            ModelKind::Stage1 => Some(label.coarse().index()),
            ModelKind::Stage2Tree => CoarseLabel::Tree.fine().iter().position(|&l| l == label),
            ModelKind::Stage2Building => CoarseLabel::Building.fine().iter().position(|&l| l == label),
            ModelKind::SingleStage => Some(label.index()),
        }
    }

    pub fn class_name(self, index: usize) -> String {
        match self.classes().get(index) {
            Some(ModelClass::Coarse(c)) => c.as_str().to_string(),
            Some(ModelClass::Fine(f)) => f.as_str().to_string(),
            None => format!("#{index}"),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_trace_and_head_features() {
        let cfg = ModelKind::Stage1.default_config();
        assert_eq!(cfg.feature_trace(), vec![112, 56, 28, 14, 7, 3]);
        assert_eq!(cfg.head_input_features(), 144);
    }

    #[test]
    fn default_parameter_counts() {
        assert_eq!(ModelKind::Stage1.default_config().count_parameters().unwrap(), 7875);
        assert_eq!(ModelKind::Stage2Tree.default_config().count_parameters().unwrap(), 7585);
        assert_eq!(ModelKind::Stage2Building.default_config().count_parameters().unwrap(), 7585);
        assert_eq!(ModelKind::SingleStage.default_config().count_parameters().unwrap(), 8165);
    }

    #[test]
    fn closed_form_count_identity() {
        for (kind, c) in [(ModelKind::Stage1, 3), (ModelKind::Stage2Tree, 1), (ModelKind::SingleStage, 5)] {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let net: Network<f32> = build_network(&kind.default_config(), &mut rng).unwrap();
            assert_eq!(count_parameters(&net), 448 + 3 * 2320 + 32 + (144 * c + c));
        }
    }

    #[test]
    fn five_block_variant_builds() {
        let mut cfg = ModelKind::Stage1.default_config();
        cfg.conv_block_channels = vec![16; 5];
        assert_eq!(cfg.feature_trace(), vec![112, 56, 28, 14, 7, 3, 1]);
        assert_eq!(cfg.head_input_features(), 16);
        cfg.layer_kinds().unwrap();
    }

    #[test]
    fn rejects_vanishing_feature_map() {
        let mut cfg = ModelKind::Stage1.default_config();
        cfg.conv_block_channels = vec![16; 7];
        assert!(cfg.validate().is_err());
        let mut cfg = ModelKind::Stage1.default_config();
        cfg.kernel_size = 4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn targets_follow_roles() {
        assert_eq!(ModelKind::Stage1.target(ClutterLabel::Coniferous), Some(0));
        assert_eq!(ModelKind::Stage2Tree.target(ClutterLabel::Deciduous), Some(0));
        assert_eq!(ModelKind::Stage2Tree.target(ClutterLabel::Residential), None);
        assert_eq!(ModelKind::Stage2Building.target(ClutterLabel::NonResidential), Some(1));
        assert_eq!(ModelKind::SingleStage.target(ClutterLabel::Other), Some(4));
    }
}
