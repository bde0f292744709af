//! The clutter classifier network: labels, architecture, preprocessing,
//! dihedral augmentation and checkpoints.

mod augment;
pub mod checkpoint;
mod config;
pub mod gradsuite;
mod image;
mod label;

pub use augment::{augment_d4, D4};
pub use checkpoint::{Checkpoint, CheckpointError, TrainingMetadata};
pub use config::{build_network, count_parameters, ModelClass, ModelKind, NetConfig};
pub use image::{center_crop, crop_offset, normalize, ImagePatch};
pub use label::{argmax_first, ClutterLabel, CoarseLabel, UnknownLabel};

use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("image error: {0}")]
    Image(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
