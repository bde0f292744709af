//! Two-stage convolutional classification of radio-propagation clutter
//! (deciduous and coniferous trees, residential and non-residential
//! buildings, open areas) from overhead imagery.
//!
//! * [`nn`] is the from-scratch tensor/layer engine with Adam.
//! * [`net`] assembles the classifier network, preprocessing, augmentation
//!   and checkpoints.
//! * [`geo`] builds and cleans the georeferenced sample inventory and
//!   fetches imagery through pluggable providers.
//! * [`pipeline`] runs geographic cross-validation, training, two-stage
//!   routing, ensemble voting and clutter-map rasterization.
//! * [`stats`] holds the evaluation mathematics and report rendering.

pub mod geo;
pub mod io;
pub mod net;
pub mod nn;
pub mod pipeline;
pub mod stats;

pub use net::{ClutterLabel, CoarseLabel};
pub use nn::Tensor;
