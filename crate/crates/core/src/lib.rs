//! Model-constrained landmark regression.
//!
//! A convolutional network regresses shape weights and a global similarity
//! transform; a PCA shape layer turns them into landmark coordinates in a
//! single forward pass. The crate covers the whole workflow:
//!
//! - [`shape_model`]: rotation alignment, PCA point-distribution model, container I/O
//! - [`pca_layer`]: the differentiable shape layer with analytic gradients
//! - [`feature_net`]: the fully convolutional parameter regressor
//! - [`data_pipeline`]: annotation parsers, crop/resize, augmentation, manifests
//! - [`train_engine`]: point losses, ADAM, end-to-end training, checkpoints
//! - [`eval_metrics`]: normalized point-to-point error, evaluation, sweeps, throughput
//! - [`synth_data`]: synthetic polygon corpora with known generative modes
//!
//! Data-parallel loops go through [`Exec`]; building without the default
//! `parallel` feature makes every loop sequential.

pub mod data_pipeline;
pub mod error;
pub mod eval_metrics;
pub mod exec;
pub mod feature_net;
mod fsutil;
pub mod pca_layer;
pub mod serial;
pub mod shape_model;
pub mod synth_data;
pub mod train_engine;

pub use error::{Error, Result};
pub use exec::Exec;
pub use fsutil::write_atomic;
