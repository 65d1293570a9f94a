//! Multi-resolution symmetric FIR filter banks for multichannel time-series
//! classification, trained from scratch with hand-written backward passes.
//!
//! The pipeline per channel: a bank of L2-normalised linear-phase filters at
//! several kernel sizes, overlapping patch tokens from a depthwise patch
//! convolution and a pointwise fuse, LayerNorm, mean pooling, and a linear or
//! MLP head over the concatenated channel embeddings.

pub mod analysis;
pub mod data;
pub mod embedding;
pub mod error;
pub mod filterbank;
pub mod heads;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use model::{Classifier, FlatLinear, ModelConfig, PrismModel};
pub use numerics::{HasParams, Param, Real, Rng, Tensor};
