//! A small convolutional classifier, written out long-hand.
//!
//! The model is two conv+relu+maxpool stages feeding one dense logit, with
//! class-weighted binary cross-entropy on the logit and Adam updates. All
//! math is plain `f64` loops over [`tensor::Tensor`], which keeps every
//! gradient checkable against finite differences and makes training
//! bit-reproducible: given the same seed, data, and order, two runs produce
//! identical parameters whether or not the `parallel` feature is enabled,
//! because per-example gradients are reduced in example order.

pub mod checkpoint;
pub mod loss;
pub mod model;
pub mod ops;
pub mod optim;
pub mod tensor;
pub mod train;

use std::path::PathBuf;

use thiserror::Error;

pub use model::{Architecture, Model};
pub use train::{classify, predict, train, EpochStats, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input side {side} is too small for the architecture (needs at least {min_side})")]
    WindowTooSmall { side: usize, min_side: usize },
    #[error("training targets contain a single class")]
    SingleClass,
    #[error("{which} split is empty")]
    EmptySplit { which: &'static str },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: bad checkpoint: {reason}")]
    BadCheckpoint { path: PathBuf, reason: String },
}
