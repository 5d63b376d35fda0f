//! Numerical substrate: tensors, reverse-mode differentiation, losses,
//! optimiser and learning-rate schedule.
//!
//! Everything runs on 64-bit floats so that finite-difference gradient checks
//! are meaningful, and every stochastic choice flows from an explicit seed.

mod checkpoint;
mod loss;
mod optim;
mod rng;
mod tape;
mod tensor;

pub use checkpoint::{fnv1a, load as load_checkpoint, save as save_checkpoint, Manifest};
pub use loss::{cross_entropy_batch, cross_entropy_smoothed, one_hot, smooth_labels, softmax};
pub use optim::{adam_step, AdamState, LrSchedule};
pub use rng::Rng;
pub use tape::{grad_check, ParamStore, Parameter, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("smoothing factor {0} outside [0, 1]")]
    BadAlpha(f64),
    #[error("loss must be a scalar")]
    NotScalarLoss,
    #[error("variable does not belong to this tape")]
    DisconnectedGraph,
    #[error("optimizer state does not match the parameter store")]
    UninitializedState,
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
