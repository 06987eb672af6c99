//! Per-class generative models for spectrogram synthesis.

mod train;
mod vae;
mod wgan;

pub use train::{
    sample_synthetic, train_generative, train_vae_loop, train_wgan_loop, GenHistory, GenKind,
    GenSchedule, GenTrainOutcome, VaeEpochStats, WganEpochStats,
};
pub use vae::{build_vae, build_vae_with, sample_latents, ElboTerms, VaeConfig, VaeModel};
pub use wgan::{
    build_wgan, build_wgan_with, critic_loss_with_gp, generator_loss, sample_noise,
    CriticLossOutcome, GeneratorLossOutcome, GpConfig, UpsampleMode, WganConfig, WganModel,
};

use crate::eeg::Label;
use crate::tensor::{CheckpointError, TensorError};
use std::fmt;

#[derive(Debug)]
pub enum GenError {
    EmptyDataset,
    /// Per-class models only accept items of one class.
    MixedClassDataset { expected: Label, found: Label },
    /// Checkpoint trained for a different class than requested.
    ClassMismatch { requested: Label, stored: Label },
    BatchShape { expected: usize, actual: usize },
    /// Input value outside the model's admissible range.
    ValueRange { value: f64, lo: f64, hi: f64 },
    BadConfig(String),
    Tensor(TensorError),
    Checkpoint(CheckpointError),
}

impl fmt::Display for GenError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenError::EmptyDataset => write!(f, "dataset is empty"),
            GenError::MixedClassDataset { expected, found } => {
                write!(f, "expected a single-class ({expected}) dataset, found {found}")
            }
            GenError::ClassMismatch { requested, stored } => {
                write!(f, "checkpoint trained for `{stored}`, requested `{requested}`")
            }
            GenError::BatchShape { expected, actual } => {
                write!(f, "batch holds {actual} values, expected {expected}")
            }
            GenError::ValueRange { value, lo, hi } => {
                write!(f, "value {value} outside [{lo},{hi}]")
            }
            GenError::BadConfig(m) => write!(f, "{m}"),
            GenError::Tensor(e) => write!(f, "{e}"),
            GenError::Checkpoint(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for GenError {}

impl From<TensorError> for GenError {
    fn from(e: TensorError) -> Self {
        GenError::Tensor(e)
    }
}

impl From<CheckpointError> for GenError {
    fn from(e: CheckpointError) -> Self {
        GenError::Checkpoint(e)
    }
}
