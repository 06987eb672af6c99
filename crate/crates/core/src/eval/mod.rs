//! Evaluation: scalar metrics, ROC/AUC, latent-space audits of synthetic
//! data and the train-on-synthetic protocol.

mod latent;
mod metrics;
mod protocol;
mod tsne;

pub use latent::{
    fit_latent_autoencoder, mean_image_mse, LatentAeConfig, LatentAeSchedule, LatentAutoencoder,
    LatentPoint, LATENT_DIM,
};
pub use metrics::{
    confusion_metrics, roc_auc, ConfusionCounts, Metric, MetricsError, RocCurve, RocPoint,
    ScalarMetrics,
};
pub use protocol::{
    train_on_synthetic, train_on_synthetic_protocol, ClassCheckpoints, ProtocolConfig,
    ProtocolScore,
};
pub use tsne::{
    overlap_statistic, silhouette, tsne_embed, TsneConfig, TsneResult, TSNE_OUTPUT_DIM,
};

use crate::cnn::ClassifierError;
use crate::gen::GenError;
use crate::tensor::TensorError;
use std::fmt;

#[derive(Debug)]
pub enum EvalError {
    EmptyDataset,
    /// A synthetic item reached a real-only set.
    SyntheticContamination { key: String },
    /// Rows whose bandwidth search cannot reach the target entropy.
    PerplexityCalibration { rows: Vec<usize> },
    TooFewPoints { have: usize, need: usize },
    BadConfig(String),
    Tensor(TensorError),
    Classifier(ClassifierError),
    Generative(GenError),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::EmptyDataset => write!(f, "dataset is empty"),
            EvalError::SyntheticContamination { key } => {
                write!(f, "synthetic item `{key}` found in a real-only set")
            }
            EvalError::PerplexityCalibration { rows } => {
                write!(f, "perplexity calibration failed for rows {rows:?}")
            }
            EvalError::TooFewPoints { have, need } => {
                write!(f, "{have} points, need at least {need}")
            }
            EvalError::BadConfig(m) => write!(f, "{m}"),
            EvalError::Tensor(e) => write!(f, "{e}"),
            EvalError::Classifier(e) => write!(f, "{e}"),
            EvalError::Generative(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for EvalError {}

impl From<TensorError> for EvalError {
    fn from(e: TensorError) -> Self {
        EvalError::Tensor(e)
    }
}

impl From<ClassifierError> for EvalError {
    fn from(e: ClassifierError) -> Self {
        EvalError::Classifier(e)
    }
}

impl From<GenError> for EvalError {
    fn from(e: GenError) -> Self {
        EvalError::Generative(e)
    }
}
