//! Experiment orchestration: split/augment bookkeeping, sweeps, the final
//! comparison and report assembly, with machine-checked leakage hygiene.

mod augment;
mod report;
mod split;
mod sweep;

pub use augment::augment_dataset;
pub use report::{
    validate_against_schema, validate_report, write_embedding_csv, write_json, write_roc_csv,
    LeakageCheck, RunManifest, REPORT_SCHEMA,
};
pub use split::{split_before_augment, verify_no_leakage, SplitManifest};
pub use sweep::{
    default_sweep_rows, run_final_comparison, run_sweep, select_best_cell, FinalConfig,
    FinalReport, FinalRow, GenCheckpointSet, SweepCell, SweepConfig, SweepReport, SweepRow,
};

use crate::cnn::ClassifierError;
use crate::eeg::IngestError;
use crate::eval::{EvalError, MetricsError};
use crate::gen::GenError;
use crate::lime::LimeError;
use crate::spectrogram::SpectrogramError;
use crate::tensor::{CheckpointError, TensorError};
use std::fmt;
use std::path::PathBuf;

#[derive(Debug)]
pub enum PipelineError {
    EmptyDataset,
    BadConfig(String),
    /// A synthetic item reached a real-only collection.
    LeakedSynthetic { key: String },
    /// A test item reappeared in a training set.
    LeakedTestItem { key: String },
    /// A dataset item not covered by the split manifest.
    UnknownKey { key: String },
    /// Augmentation was attempted before a split manifest was persisted.
    MissingSplitManifest { path: PathBuf },
    SchemaViolation(String),
    Io(std::io::Error),
    Ingest(IngestError),
    Spectrogram(SpectrogramError),
    Classifier(ClassifierError),
    Generative(GenError),
    Eval(EvalError),
    Metrics(MetricsError),
    Lime(LimeError),
    Tensor(TensorError),
    Checkpoint(CheckpointError),
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::EmptyDataset => write!(f, "dataset is empty"),
            PipelineError::BadConfig(m) => write!(f, "{m}"),
            PipelineError::LeakedSynthetic { key } => {
                write!(f, "synthetic item `{key}` in a real-only set")
            }
            PipelineError::LeakedTestItem { key } => {
                write!(f, "test item `{key}` leaked into a training set")
            }
            PipelineError::UnknownKey { key } => {
                write!(f, "item `{key}` is not covered by the split manifest")
            }
            PipelineError::MissingSplitManifest { path } => write!(
                f,
                "no split manifest at `{}`; the split must be persisted before augmentation",
                path.display()
            ),
            PipelineError::SchemaViolation(m) => write!(f, "report schema violation: {m}"),
            PipelineError::Io(e) => write!(f, "{e}"),
            PipelineError::Ingest(e) => write!(f, "{e}"),
            PipelineError::Spectrogram(e) => write!(f, "{e}"),
            PipelineError::Classifier(e) => write!(f, "{e}"),
            PipelineError::Generative(e) => write!(f, "{e}"),
            PipelineError::Eval(e) => write!(f, "{e}"),
            PipelineError::Metrics(e) => write!(f, "{e}"),
            PipelineError::Lime(e) => write!(f, "{e}"),
            PipelineError::Tensor(e) => write!(f, "{e}"),
            PipelineError::Checkpoint(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for PipelineError {}

macro_rules! from_error {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for PipelineError {
            fn from(e: $ty) -> Self {
                PipelineError::$variant(e)
            }
        }
    };
}

from_error!(Io, std::io::Error);
from_error!(Ingest, IngestError);
from_error!(Spectrogram, SpectrogramError);
from_error!(Classifier, ClassifierError);
from_error!(Generative, GenError);
from_error!(Eval, EvalError);
from_error!(Metrics, MetricsError);
from_error!(Lime, LimeError);
from_error!(Tensor, TensorError);
from_error!(Checkpoint, CheckpointError);

impl PipelineError {
    /// Coarse failure category for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            PipelineError::BadConfig(_)
            | PipelineError::SchemaViolation(_)
            | PipelineError::MissingSplitManifest { .. } => ErrorCategory::Config,
            PipelineError::EmptyDataset
            | PipelineError::LeakedSynthetic { .. }
            | PipelineError::LeakedTestItem { .. }
            | PipelineError::UnknownKey { .. }
            | PipelineError::Io(_)
            | PipelineError::Ingest(_)
            | PipelineError::Spectrogram(_)
            | PipelineError::Checkpoint(_) => ErrorCategory::Data,
            PipelineError::Classifier(_)
            | PipelineError::Generative(_)
            | PipelineError::Eval(_)
            | PipelineError::Metrics(_)
            | PipelineError::Lime(_)
            | PipelineError::Tensor(_) => ErrorCategory::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
}

impl ErrorCategory {
    pub fn exit_code(&self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numerical => 4,
        }
    }
}
