//! Augmentation-count sweep and the final baseline-versus-augmented
//! comparison.

use super::augment::augment_dataset;
use super::split::verify_no_leakage;
use super::PipelineError;
use crate::cnn::{build_cnn, evaluate, predict, train_classifier, CnnSpec, TrainConfig};
use crate::eeg::Label;
use crate::eval::{confusion_metrics, roc_auc, ConfusionCounts, RocCurve, ScalarMetrics};
use crate::gen::GenKind;
use crate::rng::derive_seed;
use crate::spectrogram::Spectrogram;
use crate::tensor::Element;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Added synthetic counts for one sweep cell: (norm, sch).
pub type SweepRow = (usize, usize);

/// The sweep grid used when none is configured.
pub fn default_sweep_rows() -> Vec<SweepRow> {
    vec![
        (230, 200),
        (330, 300),
        (430, 400),
        (630, 600),
        (730, 700),
        (830, 800),
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub rows: Vec<SweepRow>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub cnn: CnnSpec,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub kind: GenKind,
    pub add_norm: usize,
    pub add_sch: usize,
    pub accuracy: f64,
    pub loss: f64,
    pub train_size: usize,
    pub epochs_ran: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
    pub best: SweepCell,
}

/// Highest accuracy wins; ties break to the lower loss.
pub fn select_best_cell(cells: &[SweepCell]) -> Option<&SweepCell> {
    cells.iter().reduce(|best, c| {
        if c.accuracy > best.accuracy
            || (c.accuracy == best.accuracy && c.loss < best.loss)
        {
            c
        } else {
            best
        }
    })
}

/// Checkpoint paths per (kind, class).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenCheckpointSet {
    pub vae_norm: PathBuf,
    pub vae_sch: PathBuf,
    pub wgan_norm: PathBuf,
    pub wgan_sch: PathBuf,
}

impl GenCheckpointSet {
    fn for_kind(&self, kind: GenKind) -> (&PathBuf, &PathBuf) {
        match kind {
            GenKind::Vae => (&self.vae_norm, &self.vae_sch),
            GenKind::Wgan => (&self.wgan_norm, &self.wgan_sch),
        }
    }
}

/// Train one classifier per (model, row) cell to convergence and evaluate
/// on the all-real test set.
pub fn run_sweep<E: Element>(
    train: &[&Spectrogram],
    test: &[&Spectrogram],
    checkpoints: &GenCheckpointSet,
    cfg: &SweepConfig,
) -> Result<SweepReport, PipelineError> {
    let mut cells = Vec::new();
    for kind in [GenKind::Vae, GenKind::Wgan] {
        let (norm_ckpt, sch_ckpt) = checkpoints.for_kind(kind);
        for &(add_norm, add_sch) in &cfg.rows {
            let cell_seed = derive_seed(
                cfg.seed,
                &format!("sweep-{}-{add_norm}-{add_sch}", kind.architecture_id()),
            );
            let augmented = augment_dataset::<E>(
                train,
                norm_ckpt,
                sch_ckpt,
                add_norm,
                add_sch,
                cfg.cnn.input_size,
                cell_seed,
            )?;
            let aug_refs: Vec<&Spectrogram> = augmented.iter().collect();
            verify_no_leakage(&aug_refs, test)?;

            let mut model = build_cnn::<E>(&cfg.cnn, derive_seed(cell_seed, "init"));
            let train_cfg = TrainConfig::to_convergence(
                cfg.learning_rate,
                cfg.batch_size,
                cfg.max_epochs,
                derive_seed(cell_seed, "train"),
            );
            let test_owned: Vec<Spectrogram> = test.iter().map(|s| (*s).clone()).collect();
            let history = train_classifier(&mut model, &augmented, &[], &train_cfg)?;
            let (loss, accuracy) = evaluate(&model, &test_owned)?;
            cells.push(SweepCell {
                kind,
                add_norm,
                add_sch,
                accuracy,
                loss,
                train_size: augmented.len(),
                epochs_ran: history.len(),
            });
        }
    }
    let best = select_best_cell(&cells)
        .ok_or_else(|| PipelineError::BadConfig("sweep has no rows".into()))?
        .clone();
    Ok(SweepReport { cells, best })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalConfig {
    pub add_norm: usize,
    pub add_sch: usize,
    pub augment_kind: GenKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub cnn: CnnSpec,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalRow {
    pub model: String,
    pub train_size: usize,
    pub accuracy: f64,
    pub loss: f64,
    pub metrics: ScalarMetrics,
    pub auc: f64,
    #[serde(skip)]
    pub roc: Option<RocCurve>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalReport {
    pub rows: Vec<FinalRow>,
}

fn evaluate_with_metrics<E: Element>(
    model: &crate::cnn::CnnClassifier<E>,
    test: &[Spectrogram],
) -> Result<(f64, f64, ScalarMetrics, RocCurve), PipelineError> {
    let (loss, accuracy) = evaluate(model, test)?;
    let probs = predict(model, test)?;
    let truth: Vec<bool> = test.iter().map(|s| s.label == Label::Sch).collect();
    let predicted: Vec<bool> = probs.iter().map(|p| p[1] > p[0]).collect();
    let counts = ConfusionCounts::from_predictions(&predicted, &truth);
    let metrics = confusion_metrics(&counts);
    let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
    let roc = roc_auc(&scores, &truth)?;
    Ok((loss, accuracy, metrics, roc))
}

/// Train the non-augmented baseline and the augmented model at the final
/// schedule and compare them with full metrics and ROC curves.
pub fn run_final_comparison<E: Element>(
    train: &[&Spectrogram],
    test: &[&Spectrogram],
    norm_ckpt: &std::path::Path,
    sch_ckpt: &std::path::Path,
    cfg: &FinalConfig,
) -> Result<FinalReport, PipelineError> {
    let test_owned: Vec<Spectrogram> = test.iter().map(|s| (*s).clone()).collect();
    let mut rows = Vec::new();

    let augmented_name = format!(
        "{}-{}",
        cfg.augment_kind.architecture_id(),
        cfg.add_sch
    );
    for (name, add) in [
        (augmented_name, Some((cfg.add_norm, cfg.add_sch))),
        ("non-augmented".to_string(), None),
    ] {
        let train_set: Vec<Spectrogram> = match add {
            Some((n, s)) => augment_dataset::<E>(
                train,
                norm_ckpt,
                sch_ckpt,
                n,
                s,
                cfg.cnn.input_size,
                derive_seed(cfg.seed, &format!("final-{name}")),
            )?,
            None => train.iter().map(|s| (*s).clone()).collect(),
        };
        let refs: Vec<&Spectrogram> = train_set.iter().collect();
        verify_no_leakage(&refs, test)?;

        let mut model = build_cnn::<E>(&cfg.cnn, derive_seed(cfg.seed, &format!("init-{name}")));
        let train_cfg = TrainConfig::new(
            cfg.learning_rate,
            cfg.batch_size,
            cfg.epochs,
            derive_seed(cfg.seed, &format!("train-{name}")),
        );
        train_classifier(&mut model, &train_set, &[], &train_cfg)?;
        let (loss, accuracy, metrics, roc) = evaluate_with_metrics(&model, &test_owned)?;
        rows.push(FinalRow {
            model: name,
            train_size: train_set.len(),
            accuracy,
            loss,
            metrics,
            auc: roc.auc,
            roc: Some(roc),
        });
    }
    Ok(FinalReport { rows })
}
