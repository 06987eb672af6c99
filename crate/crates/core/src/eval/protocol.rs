//! Train-on-synthetic, test-on-real quality protocol.
//!
//! For each generative model a classifier is trained purely on sampled
//! spectrograms (resized to the classifier's input) and evaluated on an
//! all-real test set. Better synthetic data yields higher real-data
//! accuracy.

use super::EvalError;
use crate::cnn::{build_cnn, evaluate, train_classifier, CnnSpec, TrainConfig};
use crate::eeg::Label;
use crate::gen::{sample_synthetic, GenKind};
use crate::rng::derive_seed;
use crate::spectrogram::{resize_bilinear, Origin, Spectrogram};
use crate::tensor::Element;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

/// The per-class checkpoints of one generative kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassCheckpoints {
    pub norm: PathBuf,
    pub sch: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Synthetic training samples drawn per class.
    pub synth_per_class: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub cnn: CnnSpec,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            synth_per_class: 600,
            learning_rate: 1e-5,
            epochs: 300,
            batch_size: 32,
            cnn: CnnSpec::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProtocolScore {
    pub accuracy: f64,
    pub loss: f64,
}

/// Run the protocol for one generative kind.
pub fn train_on_synthetic<E: Element>(
    kind: GenKind,
    checkpoints: &ClassCheckpoints,
    real_test: &[Spectrogram],
    cfg: &ProtocolConfig,
) -> Result<ProtocolScore, EvalError> {
    if cfg.synth_per_class == 0 {
        return Err(EvalError::EmptyDataset);
    }
    if real_test.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if let Some(bad) = real_test.iter().find(|s| s.provenance.origin != Origin::Real) {
        return Err(EvalError::SyntheticContamination { key: bad.key() });
    }

    let side = cfg.cnn.input_size;
    let mut train = Vec::with_capacity(2 * cfg.synth_per_class);
    for (label, path) in [(Label::Norm, &checkpoints.norm), (Label::Sch, &checkpoints.sch)] {
        let seed = derive_seed(cfg.seed, &format!("protocol-{}-{label}", kind.architecture_id()));
        let samples = sample_synthetic::<E>(path, cfg.synth_per_class, label, seed)?;
        train.extend(
            samples
                .iter()
                .map(|s| resize_bilinear(s, side, side)),
        );
    }

    let mut model = build_cnn::<E>(&cfg.cnn, derive_seed(cfg.seed, "protocol-cnn"));
    let train_cfg = TrainConfig::new(
        cfg.learning_rate,
        cfg.batch_size,
        cfg.epochs,
        derive_seed(cfg.seed, "protocol-train"),
    );
    train_classifier(&mut model, &train, &[], &train_cfg)?;
    let (loss, accuracy) = evaluate(&model, real_test)?;
    Ok(ProtocolScore { accuracy, loss })
}

/// Run the protocol for both kinds and tabulate.
pub fn train_on_synthetic_protocol<E: Element>(
    vae: &ClassCheckpoints,
    wgan: &ClassCheckpoints,
    real_test: &[Spectrogram],
    cfg: &ProtocolConfig,
) -> Result<BTreeMap<String, ProtocolScore>, EvalError> {
    let mut out = BTreeMap::new();
    out.insert(
        "vae".to_string(),
        train_on_synthetic::<E>(GenKind::Vae, vae, real_test, cfg)?,
    );
    out.insert(
        "wgan".to_string(),
        train_on_synthetic::<E>(GenKind::Wgan, wgan, real_test, cfg)?,
    );
    Ok(out)
}
