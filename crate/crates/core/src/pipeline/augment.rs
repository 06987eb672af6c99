//! Synthetic augmentation of a classifier training set.

use super::PipelineError;
use crate::eeg::Label;
use crate::gen::sample_synthetic;
use crate::rng::derive_seed;
use crate::spectrogram::{resize_bilinear, Spectrogram};
use crate::tensor::Element;
use std::path::Path;

/// Append `add_norm` + `add_sch` synthetic items (resized to the classifier
/// input) to a copy of `train`. The checkpoints are per-class; a class
/// mismatch surfaces as an error from sampling. `(0,0)` is the identity.
pub fn augment_dataset<E: Element>(
    train: &[&Spectrogram],
    norm_checkpoint: &Path,
    sch_checkpoint: &Path,
    add_norm: usize,
    add_sch: usize,
    classifier_side: usize,
    seed: u64,
) -> Result<Vec<Spectrogram>, PipelineError> {
    let mut out: Vec<Spectrogram> = train.iter().map(|s| (*s).clone()).collect();
    for (label, path, count) in [
        (Label::Norm, norm_checkpoint, add_norm),
        (Label::Sch, sch_checkpoint, add_sch),
    ] {
        if count == 0 {
            continue;
        }
        let samples = sample_synthetic::<E>(
            path,
            count,
            label,
            derive_seed(seed, &format!("augment-{label}")),
        )?;
        out.extend(
            samples
                .iter()
                .map(|s| resize_bilinear(s, classifier_side, classifier_side)),
        );
    }
    Ok(out)
}
