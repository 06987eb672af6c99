//! The train/test split that precedes any augmentation.
//!
//! The manifest is persisted before synthetic data exists and is the single
//! source of truth for every later experiment; test keys only ever name
//! real items.

use super::PipelineError;
use crate::spectrogram::{Origin, Spectrogram};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitManifest {
    pub fraction: f64,
    pub seed: u64,
    pub train_keys: Vec<String>,
    pub test_keys: Vec<String>,
}

/// Stratified-by-label random split of an all-real dataset. The test side
/// receives `round(fraction * n)` items of each class.
pub fn split_before_augment(
    dataset: &[Spectrogram],
    fraction: f64,
    seed: u64,
) -> Result<SplitManifest, PipelineError> {
    if dataset.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(PipelineError::BadConfig(format!(
            "test fraction must lie in (0,1), got {fraction}"
        )));
    }
    if let Some(bad) = dataset.iter().find(|s| s.provenance.origin != Origin::Real) {
        return Err(PipelineError::LeakedSynthetic { key: bad.key() });
    }
    let mut rng = crate::rng::seeded(seed);
    let mut train_keys = Vec::new();
    let mut test_keys = Vec::new();
    let labels: BTreeSet<_> = dataset.iter().map(|s| s.label).collect();
    for label in labels {
        let mut keys: Vec<String> = dataset
            .iter()
            .filter(|s| s.label == label)
            .map(|s| s.key())
            .collect();
        keys.sort();
        keys.shuffle(&mut rng);
        let test_count = (keys.len() as f64 * fraction).round() as usize;
        if test_count == 0 || test_count == keys.len() {
            return Err(PipelineError::BadConfig(format!(
                "fraction {fraction} leaves class {label} with an empty side"
            )));
        }
        test_keys.extend(keys.drain(..test_count));
        train_keys.extend(keys);
    }
    train_keys.sort();
    test_keys.sort();
    Ok(SplitManifest {
        fraction,
        seed,
        train_keys,
        test_keys,
    })
}

impl SplitManifest {
    /// Partition `dataset` by key. Every item must be covered.
    pub fn apply<'a>(
        &self,
        dataset: &'a [Spectrogram],
    ) -> Result<(Vec<&'a Spectrogram>, Vec<&'a Spectrogram>), PipelineError> {
        let train: BTreeSet<&str> = self.train_keys.iter().map(|s| s.as_str()).collect();
        let test: BTreeSet<&str> = self.test_keys.iter().map(|s| s.as_str()).collect();
        let mut train_items = Vec::new();
        let mut test_items = Vec::new();
        for item in dataset {
            let key = item.key();
            if train.contains(key.as_str()) {
                train_items.push(item);
            } else if test.contains(key.as_str()) {
                test_items.push(item);
            } else {
                return Err(PipelineError::UnknownKey { key });
            }
        }
        Ok((train_items, test_items))
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("serializes"))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        if !path.exists() {
            return Err(PipelineError::MissingSplitManifest {
                path: path.to_path_buf(),
            });
        }
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| PipelineError::BadConfig(e.to_string()))
    }
}

/// The machine check behind every emitted report: the test set holds only
/// real items and shares no key with the (possibly augmented) train set.
pub fn verify_no_leakage(
    train: &[&Spectrogram],
    test: &[&Spectrogram],
) -> Result<(), PipelineError> {
    for item in test {
        if item.provenance.origin != Origin::Real {
            return Err(PipelineError::LeakedSynthetic { key: item.key() });
        }
    }
    let test_keys: BTreeSet<String> = test.iter().map(|s| s.key()).collect();
    for item in train {
        if test_keys.contains(&item.key()) {
            return Err(PipelineError::LeakedTestItem { key: item.key() });
        }
    }
    Ok(())
}
