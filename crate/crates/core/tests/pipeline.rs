//! Orchestration hygiene: split determinism, augmentation bookkeeping,
//! leakage scans, sweep selection and report schema validation.

mod common;

use sdx_core::eeg::Label;
use sdx_core::gen::{train_generative, GenKind, GenSchedule, GpConfig, VaeConfig, WganConfig};
use sdx_core::pipeline::{
    augment_dataset, default_sweep_rows, select_best_cell, split_before_augment, validate_report,
    verify_no_leakage, LeakageCheck, PipelineError, RunManifest, SplitManifest, SweepCell,
};
use sdx_core::spectrogram::{Origin, Provenance, Spectrogram};

fn item(label: Label, origin: Origin, id: usize) -> Spectrogram {
    Spectrogram {
        freq_bins: 8,
        time_frames: 4,
        values: (0..32).map(|v| ((v + id) % 7) as f32 / 7.0).collect(),
        provenance: Provenance {
            subject_id: format!("s{id}"),
            segment_index: id,
            origin,
        },
        label,
    }
}

fn real_dataset(norm: usize, sch: usize) -> Vec<Spectrogram> {
    let mut out = Vec::new();
    for i in 0..norm {
        out.push(item(Label::Norm, Origin::Real, i));
    }
    for i in 0..sch {
        out.push(item(Label::Sch, Origin::Real, 10_000 + i));
    }
    out
}

#[test]
fn split_matches_reference_counts() {
    // 1008 items at 20% -> 202 test / 806 train with the class ratio 468:540
    let dataset = real_dataset(468, 540);
    let manifest = split_before_augment(&dataset, 0.2, 1).unwrap();
    assert_eq!(manifest.test_keys.len(), 202);
    assert_eq!(manifest.train_keys.len(), 806);
    let (train, test) = manifest.apply(&dataset).unwrap();
    assert_eq!(train.len(), 806);
    assert_eq!(test.len(), 202);

    // stratified: per-class test counts are round(0.2 * class size)
    let norm_test = test.iter().filter(|s| s.label == Label::Norm).count();
    let sch_test = test.iter().filter(|s| s.label == Label::Sch).count();
    assert_eq!(norm_test, 94);
    assert_eq!(sch_test, 108);
}

#[test]
fn split_rejects_degenerate_fractions_and_synthetic_items() {
    let dataset = real_dataset(10, 10);
    assert!(split_before_augment(&dataset, 0.0, 1).is_err());
    assert!(split_before_augment(&dataset, 1.0, 1).is_err());

    let mut poisoned = dataset.clone();
    poisoned.push(item(Label::Norm, Origin::Vae, 99));
    assert!(matches!(
        split_before_augment(&poisoned, 0.2, 1),
        Err(PipelineError::LeakedSynthetic { .. })
    ));
}

#[test]
fn split_is_seed_deterministic_and_seed_sensitive() {
    let dataset = real_dataset(50, 50);
    let a = split_before_augment(&dataset, 0.2, 7).unwrap();
    let b = split_before_augment(&dataset, 0.2, 7).unwrap();
    assert_eq!(a.test_keys, b.test_keys);
    assert_eq!(a.train_keys, b.train_keys);

    let mut distinct = 0;
    for seed in 0..10 {
        let c = split_before_augment(&dataset, 0.2, 100 + seed).unwrap();
        if c.test_keys != a.test_keys {
            distinct += 1;
        }
    }
    assert!(distinct >= 9, "only {distinct}/10 seeds differed");
}

#[test]
fn split_manifest_round_trips_and_missing_file_is_typed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("split.json");
    let dataset = real_dataset(20, 20);
    let manifest = split_before_augment(&dataset, 0.25, 3).unwrap();
    manifest.save(&path).unwrap();
    let loaded = SplitManifest::load(&path).unwrap();
    assert_eq!(loaded.test_keys, manifest.test_keys);

    assert!(matches!(
        SplitManifest::load(&dir.path().join("absent.json")),
        Err(PipelineError::MissingSplitManifest { .. })
    ));
}

#[test]
fn leakage_scan_catches_synthetic_tests_and_shared_keys() {
    let dataset = real_dataset(6, 6);
    let (train, test): (Vec<&Spectrogram>, Vec<&Spectrogram>) =
        (dataset[..8].iter().collect(), dataset[8..].iter().collect());
    verify_no_leakage(&train, &test).unwrap();

    // synthetic item in the test set
    let synth = item(Label::Sch, Origin::Wgan, 77);
    let poisoned: Vec<&Spectrogram> = test.iter().copied().chain([&synth]).collect();
    assert!(matches!(
        verify_no_leakage(&train, &poisoned),
        Err(PipelineError::LeakedSynthetic { .. })
    ));

    // train item sharing a key with test
    let shared: Vec<&Spectrogram> = train.iter().copied().chain([test[0]]).collect();
    assert!(matches!(
        verify_no_leakage(&shared, &test),
        Err(PipelineError::LeakedTestItem { .. })
    ));
}

fn tiny_vae_checkpoint(
    dir: &std::path::Path,
    label: Label,
    seed: u64,
) -> std::path::PathBuf {
    let data: Vec<Spectrogram> = (0..8)
        .map(|i| {
            let mut s = item(label, Origin::Real, i);
            s.freq_bins = 16;
            s.time_frames = 8;
            s.values = (0..128).map(|v| ((v * (i + 2)) % 9) as f32 / 9.0).collect();
            s
        })
        .collect();
    let cfg = VaeConfig {
        input: (16, 8),
        conv_channels: vec![2, 4],
        fc_widths: vec![8],
        latent_dim: 4,
        conv_kernel: 3,
        output_kernel: 3,
    };
    let path = dir.join(format!("vae-{label}.sdx"));
    train_generative::<f32>(
        GenKind::Vae,
        label,
        &data,
        &cfg,
        &WganConfig::default(),
        &GpConfig::default(),
        &GenSchedule {
            epochs: 2,
            batch_size: 4,
            learning_rate: 1e-3,
            seed,
        },
        &path,
    )
    .unwrap();
    path
}

#[test]
fn augmentation_appends_marked_synthetics_and_identity_on_zero() {
    let dir = tempfile::tempdir().unwrap();
    let norm_ckpt = tiny_vae_checkpoint(dir.path(), Label::Norm, 1);
    let sch_ckpt = tiny_vae_checkpoint(dir.path(), Label::Sch, 2);

    let dataset = real_dataset(8, 8);
    let manifest = split_before_augment(&dataset, 0.25, 5).unwrap();
    let (train, test) = manifest.apply(&dataset).unwrap();

    let unchanged = augment_dataset::<f32>(&train, &norm_ckpt, &sch_ckpt, 0, 0, 8, 9).unwrap();
    assert_eq!(unchanged.len(), train.len());

    let augmented = augment_dataset::<f32>(&train, &norm_ckpt, &sch_ckpt, 5, 3, 8, 9).unwrap();
    assert_eq!(augmented.len(), train.len() + 8);
    let added = &augmented[train.len()..];
    assert_eq!(
        added.iter().filter(|s| s.label == Label::Norm).count(),
        5
    );
    assert!(added.iter().all(|s| s.provenance.origin != Origin::Real));
    assert!(added
        .iter()
        .all(|s| (s.freq_bins, s.time_frames) == (8, 8)));
    // none of the additions collide with test keys
    let refs: Vec<&Spectrogram> = augmented.iter().collect();
    verify_no_leakage(&refs, &test).unwrap();

    // class-mismatched checkpoint is rejected
    assert!(augment_dataset::<f32>(&train, &sch_ckpt, &norm_ckpt, 1, 1, 8, 9).is_err());

    // bookkeeping: train size = base + additions
    assert_eq!(augmented.len(), 12 + 5 + 3);
}

#[test]
fn best_cell_selection_follows_accuracy_then_loss() {
    // the published sweep table: vae wins at +730/700 with 98.5 / 0.016
    let table: Vec<(GenKind, usize, usize, f64, f64)> = vec![
        (GenKind::Vae, 230, 200, 96.5, 0.158),
        (GenKind::Vae, 330, 300, 95.5, 0.107),
        (GenKind::Vae, 430, 400, 97.5, 0.075),
        (GenKind::Vae, 630, 600, 98.0, 0.096),
        (GenKind::Vae, 730, 700, 98.5, 0.016),
        (GenKind::Vae, 830, 800, 98.0, 0.068),
        (GenKind::Wgan, 230, 200, 92.6, 0.165),
        (GenKind::Wgan, 330, 300, 96.0, 0.200),
        (GenKind::Wgan, 430, 400, 96.0, 0.233),
        (GenKind::Wgan, 630, 600, 95.5, 0.275),
        (GenKind::Wgan, 730, 700, 96.5, 0.154),
        (GenKind::Wgan, 830, 800, 92.1, 0.397),
    ];
    let cells: Vec<SweepCell> = table
        .into_iter()
        .map(|(kind, add_norm, add_sch, accuracy, loss)| SweepCell {
            kind,
            add_norm,
            add_sch,
            accuracy,
            loss,
            train_size: 806 + add_norm + add_sch,
            epochs_ran: 1,
        })
        .collect();
    let best = select_best_cell(&cells).unwrap();
    assert_eq!(best.kind, GenKind::Vae);
    assert_eq!((best.add_norm, best.add_sch), (730, 700));

    // tie on accuracy breaks toward the lower loss
    let tie = vec![
        SweepCell {
            kind: GenKind::Vae,
            add_norm: 1,
            add_sch: 1,
            accuracy: 0.9,
            loss: 0.5,
            train_size: 0,
            epochs_ran: 1,
        },
        SweepCell {
            kind: GenKind::Wgan,
            add_norm: 2,
            add_sch: 2,
            accuracy: 0.9,
            loss: 0.3,
            train_size: 0,
            epochs_ran: 1,
        },
    ];
    assert_eq!(select_best_cell(&tie).unwrap().kind, GenKind::Wgan);

    assert_eq!(default_sweep_rows().len(), 6);
}

#[test]
fn report_schema_accepts_valid_and_rejects_malformed() {
    let manifest = RunManifest::new("[config]\nseed = 1\n", 1);
    assert_eq!(manifest.config_hash.len(), 64);
    assert_eq!(manifest, RunManifest::new("[config]\nseed = 1\n", 1));

    let leakage = LeakageCheck {
        test_size: 10,
        train_size: 40,
        synthetic_in_test: 0,
        shared_keys: 0,
        passed: true,
    };
    let report = serde_json::json!({
        "run": manifest,
        "leakage_check": leakage,
        "final": {
            "rows": [{
                "model": "non-augmented",
                "train_size": 40,
                "accuracy": 0.95,
                "loss": 0.2,
                "metrics": { "accuracy": 0.95, "sensitivity": 0.9, "specificity": 1.0, "f1": 0.94 },
                "auc": 0.99
            }]
        },
        "sweep": {
            "cells": [{ "kind": "vae", "add_norm": 10, "add_sch": 10,
                        "accuracy": 0.9, "loss": 0.1, "train_size": 60, "epochs_ran": 3 }],
            "best": { "kind": "vae", "add_norm": 10, "add_sch": 10,
                      "accuracy": 0.9, "loss": 0.1, "train_size": 60, "epochs_ran": 3 }
        }
    });
    validate_report(&report).unwrap();

    let missing_run = serde_json::json!({ "leakage_check": leakage });
    assert!(validate_report(&missing_run).is_err());

    let bad_kind = serde_json::json!({
        "run": manifest,
        "leakage_check": leakage,
        "sweep": { "cells": [{ "kind": "diffusion", "add_norm": 1, "add_sch": 1,
                               "accuracy": 0.5, "loss": 0.5, "train_size": 1 }],
                   "best": { "kind": "vae", "add_norm": 1, "add_sch": 1,
                             "accuracy": 0.5, "loss": 0.5, "train_size": 1 } }
    });
    assert!(validate_report(&bad_kind).is_err());
}
