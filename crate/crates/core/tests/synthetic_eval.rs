//! Latent-audit and protocol behaviour: t-SNE calibration and cluster
//! preservation, autoencoder codes, train-on-synthetic hygiene.

mod common;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sdx_core::cnn::CnnSpec;
use sdx_core::eeg::Label;
use sdx_core::eval::{
    fit_latent_autoencoder, mean_image_mse, silhouette, train_on_synthetic, tsne_embed,
    ClassCheckpoints, EvalError, LatentAeConfig, LatentAeSchedule, ProtocolConfig, TsneConfig,
    LATENT_DIM,
};
use sdx_core::gen::{train_generative, GenKind, GenSchedule, GpConfig, VaeConfig, WganConfig};
use sdx_core::rng::seeded;
use sdx_core::spectrogram::{Origin, Provenance, Spectrogram};

fn spec_image(
    label: Label,
    origin: Origin,
    id: usize,
    rows: usize,
    cols: usize,
    f: impl Fn(usize, usize) -> f32,
) -> Spectrogram {
    let mut values = vec![0f32; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            values[r * cols + c] = f(r, c);
        }
    }
    Spectrogram {
        freq_bins: rows,
        time_frames: cols,
        values,
        provenance: Provenance {
            subject_id: format!("s{id}"),
            segment_index: id,
            origin,
        },
        label,
    }
}

#[test]
fn tsne_separates_distant_gaussian_clusters() {
    let mut rng = seeded(1);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    // two 1024-d clusters, unit sigma, separation 10 sigma along one axis
    for cluster in 0..2usize {
        for _ in 0..100 {
            let mut v: Vec<f32> = (0..LATENT_DIM)
                .map(|_| {
                    let x: f64 = StandardNormal.sample(&mut rng);
                    x as f32
                })
                .collect();
            v[0] += (cluster as f32) * 10.0;
            points.push(v);
            labels.push(cluster);
        }
    }
    let cfg = TsneConfig {
        perplexity: 30.0,
        iterations: 400,
        exaggeration_iters: 100,
        seed: 2,
        ..TsneConfig::default()
    };
    let result = tsne_embed(&points, &cfg).unwrap();
    assert_eq!(result.coords.len(), 200);
    let s = silhouette(&result.coords, &labels);
    assert!(s > 0.5, "silhouette {s}");
    let first = result.kl_history.first().unwrap();
    let last = result.kl_history.last().unwrap();
    assert!(last < first, "KL must decrease: {first} -> {last}");
    assert!(result.kl_history.iter().all(|k| k.is_finite()));
}

#[test]
fn tsne_handles_equidistant_simplex_and_rejects_tiny_inputs() {
    // 10 one-hot points: all pairwise distances equal; KL stays finite
    let points: Vec<Vec<f32>> = (0..10)
        .map(|i| {
            let mut v = vec![0f32; 10];
            v[i] = 1.0;
            v
        })
        .collect();
    let cfg = TsneConfig {
        perplexity: 2.0,
        iterations: 50,
        exaggeration_iters: 10,
        seed: 3,
        ..TsneConfig::default()
    };
    let result = tsne_embed(&points, &cfg).unwrap();
    assert!(result.kl_history.iter().all(|k| k.is_finite()));

    assert!(matches!(
        tsne_embed(&points[..5], &cfg),
        Err(EvalError::TooFewPoints { .. })
    ));
    // perplexity bound: perplexity < (n-1)/3
    let cfg_big = TsneConfig {
        perplexity: 4.0,
        ..cfg
    };
    assert!(tsne_embed(&points, &cfg_big).is_err());
}

#[test]
fn tsne_rejects_duplicate_heavy_input_naming_rows() {
    // five exact copies of one point: each copy sees four zero-distance
    // neighbours, pinning its entropy above ln(perplexity = 3)
    let mut points: Vec<Vec<f32>> = (0..16)
        .map(|i| vec![i as f32, 2.0 * i as f32, 0.5])
        .collect();
    for i in [4usize, 7, 9, 11] {
        points[i] = points[2].clone();
    }
    let cfg = TsneConfig {
        perplexity: 3.0,
        iterations: 10,
        exaggeration_iters: 5,
        seed: 4,
        ..TsneConfig::default()
    };
    match tsne_embed(&points, &cfg) {
        Err(EvalError::PerplexityCalibration { rows }) => {
            for i in [2usize, 4, 7, 9, 11] {
                assert!(rows.contains(&i), "rows {rows:?}");
            }
        }
        other => panic!("expected calibration failure, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn tsne_is_seed_deterministic() {
    let points: Vec<Vec<f32>> = (0..30)
        .map(|i| (0..8).map(|d| ((i * 13 + d * 7) % 23) as f32 / 23.0).collect())
        .collect();
    let cfg = TsneConfig {
        perplexity: 5.0,
        iterations: 60,
        exaggeration_iters: 20,
        seed: 9,
        ..TsneConfig::default()
    };
    let a = tsne_embed(&points, &cfg).unwrap();
    let b = tsne_embed(&points, &cfg).unwrap();
    assert_eq!(a.coords, b.coords);
}

fn bump_family(count: usize, origin: Origin, label: Label, seed: u64) -> Vec<Spectrogram> {
    // smooth images whose bump position varies; mean image is blurry
    let mut rng = seeded(seed);
    (0..count)
        .map(|i| {
            let center = 4.0 + 24.0 * rng.gen::<f64>();
            spec_image(label, origin, i, 32, 8, |r, c| {
                let d = (r as f64 - center).powi(2) / 18.0;
                ((0.85 * (-d).exp()) as f32 + 0.05 + 0.02 * ((c * 7 + r) % 3) as f32)
                    .clamp(0.0, 1.0)
            })
        })
        .collect()
}

#[test]
fn latent_autoencoder_codes_are_deterministic_and_beat_mean_baseline() {
    let train = bump_family(48, Origin::Real, Label::Norm, 10);
    let held_out = bump_family(16, Origin::Real, Label::Norm, 11);
    let cfg = LatentAeConfig {
        input: (32, 8),
        conv_channels: vec![4, 8],
        fc_widths: vec![32],
    };
    let schedule = LatentAeSchedule {
        epochs: 60,
        batch_size: 16,
        learning_rate: 2e-3,
        seed: 12,
    };
    let (model, history) = fit_latent_autoencoder::<f32>(&train, &cfg, &schedule).unwrap();
    assert_eq!(history.len(), 60);
    assert!(history.last().unwrap() < history.first().unwrap());

    let codes = model.encode(&held_out[..4].to_vec()).unwrap();
    assert!(codes.iter().all(|c| c.vector.len() == LATENT_DIM));
    let again = model.encode(&held_out[..4].to_vec()).unwrap();
    for (a, b) in codes.iter().zip(&again) {
        assert_eq!(a.vector, b.vector);
    }

    let model_mse = model.reconstruction_mse(&held_out).unwrap();
    let baseline = mean_image_mse(&train, &held_out);
    assert!(
        model_mse < baseline,
        "autoencoder mse {model_mse} must beat mean-image {baseline}"
    );
}

#[test]
fn latent_autoencoder_refuses_synthetic_training_data() {
    let mut train = bump_family(8, Origin::Real, Label::Norm, 13);
    train.push(bump_family(1, Origin::Vae, Label::Norm, 14).pop().unwrap());
    let cfg = LatentAeConfig {
        input: (32, 8),
        conv_channels: vec![2],
        fc_widths: vec![8],
    };
    let schedule = LatentAeSchedule {
        epochs: 1,
        batch_size: 4,
        learning_rate: 1e-3,
        seed: 0,
    };
    assert!(matches!(
        fit_latent_autoencoder::<f32>(&train, &cfg, &schedule),
        Err(EvalError::SyntheticContamination { .. })
    ));
}

fn tiny_vae_cfg() -> VaeConfig {
    VaeConfig {
        input: (32, 8),
        conv_channels: vec![4, 8],
        fc_widths: vec![16],
        latent_dim: 8,
        conv_kernel: 3,
        output_kernel: 3,
    }
}

fn train_tiny_vae(dir: &std::path::Path, label: Label, data: &[Spectrogram], seed: u64) -> std::path::PathBuf {
    let path = dir.join(format!("vae-{label}.sdx"));
    let schedule = GenSchedule {
        epochs: 30,
        batch_size: 8,
        learning_rate: 2e-3,
        seed,
    };
    train_generative::<f32>(
        GenKind::Vae,
        label,
        data,
        &tiny_vae_cfg(),
        &WganConfig::default(),
        &GpConfig::default(),
        &schedule,
        &path,
    )
    .unwrap();
    path
}

#[test]
fn protocol_runs_on_separable_toy_and_enforces_hygiene() {
    let dir = tempfile::tempdir().unwrap();
    // class signature: bright top band for norm, bright bottom band for sch
    let norm_train: Vec<Spectrogram> = (0..24)
        .map(|i| {
            spec_image(Label::Norm, Origin::Real, i, 32, 8, |r, c| {
                (if r < 12 { 0.85 } else { 0.1 }) + ((c + i) % 5) as f32 * 0.01
            })
        })
        .collect();
    let sch_train: Vec<Spectrogram> = (0..24)
        .map(|i| {
            spec_image(Label::Sch, Origin::Real, i + 100, 32, 8, |r, c| {
                (if r >= 20 { 0.85 } else { 0.1 }) + ((c + i) % 5) as f32 * 0.01
            })
        })
        .collect();
    let vae_norm = train_tiny_vae(dir.path(), Label::Norm, &norm_train, 20);
    let vae_sch = train_tiny_vae(dir.path(), Label::Sch, &sch_train, 21);
    let checkpoints = ClassCheckpoints {
        norm: vae_norm,
        sch: vae_sch,
    };

    let test: Vec<Spectrogram> = norm_train
        .iter()
        .take(8)
        .cloned()
        .chain(sch_train.iter().take(8).cloned())
        .enumerate()
        .map(|(i, mut s)| {
            s.provenance.subject_id = format!("t{i}");
            // protocol resizes synthetic items to the classifier input; the
            // real test set arrives already at that size
            sdx_core::spectrogram::resize_bilinear(&s, 16, 16)
        })
        .collect();

    let cfg = ProtocolConfig {
        synth_per_class: 24,
        learning_rate: 2e-3,
        epochs: 30,
        batch_size: 8,
        cnn: CnnSpec {
            input_size: 16,
            conv_channels: vec![4, 8],
            conv_kernel: 3,
            dense_widths: vec![8],
        },
        seed: 22,
    };
    let score = train_on_synthetic::<f32>(GenKind::Vae, &checkpoints, &test, &cfg).unwrap();
    assert!(
        score.accuracy > 0.5,
        "sanity floor on a separable toy, got {}",
        score.accuracy
    );

    // synthetic contamination of the test set is rejected
    let mut poisoned = test.clone();
    poisoned[0].provenance.origin = Origin::Vae;
    assert!(matches!(
        train_on_synthetic::<f32>(GenKind::Vae, &checkpoints, &poisoned, &cfg),
        Err(EvalError::SyntheticContamination { .. })
    ));

    // an empty synthetic budget is rejected
    let empty = ProtocolConfig {
        synth_per_class: 0,
        ..cfg.clone()
    };
    assert!(matches!(
        train_on_synthetic::<f32>(GenKind::Vae, &checkpoints, &test, &empty),
        Err(EvalError::EmptyDataset)
    ));
}
