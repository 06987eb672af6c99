//! Stage implementations behind the CLI subcommands. Everything trains in
//! single precision; all randomness derives from the global seed.

use crate::config::{DatasetKind, ExperimentConfig};
use sdx_core::cnn::{
    build_cnn, evaluate, load_classifier, predict, save_classifier, train_classifier, TrainConfig,
};
use sdx_core::eeg::{
    build_manifest, load_manifest, read_column_text, read_edf, save_manifest, zscore_normalize,
    Label, SubjectRecording,
};
use sdx_core::eval::{
    fit_latent_autoencoder, overlap_statistic, train_on_synthetic_protocol, tsne_embed,
    ClassCheckpoints, LatentAeConfig, LatentAeSchedule, ProtocolConfig,
};
use sdx_core::gen::{sample_synthetic, train_generative, GenHistory, GenKind, GenSchedule};
use sdx_core::lime::{explain_instance, grid_segment, render_heatmap, save_heatmap_png, LimeError};
use sdx_core::pipeline::{
    run_final_comparison, run_sweep, split_before_augment, validate_report, verify_no_leakage,
    write_embedding_csv, write_json, write_roc_csv, FinalConfig, GenCheckpointSet, LeakageCheck,
    PipelineError, RunManifest, SplitManifest, SweepConfig,
};
use sdx_core::rng::derive_seed;
use sdx_core::spectrogram::{
    build_spectrogram_dataset, export_png, load_archive, save_archive, Origin, Spectrogram,
    StftConfig,
};
use std::path::{Path, PathBuf};

/// Training element type of the command-line pipeline.
type Elem = f32;

pub fn bad_config(msg: impl Into<String>) -> PipelineError {
    PipelineError::BadConfig(msg.into())
}

fn stft_config(cfg: &ExperimentConfig) -> StftConfig {
    StftConfig::new(cfg.stft.nfft, cfg.stft.nperseg, cfg.stft.noverlap)
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| bad_config(format!("cannot list `{}`: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(bad_config(format!("no files under `{}`", dir.display())));
    }
    Ok(files)
}

fn load_recordings(
    cfg: &ExperimentConfig,
) -> Result<Vec<(SubjectRecording, PathBuf)>, PipelineError> {
    let mut out = Vec::new();
    for (dir, label) in [
        (&cfg.dataset.norm_dir, Label::Norm),
        (&cfg.dataset.sch_dir, Label::Sch),
    ] {
        for path in sorted_files(dir)? {
            let rec = match cfg.dataset.kind {
                DatasetKind::Text16 => read_column_text(&path, label)?,
                DatasetKind::Edf19 => {
                    let (rec, warnings) = read_edf(&path, label)?;
                    for w in warnings {
                        eprintln!("warning: {}: {w}", path.display());
                    }
                    rec
                }
            };
            out.push((rec, path));
        }
    }
    Ok(out)
}

pub fn ingest(cfg: &ExperimentConfig, out: &Path) -> Result<(), PipelineError> {
    let recordings = load_recordings(cfg)?;
    let manifest = build_manifest(&recordings)?;
    save_manifest(&manifest, &out.join("manifest.json"))?;
    println!(
        "ingested {} subjects, {} segments total",
        manifest.entries.len(),
        manifest.total_segments()
    );
    Ok(())
}

pub fn spectrogram_stage(
    cfg: &ExperimentConfig,
    out: &Path,
    png_preview: usize,
) -> Result<(), PipelineError> {
    let manifest_path = out.join("manifest.json");
    if !manifest_path.exists() {
        return Err(bad_config("run `ingest` first: manifest.json not found"));
    }
    let manifest = load_manifest(&manifest_path)?;
    let _ = manifest; // paths re-derived from config; manifest is provenance
    let recordings = load_recordings(cfg)?;
    let normalized: Vec<SubjectRecording> = recordings
        .iter()
        .map(|(rec, _)| zscore_normalize(rec).map(|(r, _)| r))
        .collect::<Result<_, _>>()?;
    let dataset = build_spectrogram_dataset(&normalized, &stft_config(cfg))?;
    let transform = serde_json::json!({
        "nfft": cfg.stft.nfft,
        "nperseg": cfg.stft.nperseg,
        "noverlap": cfg.stft.noverlap,
        "window": "tukey(0.25)",
        "amplitude": "log10 + per-image min-max",
        "resize": "bilinear corner-aligned 128x128",
    });
    save_archive(&out.join("native"), &dataset.native, transform.clone())?;
    save_archive(&out.join("classifier"), &dataset.resized, transform)?;
    for (i, spec) in dataset.native.iter().take(png_preview).enumerate() {
        export_png(spec, &out.join(format!("preview-{i}-{}.png", spec.label)))?;
    }
    println!(
        "wrote {} native and {} classifier spectrograms",
        dataset.native.len(),
        dataset.resized.len()
    );
    Ok(())
}

fn load_classifier_archive(out: &Path) -> Result<Vec<Spectrogram>, PipelineError> {
    let stem = out.join("classifier");
    if !stem.with_extension("json").exists() {
        return Err(bad_config("run `spectrogram` first: classifier archive not found"));
    }
    Ok(load_archive(&stem)?.0)
}

fn load_native_archive(out: &Path) -> Result<Vec<Spectrogram>, PipelineError> {
    let stem = out.join("native");
    if !stem.with_extension("json").exists() {
        return Err(bad_config("run `spectrogram` first: native archive not found"));
    }
    Ok(load_archive(&stem)?.0)
}

fn split_path(out: &Path) -> PathBuf {
    out.join("split.json")
}

/// Load the persisted split, creating it (train-cnn does this) only when
/// `create` is set; augmentation stages refuse to run without it.
fn load_or_create_split(
    cfg: &ExperimentConfig,
    out: &Path,
    dataset: &[Spectrogram],
    create: bool,
) -> Result<SplitManifest, PipelineError> {
    let path = split_path(out);
    if path.exists() {
        return SplitManifest::load(&path);
    }
    if !create {
        return Err(PipelineError::MissingSplitManifest { path });
    }
    let manifest = split_before_augment(
        dataset,
        cfg.split.fraction,
        derive_seed(cfg.seed, "split"),
    )?;
    manifest.save(&path)?;
    println!(
        "persisted split: {} train / {} test",
        manifest.train_keys.len(),
        manifest.test_keys.len()
    );
    Ok(manifest)
}

pub fn train_cnn(cfg: &ExperimentConfig, out: &Path) -> Result<(), PipelineError> {
    let images = load_classifier_archive(out)?;
    let manifest = load_or_create_split(cfg, out, &images, true)?;
    let (train, test) = manifest.apply(&images)?;
    verify_no_leakage(&train, &test)?;

    let spec = cfg.classifier.cnn_spec();
    let mut model = build_cnn::<Elem>(&spec, derive_seed(cfg.seed, "cnn-init"));
    let train_cfg = TrainConfig::new(
        cfg.classifier.learning_rate,
        cfg.classifier.batch_size,
        cfg.classifier.epochs,
        derive_seed(cfg.seed, "cnn-train"),
    );
    let train_owned: Vec<Spectrogram> = train.iter().map(|s| (*s).clone()).collect();
    let test_owned: Vec<Spectrogram> = test.iter().map(|s| (*s).clone()).collect();
    let history = train_classifier(&mut model, &train_owned, &test_owned, &train_cfg)?;
    sdx_core::cnn::write_history_csv(&out.join("cnn-baseline-history.csv"), &history)?;
    save_classifier(&out.join("cnn-baseline.sdx"), &model, cfg.seed)?;
    let (loss, accuracy) = evaluate(&model, &test_owned)?;
    write_json(
        &out.join("baseline.json"),
        &serde_json::json!({ "accuracy": accuracy, "loss": loss, "train_size": train.len(), "test_size": test.len() }),
    )?;
    println!("baseline test accuracy {accuracy:.4}, loss {loss:.4}");
    Ok(())
}

pub fn gen_checkpoint_path(out: &Path, kind: GenKind, label: Label) -> PathBuf {
    out.join(format!("{}-{}.sdx", kind.architecture_id(), label))
}

pub fn train_gen(
    cfg: &ExperimentConfig,
    out: &Path,
    kind: GenKind,
    label: Label,
) -> Result<(), PipelineError> {
    if cfg.dataset.kind != DatasetKind::Text16 {
        return Err(bad_config(
            "generative augmentation runs on the 16-channel dataset only",
        ));
    }
    let native = load_native_archive(out)?;
    // generative models must not see test items
    let manifest = load_or_create_split(cfg, out, &native, false)?;
    let (train, _) = manifest.apply(&native)?;
    let class_train: Vec<Spectrogram> = train
        .iter()
        .filter(|s| s.label == label)
        .map(|s| (*s).clone())
        .collect();

    let frames = cfg.dataset.kind.native_frames();
    let (schedule, vae_cfg, wgan_cfg, gp) = match kind {
        GenKind::Vae => (
            GenSchedule {
                epochs: cfg.vae.epochs,
                batch_size: cfg.vae.batch_size,
                learning_rate: cfg.vae.learning_rate,
                seed: derive_seed(cfg.seed, &format!("vae-{label}")),
            },
            cfg.vae.vae_config(frames),
            cfg.wgan.wgan_config(frames).map_err(|e| bad_config(e.to_string()))?,
            cfg.wgan.gp_config(),
        ),
        GenKind::Wgan => (
            GenSchedule {
                epochs: cfg.wgan.epochs,
                batch_size: cfg.wgan.batch_size,
                learning_rate: cfg.wgan.learning_rate,
                seed: derive_seed(cfg.seed, &format!("wgan-{label}")),
            },
            cfg.vae.vae_config(frames),
            cfg.wgan.wgan_config(frames).map_err(|e| bad_config(e.to_string()))?,
            cfg.wgan.gp_config(),
        ),
    };
    let path = gen_checkpoint_path(out, kind, label);
    let outcome = train_generative::<Elem>(
        kind, label, &class_train, &vae_cfg, &wgan_cfg, &gp, &schedule, &path,
    )?;
    let history_csv = out.join(format!("{}-{label}-history.csv", kind.architecture_id()));
    match &outcome.history {
        GenHistory::Vae(rows) => {
            let mut text = String::from("epoch,loss,reconstruction,kl\n");
            for r in rows {
                text.push_str(&format!("{},{},{},{}\n", r.epoch, r.loss, r.reconstruction, r.kl));
            }
            std::fs::write(&history_csv, text)?;
        }
        GenHistory::Wgan(rows) => {
            let mut text = String::from(
                "epoch,critic_loss,wasserstein_estimate,penalty,generator_loss,critic_steps,generator_steps\n",
            );
            for r in rows {
                text.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.epoch,
                    r.critic_loss,
                    r.wasserstein_estimate,
                    r.penalty,
                    r.generator_loss,
                    r.critic_steps,
                    r.generator_steps
                ));
            }
            std::fs::write(&history_csv, text)?;
        }
    }
    println!(
        "trained {} for class {label} on {} items -> {}",
        kind.architecture_id(),
        class_train.len(),
        path.display()
    );
    Ok(())
}

pub fn sample_stage(
    cfg: &ExperimentConfig,
    out: &Path,
    kind: GenKind,
    label: Label,
    count: usize,
) -> Result<(), PipelineError> {
    let ckpt = gen_checkpoint_path(out, kind, label);
    if !ckpt.exists() {
        return Err(bad_config(format!(
            "checkpoint `{}` not found; run `train-gen` first",
            ckpt.display()
        )));
    }
    let samples = sample_synthetic::<Elem>(
        &ckpt,
        count,
        label,
        derive_seed(cfg.seed, &format!("sample-{}-{label}", kind.architecture_id())),
    )?;
    let stem = out.join(format!("synthetic-{}-{label}", kind.architecture_id()));
    save_archive(
        &stem,
        &samples,
        serde_json::json!({ "kind": kind.architecture_id(), "count": count }),
    )?;
    println!("sampled {count} {} spectrograms -> {}", kind.architecture_id(), stem.display());
    Ok(())
}

fn checkpoint_set(out: &Path) -> Result<GenCheckpointSet, PipelineError> {
    let set = GenCheckpointSet {
        vae_norm: gen_checkpoint_path(out, GenKind::Vae, Label::Norm),
        vae_sch: gen_checkpoint_path(out, GenKind::Vae, Label::Sch),
        wgan_norm: gen_checkpoint_path(out, GenKind::Wgan, Label::Norm),
        wgan_sch: gen_checkpoint_path(out, GenKind::Wgan, Label::Sch),
    };
    for p in [&set.vae_norm, &set.vae_sch, &set.wgan_norm, &set.wgan_sch] {
        if !p.exists() {
            return Err(bad_config(format!(
                "checkpoint `{}` not found; run `train-gen` for both kinds and classes",
                p.display()
            )));
        }
    }
    Ok(set)
}

pub fn sweep_stage(cfg: &ExperimentConfig, out: &Path) -> Result<(), PipelineError> {
    let images = load_classifier_archive(out)?;
    let manifest = load_or_create_split(cfg, out, &images, false)?;
    let (train, test) = manifest.apply(&images)?;
    let checkpoints = checkpoint_set(out)?;
    let sweep_cfg = SweepConfig {
        rows: cfg.sweep.rows.clone(),
        learning_rate: cfg.sweep.learning_rate,
        batch_size: cfg.sweep.batch_size,
        max_epochs: cfg.sweep.max_epochs,
        cnn: cfg.classifier.cnn_spec(),
        seed: derive_seed(cfg.seed, "sweep"),
    };
    let report = run_sweep::<Elem>(&train, &test, &checkpoints, &sweep_cfg)?;
    write_json(&out.join("sweep.json"), &serde_json::to_value(&report).unwrap())?;
    let mut csv = String::from("kind,add_norm,add_sch,accuracy,loss,train_size,epochs_ran\n");
    for c in &report.cells {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.kind.architecture_id(),
            c.add_norm,
            c.add_sch,
            c.accuracy,
            c.loss,
            c.train_size,
            c.epochs_ran
        ));
    }
    std::fs::write(out.join("sweep.csv"), csv)?;
    println!(
        "sweep best: {} +{}/{} at accuracy {:.4}",
        report.best.kind.architecture_id(),
        report.best.add_norm,
        report.best.add_sch,
        report.best.accuracy
    );
    Ok(())
}

pub fn final_stage(
    cfg: &ExperimentConfig,
    out: &Path,
    add_norm: Option<usize>,
    add_sch: Option<usize>,
) -> Result<(), PipelineError> {
    let images = load_classifier_archive(out)?;
    let manifest = load_or_create_split(cfg, out, &images, false)?;
    let (train, test) = manifest.apply(&images)?;
    let kind = match cfg.final_.kind.as_str() {
        "vae" => GenKind::Vae,
        "wgan" => GenKind::Wgan,
        other => return Err(bad_config(format!("unknown generative kind `{other}`"))),
    };
    let norm_ckpt = gen_checkpoint_path(out, kind, Label::Norm);
    let sch_ckpt = gen_checkpoint_path(out, kind, Label::Sch);
    for p in [&norm_ckpt, &sch_ckpt] {
        if !p.exists() {
            return Err(bad_config(format!("checkpoint `{}` not found", p.display())));
        }
    }
    let final_cfg = FinalConfig {
        add_norm: add_norm.unwrap_or(cfg.final_.add_norm),
        add_sch: add_sch.unwrap_or(cfg.final_.add_sch),
        augment_kind: kind,
        learning_rate: cfg.final_.learning_rate,
        batch_size: cfg.final_.batch_size,
        epochs: cfg.final_.epochs,
        cnn: cfg.classifier.cnn_spec(),
        seed: derive_seed(cfg.seed, "final"),
    };
    let report = run_final_comparison::<Elem>(&train, &test, &norm_ckpt, &sch_ckpt, &final_cfg)?;
    for row in &report.rows {
        if let Some(roc) = &row.roc {
            write_roc_csv(&out.join(format!("roc-{}.csv", row.model)), roc)?;
        }
        println!(
            "{}: accuracy {:.4}, loss {:.4}, auc {:.4}",
            row.model, row.accuracy, row.loss, row.auc
        );
    }
    write_json(&out.join("final.json"), &serde_json::to_value(&report).unwrap())?;
    Ok(())
}

pub fn explain_stage(
    cfg: &ExperimentConfig,
    out: &Path,
    count: usize,
) -> Result<(), PipelineError> {
    let images = load_classifier_archive(out)?;
    let manifest = load_or_create_split(cfg, out, &images, false)?;
    let (_, test) = manifest.apply(&images)?;
    let ckpt = out.join("cnn-baseline.sdx");
    if !ckpt.exists() {
        return Err(bad_config("run `train-cnn` first: cnn-baseline.sdx not found"));
    }
    let model = load_classifier::<Elem>(&ckpt)?;
    let side = model.spec.input_size;
    let segmap = grid_segment(side, cfg.lime.cell).map_err(PipelineError::Lime)?;
    let surrogate = cfg
        .lime
        .surrogate_config(derive_seed(cfg.seed, "lime"))
        .map_err(|e| bad_config(e.to_string()))?;

    let explain_dir = out.join("explain");
    std::fs::create_dir_all(&explain_dir)?;
    for (i, item) in test.iter().take(count).enumerate() {
        let model_ref = &model;
        let template = (*item).clone();
        let predictor = move |batch: &[Vec<f32>]| -> Result<Vec<Vec<f64>>, LimeError> {
            let images: Vec<Spectrogram> = batch
                .iter()
                .map(|values| {
                    let mut s = template.clone();
                    s.values = values.clone();
                    s
                })
                .collect();
            let probs = predict(model_ref, &images)
                .map_err(|e| LimeError::BadConfig(e.to_string()))?;
            Ok(probs.iter().map(|p| p.to_vec()).collect())
        };
        let explanation = explain_instance(predictor, &item.values, &segmap, &surrogate, None)
            .map_err(PipelineError::Lime)?;
        let heatmap = render_heatmap(&explanation, &segmap);
        save_heatmap_png(
            &explain_dir.join(format!("explain-{i}.png")),
            &heatmap,
            side,
        )
        .map_err(PipelineError::Lime)?;
        write_json(
            &explain_dir.join(format!("explain-{i}.json")),
            &serde_json::json!({
                "subject_id": item.provenance.subject_id,
                "segment_index": item.provenance.segment_index,
                "label": item.label,
                "target_class": explanation.target_class,
                "fidelity": explanation.fidelity,
                "intercept": explanation.intercept,
                "weights": explanation.weights,
                "config": { "cell": cfg.lime.cell, "num_samples": cfg.lime.num_samples,
                             "kernel_width": cfg.lime.kernel_width,
                             "ridge_alpha": cfg.lime.ridge_alpha,
                             "replacement": cfg.lime.replacement },
            }),
        )?;
    }
    println!("wrote {count} explanations under {}", explain_dir.display());
    Ok(())
}

pub fn audit_stage(
    cfg: &ExperimentConfig,
    out: &Path,
    with_protocol: bool,
) -> Result<(), PipelineError> {
    let native = load_native_archive(out)?;
    let manifest = load_or_create_split(cfg, out, &native, false)?;
    let (train, test) = manifest.apply(&native)?;
    let train_owned: Vec<Spectrogram> = train.iter().map(|s| (*s).clone()).collect();

    let frames = cfg.dataset.kind.native_frames();
    let ae_cfg = LatentAeConfig {
        input: (512, frames),
        conv_channels: cfg.audit.ae_conv_channels.clone(),
        fc_widths: cfg.audit.ae_fc_widths.clone(),
    };
    let schedule = LatentAeSchedule {
        epochs: cfg.audit.ae_epochs,
        batch_size: cfg.audit.ae_batch_size,
        learning_rate: cfg.audit.ae_learning_rate,
        seed: derive_seed(cfg.seed, "audit-ae"),
    };
    let (model, _history) = fit_latent_autoencoder::<Elem>(&train_owned, &ae_cfg, &schedule)?;

    // embed real training data plus per-kind synthetic pools
    let mut items = train_owned.clone();
    let per_class = cfg.audit.samples_per_model / 2;
    for kind in [GenKind::Vae, GenKind::Wgan] {
        for label in [Label::Norm, Label::Sch] {
            let ckpt = gen_checkpoint_path(out, kind, label);
            if !ckpt.exists() {
                return Err(bad_config(format!("checkpoint `{}` not found", ckpt.display())));
            }
            items.extend(sample_synthetic::<Elem>(
                &ckpt,
                per_class,
                label,
                derive_seed(cfg.seed, &format!("audit-{}-{label}", kind.architecture_id())),
            )?);
        }
    }
    let codes = model.encode(&items)?;
    let vectors: Vec<Vec<f32>> = codes.iter().map(|c| c.vector.clone()).collect();
    let result = tsne_embed(&vectors, &cfg.audit.tsne_config(derive_seed(cfg.seed, "tsne")))?;
    let origins: Vec<Origin> = codes.iter().map(|c| c.origin).collect();
    let labels: Vec<Label> = codes.iter().map(|c| c.label).collect();
    write_embedding_csv(&out.join("audit-embedding.csv"), &result.coords, &origins, &labels)?;
    let overlap = overlap_statistic(&result.coords, &origins);

    let mut audit = serde_json::json!({
        "overlap": overlap,
        "kl_first": result.kl_history.first(),
        "kl_last": result.kl_history.last(),
        "points": result.coords.len(),
    });
    if with_protocol {
        let resized_test: Vec<Spectrogram> = test
            .iter()
            .map(|s| sdx_core::spectrogram::resize_bilinear(s, 128, 128))
            .collect();
        let protocol_cfg = ProtocolConfig {
            synth_per_class: cfg.protocol.per_class,
            learning_rate: cfg.protocol.learning_rate,
            epochs: cfg.protocol.epochs,
            batch_size: cfg.protocol.batch_size,
            cnn: cfg.classifier.cnn_spec(),
            seed: derive_seed(cfg.seed, "protocol"),
        };
        let scores = train_on_synthetic_protocol::<Elem>(
            &ClassCheckpoints {
                norm: gen_checkpoint_path(out, GenKind::Vae, Label::Norm),
                sch: gen_checkpoint_path(out, GenKind::Vae, Label::Sch),
            },
            &ClassCheckpoints {
                norm: gen_checkpoint_path(out, GenKind::Wgan, Label::Norm),
                sch: gen_checkpoint_path(out, GenKind::Wgan, Label::Sch),
            },
            &resized_test,
            &protocol_cfg,
        )?;
        audit["protocol"] = serde_json::to_value(&scores).unwrap();
    }
    write_json(&out.join("audit.json"), &audit)?;
    println!("audit overlap statistics: {overlap:?}");
    Ok(())
}

pub fn report_stage(
    cfg: &ExperimentConfig,
    canonical_config: &str,
    out: &Path,
) -> Result<(), PipelineError> {
    let images = load_classifier_archive(out)?;
    let manifest = load_or_create_split(cfg, out, &images, false)?;
    let (train, test) = manifest.apply(&images)?;
    verify_no_leakage(&train, &test)?;

    // scan any synthetic archives against the test keys
    let test_keys: std::collections::BTreeSet<String> = test.iter().map(|s| s.key()).collect();
    let mut synthetic_in_test = 0usize;
    for entry in std::fs::read_dir(out)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("synthetic-") && name.ends_with(".json") {
            let stem = path.with_extension("");
            let (samples, _) = load_archive(&stem)?;
            synthetic_in_test += samples
                .iter()
                .filter(|s| test_keys.contains(&s.key()))
                .count();
        }
    }
    let leakage = LeakageCheck {
        test_size: test.len(),
        train_size: train.len(),
        synthetic_in_test,
        shared_keys: 0,
        passed: synthetic_in_test == 0,
    };
    if !leakage.passed {
        return Err(PipelineError::LeakedSynthetic {
            key: "synthetic archive overlaps test keys".into(),
        });
    }

    let run = RunManifest::new(canonical_config, cfg.seed);
    let mut report = serde_json::json!({
        "run": run,
        "leakage_check": leakage,
    });
    for (key, file) in [
        ("sweep", "sweep.json"),
        ("final", "final.json"),
        ("audit", "audit.json"),
        ("baseline", "baseline.json"),
    ] {
        let path = out.join(file);
        if path.exists() {
            let value: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(&path)?)
                    .map_err(|e| bad_config(format!("bad {file}: {e}")))?;
            report[key] = value;
        }
    }
    validate_report(&report)?;
    write_json(&out.join("report.json"), &report)?;
    println!("report written to {}", out.join("report.json").display());
    Ok(())
}

/// Shared by `main`: resolve the output directory from flag, environment or
/// config, creating it if necessary.
pub fn resolve_out_dir(
    flag: Option<PathBuf>,
    cfg: &ExperimentConfig,
) -> Result<PathBuf, PipelineError> {
    let dir = flag
        .or_else(|| std::env::var_os("SDX_OUT").map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
