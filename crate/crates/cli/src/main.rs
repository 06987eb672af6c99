//! `sdx`: EEG spectrogram diagnosis pipeline driver.
//!
//! Stages write their artifacts into one output directory and later stages
//! read them back, so a full experiment is a sequence of subcommands over
//! the same `--out` (or `SDX_OUT`, or `output_dir` in the config).

mod config;
mod stages;

use clap::{Parser, Subcommand, ValueEnum};
use config::ExperimentConfig;
use sdx_core::eeg::Label;
use sdx_core::gen::GenKind;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sdx", version, about = "EEG spectrogram diagnosis pipeline")]
struct Cli {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (falls back to $SDX_OUT, then the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Vae,
    Wgan,
}

impl From<KindArg> for GenKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Vae => GenKind::Vae,
            KindArg::Wgan => GenKind::Wgan,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Norm,
    Sch,
}

impl From<ClassArg> for Label {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Norm => Label::Norm,
            ClassArg::Sch => Label::Sch,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse the raw recordings and write the dataset manifest.
    Ingest,
    /// Normalize, segment and transform recordings into spectrogram archives.
    Spectrogram {
        /// Export the first N native spectrograms as PNG previews.
        #[arg(long, default_value_t = 0)]
        png_preview: usize,
    },
    /// Train the classifier on the real training split.
    TrainCnn {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Train one per-class generative model on the training split.
    TrainGen {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, value_enum)]
        class: ClassArg,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Draw synthetic spectrograms from a trained checkpoint.
    Sample {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, value_enum)]
        class: ClassArg,
        #[arg(long)]
        count: usize,
    },
    /// Augmentation-count sweep over both generative kinds.
    Sweep,
    /// Final baseline-versus-augmented comparison with full metrics.
    Final {
        #[arg(long)]
        add_norm: Option<usize>,
        #[arg(long)]
        add_sch: Option<usize>,
    },
    /// LIME heatmaps for test-set spectrograms.
    Explain {
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// Latent-space audit of synthetic data (t-SNE embedding + overlap).
    Audit {
        /// Also run the train-on-synthetic protocol.
        #[arg(long)]
        protocol: bool,
    },
    /// Assemble, leak-check and validate the run report.
    Report,
}

fn run(cli: Cli) -> Result<(), sdx_core::pipeline::PipelineError> {
    let (mut cfg, _raw) = ExperimentConfig::load(cli.config.as_deref())
        .map_err(|e| sdx_core::pipeline::PipelineError::BadConfig(e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::TrainCnn {
            epochs,
            learning_rate,
        } => {
            if let Some(e) = epochs {
                cfg.classifier.epochs = *e;
            }
            if let Some(lr) = learning_rate {
                cfg.classifier.learning_rate = *lr;
            }
        }
        Command::TrainGen { kind, epochs, .. } => {
            if let Some(e) = epochs {
                match kind {
                    KindArg::Vae => cfg.vae.epochs = *e,
                    KindArg::Wgan => cfg.wgan.epochs = *e,
                }
            }
        }
        _ => {}
    }
    let canonical = cfg.canonical();
    let out = stages::resolve_out_dir(cli.out.clone(), &cfg)?;

    match cli.command {
        Command::Ingest => stages::ingest(&cfg, &out),
        Command::Spectrogram { png_preview } => stages::spectrogram_stage(&cfg, &out, png_preview),
        Command::TrainCnn { .. } => stages::train_cnn(&cfg, &out),
        Command::TrainGen { kind, class, .. } => {
            stages::train_gen(&cfg, &out, kind.into(), class.into())
        }
        Command::Sample { kind, class, count } => {
            stages::sample_stage(&cfg, &out, kind.into(), class.into(), count)
        }
        Command::Sweep => stages::sweep_stage(&cfg, &out),
        Command::Final { add_norm, add_sch } => {
            stages::final_stage(&cfg, &out, add_norm, add_sch)
        }
        Command::Explain { count } => stages::explain_stage(&cfg, &out, count),
        Command::Audit { protocol } => stages::audit_stage(&cfg, &out, protocol),
        Command::Report => stages::report_stage(&cfg, &canonical, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
