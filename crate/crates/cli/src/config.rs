//! Declarative experiment configuration.
//!
//! A single TOML file drives every stage; each field has a default matching
//! the reference experiment, and the most common ones can be overridden on
//! the command line.

use sdx_core::cnn::CnnSpec;
use sdx_core::eval::TsneConfig;
use sdx_core::gen::{GpConfig, UpsampleMode, VaeConfig, WganConfig};
use sdx_core::lime::{Replacement, SurrogateConfig};
use sdx_core::tensor::AdamConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// 16-channel single-column text recordings at 128 Hz.
    Text16,
    /// 19-channel EDF recordings at 250 Hz.
    Edf19,
}

impl DatasetKind {
    /// Native spectrogram frame count for 5-second segments.
    pub fn native_frames(&self) -> usize {
        match self {
            DatasetKind::Text16 => 32,
            DatasetKind::Edf19 => 75,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub norm_dir: PathBuf,
    pub sch_dir: PathBuf,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Text16,
            norm_dir: PathBuf::from("data/norm"),
            sch_dir: PathBuf::from("data/sch"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StftSection {
    pub nfft: usize,
    pub nperseg: usize,
    pub noverlap: usize,
}

impl Default for StftSection {
    fn default() -> Self {
        StftSection {
            nfft: 1022,
            nperseg: 360,
            noverlap: 45,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSection {
    pub fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { fraction: 0.2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub conv_channels: Vec<usize>,
    pub dense_widths: Vec<usize>,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let spec = CnnSpec::default();
        ClassifierSection {
            learning_rate: 8e-5,
            batch_size: 32,
            epochs: 100,
            conv_channels: spec.conv_channels,
            dense_widths: spec.dense_widths,
        }
    }
}

impl ClassifierSection {
    pub fn cnn_spec(&self) -> CnnSpec {
        CnnSpec {
            conv_channels: self.conv_channels.clone(),
            dense_widths: self.dense_widths.clone(),
            ..CnnSpec::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub conv_channels: Vec<usize>,
    pub fc_widths: Vec<usize>,
    pub latent_dim: usize,
}

impl Default for VaeSection {
    fn default() -> Self {
        let cfg = VaeConfig::default();
        VaeSection {
            epochs: 6000,
            batch_size: 32,
            learning_rate: 8e-5,
            conv_channels: cfg.conv_channels,
            fc_widths: cfg.fc_widths,
            latent_dim: cfg.latent_dim,
        }
    }
}

impl VaeSection {
    pub fn vae_config(&self, native_frames: usize) -> VaeConfig {
        VaeConfig {
            input: (512, native_frames),
            conv_channels: self.conv_channels.clone(),
            fc_widths: self.fc_widths.clone(),
            latent_dim: self.latent_dim,
            ..VaeConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WganSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub n_critic: usize,
    pub gen_channels: Vec<usize>,
    pub critic_channels: Vec<usize>,
    pub dropout: f64,
    pub output_dropout: bool,
    pub upsample: String,
}

impl Default for WganSection {
    fn default() -> Self {
        let cfg = WganConfig::default();
        WganSection {
            epochs: 2000,
            batch_size: 32,
            learning_rate: 1e-4,
            lambda: 10.0,
            n_critic: 3,
            gen_channels: cfg.gen_channels,
            critic_channels: cfg.critic_channels,
            dropout: cfg.dropout,
            output_dropout: false,
            upsample: "transposed".into(),
        }
    }
}

impl WganSection {
    pub fn wgan_config(&self, native_frames: usize) -> anyhow::Result<WganConfig> {
        let upsample = match self.upsample.as_str() {
            "transposed" => UpsampleMode::Transposed,
            "nearest-conv" => UpsampleMode::NearestConv,
            other => anyhow::bail!("unknown upsample mode `{other}`"),
        };
        Ok(WganConfig {
            image: (512, native_frames),
            gen_channels: self.gen_channels.clone(),
            critic_channels: self.critic_channels.clone(),
            dropout: self.dropout,
            output_dropout: self.output_dropout,
            upsample,
            ..WganConfig::default()
        })
    }

    pub fn gp_config(&self) -> GpConfig {
        GpConfig {
            lambda: self.lambda,
            n_critic: self.n_critic,
            adam: AdamConfig::new(self.learning_rate).with_betas(0.0, 0.9),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub rows: Vec<(usize, usize)>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            rows: sdx_core::pipeline::default_sweep_rows(),
            learning_rate: 1e-5,
            batch_size: 32,
            max_epochs: 300,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FinalSection {
    pub kind: String,
    pub add_norm: usize,
    pub add_sch: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for FinalSection {
    fn default() -> Self {
        FinalSection {
            kind: "vae".into(),
            add_norm: 730,
            add_sch: 700,
            learning_rate: 8e-5,
            batch_size: 32,
            epochs: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolSection {
    pub per_class: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            per_class: 600,
            learning_rate: 1e-5,
            batch_size: 32,
            epochs: 300,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeSection {
    pub cell: usize,
    pub num_samples: usize,
    pub kernel_width: f64,
    pub ridge_alpha: f64,
    pub replacement: String,
}

impl Default for LimeSection {
    fn default() -> Self {
        LimeSection {
            cell: 16,
            num_samples: 1000,
            kernel_width: 0.25,
            ridge_alpha: 1.0,
            replacement: "mean".into(),
        }
    }
}

impl LimeSection {
    pub fn surrogate_config(&self, seed: u64) -> anyhow::Result<SurrogateConfig> {
        let replacement = match self.replacement.as_str() {
            "mean" => Replacement::Mean,
            "zero" => Replacement::Zero,
            other => anyhow::bail!("unknown replacement `{other}`"),
        };
        Ok(SurrogateConfig {
            num_samples: self.num_samples,
            kernel_width: self.kernel_width,
            ridge_alpha: self.ridge_alpha,
            replacement,
            seed,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditSection {
    pub samples_per_model: usize,
    pub ae_epochs: usize,
    pub ae_batch_size: usize,
    pub ae_learning_rate: f64,
    pub ae_conv_channels: Vec<usize>,
    pub ae_fc_widths: Vec<usize>,
    pub perplexity: f64,
    pub iterations: usize,
    pub tsne_learning_rate: f64,
}

impl Default for AuditSection {
    fn default() -> Self {
        AuditSection {
            samples_per_model: 1008,
            ae_epochs: 50,
            ae_batch_size: 32,
            ae_learning_rate: 1e-4,
            ae_conv_channels: vec![64, 128, 256, 512, 1024],
            ae_fc_widths: vec![1024, 1024],
            perplexity: 30.0,
            iterations: 1000,
            tsne_learning_rate: 200.0,
        }
    }
}

impl AuditSection {
    pub fn tsne_config(&self, seed: u64) -> TsneConfig {
        TsneConfig {
            perplexity: self.perplexity,
            iterations: self.iterations,
            learning_rate: self.tsne_learning_rate,
            seed,
            ..TsneConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub stft: StftSection,
    pub split: SplitSection,
    pub classifier: ClassifierSection,
    pub vae: VaeSection,
    pub wgan: WganSection,
    pub sweep: SweepSection,
    #[serde(rename = "final")]
    pub final_: FinalSection,
    pub protocol: ProtocolSection,
    pub lime: LimeSection,
    pub audit: AuditSection,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<(Self, String)> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| anyhow::anyhow!("cannot read config `{}`: {e}", p.display()))?,
            None => String::new(),
        };
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| anyhow::anyhow!("config parse error: {e}"))?;
        Ok((cfg, text))
    }

    /// Canonical serialization used for the run-manifest hash.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
