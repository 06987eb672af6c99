//! Plain autoencoder producing 1024-dimensional latent codes for the
//! synthetic-data distribution audit. Trained on real data only; synthetic
//! spectrograms are embedded, never trained on.

use super::EvalError;
use crate::rng::seeded;
use crate::spectrogram::{Origin, Spectrogram};
use crate::tensor::{
    accumulate_grads_multi, Activation, AdamConfig, Element, Init, LayerSpec, Network, Padding,
    Tape,
};
use crate::eeg::Label;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Audit code size; the latent vectors are exactly this wide.
pub const LATENT_DIM: usize = 1024;

#[derive(Debug, Clone)]
pub struct LatentPoint {
    pub vector: Vec<f32>,
    pub origin: Origin,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentAeConfig {
    pub input: (usize, usize),
    pub conv_channels: Vec<usize>,
    pub fc_widths: Vec<usize>,
}

impl Default for LatentAeConfig {
    fn default() -> Self {
        LatentAeConfig {
            input: (512, 32),
            conv_channels: vec![64, 128, 256, 512, 1024],
            fc_widths: vec![1024, 1024],
        }
    }
}

impl LatentAeConfig {
    fn bottleneck_spatial(&self) -> (usize, usize) {
        let (mut h, mut w) = self.input;
        for _ in &self.conv_channels {
            h = h.div_ceil(2);
            w = w.div_ceil(2);
        }
        (h, w)
    }

    fn flatten_dim(&self) -> usize {
        let (h, w) = self.bottleneck_spatial();
        h * w * self.conv_channels.last().copied().unwrap_or(1)
    }
}

#[derive(Debug, Clone)]
pub struct LatentAutoencoder<E: Element> {
    pub encoder: Network<E>,
    pub decoder: Network<E>,
    pub cfg: LatentAeConfig,
}

fn encoder_spec(cfg: &LatentAeConfig) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut channels = 1usize;
    for &out in &cfg.conv_channels {
        layers.push(LayerSpec::Conv2d {
            kernel: (5, 5),
            in_channels: channels,
            out_channels: out,
            stride: (2, 2),
            padding: Padding::Same,
            init: Init::HeUniform,
        });
        layers.push(LayerSpec::Activation(Activation::Relu));
        channels = out;
    }
    layers.push(LayerSpec::Flatten);
    let mut dim = cfg.flatten_dim();
    for &width in &cfg.fc_widths {
        layers.push(LayerSpec::Dense {
            in_dim: dim,
            out_dim: width,
            init: Init::HeUniform,
        });
        layers.push(LayerSpec::Activation(Activation::Relu));
        dim = width;
    }
    // linear bottleneck
    layers.push(LayerSpec::Dense {
        in_dim: dim,
        out_dim: LATENT_DIM,
        init: Init::GlorotUniform,
    });
    layers
}

fn decoder_spec(cfg: &LatentAeConfig) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut dim = LATENT_DIM;
    for &width in cfg.fc_widths.iter().rev() {
        layers.push(LayerSpec::Dense {
            in_dim: dim,
            out_dim: width,
            init: Init::HeUniform,
        });
        layers.push(LayerSpec::Activation(Activation::Relu));
        dim = width;
    }
    layers.push(LayerSpec::Dense {
        in_dim: dim,
        out_dim: cfg.flatten_dim(),
        init: Init::HeUniform,
    });
    layers.push(LayerSpec::Activation(Activation::Relu));
    let (h, w) = cfg.bottleneck_spatial();
    let deepest = *cfg.conv_channels.last().unwrap();
    layers.push(LayerSpec::Reshape(vec![h, w, deepest]));
    let mut channels = deepest;
    for &out in cfg.conv_channels[..cfg.conv_channels.len() - 1].iter().rev() {
        layers.push(LayerSpec::ConvTranspose2d {
            kernel: (5, 5),
            in_channels: channels,
            out_channels: out,
            stride: (2, 2),
            init: Init::HeUniform,
        });
        layers.push(LayerSpec::Activation(Activation::Relu));
        channels = out;
    }
    layers.push(LayerSpec::ConvTranspose2d {
        kernel: (3, 3),
        in_channels: channels,
        out_channels: 1,
        stride: (2, 2),
        init: Init::GlorotUniform,
    });
    layers
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LatentAeSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

fn batch_of<E: Element>(items: &[&Spectrogram]) -> Vec<E> {
    items
        .iter()
        .flat_map(|s| s.values.iter().map(|&v| E::of_f32(v)))
        .collect()
}

/// Train on real spectrograms with mean-squared reconstruction error.
/// Returns the model plus the per-epoch loss history.
pub fn fit_latent_autoencoder<E: Element>(
    real_train: &[Spectrogram],
    cfg: &LatentAeConfig,
    schedule: &LatentAeSchedule,
) -> Result<(LatentAutoencoder<E>, Vec<f64>), EvalError> {
    if real_train.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if let Some(bad) = real_train.iter().find(|s| s.provenance.origin != Origin::Real) {
        return Err(EvalError::SyntheticContamination { key: bad.key() });
    }
    let mut rng = seeded(schedule.seed);
    let mut model = LatentAutoencoder {
        encoder: Network::build(&encoder_spec(cfg), &mut rng).expect("encoder spec"),
        decoder: Network::build(&decoder_spec(cfg), &mut rng).expect("decoder spec"),
        cfg: cfg.clone(),
    };
    let adam = AdamConfig::new(schedule.learning_rate);
    let (h, w) = cfg.input;
    let mut order: Vec<usize> = (0..real_train.len()).collect();
    let mut history = Vec::with_capacity(schedule.epochs);
    for _ in 0..schedule.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(schedule.batch_size) {
            let refs: Vec<&Spectrogram> = chunk.iter().map(|&i| &real_train[i]).collect();
            let data = batch_of::<E>(&refs);
            let mut tape = Tape::new();
            let x = tape.leaf(vec![chunk.len(), h, w, 1], data.clone());
            let target = tape.leaf(vec![chunk.len(), h, w, 1], data);
            let enc = model.encoder.forward_eval(&mut tape, x)?;
            let dec = model.decoder.forward_eval(&mut tape, enc.output)?;
            let diff = tape.sub(dec.output, target)?;
            let sq = tape.mul(diff, diff)?;
            let sum = tape.sum_all(sq);
            let loss = tape.affine(sum, 1.0 / (chunk.len() * h * w) as f64, 0.0);
            total += tape.scalar(loss).as_f64();
            batches += 1;
            accumulate_grads_multi(
                &mut tape,
                &mut [
                    (&mut model.encoder, &[&enc]),
                    (&mut model.decoder, &[&dec]),
                ],
                loss,
            )?;
            model.encoder.adam_step(&adam)?;
            model.decoder.adam_step(&adam)?;
        }
        history.push(total / batches as f64);
    }
    Ok((model, history))
}

impl<E: Element> LatentAutoencoder<E> {
    /// Deterministic 1024-dimensional codes.
    pub fn encode(&self, items: &[Spectrogram]) -> Result<Vec<LatentPoint>, EvalError> {
        let (h, w) = self.cfg.input;
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(32) {
            let refs: Vec<&Spectrogram> = chunk.iter().collect();
            let data = batch_of::<E>(&refs);
            let mut tape = Tape::new();
            let x = tape.leaf(vec![chunk.len(), h, w, 1], data);
            let enc = self.encoder.forward_eval(&mut tape, x)?;
            let codes = tape.data(enc.output);
            for (i, s) in chunk.iter().enumerate() {
                out.push(LatentPoint {
                    vector: codes[i * LATENT_DIM..(i + 1) * LATENT_DIM]
                        .iter()
                        .map(|v| v.as_f32())
                        .collect(),
                    origin: s.provenance.origin,
                    label: s.label,
                });
            }
        }
        Ok(out)
    }

    /// Mean-squared reconstruction error over a held-out set.
    pub fn reconstruction_mse(&self, items: &[Spectrogram]) -> Result<f64, EvalError> {
        let (h, w) = self.cfg.input;
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in items.chunks(32) {
            let refs: Vec<&Spectrogram> = chunk.iter().collect();
            let data = batch_of::<E>(&refs);
            let mut tape = Tape::new();
            let x = tape.leaf(vec![chunk.len(), h, w, 1], data.clone());
            let enc = self.encoder.forward_eval(&mut tape, x)?;
            let dec = self.decoder.forward_eval(&mut tape, enc.output)?;
            for (got, want) in tape.data(dec.output).iter().zip(&data) {
                let d = got.as_f64() - want.as_f64();
                total += d * d;
            }
            count += chunk.len() * h * w;
        }
        Ok(total / count as f64)
    }
}

/// MSE of predicting the per-pixel mean image of `train` for every item of
/// `held_out`; the baseline the autoencoder has to beat.
pub fn mean_image_mse(train: &[Spectrogram], held_out: &[Spectrogram]) -> f64 {
    let n = train[0].values.len();
    let mut mean = vec![0.0f64; n];
    for s in train {
        for (m, &v) in mean.iter_mut().zip(&s.values) {
            *m += v as f64;
        }
    }
    for m in &mut mean {
        *m /= train.len() as f64;
    }
    let mut total = 0.0;
    for s in held_out {
        for (m, &v) in mean.iter().zip(&s.values) {
            let d = v as f64 - m;
            total += d * d;
        }
    }
    total / (held_out.len() * n) as f64
}
