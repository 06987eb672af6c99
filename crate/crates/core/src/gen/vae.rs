//! Convolutional variational autoencoder on native-size spectrograms.
//!
//! Encoder: five stride-2 convolutions into a flattened 16384 vector, two
//! dense layers, then separate mean and log-variance heads of 512 units.
//! Decoder mirrors it with transposed convolutions; its final layer is a
//! 3x3 transposed convolution producing logits that a sigmoid maps into
//! `[0,1]` at sampling time. Reconstruction is per-pixel binary
//! cross-entropy summed over pixels and averaged over the batch.

use super::GenError;
use crate::rng::seeded;
use crate::tensor::{
    Activation, Element, ForwardPass, Init, LayerSpec, Network, NodeId, Padding, Tape,
};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    /// Native spectrogram size (rows, cols).
    pub input: (usize, usize),
    pub conv_channels: Vec<usize>,
    pub fc_widths: Vec<usize>,
    pub latent_dim: usize,
    pub conv_kernel: usize,
    pub output_kernel: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            input: (512, 32),
            conv_channels: vec![64, 128, 256, 512, 1024],
            fc_widths: vec![1024, 1024],
            latent_dim: 512,
            conv_kernel: 5,
            output_kernel: 3,
        }
    }
}

impl VaeConfig {
    /// Spatial size after the encoder's stride-2 stack.
    pub fn bottleneck_spatial(&self) -> (usize, usize) {
        let (mut h, mut w) = self.input;
        for _ in &self.conv_channels {
            h = h.div_ceil(2);
            w = w.div_ceil(2);
        }
        (h, w)
    }

    /// Flattened encoder width feeding the dense stack.
    pub fn flatten_dim(&self) -> usize {
        let (h, w) = self.bottleneck_spatial();
        h * w * self.conv_channels.last().copied().unwrap_or(1)
    }
}

#[derive(Debug, Clone)]
pub struct VaeModel<E: Element> {
    pub encoder: Network<E>,
    pub mu_head: Network<E>,
    pub logvar_head: Network<E>,
    pub decoder: Network<E>,
    pub cfg: VaeConfig,
}

fn encoder_spec(cfg: &VaeConfig) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut channels = 1usize;
    for &out in &cfg.conv_channels {
        layers.push(LayerSpec::Conv2d {
            kernel: (cfg.conv_kernel, cfg.conv_kernel),
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
    layers
}

fn head_spec(cfg: &VaeConfig) -> Vec<LayerSpec> {
    vec![LayerSpec::Dense {
        in_dim: cfg.fc_widths.last().copied().unwrap_or(cfg.flatten_dim()),
        out_dim: cfg.latent_dim,
        init: Init::GlorotUniform,
    }]
}

fn decoder_spec(cfg: &VaeConfig) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut dim = cfg.latent_dim;
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
    // mirror the encoder: deepest-1 transposed convs plus the logits layer
    let widths: Vec<usize> = cfg.conv_channels[..cfg.conv_channels.len() - 1]
        .iter()
        .rev()
        .copied()
        .collect();
    for &out in &widths {
        layers.push(LayerSpec::ConvTranspose2d {
            kernel: (cfg.conv_kernel, cfg.conv_kernel),
            in_channels: channels,
            out_channels: out,
            stride: (2, 2),
            init: Init::HeUniform,
        });
        layers.push(LayerSpec::Activation(Activation::Relu));
        channels = out;
    }
    layers.push(LayerSpec::ConvTranspose2d {
        kernel: (cfg.output_kernel, cfg.output_kernel),
        in_channels: channels,
        out_channels: 1,
        stride: (2, 2),
        init: Init::GlorotUniform,
    });
    layers
}

pub fn build_vae<E: Element>(seed: u64) -> VaeModel<E> {
    build_vae_with(&VaeConfig::default(), seed)
}

pub fn build_vae_with<E: Element>(cfg: &VaeConfig, seed: u64) -> VaeModel<E> {
    let mut rng = seeded(seed);
    VaeModel {
        encoder: Network::build(&encoder_spec(cfg), &mut rng).expect("encoder spec"),
        mu_head: Network::build(&head_spec(cfg), &mut rng).expect("mu head spec"),
        logvar_head: Network::build(&head_spec(cfg), &mut rng).expect("logvar head spec"),
        decoder: Network::build(&decoder_spec(cfg), &mut rng).expect("decoder spec"),
        cfg: cfg.clone(),
    }
}

/// Forward passes bound during one ELBO evaluation, for gradient routing.
pub struct VaePasses {
    pub encoder: ForwardPass,
    pub mu: ForwardPass,
    pub logvar: ForwardPass,
    pub decoder: ForwardPass,
}

pub struct ElboTerms {
    pub loss: NodeId,
    pub reconstruction: f64,
    pub kl: f64,
    pub passes: VaePasses,
}

impl<E: Element> VaeModel<E> {
    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
            + self.mu_head.param_count()
            + self.logvar_head.param_count()
            + self.decoder.param_count()
    }

    /// Reparameterized ELBO on a batch of flattened `[0,1]` images.
    ///
    /// `batch` is NHWC `[n, h, w, 1]` data; epsilon is drawn from `rng`
    /// once per latent coordinate.
    pub fn elbo_loss(
        &self,
        tape: &mut Tape<E>,
        batch: &[f64],
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<ElboTerms, GenError> {
        let (h, w) = self.cfg.input;
        if batch.len() != n * h * w {
            return Err(GenError::BatchShape {
                expected: n * h * w,
                actual: batch.len(),
            });
        }
        if let Some(bad) = batch.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(GenError::ValueRange {
                value: *bad,
                lo: 0.0,
                hi: 1.0,
            });
        }
        let data: Vec<E> = batch.iter().map(|&v| E::of_f64(v)).collect();
        let x = tape.leaf(vec![n, h, w, 1], data);
        let encoder = self.encoder.forward_eval(tape, x)?;
        let mu = self.mu_head.forward_eval(tape, encoder.output)?;
        let logvar = self.logvar_head.forward_eval(tape, encoder.output)?;

        // z = mu + exp(logvar / 2) * eps
        let latent = self.cfg.latent_dim;
        let eps: Vec<E> = (0..n * latent)
            .map(|_| E::of_f64(StandardNormal.sample(rng)))
            .collect();
        let eps = tape.leaf(vec![n, latent], eps);
        let half_lv = tape.affine(logvar.output, 0.5, 0.0);
        let std = tape.exp(half_lv);
        let noise = tape.mul(std, eps)?;
        let z = tape.add(mu.output, noise)?;

        let decoder = self.decoder.forward_eval(tape, z)?;
        let recon = tape.sigmoid_bce(decoder.output, batch)?;

        // kl = -1/2 mean_n sum_d (1 + logvar - mu^2 - exp(logvar))
        let one_plus = tape.affine(logvar.output, 1.0, 1.0);
        let mu_sq = tape.mul(mu.output, mu.output)?;
        let centered = tape.sub(one_plus, mu_sq)?;
        let var = tape.exp(logvar.output);
        let inner = tape.sub(centered, var)?;
        let per_sample = tape.sum_per_sample(inner)?;
        let total = tape.sum_all(per_sample);
        let kl = tape.affine(total, -0.5 / n as f64, 0.0);

        let loss = tape.add(recon, kl)?;
        Ok(ElboTerms {
            loss,
            reconstruction: tape.scalar(recon).as_f64(),
            kl: tape.scalar(kl).as_f64(),
            passes: VaePasses {
                encoder,
                mu,
                logvar,
                decoder,
            },
        })
    }

    /// Decode latent vectors into `[0,1]` images (sigmoid over logits).
    pub fn decode(&self, z: &[f64], n: usize) -> Result<Vec<f32>, GenError> {
        let mut tape: Tape<E> = Tape::new();
        let data: Vec<E> = z.iter().map(|&v| E::of_f64(v)).collect();
        let zn = tape.leaf(vec![n, self.cfg.latent_dim], data);
        let pass = self.decoder.forward_eval(&mut tape, zn)?;
        let probs = tape.sigmoid(pass.output);
        Ok(tape.data(probs).iter().map(|v| v.as_f32()).collect())
    }

    /// Encode images to reconstruction logits pushed back through a sigmoid;
    /// deterministic (uses the latent mean, no sampling).
    pub fn reconstruct(&self, batch: &[f64], n: usize) -> Result<Vec<f32>, GenError> {
        let (h, w) = self.cfg.input;
        let mut tape: Tape<E> = Tape::new();
        let data: Vec<E> = batch.iter().map(|&v| E::of_f64(v)).collect();
        let x = tape.leaf(vec![n, h, w, 1], data);
        let enc = self.encoder.forward_eval(&mut tape, x)?;
        let mu = self.mu_head.forward_eval(&mut tape, enc.output)?;
        let dec = self.decoder.forward_eval(&mut tape, mu.output)?;
        let probs = tape.sigmoid(dec.output);
        Ok(tape.data(probs).iter().map(|v| v.as_f32()).collect())
    }
}

/// Standard-normal latent draws for `n` samples.
pub fn sample_latents(latent_dim: usize, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..n * latent_dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect()
}
