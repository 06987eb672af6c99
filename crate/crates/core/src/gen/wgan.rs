//! Wasserstein GAN with gradient penalty on native-size spectrograms.
//!
//! Critic: five 5x5 stride-2 convolutions (32..512) with leaky-relu(0.2)
//! and dropout 0.3, flattened into a single linear score. Generator: noise
//! 128 through a dense 8192, reshaped to 16x1x512, then five x2-upsampling
//! convolutions (256,128,64,32,1) with batch norm, ending in tanh. The
//! critic's Lipschitz constraint is enforced by penalizing the deviation of
//! its input-gradient norm from one on real/fake interpolates; dropout is
//! bypassed on that path, which differentiates the deterministic critic.

use super::GenError;
use crate::rng::seeded;
use crate::tensor::{
    input_gradient_norm, Activation, AdamConfig, Element, ForwardPass, Init, LayerSpec, Network,
    NodeId, Padding, Tape,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpsampleMode {
    /// Stride-2 transposed convolution.
    Transposed,
    /// Nearest-neighbour upsample followed by a stride-1 convolution.
    NearestConv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WganConfig {
    pub image: (usize, usize),
    pub noise_dim: usize,
    pub gen_channels: Vec<usize>,
    pub critic_channels: Vec<usize>,
    pub gen_kernel: usize,
    pub critic_kernel: usize,
    pub dropout: f64,
    /// Dropout on the generator's tanh output layer; off unless configured.
    pub output_dropout: bool,
    pub upsample: UpsampleMode,
}

impl Default for WganConfig {
    fn default() -> Self {
        WganConfig {
            image: (512, 32),
            noise_dim: 128,
            gen_channels: vec![256, 128, 64, 32, 1],
            critic_channels: vec![32, 64, 128, 256, 512],
            gen_kernel: 3,
            critic_kernel: 5,
            dropout: 0.3,
            output_dropout: false,
            upsample: UpsampleMode::Transposed,
        }
    }
}

impl WganConfig {
    /// Spatial seed of the generator before upsampling.
    pub fn gen_seed_spatial(&self) -> (usize, usize) {
        let ups = self.gen_channels.len() as u32;
        (self.image.0 >> ups, self.image.1 >> ups)
    }

    /// Width of the dense layer feeding the reshape.
    pub fn gen_seed_dim(&self) -> usize {
        let (h, w) = self.gen_seed_spatial();
        h * w * self.gen_seed_channels()
    }

    pub fn gen_seed_channels(&self) -> usize {
        // 512 at the reference config: doubles the first upsampling width
        self.gen_channels.first().copied().unwrap_or(1) * 2
    }

    pub fn critic_flatten_dim(&self) -> usize {
        let (mut h, mut w) = self.image;
        for _ in &self.critic_channels {
            h = h.div_ceil(2);
            w = w.div_ceil(2);
        }
        h * w * self.critic_channels.last().copied().unwrap_or(1)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GpConfig {
    /// Gradient-penalty coefficient.
    pub lambda: f64,
    /// Critic steps per generator step.
    pub n_critic: usize,
    pub adam: AdamConfig,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            lambda: 10.0,
            n_critic: 3,
            adam: AdamConfig::new(1e-4).with_betas(0.0, 0.9),
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.lambda <= 0.0 {
            return Err(GenError::BadConfig(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.n_critic == 0 {
            return Err(GenError::BadConfig("n_critic must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct WganModel<E: Element> {
    pub generator: Network<E>,
    pub critic: Network<E>,
    pub cfg: WganConfig,
}

fn generator_spec(cfg: &WganConfig) -> Vec<LayerSpec> {
    let mut layers = vec![
        LayerSpec::Dense {
            in_dim: cfg.noise_dim,
            out_dim: cfg.gen_seed_dim(),
            init: Init::HeUniform,
        },
        LayerSpec::Activation(Activation::LeakyRelu(0.2)),
    ];
    let (h, w) = cfg.gen_seed_spatial();
    layers.push(LayerSpec::Reshape(vec![h, w, cfg.gen_seed_channels()]));
    let mut channels = cfg.gen_seed_channels();
    let last = cfg.gen_channels.len() - 1;
    for (i, &out) in cfg.gen_channels.iter().enumerate() {
        match cfg.upsample {
            UpsampleMode::Transposed => layers.push(LayerSpec::ConvTranspose2d {
                kernel: (cfg.gen_kernel, cfg.gen_kernel),
                in_channels: channels,
                out_channels: out,
                stride: (2, 2),
                init: if i == last { Init::GlorotUniform } else { Init::HeUniform },
            }),
            UpsampleMode::NearestConv => {
                layers.push(LayerSpec::Upsample2d { factor: (2, 2) });
                layers.push(LayerSpec::Conv2d {
                    kernel: (cfg.gen_kernel, cfg.gen_kernel),
                    in_channels: channels,
                    out_channels: out,
                    stride: (1, 1),
                    padding: Padding::Same,
                    init: if i == last { Init::GlorotUniform } else { Init::HeUniform },
                });
            }
        }
        layers.push(LayerSpec::BatchNorm { channels: out });
        if i == last {
            layers.push(LayerSpec::Activation(Activation::Tanh));
            if cfg.output_dropout {
                layers.push(LayerSpec::Dropout { rate: cfg.dropout });
            }
        } else {
            layers.push(LayerSpec::Activation(Activation::LeakyRelu(0.2)));
        }
        channels = out;
    }
    layers
}

fn critic_spec(cfg: &WganConfig) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut channels = 1usize;
    for &out in &cfg.critic_channels {
        layers.push(LayerSpec::Conv2d {
            kernel: (cfg.critic_kernel, cfg.critic_kernel),
            in_channels: channels,
            out_channels: out,
            stride: (2, 2),
            padding: Padding::Same,
            init: Init::HeUniform,
        });
        layers.push(LayerSpec::Activation(Activation::LeakyRelu(0.2)));
        layers.push(LayerSpec::Dropout { rate: cfg.dropout });
        channels = out;
    }
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Dense {
        in_dim: cfg.critic_flatten_dim(),
        out_dim: 1,
        init: Init::GlorotUniform,
    });
    layers
}

pub fn build_wgan<E: Element>(seed: u64) -> WganModel<E> {
    build_wgan_with(&WganConfig::default(), seed)
}

pub fn build_wgan_with<E: Element>(cfg: &WganConfig, seed: u64) -> WganModel<E> {
    let mut rng = seeded(seed);
    WganModel {
        generator: Network::build(&generator_spec(cfg), &mut rng).expect("generator spec"),
        critic: Network::build(&critic_spec(cfg), &mut rng).expect("critic spec"),
        cfg: cfg.clone(),
    }
}

/// Critic loss with gradient penalty over arbitrary item shapes.
///
/// `loss = mean D(fake) - mean D(real) + lambda * mean (|grad_xhat D| - 1)^2`
/// with `xhat = eps*real + (1-eps)*fake`, `eps ~ U[0,1]` per sample. The
/// returned passes bind the critic parameters for the real, fake and
/// penalty paths.
pub struct CriticLossOutcome {
    pub loss: NodeId,
    pub wasserstein_estimate: f64,
    pub penalty: f64,
    pub passes: Vec<ForwardPass>,
}

pub fn critic_loss_with_gp<E: Element>(
    tape: &mut Tape<E>,
    critic: &mut Network<E>,
    real: &[E],
    fake: &[E],
    item_shape: &[usize],
    n: usize,
    gp: &GpConfig,
    rng: &mut ChaCha8Rng,
) -> Result<CriticLossOutcome, GenError> {
    gp.validate()?;
    if real.len() != fake.len() {
        return Err(GenError::BatchShape {
            expected: real.len(),
            actual: fake.len(),
        });
    }
    let per: usize = item_shape.iter().product();
    if real.len() != n * per {
        return Err(GenError::BatchShape {
            expected: n * per,
            actual: real.len(),
        });
    }
    let mut shape = vec![n];
    shape.extend_from_slice(item_shape);

    let real_node = tape.leaf(shape.clone(), real.to_vec());
    let fake_node = tape.leaf(shape.clone(), fake.to_vec());

    // dropout active on the score paths
    let real_pass = critic.forward_train(tape, real_node, rng)?;
    let fake_pass = critic.forward_train(tape, fake_node, rng)?;
    let mean_real = mean_scalar(tape, real_pass.output, n);
    let mean_fake = mean_scalar(tape, fake_pass.output, n);

    // xhat = eps * real + (1 - eps) * fake, one eps per sample
    let eps: Vec<E> = (0..n).map(|_| E::of_f64(rng.gen::<f64>())).collect();
    let eps_node = tape.leaf(vec![n], eps);
    let eps_b = tape.broadcast_per_sample(eps_node, &shape)?;
    let one_minus = tape.affine(eps_b, -1.0, 1.0);
    let real_part = tape.mul(eps_b, real_node)?;
    let fake_part = tape.mul(one_minus, fake_node)?;
    let xhat = tape.add(real_part, fake_part)?;

    let (norms, gp_pass) = input_gradient_norm(tape, &*critic, xhat)?;
    let dev = tape.affine(norms, 1.0, -1.0);
    let sq = tape.mul(dev, dev)?;
    let sq_sum = tape.sum_all(sq);
    let penalty = tape.affine(sq_sum, 1.0 / n as f64, 0.0);

    let w_gap = tape.sub(mean_fake, mean_real)?;
    let weighted = tape.affine(penalty, gp.lambda, 0.0);
    let loss = tape.add(w_gap, weighted)?;

    Ok(CriticLossOutcome {
        loss,
        wasserstein_estimate: -tape.scalar(w_gap).as_f64(),
        penalty: tape.scalar(penalty).as_f64(),
        passes: vec![real_pass, fake_pass, gp_pass],
    })
}

/// `-mean D(G(z))`, differentiable through the generator.
pub struct GeneratorLossOutcome {
    pub loss: NodeId,
    pub gen_pass: ForwardPass,
}

pub fn generator_loss<E: Element>(
    tape: &mut Tape<E>,
    generator: &mut Network<E>,
    critic: &mut Network<E>,
    noise: &[E],
    noise_dim: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GeneratorLossOutcome, GenError> {
    if noise.len() != n * noise_dim {
        return Err(GenError::BatchShape {
            expected: n * noise_dim,
            actual: noise.len(),
        });
    }
    let z = tape.leaf(vec![n, noise_dim], noise.to_vec());
    let gen_pass = generator.forward_train(tape, z, rng)?;
    let critic_pass = critic.forward_train(tape, gen_pass.output, rng)?;
    let mean_d = mean_scalar(tape, critic_pass.output, n);
    let loss = tape.affine(mean_d, -1.0, 0.0);
    Ok(GeneratorLossOutcome { loss, gen_pass })
}

fn mean_scalar<E: Element>(tape: &mut Tape<E>, scores: NodeId, n: usize) -> NodeId {
    let total = tape.sum_all(scores);
    tape.affine(total, 1.0 / n as f64, 0.0)
}

/// Standard-normal noise batch.
pub fn sample_noise<E: Element>(noise_dim: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<E> {
    (0..n * noise_dim)
        .map(|_| E::of_f64(StandardNormal.sample(rng)))
        .collect()
}
