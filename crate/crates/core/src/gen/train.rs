//! Training loops for the per-class generative models and synthetic
//! sampling from their checkpoints.

use super::vae::{build_vae_with, sample_latents, VaeConfig, VaeModel};
use super::wgan::{
    build_wgan_with, critic_loss_with_gp, generator_loss, sample_noise, GpConfig, WganConfig,
    WganModel,
};
use super::GenError;
use crate::eeg::Label;
use crate::rng::{derive_seed, seeded};
use crate::spectrogram::{Origin, Provenance, Spectrogram};
use crate::tensor::{
    accumulate_grads_multi, load_checkpoint, save_checkpoint, AdamConfig, Element, Network, Tape,
};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenKind {
    Vae,
    Wgan,
}

impl GenKind {
    pub fn origin(&self) -> Origin {
        match self {
            GenKind::Vae => Origin::Vae,
            GenKind::Wgan => Origin::Wgan,
        }
    }

    pub fn architecture_id(&self) -> &'static str {
        match self {
            GenKind::Vae => "vae",
            GenKind::Wgan => "wgan",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GenSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VaeEpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WganEpochStats {
    pub epoch: usize,
    pub critic_loss: f64,
    /// mean D(real) - mean D(fake), the critic's distance estimate.
    pub wasserstein_estimate: f64,
    pub penalty: f64,
    pub generator_loss: f64,
    pub critic_steps: usize,
    pub generator_steps: usize,
}

/// Train a VAE on flattened `[0,1]` items of `item_len` values each.
pub fn train_vae_loop<E: Element>(
    model: &mut VaeModel<E>,
    items: &[Vec<f64>],
    schedule: &GenSchedule,
) -> Result<Vec<VaeEpochStats>, GenError> {
    if items.is_empty() {
        return Err(GenError::EmptyDataset);
    }
    let adam = AdamConfig::new(schedule.learning_rate);
    let mut rng = seeded(schedule.seed);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut history = Vec::with_capacity(schedule.epochs);
    for epoch in 0..schedule.epochs {
        order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for chunk in order.chunks(schedule.batch_size) {
            let mut batch = Vec::with_capacity(chunk.len() * items[0].len());
            for &i in chunk {
                batch.extend_from_slice(&items[i]);
            }
            let mut tape = Tape::new();
            let terms = model.elbo_loss(&mut tape, &batch, chunk.len(), &mut rng)?;
            let loss_value = tape.scalar(terms.loss).as_f64();
            accumulate_grads_multi(
                &mut tape,
                &mut [
                    (&mut model.encoder, &[&terms.passes.encoder]),
                    (&mut model.mu_head, &[&terms.passes.mu]),
                    (&mut model.logvar_head, &[&terms.passes.logvar]),
                    (&mut model.decoder, &[&terms.passes.decoder]),
                ],
                terms.loss,
            )?;
            for net in [
                &mut model.encoder,
                &mut model.mu_head,
                &mut model.logvar_head,
                &mut model.decoder,
            ] {
                net.adam_step(&adam)?;
            }
            sums.0 += loss_value;
            sums.1 += terms.reconstruction;
            sums.2 += terms.kl;
            batches += 1;
        }
        history.push(VaeEpochStats {
            epoch,
            loss: sums.0 / batches as f64,
            reconstruction: sums.1 / batches as f64,
            kl: sums.2 / batches as f64,
        });
    }
    Ok(history)
}

/// WGAN-GP loop over flattened items of shape `item_shape` scaled to
/// `[-1,1]`. For every generator step the critic trains `n_critic` times on
/// fresh batches.
pub fn train_wgan_loop<E: Element>(
    generator: &mut Network<E>,
    critic: &mut Network<E>,
    items: &[Vec<E>],
    item_shape: &[usize],
    noise_dim: usize,
    schedule: &GenSchedule,
    gp: &GpConfig,
) -> Result<Vec<WganEpochStats>, GenError> {
    if items.is_empty() {
        return Err(GenError::EmptyDataset);
    }
    gp.validate()?;
    let critic_adam = AdamConfig {
        learning_rate: schedule.learning_rate,
        ..gp.adam
    };
    let gen_adam = critic_adam;
    let mut rng = seeded(schedule.seed);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut history = Vec::with_capacity(schedule.epochs);
    let per: usize = item_shape.iter().product();

    for epoch in 0..schedule.epochs {
        order.shuffle(&mut rng);
        let mut chunks = order.chunks_exact(schedule.batch_size);
        let mut epoch_stats = WganEpochStats {
            epoch,
            critic_loss: 0.0,
            wasserstein_estimate: 0.0,
            penalty: 0.0,
            generator_loss: 0.0,
            critic_steps: 0,
            generator_steps: 0,
        };
        loop {
            // n_critic critic updates on distinct minibatches
            let mut did_critic = 0usize;
            for _ in 0..gp.n_critic {
                let Some(chunk) = chunks.next() else { break };
                let n = chunk.len();
                let mut real = Vec::with_capacity(n * per);
                for &i in chunk {
                    real.extend_from_slice(&items[i]);
                }
                let noise = sample_noise::<E>(noise_dim, n, &mut rng);
                let mut tape = Tape::new();
                let z = tape.leaf(vec![n, noise_dim], noise);
                let fake_pass = generator.forward_train(&mut tape, z, &mut rng)?;
                let fake = tape.data(fake_pass.output).to_vec();
                let outcome = critic_loss_with_gp(
                    &mut tape, critic, &real, &fake, item_shape, n, gp, &mut rng,
                )?;
                let pass_refs: Vec<&_> = outcome.passes.iter().collect();
                critic.accumulate_grads(&mut tape, &pass_refs, outcome.loss)?;
                critic.adam_step(&critic_adam)?;
                epoch_stats.critic_loss += tape.scalar(outcome.loss).as_f64();
                epoch_stats.wasserstein_estimate += outcome.wasserstein_estimate;
                epoch_stats.penalty += outcome.penalty;
                did_critic += 1;
            }
            if did_critic == 0 {
                break;
            }
            epoch_stats.critic_steps += did_critic;

            // one generator update
            let n = schedule.batch_size;
            let noise = sample_noise::<E>(noise_dim, n, &mut rng);
            let mut tape = Tape::new();
            let outcome =
                generator_loss(&mut tape, generator, critic, &noise, noise_dim, n, &mut rng)?;
            generator.accumulate_grads(&mut tape, &[&outcome.gen_pass], outcome.loss)?;
            generator.adam_step(&gen_adam)?;
            epoch_stats.generator_loss += tape.scalar(outcome.loss).as_f64();
            epoch_stats.generator_steps += 1;
        }
        if epoch_stats.critic_steps > 0 {
            epoch_stats.critic_loss /= epoch_stats.critic_steps as f64;
            epoch_stats.wasserstein_estimate /= epoch_stats.critic_steps as f64;
            epoch_stats.penalty /= epoch_stats.critic_steps as f64;
        }
        if epoch_stats.generator_steps > 0 {
            epoch_stats.generator_loss /= epoch_stats.generator_steps as f64;
        }
        history.push(epoch_stats);
    }
    Ok(history)
}

/// Loss histories of either kind, serialized to CSV by the pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum GenHistory {
    Vae(Vec<VaeEpochStats>),
    Wgan(Vec<WganEpochStats>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenTrainOutcome {
    pub kind: GenKind,
    pub class_label: Label,
    pub history: GenHistory,
}

fn class_items(
    dataset: &[Spectrogram],
    class_label: Label,
    expect: (usize, usize),
) -> Result<Vec<&Spectrogram>, GenError> {
    if dataset.is_empty() {
        return Err(GenError::EmptyDataset);
    }
    if let Some(bad) = dataset.iter().find(|s| s.label != class_label) {
        return Err(GenError::MixedClassDataset {
            expected: class_label,
            found: bad.label,
        });
    }
    if let Some(bad) = dataset
        .iter()
        .find(|s| (s.freq_bins, s.time_frames) != expect)
    {
        return Err(GenError::BatchShape {
            expected: expect.0 * expect.1,
            actual: bad.freq_bins * bad.time_frames,
        });
    }
    Ok(dataset.iter().collect())
}

/// Train one per-class generative model on native spectrograms and persist
/// a checkpoint. VAE consumes `[0,1]` images directly; WGAN sees them
/// remapped to `[-1,1]`.
#[allow(clippy::too_many_arguments)]
pub fn train_generative<E: Element>(
    kind: GenKind,
    class_label: Label,
    dataset: &[Spectrogram],
    vae_cfg: &VaeConfig,
    wgan_cfg: &WganConfig,
    gp: &GpConfig,
    schedule: &GenSchedule,
    checkpoint_path: &Path,
) -> Result<GenTrainOutcome, GenError> {
    let history = match kind {
        GenKind::Vae => {
            let items = class_items(dataset, class_label, vae_cfg.input)?;
            let flat: Vec<Vec<f64>> = items
                .iter()
                .map(|s| s.values.iter().map(|&v| v as f64).collect())
                .collect();
            let mut model: VaeModel<E> =
                build_vae_with(vae_cfg, derive_seed(schedule.seed, "vae-init"));
            let history = train_vae_loop(&mut model, &flat, schedule)?;
            save_checkpoint(
                checkpoint_path,
                kind.architecture_id(),
                schedule.seed,
                &[
                    ("encoder", &model.encoder),
                    ("mu_head", &model.mu_head),
                    ("logvar_head", &model.logvar_head),
                    ("decoder", &model.decoder),
                ],
                serde_json::json!({ "class_label": class_label, "config": vae_cfg }),
            )?;
            GenHistory::Vae(history)
        }
        GenKind::Wgan => {
            let items = class_items(dataset, class_label, wgan_cfg.image)?;
            let flat: Vec<Vec<E>> = items
                .iter()
                .map(|s| {
                    s.values
                        .iter()
                        .map(|&v| E::of_f64(v as f64 * 2.0 - 1.0))
                        .collect()
                })
                .collect();
            let mut model: WganModel<E> =
                build_wgan_with(wgan_cfg, derive_seed(schedule.seed, "wgan-init"));
            let item_shape = [wgan_cfg.image.0, wgan_cfg.image.1, 1];
            let history = train_wgan_loop(
                &mut model.generator,
                &mut model.critic,
                &flat,
                &item_shape,
                wgan_cfg.noise_dim,
                schedule,
                gp,
            )?;
            save_checkpoint(
                checkpoint_path,
                kind.architecture_id(),
                schedule.seed,
                &[
                    ("generator", &model.generator),
                    ("critic", &model.critic),
                ],
                serde_json::json!({ "class_label": class_label, "config": wgan_cfg }),
            )?;
            GenHistory::Wgan(history)
        }
    };
    Ok(GenTrainOutcome {
        kind,
        class_label,
        history,
    })
}

/// Draw `count` synthetic spectrograms from a generative checkpoint.
/// Deterministic in `seed`; the output range is `[0,1]` for both kinds.
pub fn sample_synthetic<E: Element>(
    checkpoint_path: &Path,
    count: usize,
    class_label: Label,
    seed: u64,
) -> Result<Vec<Spectrogram>, GenError> {
    if count == 0 {
        return Err(GenError::BadConfig("sample count must be positive".into()));
    }
    let (descriptor, networks) = load_checkpoint::<E>(checkpoint_path)?;
    let stored_label: Label = serde_json::from_value(descriptor.extra["class_label"].clone())
        .map_err(|e| GenError::BadConfig(format!("checkpoint lacks class_label: {e}")))?;
    if stored_label != class_label {
        return Err(GenError::ClassMismatch {
            requested: class_label,
            stored: stored_label,
        });
    }

    let (kind, values, rows, cols) = match descriptor.architecture.as_str() {
        "vae" => {
            let cfg: VaeConfig = serde_json::from_value(descriptor.extra["config"].clone())
                .map_err(|e| GenError::BadConfig(format!("bad vae config: {e}")))?;
            let [encoder, mu_head, logvar_head, decoder]: [Network<E>; 4] =
                networks.try_into().map_err(|_| {
                    GenError::BadConfig("vae checkpoint must hold four networks".into())
                })?;
            let model = VaeModel {
                encoder,
                mu_head,
                logvar_head,
                decoder,
                cfg: cfg.clone(),
            };
            let mut values = Vec::with_capacity(count);
            for (chunk_index, chunk) in chunk_counts(count, 32).enumerate() {
                let z = sample_latents(
                    cfg.latent_dim,
                    chunk,
                    derive_seed(seed, &format!("vae-sample-{chunk_index}")),
                );
                values.extend(model.decode(&z, chunk)?);
            }
            (GenKind::Vae, values, cfg.input.0, cfg.input.1)
        }
        "wgan" => {
            let cfg: WganConfig = serde_json::from_value(descriptor.extra["config"].clone())
                .map_err(|e| GenError::BadConfig(format!("bad wgan config: {e}")))?;
            let [generator, _critic]: [Network<E>; 2] = networks.try_into().map_err(|_| {
                GenError::BadConfig("wgan checkpoint must hold two networks".into())
            })?;
            let mut values = Vec::with_capacity(count);
            for (chunk_index, chunk) in chunk_counts(count, 32).enumerate() {
                let mut rng = seeded(derive_seed(seed, &format!("wgan-sample-{chunk_index}")));
                let noise = sample_noise::<E>(cfg.noise_dim, chunk, &mut rng);
                let mut tape = Tape::new();
                let z = tape.leaf(vec![chunk, cfg.noise_dim], noise);
                let pass = generator.forward_eval(&mut tape, z)?;
                // tanh output remapped [-1,1] -> [0,1]
                values.extend(
                    tape.data(pass.output)
                        .iter()
                        .map(|v| ((v.as_f64() + 1.0) / 2.0) as f32),
                );
            }
            (GenKind::Wgan, values, cfg.image.0, cfg.image.1)
        }
        other => {
            return Err(GenError::BadConfig(format!(
                "checkpoint architecture `{other}` is not a generative model"
            )))
        }
    };

    let per = rows * cols;
    let out = values
        .chunks(per)
        .take(count)
        .enumerate()
        .map(|(i, v)| Spectrogram {
            freq_bins: rows,
            time_frames: cols,
            values: v.to_vec(),
            provenance: Provenance {
                subject_id: format!("{}-{}-{}", kind.architecture_id(), class_label, seed),
                segment_index: i,
                origin: kind.origin(),
            },
            label: class_label,
        })
        .collect();
    Ok(out)
}

fn chunk_counts(total: usize, size: usize) -> impl Iterator<Item = usize> {
    let full = total / size;
    let rem = total % size;
    std::iter::repeat(size)
        .take(full)
        .chain((rem > 0).then_some(rem))
}
