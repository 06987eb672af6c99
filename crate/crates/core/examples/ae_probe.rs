//! Probe: does a small latent autoencoder keep codes distinct on a
//! low-variance toy corpus?

use rand::Rng;
use sdx_core::eeg::Label;
use sdx_core::eval::{fit_latent_autoencoder, LatentAeConfig, LatentAeSchedule};
use sdx_core::rng::seeded;
use sdx_core::spectrogram::{Origin, Provenance, Spectrogram};

fn main() {
    let mut rng = seeded(1);
    // near-identical class-structured images like the toy corpus
    let images: Vec<Spectrogram> = (0..60)
        .map(|i| {
            let jitter: f32 = rng.gen::<f32>() * 0.01;
            let values = (0..512 * 32)
                .map(|p| {
                    let r = p / 32;
                    let band = if i % 2 == 0 { 100 } else { 200 };
                    let d = (r as f32 - band as f32).powi(2) / 500.0;
                    ((-d).exp() * 0.8 + 0.1 + jitter).clamp(0.0, 1.0)
                })
                .collect();
            Spectrogram {
                freq_bins: 512,
                time_frames: 32,
                values,
                provenance: Provenance {
                    subject_id: format!("s{i}"),
                    segment_index: i,
                    origin: Origin::Real,
                },
                label: if i % 2 == 0 { Label::Norm } else { Label::Sch },
            }
        })
        .collect();

    for (epochs, lr) in [(2usize, 1e-3f64), (8, 1e-3), (8, 3e-4)] {
        let cfg = LatentAeConfig {
            input: (512, 32),
            conv_channels: vec![2, 4],
            fc_widths: vec![8],
        };
        let schedule = LatentAeSchedule {
            epochs,
            batch_size: 8,
            learning_rate: lr,
            seed: 3,
        };
        let (model, history) = fit_latent_autoencoder::<f32>(&images, &cfg, &schedule).unwrap();
        let codes = model.encode(&images).unwrap();
        let mut min_d = f64::INFINITY;
        let mut max_d: f64 = 0.0;
        for i in 0..codes.len() {
            for j in (i + 1)..codes.len() {
                let d: f64 = codes[i]
                    .vector
                    .iter()
                    .zip(&codes[j].vector)
                    .map(|(a, b)| ((a - b) as f64).powi(2))
                    .sum();
                min_d = min_d.min(d);
                max_d = max_d.max(d);
            }
        }
        println!(
            "epochs {epochs} lr {lr}: loss {:?} -> {:?}, min pair dist^2 {min_d:.3e}, max {max_d:.3e}",
            history.first(),
            history.last()
        );
    }
}
