//! Shared test oracles: finite differences and small random tensors.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Central finite-difference gradient of a scalar function.
pub fn finite_difference<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x: &[f64],
    step: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = step * (1.0 + x[i].abs());
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Largest relative error between analytic and numeric gradients, with an
/// absolute floor so near-zero entries do not blow up the ratio.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / (a.abs().max(n.abs()).max(1e-6)))
        .fold(0.0, f64::max)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>() * (hi - lo) + lo).collect()
}

/// Uniform values kept away from zero, for kinked activations.
pub fn uniform_vec_away_from_zero(rng: &mut ChaCha8Rng, n: usize, margin: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v = rng.gen::<f64>() * (1.0 - margin) + margin;
            if rng.gen::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect()
}
