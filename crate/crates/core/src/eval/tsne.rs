//! Exact t-SNE into three dimensions.
//!
//! Conditional distributions are calibrated per point by binary search on
//! the Gaussian bandwidth until the entropy matches log(perplexity), the
//! low-dimensional affinities use the Student-t kernel, and the KL
//! divergence is minimized by gradient descent with momentum and per-
//! coordinate gains. The recorded KL history is always computed against the
//! unexaggerated target distribution.

use super::EvalError;
use crate::rng::seeded;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const TSNE_OUTPUT_DIM: usize = 3;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TsneResult {
    /// Centered 3-d coordinates, one row per input point.
    pub coords: Vec<[f64; TSNE_OUTPUT_DIM]>,
    /// KL(P||Q) per iteration against the unexaggerated P.
    pub kl_history: Vec<f64>,
}

fn pairwise_squared(points: &[Vec<f32>]) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0f64;
            for (a, b) in points[i].iter().zip(&points[j]) {
                let diff = *a as f64 - *b as f64;
                acc += diff * diff;
            }
            d[i * n + j] = acc;
            d[j * n + i] = acc;
        }
    }
    d
}

/// Row-wise bandwidth calibration. Returns conditional probabilities
/// `p(j|i)` flattened; rows whose entropy cannot approach the target and
/// that contain duplicate points are reported as errors.
fn calibrate_conditionals(
    dist_sq: &[f64],
    n: usize,
    perplexity: f64,
) -> Result<Vec<f64>, EvalError> {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    let mut failed_rows = Vec::new();
    for i in 0..n {
        let row = &dist_sq[i * n..(i + 1) * n];
        // numerically stable weights: exp(-beta (d - d_min))
        let d_min = row
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, &d)| d)
            .fold(f64::INFINITY, f64::min);
        let entropy_at = |beta: f64| -> f64 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for (j, &d) in row.iter().enumerate() {
                if j == i {
                    continue;
                }
                let w = (-beta * (d - d_min)).exp();
                sum += w;
                weighted += w * (d - d_min);
            }
            // H = ln(sum) + beta * E[d - d_min]
            sum.ln() + beta * weighted / sum
        };
        let mut beta = 1.0f64;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;
        let mut best = (beta, f64::INFINITY);
        for _ in 0..200 {
            let entropy = entropy_at(beta);
            let diff = entropy - target;
            if entropy.is_finite() && diff.abs() < best.1 {
                best = (beta, diff.abs());
            }
            if diff.abs() <= 1e-4 {
                break;
            }
            if entropy.is_finite() && diff > 0.0 {
                beta_min = beta;
                beta = if beta_max.is_finite() {
                    (beta + beta_max) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                // too concentrated (or underflow): lower beta
                beta_max = beta;
                beta = if beta_min.is_finite() {
                    (beta + beta_min) / 2.0
                } else {
                    beta / 2.0
                };
            }
        }
        // rows that cannot reach the target because of duplicate points
        // (several zero-distance neighbours bound the entropy from below)
        let duplicates = row
            .iter()
            .enumerate()
            .any(|(j, &d)| j != i && d <= 1e-18);
        if !best.1.is_finite() || (best.1 > 1e-3 && duplicates) {
            failed_rows.push(i);
            continue;
        }
        // materialize the row at the best bandwidth found; rows in generic
        // position converge, exactly-equidistant ones keep their best effort
        let beta = best.0;
        let mut sum = 0.0;
        for (j, &d) in row.iter().enumerate() {
            if j == i {
                continue;
            }
            let w = (-beta * (d - d_min)).exp();
            p[i * n + j] = w;
            sum += w;
        }
        for j in 0..n {
            p[i * n + j] /= sum;
        }
    }
    if !failed_rows.is_empty() {
        return Err(EvalError::PerplexityCalibration { rows: failed_rows });
    }
    Ok(p)
}

/// Symmetrized joint probabilities with the standard 1e-12 floor.
fn joint_probabilities(cond: &[f64], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
    }
    p
}

pub fn tsne_embed(points: &[Vec<f32>], cfg: &TsneConfig) -> Result<TsneResult, EvalError> {
    let n = points.len();
    if n < 10 {
        return Err(EvalError::TooFewPoints { have: n, need: 10 });
    }
    if cfg.perplexity >= (n - 1) as f64 / 3.0 {
        return Err(EvalError::BadConfig(format!(
            "perplexity {} too large for {} points",
            cfg.perplexity, n
        )));
    }
    let dist = pairwise_squared(points);
    let cond = calibrate_conditionals(&dist, n, cfg.perplexity)?;
    let p = joint_probabilities(&cond, n);

    let mut rng = seeded(cfg.seed);
    let dim = TSNE_OUTPUT_DIM;
    let mut y: Vec<f64> = (0..n * dim)
        .map(|_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v * 1e-2
        })
        .collect();
    let mut velocity = vec![0.0f64; n * dim];
    let mut gains = vec![1.0f64; n * dim];
    let mut kl_history = Vec::with_capacity(cfg.iterations);
    let mut q = vec![0.0; n * n];
    let mut grad = vec![0.0; n * dim];

    for iter in 0..cfg.iterations {
        let exaggeration = if iter < cfg.exaggeration_iters {
            cfg.early_exaggeration
        } else {
            1.0
        };
        // student-t affinities
        let mut q_sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut d = 0.0;
                for k in 0..dim {
                    let diff = y[i * dim + k] - y[j * dim + k];
                    d += diff * diff;
                }
                let w = 1.0 / (1.0 + d);
                q[i * n + j] = w;
                q[j * n + i] = w;
                q_sum += 2.0 * w;
            }
        }

        // kl against the true (unexaggerated) target
        let mut kl = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let pij = p[i * n + j];
                let qij = (q[i * n + j] / q_sum).max(1e-12);
                kl += pij * (pij / qij).ln();
            }
        }
        kl_history.push(kl);

        // gradient: 4 sum_j (exag*p_ij - q_ij) w_ij (y_i - y_j)
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = q[i * n + j];
                let coeff = 4.0 * (exaggeration * p[i * n + j] - w / q_sum) * w;
                for k in 0..dim {
                    grad[i * dim + k] += coeff * (y[i * dim + k] - y[j * dim + k]);
                }
            }
        }

        let momentum = if iter < cfg.exaggeration_iters { 0.5 } else { 0.8 };
        for idx in 0..n * dim {
            let same_sign = grad[idx].signum() == velocity[idx].signum();
            gains[idx] = if same_sign {
                (gains[idx] * 0.8).max(0.01)
            } else {
                gains[idx] + 0.2
            };
            velocity[idx] =
                momentum * velocity[idx] - cfg.learning_rate * gains[idx] * grad[idx];
            y[idx] += velocity[idx];
        }
        // recenter
        for k in 0..dim {
            let mean: f64 = (0..n).map(|i| y[i * dim + k]).sum::<f64>() / n as f64;
            for i in 0..n {
                y[i * dim + k] -= mean;
            }
        }
    }

    let coords = (0..n)
        .map(|i| [y[i * dim], y[i * dim + 1], y[i * dim + 2]])
        .collect();
    Ok(TsneResult { coords, kl_history })
}

/// Mean silhouette over 3-d coordinates under the given cluster labels.
pub fn silhouette(coords: &[[f64; TSNE_OUTPUT_DIM]], labels: &[usize]) -> f64 {
    let n = coords.len();
    let d = |a: &[f64; 3], b: &[f64; 3]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let clusters: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
    let mut total = 0.0;
    for i in 0..n {
        let mut per_cluster: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
        for j in 0..n {
            if i == j {
                continue;
            }
            let e = per_cluster.entry(labels[j]).or_insert((0.0, 0));
            e.0 += d(&coords[i], &coords[j]);
            e.1 += 1;
        }
        let a = per_cluster
            .get(&labels[i])
            .map(|(s, c)| s / *c as f64)
            .unwrap_or(0.0);
        let b = clusters
            .iter()
            .filter(|&&c| c != labels[i])
            .filter_map(|c| per_cluster.get(c).map(|(s, n)| s / *n as f64))
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

/// Nearest-real-neighbour overlap statistic per synthetic origin: the mean
/// distance from a synthetic point to its closest real point, divided by
/// the mean nearest-neighbour distance among real points. Values near 1
/// mean the synthetic cloud sits on the real one.
pub fn overlap_statistic(
    coords: &[[f64; TSNE_OUTPUT_DIM]],
    origins: &[crate::spectrogram::Origin],
) -> std::collections::BTreeMap<String, f64> {
    use crate::spectrogram::Origin;
    let d = |a: &[f64; 3], b: &[f64; 3]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let real_idx: Vec<usize> = origins
        .iter()
        .enumerate()
        .filter(|(_, o)| **o == Origin::Real)
        .map(|(i, _)| i)
        .collect();
    let mut baseline = 0.0;
    for &i in &real_idx {
        let nn = real_idx
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| d(&coords[i], &coords[j]))
            .fold(f64::INFINITY, f64::min);
        baseline += nn;
    }
    baseline /= real_idx.len().max(1) as f64;

    let mut out = std::collections::BTreeMap::new();
    for origin in [Origin::Vae, Origin::Wgan] {
        let idx: Vec<usize> = origins
            .iter()
            .enumerate()
            .filter(|(_, o)| **o == origin)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let mut mean_nn = 0.0;
        for &i in &idx {
            let nn = real_idx
                .iter()
                .map(|&j| d(&coords[i], &coords[j]))
                .fold(f64::INFINITY, f64::min);
            mean_nn += nn;
        }
        mean_nn /= idx.len() as f64;
        out.insert(origin.as_str().to_string(), mean_nn / baseline.max(1e-12));
    }
    out
}
