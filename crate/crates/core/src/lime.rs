//! Superpixel explanations of classifier predictions.
//!
//! The image is cut into a regular grid of square superpixels (frequency
//! bands by time spans), perturbed by switching superpixels off towards a
//! replacement value, and the model's target-class probability is fitted
//! by a weighted ridge regression over the on/off masks. Coefficients are
//! the superpixel importances; sample weights decay with cosine distance
//! from the unperturbed mask.

use crate::rng::seeded;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelMap {
    pub side: usize,
    pub cell: usize,
    /// Row-major superpixel label per pixel, `0..segments`.
    pub labels: Vec<u32>,
    pub segments: usize,
}

#[derive(Debug)]
pub enum LimeError {
    /// Cell size must divide the image side.
    BadCell { side: usize, cell: usize },
    /// The predict function returned rows that are not probabilities.
    NonProbabilityOutput { row: usize, detail: String },
    /// Fewer samples than superpixels leaves the regression underdetermined.
    TooFewSamples { samples: usize, segments: usize },
    BadConfig(String),
    SingularSystem,
    Io(std::io::Error),
}

impl fmt::Display for LimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LimeError::BadCell { side, cell } => {
                write!(f, "cell {cell} does not divide image side {side}")
            }
            LimeError::NonProbabilityOutput { row, detail } => {
                write!(f, "predict output row {row} is not a probability vector: {detail}")
            }
            LimeError::TooFewSamples { samples, segments } => {
                write!(f, "{samples} samples cannot fit {segments} superpixels")
            }
            LimeError::BadConfig(m) => write!(f, "{m}"),
            LimeError::SingularSystem => write!(f, "ridge system is singular"),
            LimeError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for LimeError {}

impl From<std::io::Error> for LimeError {
    fn from(e: std::io::Error) -> Self {
        LimeError::Io(e)
    }
}

/// Equal square superpixels in row-major label order.
pub fn grid_segment(side: usize, cell: usize) -> Result<SuperpixelMap, LimeError> {
    if cell == 0 || side % cell != 0 {
        return Err(LimeError::BadCell { side, cell });
    }
    let per_row = side / cell;
    let mut labels = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            labels.push(((r / cell) * per_row + c / cell) as u32);
        }
    }
    Ok(SuperpixelMap {
        side,
        cell,
        labels,
        segments: per_row * per_row,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Replacement {
    /// Masked superpixels take the image's mean intensity.
    Mean,
    /// Masked superpixels are zeroed.
    Zero,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub num_samples: usize,
    pub kernel_width: f64,
    pub ridge_alpha: f64,
    pub replacement: Replacement,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            num_samples: 1000,
            kernel_width: 0.25,
            ridge_alpha: 1.0,
            replacement: Replacement::Mean,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Explanation {
    /// One weight per superpixel.
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Weighted R^2 of the surrogate against the model outputs.
    pub fidelity: f64,
    pub target_class: usize,
}

/// Fit a local surrogate around `image`. `predict` maps a batch of images
/// (each `side*side` values) to per-class probability rows; the target
/// class defaults to the model's prediction on the unperturbed image.
pub fn explain_instance<F>(
    mut predict: F,
    image: &[f32],
    segmap: &SuperpixelMap,
    cfg: &SurrogateConfig,
    target_class: Option<usize>,
) -> Result<Explanation, LimeError>
where
    F: FnMut(&[Vec<f32>]) -> Result<Vec<Vec<f64>>, LimeError>,
{
    let s = segmap.segments;
    if cfg.num_samples < s {
        return Err(LimeError::TooFewSamples {
            samples: cfg.num_samples,
            segments: s,
        });
    }
    if cfg.kernel_width <= 0.0 || cfg.ridge_alpha < 0.0 {
        return Err(LimeError::BadConfig(format!(
            "kernel width {} must be positive, ridge alpha {} nonnegative",
            cfg.kernel_width, cfg.ridge_alpha
        )));
    }
    let n = cfg.num_samples;
    let mut rng = seeded(cfg.seed);

    // mask 0 is always the unperturbed image
    let mut masks = vec![true; s];
    let mut all_masks = Vec::with_capacity(n);
    all_masks.push(masks.clone());
    for _ in 1..n {
        for m in &mut masks {
            *m = rng.gen::<f64>() < 0.5;
        }
        all_masks.push(masks.clone());
    }

    let replacement = match cfg.replacement {
        Replacement::Zero => 0.0f32,
        Replacement::Mean => image.iter().sum::<f32>() / image.len() as f32,
    };

    // model outputs in batches
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for chunk in all_masks.chunks(64) {
        let batch: Vec<Vec<f32>> = chunk
            .iter()
            .map(|mask| {
                image
                    .iter()
                    .zip(&segmap.labels)
                    .map(|(&v, &l)| if mask[l as usize] { v } else { replacement })
                    .collect()
            })
            .collect();
        let rows = predict(&batch)?;
        if rows.len() != batch.len() {
            return Err(LimeError::NonProbabilityOutput {
                row: outputs.len(),
                detail: format!("{} rows for {} inputs", rows.len(), batch.len()),
            });
        }
        outputs.extend(rows);
    }
    for (i, row) in outputs.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if row.iter().any(|p| !(0.0..=1.0 + 1e-9).contains(p)) || (sum - 1.0).abs() > 1e-3 {
            return Err(LimeError::NonProbabilityOutput {
                row: i,
                detail: format!("row {row:?} sums to {sum}"),
            });
        }
    }

    let target = match target_class {
        Some(t) => {
            if t >= outputs[0].len() {
                return Err(LimeError::BadConfig(format!(
                    "target class {t} out of range for {} classes",
                    outputs[0].len()
                )));
            }
            t
        }
        None => {
            let base = &outputs[0];
            (0..base.len())
                .max_by(|&a, &b| base[a].partial_cmp(&base[b]).unwrap())
                .unwrap()
        }
    };

    // cosine distance from the all-ones mask: 1 - sqrt(k/S) for k bits on
    let weights: Vec<f64> = all_masks
        .iter()
        .map(|mask| {
            let k = mask.iter().filter(|b| **b).count();
            let d = 1.0 - (k as f64 / s as f64).sqrt();
            (-d * d / (cfg.kernel_width * cfg.kernel_width)).exp()
        })
        .collect();

    // weighted ridge over [1 | mask] with the intercept unpenalized
    let dim = s + 1;
    let mut xtwx = DMatrix::<f64>::zeros(dim, dim);
    let mut xtwy = DVector::<f64>::zeros(dim);
    let mut feat = vec![0.0f64; dim];
    for (mask, (&w, out)) in all_masks.iter().zip(weights.iter().zip(&outputs)) {
        feat[0] = 1.0;
        for (f_slot, &m) in feat[1..].iter_mut().zip(mask) {
            *f_slot = if m { 1.0 } else { 0.0 };
        }
        let y = out[target];
        for i in 0..dim {
            if feat[i] == 0.0 {
                continue;
            }
            xtwy[i] += w * feat[i] * y;
            for j in i..dim {
                xtwx[(i, j)] += w * feat[i] * feat[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            xtwx[(i, j)] = xtwx[(j, i)];
        }
    }
    for i in 1..dim {
        xtwx[(i, i)] += cfg.ridge_alpha;
    }
    let beta = Cholesky::new(xtwx)
        .ok_or(LimeError::SingularSystem)?
        .solve(&xtwy);

    // weighted R^2
    let w_sum: f64 = weights.iter().sum();
    let y_mean: f64 = all_masks
        .iter()
        .zip(weights.iter().zip(&outputs))
        .map(|(_, (&w, out))| w * out[target])
        .sum::<f64>()
        / w_sum;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (mask, (&w, out)) in all_masks.iter().zip(weights.iter().zip(&outputs)) {
        let mut pred = beta[0];
        for (i, &m) in mask.iter().enumerate() {
            if m {
                pred += beta[i + 1];
            }
        }
        let y = out[target];
        ss_res += w * (y - pred) * (y - pred);
        ss_tot += w * (y - y_mean) * (y - y_mean);
    }
    let fidelity = if ss_tot <= 1e-18 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };

    Ok(Explanation {
        weights: beta.as_slice()[1..].to_vec(),
        intercept: beta[0],
        fidelity,
        target_class: target,
    })
}

/// Absolute-weight heatmap, min-max scaled so the most influential
/// superpixel is brightest; constant weights map to all zeros.
pub fn render_heatmap(expl: &Explanation, segmap: &SuperpixelMap) -> Vec<f32> {
    let abs: Vec<f64> = expl.weights.iter().map(|w| w.abs()).collect();
    let min = abs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = abs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    segmap
        .labels
        .iter()
        .map(|&l| {
            if range <= 0.0 {
                0.0
            } else {
                ((abs[l as usize] - min) / range) as f32
            }
        })
        .collect()
}

/// Grayscale PNG of a heatmap (brighter = more influential).
pub fn save_heatmap_png(path: &Path, heatmap: &[f32], side: usize) -> Result<(), LimeError> {
    let mut img = image::GrayImage::new(side as u32, side as u32);
    for r in 0..side {
        for c in 0..side {
            let v = heatmap[r * side + c].clamp(0.0, 1.0);
            img.put_pixel(c as u32, r as u32, image::Luma([(v * 255.0).round() as u8]));
        }
    }
    img.save(path)
        .map_err(|e| LimeError::BadConfig(format!("png encode failed: {e}")))?;
    Ok(())
}
