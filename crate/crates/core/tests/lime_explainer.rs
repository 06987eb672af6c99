//! LIME behaviour: grid segmentation, planted-model recovery, heatmaps.

mod common;

use sdx_core::lime::{
    explain_instance, grid_segment, render_heatmap, Explanation, LimeError, Replacement,
    SurrogateConfig, SuperpixelMap,
};
use sdx_core::rng::seeded;

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Mean intensity of each superpixel in an image.
fn superpixel_means(image: &[f32], segmap: &SuperpixelMap) -> Vec<f64> {
    let mut sums = vec![0.0f64; segmap.segments];
    let per = (segmap.cell * segmap.cell) as f64;
    for (&v, &l) in image.iter().zip(&segmap.labels) {
        sums[l as usize] += v as f64;
    }
    sums.iter_mut().for_each(|s| *s /= per);
    sums
}

/// Two-class probability head over a linear score.
fn prob_rows(scores: impl Iterator<Item = f64>) -> Vec<Vec<f64>> {
    scores
        .map(|s| {
            let p = 1.0 / (1.0 + (-s).exp());
            vec![1.0 - p, p]
        })
        .collect()
}

#[test]
fn grid_segmentation_shapes_and_indexing() {
    let m = grid_segment(128, 16).unwrap();
    assert_eq!(m.segments, 64);
    for r in 0..128 {
        for c in 0..128 {
            let expect = (r / 16) * 8 + c / 16;
            assert_eq!(m.labels[r * 128 + c] as usize, expect);
        }
    }
    // every label occurs the same number of times
    let mut counts = vec![0usize; 64];
    for &l in &m.labels {
        counts[l as usize] += 1;
    }
    assert!(counts.iter().all(|&c| c == 16 * 16));

    let one = grid_segment(128, 128).unwrap();
    assert_eq!(one.segments, 1);
    assert!(one.labels.iter().all(|&l| l == 0));

    assert!(matches!(
        grid_segment(128, 24),
        Err(LimeError::BadCell { side: 128, cell: 24 })
    ));
}

#[test]
fn planted_single_feature_dominates() {
    use rand::Rng;
    let segmap = grid_segment(64, 16).unwrap(); // 16 superpixels
    let mut rng = seeded(5);
    let image: Vec<f32> = (0..64 * 64).map(|_| rng.gen::<f32>()).collect();
    let planted = 7usize;
    let sm = segmap.clone();
    let predict = move |batch: &[Vec<f32>]| -> Result<Vec<Vec<f64>>, LimeError> {
        Ok(prob_rows(batch.iter().map(|img| {
            let means = superpixel_means(img, &sm);
            4.0 * (means[planted] - 0.25)
        })))
    };
    let cfg = SurrogateConfig {
        num_samples: 600,
        seed: 6,
        ..SurrogateConfig::default()
    };
    let expl = explain_instance(predict, &image, &segmap, &cfg, Some(1)).unwrap();
    let max_idx = (0..expl.weights.len())
        .max_by(|&a, &b| {
            expl.weights[a]
                .abs()
                .partial_cmp(&expl.weights[b].abs())
                .unwrap()
        })
        .unwrap();
    assert_eq!(max_idx, planted);
    assert!(expl.weights[planted] > 0.0);
}

#[test]
fn constant_model_gets_zero_weights_and_unit_behaviour_on_fidelity() {
    let segmap = grid_segment(32, 8).unwrap();
    let image = vec![0.4f32; 32 * 32];
    let predict = |batch: &[Vec<f32>]| -> Result<Vec<Vec<f64>>, LimeError> {
        Ok(batch.iter().map(|_| vec![0.3, 0.7]).collect())
    };
    let cfg = SurrogateConfig {
        num_samples: 200,
        seed: 7,
        ..SurrogateConfig::default()
    };
    let expl = explain_instance(predict, &image, &segmap, &cfg, None).unwrap();
    assert_eq!(expl.target_class, 1, "defaults to the predicted class");
    assert!(expl.weights.iter().all(|w| w.abs() <= 1e-6));
}

#[test]
fn planted_linear_model_is_recovered() {
    use rand::Rng;
    let segmap = grid_segment(128, 16).unwrap(); // 64 superpixels
    let mut rng = seeded(8);
    // distinct constant intensity per superpixel; zero replacement then
    // makes "off" remove exactly that superpixel's contribution
    let cell_values: Vec<f32> = (0..64).map(|_| 0.2 + 0.6 * rng.gen::<f32>()).collect();
    let image: Vec<f32> = segmap
        .labels
        .iter()
        .map(|&l| cell_values[l as usize])
        .collect();
    let truth: Vec<f64> = (0..64).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    // what a mask-linear surrogate can recover: each superpixel's effective
    // contribution when switched on
    let effective: Vec<f64> = cell_values
        .iter()
        .zip(&truth)
        .map(|(&v, &t)| v as f64 * t)
        .collect();
    let sm = segmap.clone();
    let truth_for_model = truth.clone();
    let predict = move |batch: &[Vec<f32>]| -> Result<Vec<Vec<f64>>, LimeError> {
        Ok(prob_rows(batch.iter().map(|img| {
            let means = superpixel_means(img, &sm);
            means
                .iter()
                .zip(&truth_for_model)
                .map(|(m, t)| m * t)
                .sum::<f64>()
                * 0.25
        })))
    };
    let cfg = SurrogateConfig {
        num_samples: 1000,
        replacement: Replacement::Zero,
        seed: 9,
        ..SurrogateConfig::default()
    };
    let expl = explain_instance(predict.clone(), &image, &segmap, &cfg, Some(1)).unwrap();
    let r = pearson(&expl.weights, &effective);
    assert!(r >= 0.95, "pearson {r}");

    // stability: quadrupling the sample count shifts coefficients < 10%
    let cfg4 = SurrogateConfig {
        num_samples: 4000,
        replacement: Replacement::Zero,
        seed: 9,
        ..SurrogateConfig::default()
    };
    let expl4 = explain_instance(predict, &image, &segmap, &cfg4, Some(1)).unwrap();
    let norm: f64 = expl.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    let diff: f64 = expl
        .weights
        .iter()
        .zip(&expl4.weights)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    assert!(diff / norm <= 0.10, "relative shift {}", diff / norm);
}

#[test]
fn explanations_are_seed_deterministic_and_validate_outputs() {
    let segmap = grid_segment(32, 8).unwrap();
    let image: Vec<f32> = (0..32 * 32).map(|i| (i % 17) as f32 / 17.0).collect();
    let sm = segmap.clone();
    let predict = move |batch: &[Vec<f32>]| -> Result<Vec<Vec<f64>>, LimeError> {
        Ok(prob_rows(batch.iter().map(|img| {
            let means = superpixel_means(img, &sm);
            means[0] - means[5]
        })))
    };
    let cfg = SurrogateConfig {
        num_samples: 300,
        seed: 11,
        ..SurrogateConfig::default()
    };
    let a = explain_instance(predict.clone(), &image, &segmap, &cfg, Some(1)).unwrap();
    let b = explain_instance(predict, &image, &segmap, &cfg, Some(1)).unwrap();
    assert_eq!(a.weights, b.weights);
    assert_eq!(a.fidelity, b.fidelity);

    // a predictor with non-probability rows is rejected
    let bad = |batch: &[Vec<f32>]| -> Result<Vec<Vec<f64>>, LimeError> {
        Ok(batch.iter().map(|_| vec![0.9, 0.9]).collect())
    };
    assert!(matches!(
        explain_instance(bad, &image, &segmap, &cfg, None),
        Err(LimeError::NonProbabilityOutput { .. })
    ));
}

#[test]
fn zero_fill_replacement_is_config_selectable() {
    let segmap = grid_segment(16, 8).unwrap();
    let image = vec![1.0f32; 16 * 16];
    // model reports the batch-mean intensity; zero fill drags it further down
    let predict = |batch: &[Vec<f32>]| -> Result<Vec<Vec<f64>>, LimeError> {
        Ok(prob_rows(batch.iter().map(|img| {
            img.iter().map(|&v| v as f64).sum::<f64>() / img.len() as f64
        })))
    };
    let zero_cfg = SurrogateConfig {
        num_samples: 64,
        replacement: Replacement::Zero,
        seed: 3,
        ..SurrogateConfig::default()
    };
    let mean_cfg = SurrogateConfig {
        replacement: Replacement::Mean,
        ..zero_cfg
    };
    let z = explain_instance(predict, &image, &segmap, &zero_cfg, Some(1)).unwrap();
    let m = explain_instance(predict, &image, &segmap, &mean_cfg, Some(1)).unwrap();
    // with a constant-1 image the mean replacement changes nothing, zero does
    assert!(z.weights.iter().any(|w| w.abs() > 1e-4));
    assert!(m.weights.iter().all(|w| w.abs() <= 1e-6));
}

#[test]
fn heatmaps_are_piecewise_constant_and_scaled() {
    let segmap = grid_segment(32, 8).unwrap(); // 16 cells
    let mut weights = vec![0.0f64; 16];
    weights[5] = -0.8; // magnitude matters, not sign
    let expl = Explanation {
        weights,
        intercept: 0.0,
        fidelity: 1.0,
        target_class: 0,
    };
    let h = render_heatmap(&expl, &segmap);
    for (i, &l) in segmap.labels.iter().enumerate() {
        if l == 5 {
            assert_eq!(h[i], 1.0);
        } else {
            assert_eq!(h[i], 0.0);
        }
    }

    // all-equal weights map to zeros
    let flat = Explanation {
        weights: vec![0.4; 16],
        intercept: 0.0,
        fidelity: 1.0,
        target_class: 0,
    };
    let h = render_heatmap(&flat, &segmap);
    assert!(h.iter().all(|v| *v == 0.0));

    // piecewise constancy within each superpixel for arbitrary weights
    let expl = Explanation {
        weights: (0..16).map(|i| (i as f64 * 0.37).sin()).collect(),
        intercept: 0.0,
        fidelity: 1.0,
        target_class: 0,
    };
    let h = render_heatmap(&expl, &segmap);
    for (i, &l) in segmap.labels.iter().enumerate() {
        let first_of_label = segmap.labels.iter().position(|&x| x == l).unwrap();
        assert_eq!(h[i], h[first_of_label]);
    }
}
