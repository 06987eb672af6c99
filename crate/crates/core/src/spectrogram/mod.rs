//! Short-time Fourier spectrograms of segment vectors.
//!
//! With `nfft = 1022` the one-sided spectrum has 512 bins, and with
//! `nperseg = 360`, `noverlap = 45` the 16-channel (length 10240) and
//! 19-channel (length 23750) segment vectors produce exactly 32 and 75
//! frames. Power values are log10-compressed and min-max scaled to `[0,1]`
//! per spectrogram before any model sees them.

mod archive;

pub use archive::{export_png, load_archive, save_archive, ArchiveSidecar};

use crate::eeg::{Label, SegmentVector, SubjectRecording};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Real,
    Vae,
    Wgan,
}

impl Origin {
    pub fn as_str(&self) -> &'static str {
        match self {
            Origin::Real => "real",
            Origin::Vae => "vae",
            Origin::Wgan => "wgan",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub subject_id: String,
    pub segment_index: usize,
    pub origin: Origin,
}

/// A frequency-by-time power image with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrogram {
    pub freq_bins: usize,
    pub time_frames: usize,
    /// Row-major `freq_bins x time_frames`, stored single-precision.
    pub values: Vec<f32>,
    pub provenance: Provenance,
    pub label: Label,
}

impl Spectrogram {
    pub fn at(&self, freq: usize, frame: usize) -> f32 {
        self.values[freq * self.time_frames + frame]
    }

    /// Stable identity for leakage checks across datasets.
    pub fn key(&self) -> String {
        format!(
            "{}:{}:{}",
            self.provenance.origin.as_str(),
            self.provenance.subject_id,
            self.provenance.segment_index
        )
    }
}

#[derive(Debug)]
pub enum SpectrogramError {
    /// Segment shorter than one analysis window.
    SegmentTooShort { len: usize, nperseg: usize },
    BadConfig(String),
    Io(std::io::Error),
    BadSidecar(String),
}

impl fmt::Display for SpectrogramError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectrogramError::SegmentTooShort { len, nperseg } => {
                write!(f, "segment of {len} samples is shorter than nperseg {nperseg}")
            }
            SpectrogramError::BadConfig(m) => write!(f, "bad stft config: {m}"),
            SpectrogramError::Io(e) => write!(f, "spectrogram io error: {e}"),
            SpectrogramError::BadSidecar(m) => write!(f, "bad archive sidecar: {m}"),
        }
    }
}

impl std::error::Error for SpectrogramError {}

impl From<std::io::Error> for SpectrogramError {
    fn from(e: std::io::Error) -> Self {
        SpectrogramError::Io(e)
    }
}

/// Periodic Tukey window with taper fraction `alpha`.
pub fn tukey_window(len: usize, alpha: f64) -> Vec<f64> {
    // periodic form: symmetric window of len+1 points with the last dropped
    let m = len; // denominator of the symmetric (len+1)-point window
    let mut w = Vec::with_capacity(len);
    for n in 0..len {
        let x = n as f64 / m as f64;
        let v = if x < alpha / 2.0 {
            0.5 * (1.0 + (std::f64::consts::PI * (2.0 * x / alpha - 1.0)).cos())
        } else if x < 1.0 - alpha / 2.0 {
            1.0
        } else {
            0.5 * (1.0 + (std::f64::consts::PI * (2.0 * (1.0 - x) / alpha - 1.0)).cos())
        };
        w.push(v);
    }
    w
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StftConfig {
    pub nfft: usize,
    pub nperseg: usize,
    pub noverlap: usize,
    /// Taper coefficients applied to each frame before zero-padding.
    pub window: Vec<f64>,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig::new(1022, 360, 45)
    }
}

impl StftConfig {
    /// Tukey(0.25)-windowed config; the defaults are nfft 1022, nperseg 360,
    /// noverlap 45 (nperseg/8).
    pub fn new(nfft: usize, nperseg: usize, noverlap: usize) -> Self {
        StftConfig {
            nfft,
            nperseg,
            noverlap,
            window: tukey_window(nperseg, 0.25),
        }
    }

    pub fn validate(&self) -> Result<(), SpectrogramError> {
        if self.nperseg > self.nfft {
            return Err(SpectrogramError::BadConfig(format!(
                "nperseg {} exceeds nfft {}",
                self.nperseg, self.nfft
            )));
        }
        if self.noverlap >= self.nperseg {
            return Err(SpectrogramError::BadConfig(format!(
                "noverlap {} must be below nperseg {}",
                self.noverlap, self.nperseg
            )));
        }
        if self.window.len() != self.nperseg {
            return Err(SpectrogramError::BadConfig(format!(
                "window has {} coefficients, nperseg is {}",
                self.window.len(),
                self.nperseg
            )));
        }
        Ok(())
    }

    pub fn freq_bins(&self) -> usize {
        self.nfft / 2 + 1
    }

    pub fn frames_for(&self, len: usize) -> Result<usize, SpectrogramError> {
        if len < self.nperseg {
            return Err(SpectrogramError::SegmentTooShort {
                len,
                nperseg: self.nperseg,
            });
        }
        Ok(1 + (len - self.nperseg) / (self.nperseg - self.noverlap))
    }
}

/// Reusable FFT plan for one config.
pub struct StftPlan {
    cfg: StftConfig,
    fft: Arc<dyn Fft<f64>>,
}

impl StftPlan {
    pub fn new(cfg: StftConfig) -> Result<Self, SpectrogramError> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.nfft);
        Ok(StftPlan { cfg, fft })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    /// One-sided power spectrogram (|FFT|^2, no density scaling).
    pub fn spectrogram(&self, seg: &SegmentVector) -> Result<Spectrogram, SpectrogramError> {
        let cfg = &self.cfg;
        let frames = cfg.frames_for(seg.data.len())?;
        let bins = cfg.freq_bins();
        let hop = cfg.nperseg - cfg.noverlap;
        let mut values = vec![0f32; bins * frames];
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.nfft];
        for frame in 0..frames {
            let start = frame * hop;
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = if i < cfg.nperseg {
                    Complex::new(seg.data[start + i] * cfg.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            for (bin, v) in buf.iter().take(bins).enumerate() {
                values[bin * frames + frame] = v.norm_sqr() as f32;
            }
        }
        Ok(Spectrogram {
            freq_bins: bins,
            time_frames: frames,
            values,
            provenance: Provenance {
                subject_id: seg.subject_id.clone(),
                segment_index: seg.segment_index,
                origin: Origin::Real,
            },
            label: seg.label,
        })
    }
}

/// Convenience one-shot wrapper around [`StftPlan`].
pub fn stft_spectrogram(
    seg: &SegmentVector,
    cfg: &StftConfig,
) -> Result<Spectrogram, SpectrogramError> {
    StftPlan::new(cfg.clone())?.spectrogram(seg)
}

/// log10 compression and per-image min-max scaling to `[0,1]`. A constant
/// image maps to all zeros.
pub fn log_normalize(spec: &Spectrogram) -> Spectrogram {
    let mut out = spec.clone();
    for v in &mut out.values {
        *v = (*v as f64 + 1e-12).log10() as f32;
    }
    let min = out.values.iter().cloned().fold(f32::INFINITY, f32::min);
    let max = out.values.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let range = max - min;
    if range <= 0.0 {
        for v in &mut out.values {
            *v = 0.0;
        }
    } else {
        for v in &mut out.values {
            *v = (*v - min) / range;
        }
    }
    out
}

/// Corner-aligned bilinear resample to `out_rows x out_cols`.
pub fn resize_bilinear(spec: &Spectrogram, out_rows: usize, out_cols: usize) -> Spectrogram {
    let (rows, cols) = (spec.freq_bins, spec.time_frames);
    debug_assert!(rows >= 2 && cols >= 2 && out_rows >= 2 && out_cols >= 2);
    let mut values = vec![0f32; out_rows * out_cols];
    let rscale = (rows - 1) as f64 / (out_rows - 1) as f64;
    let cscale = (cols - 1) as f64 / (out_cols - 1) as f64;
    for r in 0..out_rows {
        let sr = r as f64 * rscale;
        let r0 = sr.floor() as usize;
        let r1 = (r0 + 1).min(rows - 1);
        let fr = sr - r0 as f64;
        for c in 0..out_cols {
            let sc = c as f64 * cscale;
            let c0 = sc.floor() as usize;
            let c1 = (c0 + 1).min(cols - 1);
            let fc = sc - c0 as f64;
            let v00 = spec.values[r0 * cols + c0] as f64;
            let v01 = spec.values[r0 * cols + c1] as f64;
            let v10 = spec.values[r1 * cols + c0] as f64;
            let v11 = spec.values[r1 * cols + c1] as f64;
            let top = v00 + (v01 - v00) * fc;
            let bottom = v10 + (v11 - v10) * fc;
            values[r * out_cols + c] = (top + (bottom - top) * fr) as f32;
        }
    }
    Spectrogram {
        freq_bins: out_rows,
        time_frames: out_cols,
        values,
        provenance: spec.provenance.clone(),
        label: spec.label,
    }
}

pub const CLASSIFIER_SIZE: usize = 128;

/// Both dataset views: native-size spectrograms for the generative models
/// and 128x128 resized images for the classifier, sharing provenance.
#[derive(Debug, Clone, Default)]
pub struct SpectrogramDataset {
    pub native: Vec<Spectrogram>,
    pub resized: Vec<Spectrogram>,
}

impl SpectrogramDataset {
    pub fn len(&self) -> usize {
        self.native.len()
    }

    pub fn is_empty(&self) -> bool {
        self.native.is_empty()
    }
}

/// Spectrogram pair (native, resized) for every segment of one normalized
/// recording.
pub fn spectrograms_for_recording(
    rec: &SubjectRecording,
    plan: &StftPlan,
) -> Result<Vec<(Spectrogram, Spectrogram)>, SpectrogramError> {
    let segments = crate::eeg::segment_and_concat(rec).map_err(|e| {
        SpectrogramError::BadConfig(format!("cannot segment `{}`: {e}", rec.subject_id))
    })?;
    segments
        .par_iter()
        .map(|seg| {
            let native = log_normalize(&plan.spectrogram(seg)?);
            let resized = resize_bilinear(&native, CLASSIFIER_SIZE, CLASSIFIER_SIZE);
            Ok((native, resized))
        })
        .collect()
}

/// Build both dataset views from normalized recordings.
pub fn build_spectrogram_dataset(
    recordings: &[SubjectRecording],
    cfg: &StftConfig,
) -> Result<SpectrogramDataset, SpectrogramError> {
    let plan = StftPlan::new(cfg.clone())?;
    let mut dataset = SpectrogramDataset::default();
    for rec in recordings {
        for (native, resized) in spectrograms_for_recording(rec, &plan)? {
            dataset.native.push(native);
            dataset.resized.push(resized);
        }
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eeg::Label;

    fn seg(data: Vec<f64>) -> SegmentVector {
        SegmentVector {
            subject_id: "s".into(),
            segment_index: 0,
            label: Label::Norm,
            data,
        }
    }

    fn raw(values: Vec<f32>, rows: usize, cols: usize) -> Spectrogram {
        Spectrogram {
            freq_bins: rows,
            time_frames: cols,
            values,
            provenance: Provenance {
                subject_id: "s".into(),
                segment_index: 0,
                origin: Origin::Real,
            },
            label: Label::Norm,
        }
    }

    #[test]
    fn frame_counts_match_both_dataset_geometries() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.freq_bins(), 512);
        assert_eq!(cfg.frames_for(10_240).unwrap(), 32);
        assert_eq!(cfg.frames_for(23_750).unwrap(), 75);
        assert!(cfg.frames_for(100).is_err());
    }

    #[test]
    fn segment_shapes_match_both_datasets() {
        let plan = StftPlan::new(StftConfig::default()).unwrap();
        let s = plan.spectrogram(&seg(vec![0.1; 10_240])).unwrap();
        assert_eq!((s.freq_bins, s.time_frames), (512, 32));
        let s = plan.spectrogram(&seg(vec![0.1; 23_750])).unwrap();
        assert_eq!((s.freq_bins, s.time_frames), (512, 75));
    }

    #[test]
    fn pure_tone_peaks_at_its_bin_in_every_frame() {
        let cfg = StftConfig::default();
        let bin = 77;
        let data: Vec<f64> = (0..10_240)
            .map(|i| (2.0 * std::f64::consts::PI * bin as f64 * i as f64 / 1022.0).sin())
            .collect();
        let s = stft_spectrogram(&seg(data), &cfg).unwrap();
        for frame in 0..s.time_frames {
            let argmax = (0..s.freq_bins)
                .max_by(|&a, &b| s.at(a, frame).partial_cmp(&s.at(b, frame)).unwrap())
                .unwrap();
            assert_eq!(argmax, bin, "frame {frame}");
        }
    }

    #[test]
    fn zero_input_gives_zero_power_and_white_noise_is_finite() {
        let cfg = StftConfig::default();
        let s = stft_spectrogram(&seg(vec![0.0; 10_240]), &cfg).unwrap();
        assert!(s.values.iter().all(|v| *v == 0.0));

        let noise: Vec<f64> = (0..10_240)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let s = stft_spectrogram(&seg(noise), &cfg).unwrap();
        let total: f64 = s.values.iter().map(|v| *v as f64).sum();
        assert!(total.is_finite() && total > 0.0);
    }

    #[test]
    fn spectrograms_are_bit_deterministic() {
        let cfg = StftConfig::default();
        let data: Vec<f64> = (0..10_240).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
        let a = stft_spectrogram(&seg(data.clone()), &cfg).unwrap();
        let b = stft_spectrogram(&seg(data), &cfg).unwrap();
        assert_eq!(
            a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn log_normalize_maps_to_unit_interval_and_preserves_order() {
        let s = raw(vec![0.0, 5.0, 1.0, 100.0, 2.5, 7.0], 2, 3);
        let n = log_normalize(&s);
        assert_eq!(n.values.iter().cloned().fold(f32::INFINITY, f32::min), 0.0);
        assert_eq!(n.values.iter().cloned().fold(f32::NEG_INFINITY, f32::max), 1.0);
        for i in 0..s.values.len() {
            for j in 0..s.values.len() {
                if s.values[i] < s.values[j] {
                    assert!(n.values[i] <= n.values[j]);
                }
            }
        }

        let c = log_normalize(&raw(vec![3.0; 6], 2, 3));
        assert!(c.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn resize_preserves_constants_and_exact_bilinear_functions() {
        let c = resize_bilinear(&raw(vec![0.7; 12 * 8], 12, 8), 6, 4);
        assert!(c.values.iter().all(|v| (*v - 0.7).abs() <= 1e-7));

        // f(r,c) = 2r + 3c is reproduced exactly under corner alignment
        let (rows, cols) = (9, 5);
        let mut vals = vec![0f32; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                vals[r * cols + c] = (2 * r + 3 * c) as f32;
            }
        }
        let small = resize_bilinear(&raw(vals, rows, cols), 5, 3);
        for r in 0..5 {
            for c in 0..3 {
                let want = 2.0 * (r as f32 * 2.0) + 3.0 * (c as f32 * 2.0);
                let got = small.values[r * 3 + c];
                assert!((got - want).abs() <= 1e-5, "({r},{c}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn resized_pixels_stay_within_source_neighbourhood() {
        let mut values = vec![0f32; 512 * 32];
        for (i, v) in values.iter_mut().enumerate() {
            *v = ((i * 2654435761) % 1000) as f32 / 1000.0;
        }
        let s = raw(values, 512, 32);
        let r = resize_bilinear(&s, 128, 128);
        assert_eq!((r.freq_bins, r.time_frames), (128, 128));
        let rscale = 511.0 / 127.0;
        let cscale = 31.0 / 127.0;
        for rr in 0..128 {
            for cc in 0..128 {
                let r0 = (rr as f64 * rscale).floor() as usize;
                let c0 = (cc as f64 * cscale).floor() as usize;
                let r1 = (r0 + 1).min(511);
                let c1 = (c0 + 1).min(31);
                let neigh = [
                    s.at(r0, c0),
                    s.at(r0, c1),
                    s.at(r1, c0),
                    s.at(r1, c1),
                ];
                let lo = neigh.iter().cloned().fold(f32::INFINITY, f32::min) - 1e-6;
                let hi = neigh.iter().cloned().fold(f32::NEG_INFINITY, f32::max) + 1e-6;
                let v = r.at(rr, cc);
                assert!(v >= lo && v <= hi);
            }
        }
    }

    #[test]
    fn tukey_window_tapers_symmetrically() {
        let w = tukey_window(360, 0.25);
        assert_eq!(w.len(), 360);
        assert_eq!(w[0], 0.0);
        assert!(w[180] == 1.0);
        // periodic symmetry: w[n] == w[len - n]
        for n in 1..180 {
            assert!((w[n] - w[360 - n]).abs() <= 1e-12, "{n}");
        }
        assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
