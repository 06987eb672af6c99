//! Parsing and preprocessing of raw EEG recordings.
//!
//! Two on-disk formats are supported: single-column text files carrying the
//! concatenated channels of a 16-channel/128 Hz recording, and EDF files
//! carrying 19-channel/250 Hz recordings. Recordings are z-scored per
//! channel and cut into 5-second segments whose channels are concatenated
//! into one vector per segment.

mod edf;
mod manifest;
mod text;

pub use edf::{
    parse_edf, read_edf, write_edf_bytes, EdfFile, EdfSignalHeader, EDF_CHANNELS,
    EDF_TRUNCATE_SAMPLES,
};
pub use manifest::{build_manifest, load_manifest, save_manifest, DatasetManifest, ManifestEntry};
pub use text::{read_column_text, TEXT_CHANNELS, TEXT_SAMPLES_PER_CHANNEL};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Class label; the positive class is schizophrenia.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Norm,
    Sch,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Norm => "norm",
            Label::Sch => "sch",
        }
    }

    pub fn class_index(&self) -> usize {
        match self {
            Label::Norm => 0,
            Label::Sch => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const SEGMENT_SECONDS: usize = 5;

/// One subject's multichannel recording in microvolts.
#[derive(Debug, Clone)]
pub struct SubjectRecording {
    pub subject_id: String,
    pub label: Label,
    pub sampling_rate_hz: usize,
    pub channels: Vec<String>,
    /// `channels.len()` rows of equal length.
    pub samples: Vec<Vec<f64>>,
}

/// Per-channel mean and standard deviation removed by z-scoring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// One 5-second window with every channel's slice concatenated
/// channel-major into a single vector.
#[derive(Debug, Clone)]
pub struct SegmentVector {
    pub subject_id: String,
    pub segment_index: usize,
    pub label: Label,
    pub data: Vec<f64>,
}

#[derive(Debug)]
pub enum IngestError {
    Io(std::io::Error),
    /// Text file with an unexpected number of lines.
    LineCount { expected: usize, actual: usize },
    /// Text line that does not parse as a number.
    BadNumber { line: usize, content: String },
    /// EDF header field that failed to parse.
    BadHeader { field: &'static str, detail: String },
    /// Fewer data-record bytes than the header declares.
    RecordCountMismatch { declared: usize, actual: usize },
    /// EDF file with a channel count other than the dataset's 19.
    ChannelCount { expected: usize, actual: usize },
    /// Recording shorter than the dataset's fixed truncation length.
    ShortRecording { have: usize, need: usize },
    /// Sampling rate unsupported by this pipeline.
    BadSamplingRate { rate_hz: f64 },
    /// Channel whose variance is zero, so z-scoring is undefined.
    DegenerateChannel { channel: String },
    /// Recording shorter than one segment window.
    TooShortToSegment { samples: usize, window: usize },
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestError::Io(e) => write!(f, "io error: {e}"),
            IngestError::LineCount { expected, actual } => {
                write!(f, "expected {expected} numeric lines, found {actual}")
            }
            IngestError::BadNumber { line, content } => {
                write!(f, "line {line}: `{content}` is not a number")
            }
            IngestError::BadHeader { field, detail } => {
                write!(f, "EDF header field `{field}`: {detail}")
            }
            IngestError::RecordCountMismatch { declared, actual } => {
                write!(f, "EDF declares {declared} data records, file holds {actual}")
            }
            IngestError::ChannelCount { expected, actual } => {
                write!(f, "expected {expected} channels, found {actual}")
            }
            IngestError::ShortRecording { have, need } => {
                write!(f, "recording has {have} samples per channel, need {need}")
            }
            IngestError::BadSamplingRate { rate_hz } => {
                write!(f, "unsupported sampling rate {rate_hz} Hz")
            }
            IngestError::DegenerateChannel { channel } => {
                write!(f, "channel `{channel}` has zero variance; cannot z-score")
            }
            IngestError::TooShortToSegment { samples, window } => {
                write!(f, "{samples} samples cannot fill one {window}-sample segment")
            }
        }
    }
}

impl std::error::Error for IngestError {}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::Io(e)
    }
}

impl SubjectRecording {
    pub fn new(
        subject_id: impl Into<String>,
        label: Label,
        sampling_rate_hz: usize,
        channels: Vec<String>,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self, IngestError> {
        if sampling_rate_hz != 128 && sampling_rate_hz != 250 {
            return Err(IngestError::BadSamplingRate {
                rate_hz: sampling_rate_hz as f64,
            });
        }
        debug_assert_eq!(channels.len(), samples.len());
        debug_assert!(samples.windows(2).all(|w| w[0].len() == w[1].len()));
        Ok(SubjectRecording {
            subject_id: subject_id.into(),
            label,
            sampling_rate_hz,
            channels,
            samples,
        })
    }

    pub fn samples_per_channel(&self) -> usize {
        self.samples.first().map(|c| c.len()).unwrap_or(0)
    }

    /// Samples in one 5-second segment window.
    pub fn segment_window(&self) -> usize {
        SEGMENT_SECONDS * self.sampling_rate_hz
    }
}

/// Z-score each channel independently over the full recording, using the
/// population (1/N) standard deviation.
pub fn zscore_normalize(
    rec: &SubjectRecording,
) -> Result<(SubjectRecording, NormalizationStats), IngestError> {
    let mut out = rec.clone();
    let mut means = Vec::with_capacity(rec.channels.len());
    let mut stds = Vec::with_capacity(rec.channels.len());
    for (name, channel) in rec.channels.iter().zip(&mut out.samples) {
        let n = channel.len() as f64;
        let mean = channel.iter().sum::<f64>() / n;
        let var = channel.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std < 1e-12 * (1.0 + mean.abs()) {
            return Err(IngestError::DegenerateChannel {
                channel: name.clone(),
            });
        }
        for v in channel.iter_mut() {
            *v = (*v - mean) / std;
        }
        means.push(mean);
        stds.push(std);
    }
    Ok((out, NormalizationStats { mean: means, std: stds }))
}

/// Cut a (normalized) recording into 5-second segments and concatenate the
/// channels of each segment into one vector. Trailing samples that do not
/// fill a window are discarded.
pub fn segment_and_concat(rec: &SubjectRecording) -> Result<Vec<SegmentVector>, IngestError> {
    let window = rec.segment_window();
    let total = rec.samples_per_channel();
    if total < window {
        return Err(IngestError::TooShortToSegment {
            samples: total,
            window,
        });
    }
    let count = total / window;
    let mut out = Vec::with_capacity(count);
    for seg in 0..count {
        let offset = seg * window;
        let mut data = Vec::with_capacity(rec.channels.len() * window);
        for channel in &rec.samples {
            data.extend_from_slice(&channel[offset..offset + window]);
        }
        out.push(SegmentVector {
            subject_id: rec.subject_id.clone(),
            segment_index: seg,
            label: rec.label,
            data,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(rate: usize, channels: usize, t: usize, f: impl Fn(usize, usize) -> f64) -> SubjectRecording {
        SubjectRecording::new(
            "s1",
            Label::Norm,
            rate,
            (0..channels).map(|c| format!("ch{c}")).collect(),
            (0..channels)
                .map(|c| (0..t).map(|i| f(c, i)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zscore_reference_channel() {
        let r = rec(128, 1, 3, |_, i| (i + 1) as f64);
        // trailing ignored; just check the normalized values
        let (normalized, stats) = zscore_normalize(&r).unwrap();
        let want = [-1.224744871391589, 0.0, 1.224744871391589];
        for (got, want) in normalized.samples[0].iter().zip(&want) {
            assert!((got - want).abs() <= 1e-12);
        }
        assert!((stats.mean[0] - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn zscore_is_idempotent_on_stats_and_centers_gaussians() {
        let r = rec(128, 2, 4096, |c, i| {
            let x = ((i * 2654435761 + c * 97) % 10007) as f64 / 10007.0;
            3.0 * x + c as f64
        });
        let (once, _) = zscore_normalize(&r).unwrap();
        let (twice, _) = zscore_normalize(&once).unwrap();
        for (a, b) in once.samples[0].iter().zip(&twice.samples[0]) {
            assert!((a - b).abs() <= 1e-12);
        }
        for channel in &once.samples {
            let n = channel.len() as f64;
            let mean = channel.iter().sum::<f64>() / n;
            let std = (channel.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() <= 1e-10);
            assert!((std - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn zscore_rejects_constant_channel_by_name() {
        let r = rec(128, 2, 64, |c, i| if c == 1 { 4.2 } else { i as f64 });
        match zscore_normalize(&r) {
            Err(IngestError::DegenerateChannel { channel }) => assert_eq!(channel, "ch1"),
            other => panic!("expected degenerate channel, got {other:?}"),
        }
    }

    #[test]
    fn segmentation_counts_and_indexing() {
        // 16-ch at 128 Hz with T = 7680 gives 12 segments of 10240 values
        let r = rec(128, 16, 7680, |c, i| (c * 10_000 + i) as f64);
        let segs = segment_and_concat(&r).unwrap();
        assert_eq!(segs.len(), 12);
        let window = 5 * 128;
        for (si, seg) in segs.iter().enumerate() {
            assert_eq!(seg.data.len(), 16 * window);
            for (k, &v) in seg.data.iter().enumerate() {
                let channel = k / window;
                let offset = si * window + k % window;
                assert_eq!(v, (channel * 10_000 + offset) as f64);
            }
        }
    }

    #[test]
    fn segmentation_floor_rule_and_exact_window() {
        let window = 5 * 128;
        let r = rec(128, 2, window, |c, i| (c + i) as f64);
        let segs = segment_and_concat(&r).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].data.len(), 2 * window);

        for t in [window - 1, 0] {
            let r = rec(128, 1, t, |_, i| i as f64);
            assert!(segment_and_concat(&r).is_err());
        }

        // floor(T / window) over assorted lengths
        for t in [window, window + 1, 3 * window - 1, 10 * window + 7] {
            let r = rec(128, 1, t, |_, i| i as f64);
            assert_eq!(segment_and_concat(&r).unwrap().len(), t / window);
        }
    }

    #[test]
    fn nineteen_channel_arithmetic() {
        let r = rec(250, 19, 185_000, |_, i| (i % 251) as f64);
        let segs = segment_and_concat(&r).unwrap();
        assert_eq!(segs.len(), 148);
        assert_eq!(segs[0].data.len(), 19 * 1250);
    }

    #[test]
    fn rejects_unsupported_sampling_rate() {
        assert!(SubjectRecording::new("x", Label::Sch, 100, vec![], vec![]).is_err());
    }
}
