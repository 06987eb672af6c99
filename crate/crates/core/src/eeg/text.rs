//! Single-column text recordings: all samples of channel 0, then all of
//! channel 1, and so on. 16 channels of 7680 samples at 128 Hz.

use super::{IngestError, Label, SubjectRecording};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

pub const TEXT_CHANNELS: usize = 16;
pub const TEXT_SAMPLES_PER_CHANNEL: usize = 7680;
pub const TEXT_SAMPLING_RATE_HZ: usize = 128;

/// Channel order of the 16-channel recordings.
pub const TEXT_CHANNEL_NAMES: [&str; 16] = [
    "F7", "F3", "F4", "F8", "T3", "C3", "Cz", "C4", "T4", "T5", "P3", "Pz", "P4", "T6", "O1",
    "O2",
];

/// Parse one subject file. The subject id is the file stem; the label comes
/// from the dataset layout, so the caller supplies it.
pub fn read_column_text(path: &Path, label: Label) -> Result<SubjectRecording, IngestError> {
    let expected = TEXT_CHANNELS * TEXT_SAMPLES_PER_CHANNEL;
    let reader = BufReader::new(File::open(path)?);
    let mut values = Vec::with_capacity(expected);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if values.len() == expected {
            // one extra numeric line is already a format violation; count on
            return Err(IngestError::LineCount {
                expected,
                actual: expected + 1,
            });
        }
        let v: f64 = trimmed.parse().map_err(|_| IngestError::BadNumber {
            line: i + 1,
            content: trimmed.to_string(),
        })?;
        values.push(v);
    }
    if values.len() != expected {
        return Err(IngestError::LineCount {
            expected,
            actual: values.len(),
        });
    }
    let samples: Vec<Vec<f64>> = values
        .chunks(TEXT_SAMPLES_PER_CHANNEL)
        .map(|c| c.to_vec())
        .collect();
    let subject_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".to_string());
    SubjectRecording::new(
        subject_id,
        label,
        TEXT_SAMPLING_RATE_HZ,
        TEXT_CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
        samples,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_lines(values: impl Iterator<Item = String>) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for v in values {
            writeln!(f, "{v}").unwrap();
        }
        f
    }

    #[test]
    fn synthetic_file_round_trips_channel_and_sample_indices() {
        let f = write_lines(
            (0..TEXT_CHANNELS)
                .flat_map(|c| (0..TEXT_SAMPLES_PER_CHANNEL).map(move |t| (c, t)))
                .map(|(c, t)| format!("{}", c * 10_000 + t)),
        );
        let rec = read_column_text(f.path(), Label::Sch).unwrap();
        assert_eq!(rec.channels.len(), 16);
        assert_eq!(rec.samples_per_channel(), 7680);
        assert_eq!(rec.sampling_rate_hz, 128);
        assert_eq!(rec.channels[0], "F7");
        assert_eq!(rec.channels[15], "O2");
        for c in [0, 7, 15] {
            for t in [0, 1, 7679] {
                assert_eq!(rec.samples[c][t], (c * 10_000 + t) as f64);
            }
        }
    }

    #[test]
    fn all_zero_file_parses() {
        let f = write_lines((0..122_880).map(|_| "0.0".to_string()));
        let rec = read_column_text(f.path(), Label::Norm).unwrap();
        assert!(rec.samples.iter().all(|c| c.iter().all(|v| *v == 0.0)));
        // normalization of the all-zero recording fails later, by design
        assert!(super::super::zscore_normalize(&rec).is_err());
    }

    #[test]
    fn wrong_line_count_reports_expected_and_actual() {
        let f = write_lines((0..1000).map(|v| format!("{v}")));
        match read_column_text(f.path(), Label::Norm) {
            Err(IngestError::LineCount { expected, actual }) => {
                assert_eq!(expected, 122_880);
                assert_eq!(actual, 1000);
            }
            other => panic!("expected line-count error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_line_reports_line_number() {
        let f = write_lines((0..10).map(|v| {
            if v == 4 {
                "oops".to_string()
            } else {
                format!("{v}")
            }
        }));
        match read_column_text(f.path(), Label::Norm) {
            Err(IngestError::BadNumber { line, content }) => {
                assert_eq!(line, 5);
                assert_eq!(content, "oops");
            }
            other => panic!("expected bad-number error, got {other:?}"),
        }
    }
}
