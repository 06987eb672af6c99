//! EDF reader for the 19-channel dataset.
//!
//! EDF stores a 256-byte fixed-width ASCII header, one 256-byte header block
//! per signal (fields grouped by field, not by signal), then data records of
//! little-endian two's-complement 16-bit samples. Physical values come from
//! the per-signal calibration line
//! `physical = (digital - dmin) * (pmax - pmin) / (dmax - dmin) + pmin`.

use super::{IngestError, Label, SubjectRecording};
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

/// Channel order of the 19-channel recordings.
pub const EDF_CHANNELS: [&str; 19] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz", "C4", "T4", "T5", "P3", "Pz",
    "P4", "T6", "O1", "O2",
];

/// Every recording is cut to this many samples per channel; the dataset's
/// shortest recording defines it.
pub const EDF_TRUNCATE_SAMPLES: usize = 185_000;

pub const EDF_SAMPLING_RATE_HZ: usize = 250;

#[derive(Debug, Clone)]
pub struct EdfSignalHeader {
    pub label: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub samples_per_record: usize,
}

impl EdfSignalHeader {
    /// Calibration from stored digital value to physical units.
    pub fn to_physical(&self, digital: i16) -> f64 {
        let scale = (self.physical_max - self.physical_min)
            / (self.digital_max - self.digital_min) as f64;
        (digital as i32 - self.digital_min) as f64 * scale + self.physical_min
    }
}

/// A parsed EDF file: signal headers plus per-signal physical samples.
#[derive(Debug, Clone)]
pub struct EdfFile {
    pub record_count: usize,
    pub record_duration_s: f64,
    pub signals: Vec<EdfSignalHeader>,
    pub samples: Vec<Vec<f64>>,
}

fn ascii_field<'a>(
    buf: &'a [u8],
    offset: usize,
    len: usize,
    field: &'static str,
) -> Result<&'a str, IngestError> {
    let slice = buf
        .get(offset..offset + len)
        .ok_or(IngestError::BadHeader {
            field,
            detail: "header truncated".into(),
        })?;
    std::str::from_utf8(slice)
        .map(str::trim)
        .map_err(|_| IngestError::BadHeader {
            field,
            detail: "non-ASCII bytes".into(),
        })
}

fn parse_num<T: std::str::FromStr>(s: &str, field: &'static str) -> Result<T, IngestError> {
    s.parse().map_err(|_| IngestError::BadHeader {
        field,
        detail: format!("`{s}` is not numeric"),
    })
}

/// Parse any EDF file into headers and calibrated samples.
pub fn parse_edf<R: Read>(mut reader: R) -> Result<EdfFile, IngestError> {
    let mut head = [0u8; 256];
    reader.read_exact(&mut head).map_err(|_| IngestError::BadHeader {
        field: "fixed header",
        detail: "file shorter than 256 bytes".into(),
    })?;
    let version = ascii_field(&head, 0, 8, "version")?;
    if version != "0" {
        return Err(IngestError::BadHeader {
            field: "version",
            detail: format!("expected `0`, found `{version}`"),
        });
    }
    let record_count: i64 = parse_num(ascii_field(&head, 236, 8, "record count")?, "record count")?;
    if record_count < 0 {
        return Err(IngestError::BadHeader {
            field: "record count",
            detail: "unknown (-1) record count is not supported".into(),
        });
    }
    let record_count = record_count as usize;
    let record_duration_s: f64 =
        parse_num(ascii_field(&head, 244, 8, "record duration")?, "record duration")?;
    let ns: usize = parse_num(ascii_field(&head, 252, 4, "signal count")?, "signal count")?;
    if ns == 0 {
        return Err(IngestError::BadHeader {
            field: "signal count",
            detail: "zero signals".into(),
        });
    }

    let mut sig_head = vec![0u8; ns * 256];
    reader
        .read_exact(&mut sig_head)
        .map_err(|_| IngestError::BadHeader {
            field: "signal headers",
            detail: format!("expected {} bytes of signal headers", ns * 256),
        })?;
    // fields are stored grouped: ns labels, ns transducers, ...
    let mut offset = 0usize;
    let mut field_str = |len: usize, field: &'static str| -> Result<Vec<String>, IngestError> {
        let mut out = Vec::with_capacity(ns);
        for i in 0..ns {
            out.push(ascii_field(&sig_head, offset + i * len, len, field)?.to_string());
        }
        offset += ns * len;
        Ok(out)
    };
    let labels = field_str(16, "label")?;
    let _transducer = field_str(80, "transducer")?;
    let _dimension = field_str(8, "physical dimension")?;
    let pmin = field_str(8, "physical minimum")?;
    let pmax = field_str(8, "physical maximum")?;
    let dmin = field_str(8, "digital minimum")?;
    let dmax = field_str(8, "digital maximum")?;
    let _prefilter = field_str(80, "prefiltering")?;
    let nsamples = field_str(8, "samples per record")?;

    let mut signals = Vec::with_capacity(ns);
    for i in 0..ns {
        let digital_min: i32 = parse_num(&dmin[i], "digital minimum")?;
        let digital_max: i32 = parse_num(&dmax[i], "digital maximum")?;
        if digital_max == digital_min {
            return Err(IngestError::BadHeader {
                field: "digital range",
                detail: format!("signal {i} has dmin == dmax == {digital_min}"),
            });
        }
        signals.push(EdfSignalHeader {
            label: labels[i].clone(),
            physical_min: parse_num(&pmin[i], "physical minimum")?,
            physical_max: parse_num(&pmax[i], "physical maximum")?,
            digital_min,
            digital_max,
            samples_per_record: parse_num(&nsamples[i], "samples per record")?,
        });
    }

    let record_len: usize = signals.iter().map(|s| s.samples_per_record * 2).sum();
    let mut body = Vec::new();
    reader.read_to_end(&mut body)?;
    if body.len() != record_count * record_len {
        return Err(IngestError::RecordCountMismatch {
            declared: record_count,
            actual: if record_len == 0 { 0 } else { body.len() / record_len },
        });
    }

    let mut samples: Vec<Vec<f64>> = signals
        .iter()
        .map(|s| Vec::with_capacity(s.samples_per_record * record_count))
        .collect();
    let mut pos = 0usize;
    for _ in 0..record_count {
        for (si, sig) in signals.iter().enumerate() {
            for _ in 0..sig.samples_per_record {
                let digital = i16::from_le_bytes([body[pos], body[pos + 1]]);
                samples[si].push(sig.to_physical(digital));
                pos += 2;
            }
        }
    }

    Ok(EdfFile {
        record_count,
        record_duration_s,
        signals,
        samples,
    })
}

/// Read one subject of the 19-channel dataset: 19 signals at 250 Hz,
/// truncated to the first 185 000 samples per channel. Returns the recording
/// plus warnings for channel names that differ from the expected montage.
pub fn read_edf(path: &Path, label: Label) -> Result<(SubjectRecording, Vec<String>), IngestError> {
    let file = parse_edf(BufReader::new(File::open(path)?))?;
    if file.signals.len() != EDF_CHANNELS.len() {
        return Err(IngestError::ChannelCount {
            expected: EDF_CHANNELS.len(),
            actual: file.signals.len(),
        });
    }
    for sig in &file.signals {
        let rate = sig.samples_per_record as f64 / file.record_duration_s;
        if (rate - EDF_SAMPLING_RATE_HZ as f64).abs() > 1e-9 {
            return Err(IngestError::BadSamplingRate { rate_hz: rate });
        }
    }
    let mut warnings = Vec::new();
    for (sig, expected) in file.signals.iter().zip(EDF_CHANNELS) {
        // dataset labels look like "EEG Fp1" or plain "Fp1"
        let name = sig.label.rsplit(' ').next().unwrap_or(&sig.label);
        if !name.eq_ignore_ascii_case(expected) {
            warnings.push(format!(
                "channel `{}` where montage expects `{expected}`",
                sig.label
            ));
        }
    }
    let mut samples = Vec::with_capacity(file.signals.len());
    for channel in &file.samples {
        if channel.len() < EDF_TRUNCATE_SAMPLES {
            return Err(IngestError::ShortRecording {
                have: channel.len(),
                need: EDF_TRUNCATE_SAMPLES,
            });
        }
        samples.push(channel[..EDF_TRUNCATE_SAMPLES].to_vec());
    }
    let subject_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".to_string());
    let rec = SubjectRecording::new(
        subject_id,
        label,
        EDF_SAMPLING_RATE_HZ,
        file.signals.iter().map(|s| s.label.clone()).collect(),
        samples,
    )?;
    Ok((rec, warnings))
}

/// Serialize signals into EDF bytes. Test fixture and preview tool; digital
/// values are clamped into the declared range.
pub fn write_edf_bytes(
    signals: &[(String, Vec<f64>)],
    samples_per_record: usize,
    record_duration_s: f64,
    physical_range: (f64, f64),
) -> Vec<u8> {
    let ns = signals.len();
    let record_count = signals
        .first()
        .map(|(_, s)| s.len() / samples_per_record)
        .unwrap_or(0);
    let (pmin, pmax) = physical_range;
    let (dmin, dmax) = (-32768i32, 32767i32);

    let mut head = Vec::with_capacity(256 + ns * 256);
    let mut field = |text: &str, len: usize| {
        let mut bytes = text.as_bytes().to_vec();
        bytes.truncate(len);
        bytes.resize(len, b' ');
        head.extend_from_slice(&bytes);
    };
    field("0", 8);
    field("synthetic patient", 80);
    field("synthetic recording", 80);
    field("01.01.24", 8);
    field("00.00.00", 8);
    field(&format!("{}", 256 + ns * 256), 8);
    field("", 44);
    field(&format!("{record_count}"), 8);
    field(&format!("{record_duration_s}"), 8);
    field(&format!("{ns}"), 4);
    for (label, _) in signals {
        field(label, 16);
    }
    for _ in signals {
        field("synthetic", 80);
    }
    for _ in signals {
        field("uV", 8);
    }
    for _ in signals {
        field(&format!("{pmin}"), 8);
    }
    for _ in signals {
        field(&format!("{pmax}"), 8);
    }
    for _ in signals {
        field(&format!("{dmin}"), 8);
    }
    for _ in signals {
        field(&format!("{dmax}"), 8);
    }
    for _ in signals {
        field("none", 80);
    }
    for _ in signals {
        field(&format!("{samples_per_record}"), 8);
    }
    for _ in signals {
        field("", 32);
    }

    let scale = (dmax - dmin) as f64 / (pmax - pmin);
    let mut body = Vec::new();
    for r in 0..record_count {
        for (_, data) in signals {
            for &v in &data[r * samples_per_record..(r + 1) * samples_per_record] {
                let digital = ((v - pmin) * scale + dmin as f64).round();
                let digital = digital.clamp(dmin as f64, dmax as f64) as i16;
                body.extend_from_slice(&digital.to_le_bytes());
            }
        }
    }
    head.extend_from_slice(&body);
    head
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine_signals(channels: usize, samples: usize) -> Vec<(String, Vec<f64>)> {
        (0..channels)
            .map(|c| {
                let name = EDF_CHANNELS.get(c).copied().unwrap_or("X");
                let data = (0..samples)
                    .map(|i| {
                        100.0 * ((i as f64) * 0.01 * (c + 1) as f64).sin()
                            + 10.0 * c as f64
                    })
                    .collect();
                (format!("EEG {name}"), data)
            })
            .collect()
    }

    #[test]
    fn calibration_endpoints() {
        let h = EdfSignalHeader {
            label: "EEG Fp1".into(),
            physical_min: -312.5,
            physical_max: 312.5,
            digital_min: -32768,
            digital_max: 32767,
            samples_per_record: 250,
        };
        assert_eq!(h.to_physical(-32768), -312.5);
        assert_eq!(h.to_physical(32767), 312.5);
        assert!(h.to_physical(0).abs() < 0.01);
    }

    #[test]
    fn synthetic_edf_round_trips_within_one_quantum() {
        let signals = sine_signals(3, 1000);
        let bytes = write_edf_bytes(&signals, 250, 1.0, (-400.0, 400.0));
        let parsed = parse_edf(bytes.as_slice()).unwrap();
        assert_eq!(parsed.record_count, 4);
        assert_eq!(parsed.signals.len(), 3);
        let quantum = 800.0 / 65535.0;
        for (sig, (_, original)) in parsed.samples.iter().zip(&signals) {
            for (got, want) in sig.iter().zip(original) {
                assert!((got - want).abs() <= quantum, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn record_count_mismatch_is_detected() {
        let signals = sine_signals(2, 500);
        let mut bytes = write_edf_bytes(&signals, 250, 1.0, (-400.0, 400.0));
        bytes.truncate(bytes.len() - 100);
        assert!(matches!(
            parse_edf(bytes.as_slice()),
            Err(IngestError::RecordCountMismatch { declared: 2, .. })
        ));
    }

    #[test]
    fn bad_magic_version_is_detected() {
        let signals = sine_signals(1, 250);
        let mut bytes = write_edf_bytes(&signals, 250, 1.0, (-400.0, 400.0));
        bytes[0] = b'9';
        assert!(matches!(
            parse_edf(bytes.as_slice()),
            Err(IngestError::BadHeader { field: "version", .. })
        ));
    }

    #[test]
    fn dataset_reader_enforces_channel_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s01.edf");
        let signals = sine_signals(5, 500);
        std::fs::write(&path, write_edf_bytes(&signals, 250, 1.0, (-400.0, 400.0))).unwrap();
        assert!(matches!(
            read_edf(&path, Label::Sch),
            Err(IngestError::ChannelCount { expected: 19, actual: 5 })
        ));
    }

    #[test]
    fn dataset_reader_truncates_to_fixed_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h07.edf");
        // 186 000 samples > the 185 000 cut
        let signals = sine_signals(19, 186_000);
        std::fs::write(&path, write_edf_bytes(&signals, 250, 1.0, (-400.0, 400.0))).unwrap();
        let (rec, warnings) = read_edf(&path, Label::Norm).unwrap();
        assert_eq!(rec.subject_id, "h07");
        assert_eq!(rec.sampling_rate_hz, 250);
        assert_eq!(rec.channels.len(), 19);
        assert_eq!(rec.samples_per_channel(), EDF_TRUNCATE_SAMPLES);
        assert!(warnings.is_empty(), "{warnings:?}");
    }

    #[test]
    fn dataset_reader_rejects_short_recordings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h01.edf");
        let signals = sine_signals(19, 1000);
        std::fs::write(&path, write_edf_bytes(&signals, 250, 1.0, (-400.0, 400.0))).unwrap();
        assert!(matches!(
            read_edf(&path, Label::Norm),
            Err(IngestError::ShortRecording { .. })
        ));
    }
}
