//! Spectrogram archives: one flat little-endian f32 buffer plus a JSON
//! sidecar describing shapes, provenance and the transform.

use super::{Origin, Provenance, Spectrogram, SpectrogramError};
use crate::eeg::Label;
use serde::{Deserialize, Serialize};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveItem {
    pub subject_id: String,
    pub segment_index: usize,
    pub origin: Origin,
    pub label: Label,
    pub freq_bins: usize,
    pub time_frames: usize,
    /// Element offset into the binary buffer.
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveSidecar {
    /// Transform parameters that produced these values.
    pub transform: serde_json::Value,
    pub items: Vec<ArchiveItem>,
}

/// Write `stem.bin` and `stem.json`.
pub fn save_archive(
    stem: &Path,
    items: &[Spectrogram],
    transform: serde_json::Value,
) -> Result<(), SpectrogramError> {
    let mut sidecar = ArchiveSidecar {
        transform,
        items: Vec::with_capacity(items.len()),
    };
    let bin_path = stem.with_extension("bin");
    let mut w = BufWriter::new(std::fs::File::create(&bin_path)?);
    let mut offset = 0usize;
    for s in items {
        sidecar.items.push(ArchiveItem {
            subject_id: s.provenance.subject_id.clone(),
            segment_index: s.provenance.segment_index,
            origin: s.provenance.origin,
            label: s.label,
            freq_bins: s.freq_bins,
            time_frames: s.time_frames,
            offset,
        });
        let mut buf = Vec::with_capacity(s.values.len() * 4);
        for v in &s.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        offset += s.values.len();
    }
    w.flush()?;
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(stem.with_extension("json"), json)?;
    Ok(())
}

/// Load an archive written by [`save_archive`].
pub fn load_archive(stem: &Path) -> Result<(Vec<Spectrogram>, ArchiveSidecar), SpectrogramError> {
    let sidecar: ArchiveSidecar =
        serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)
            .map_err(|e| SpectrogramError::BadSidecar(e.to_string()))?;
    let mut bytes = Vec::new();
    std::fs::File::open(stem.with_extension("bin"))?.read_to_end(&mut bytes)?;
    let total: usize = sidecar
        .items
        .iter()
        .map(|i| i.freq_bins * i.time_frames)
        .sum();
    if bytes.len() != total * 4 {
        return Err(SpectrogramError::BadSidecar(format!(
            "binary holds {} bytes, sidecar expects {}",
            bytes.len(),
            total * 4
        )));
    }
    let mut out = Vec::with_capacity(sidecar.items.len());
    for item in &sidecar.items {
        let n = item.freq_bins * item.time_frames;
        let start = item.offset * 4;
        let values = bytes[start..start + n * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push(Spectrogram {
            freq_bins: item.freq_bins,
            time_frames: item.time_frames,
            values,
            provenance: Provenance {
                subject_id: item.subject_id.clone(),
                segment_index: item.segment_index,
                origin: item.origin,
            },
            label: item.label,
        });
    }
    Ok((out, sidecar))
}

/// Grayscale PNG preview with low frequencies at the bottom. Values are
/// clamped to `[0,1]`.
pub fn export_png(spec: &Spectrogram, path: &Path) -> Result<(), SpectrogramError> {
    let (rows, cols) = (spec.freq_bins, spec.time_frames);
    let mut img = image::GrayImage::new(cols as u32, rows as u32);
    for r in 0..rows {
        for c in 0..cols {
            let v = spec.at(r, c).clamp(0.0, 1.0);
            let y = (rows - 1 - r) as u32;
            img.put_pixel(c as u32, y, image::Luma([(v * 255.0).round() as u8]));
        }
    }
    img.save(path)
        .map_err(|e| SpectrogramError::BadSidecar(format!("png encode failed: {e}")))?;
    Ok(())
}
