//! Dataset manifests: one JSON record per subject file.

use super::{IngestError, Label, SubjectRecording};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub label: Label,
    pub path: PathBuf,
    pub segment_count: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sampling_rate_hz: usize,
    pub channels: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn total_segments(&self) -> usize {
        self.entries.iter().map(|e| e.segment_count).sum()
    }
}

pub fn file_sha256(path: &Path) -> Result<String, IngestError> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Build a manifest from parsed recordings and their source paths.
pub fn build_manifest(
    recordings: &[(SubjectRecording, PathBuf)],
) -> Result<DatasetManifest, IngestError> {
    let mut entries = Vec::with_capacity(recordings.len());
    for (rec, path) in recordings {
        let window = rec.segment_window();
        entries.push(ManifestEntry {
            subject_id: rec.subject_id.clone(),
            label: rec.label,
            path: path.clone(),
            segment_count: rec.samples_per_channel() / window,
            sha256: file_sha256(path)?,
        });
    }
    let first = &recordings
        .first()
        .expect("manifest needs at least one recording")
        .0;
    Ok(DatasetManifest {
        sampling_rate_hz: first.sampling_rate_hz,
        channels: first.channels.clone(),
        entries,
    })
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), IngestError> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, IngestError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| IngestError::BadHeader {
        field: "manifest",
        detail: e.to_string(),
    })
}
