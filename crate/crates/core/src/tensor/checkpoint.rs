//! Model checkpoints.
//!
//! Layout: magic `SDX1`, a little-endian u32 length, a JSON descriptor
//! (architecture id, per-network layer specs, parameter shapes and step
//! counts, seed), then for each parameter in descriptor order the value,
//! Adam-m and Adam-v buffers, then each state buffer (batch-norm running
//! statistics), all little-endian f32.

use super::network::{Layer, LayerSpec, Network};
use super::{numel, Element};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"SDX1";

#[derive(Debug)]
pub enum CheckpointError {
    Io(std::io::Error),
    /// File does not start with the `SDX1` magic.
    BadMagic([u8; 4]),
    /// Descriptor JSON failed to parse.
    BadDescriptor(String),
    /// Buffer lengths disagree with the descriptor.
    Truncated { expected: usize, actual: usize },
    /// The checkpoint's architecture id differs from the requested one.
    ArchitectureMismatch { expected: String, actual: String },
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::Io(e) => write!(f, "checkpoint io error: {e}"),
            CheckpointError::BadMagic(m) => write!(f, "bad checkpoint magic {m:?}"),
            CheckpointError::BadDescriptor(e) => write!(f, "bad checkpoint descriptor: {e}"),
            CheckpointError::Truncated { expected, actual } => {
                write!(f, "checkpoint truncated: expected {expected} bytes, got {actual}")
            }
            CheckpointError::ArchitectureMismatch { expected, actual } => {
                write!(f, "checkpoint holds `{actual}`, expected `{expected}`")
            }
        }
    }
}

impl std::error::Error for CheckpointError {}

impl From<std::io::Error> for CheckpointError {
    fn from(e: std::io::Error) -> Self {
        CheckpointError::Io(e)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub step_count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateRecord {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub name: String,
    pub spec: Vec<LayerSpec>,
    pub params: Vec<ParamRecord>,
    pub state: Vec<StateRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointDescriptor {
    pub architecture: String,
    pub seed: u64,
    pub networks: Vec<NetworkRecord>,
    /// Model-specific metadata (class label, input dims, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
}

fn network_state_buffers<E: Element>(net: &Network<E>) -> Vec<(String, Vec<E>)> {
    let mut out = Vec::new();
    for (i, layer) in net.layers.iter().enumerate() {
        if let Layer::BatchNorm {
            running_mean,
            running_var,
            ..
        } = layer
        {
            out.push((format!("layer{i}.running_mean"), running_mean.clone()));
            out.push((format!("layer{i}.running_var"), running_var.clone()));
        }
    }
    out
}

fn write_f32s<E: Element, W: Write>(w: &mut W, data: &[E]) -> Result<(), CheckpointError> {
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.as_f32().to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f32s<E: Element, R: Read>(r: &mut R, n: usize) -> Result<Vec<E>, CheckpointError> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf).map_err(|_| CheckpointError::Truncated {
        expected: n * 4,
        actual: 0,
    })?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| E::of_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect())
}

/// Serialize named networks under one architecture id.
pub fn save_checkpoint<E: Element>(
    path: &Path,
    architecture: &str,
    seed: u64,
    networks: &[(&str, &Network<E>)],
    extra: serde_json::Value,
) -> Result<(), CheckpointError> {
    let mut records = Vec::new();
    for (name, net) in networks {
        records.push(NetworkRecord {
            name: (*name).to_string(),
            spec: net.spec().to_vec(),
            params: net
                .parameters()
                .iter()
                .map(|p| ParamRecord {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    step_count: p.step_count,
                })
                .collect(),
            state: network_state_buffers(net)
                .iter()
                .map(|(n, b)| StateRecord {
                    name: n.clone(),
                    len: b.len(),
                })
                .collect(),
        });
    }
    let descriptor = CheckpointDescriptor {
        architecture: architecture.to_string(),
        seed,
        networks: records,
        extra,
    };
    let json = serde_json::to_vec(&descriptor)
        .map_err(|e| CheckpointError::BadDescriptor(e.to_string()))?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, net) in networks {
        for p in net.parameters() {
            write_f32s(&mut w, &p.value)?;
            write_f32s(&mut w, &p.adam_m)?;
            write_f32s(&mut w, &p.adam_v)?;
        }
        for (_, buf) in network_state_buffers(net) {
            write_f32s(&mut w, &buf)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuild every network in a checkpoint. Parameters, optimizer state and
/// batch-norm buffers are restored exactly as written.
pub fn load_checkpoint<E: Element>(
    path: &Path,
) -> Result<(CheckpointDescriptor, Vec<Network<E>>), CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)?;
    let len = u32::from_le_bytes(len_bytes) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let descriptor: CheckpointDescriptor = serde_json::from_slice(&json)
        .map_err(|e| CheckpointError::BadDescriptor(e.to_string()))?;

    let mut networks = Vec::new();
    for record in &descriptor.networks {
        // Build with a throwaway rng; every parameter is overwritten below.
        let mut rng = rand::SeedableRng::seed_from_u64(0);
        let mut net: Network<E> = Network::build(&record.spec, &mut rng)
            .map_err(|e| CheckpointError::BadDescriptor(e.to_string()))?;
        {
            let mut params = net.parameters_mut();
            if params.len() != record.params.len() {
                return Err(CheckpointError::BadDescriptor(format!(
                    "descriptor lists {} parameters, network has {}",
                    record.params.len(),
                    params.len()
                )));
            }
            for (p, rec) in params.iter_mut().zip(&record.params) {
                let n = numel(&rec.shape);
                p.value = read_f32s(&mut r, n)?;
                p.adam_m = read_f32s(&mut r, n)?;
                p.adam_v = read_f32s(&mut r, n)?;
                p.grad = vec![E::zero(); n];
                p.step_count = rec.step_count;
            }
        }
        let mut state_iter = record.state.iter();
        for layer in &mut net.layers {
            if let Layer::BatchNorm {
                running_mean,
                running_var,
                ..
            } = layer
            {
                for buf in [&mut *running_mean, &mut *running_var] {
                    let rec = state_iter.next().ok_or_else(|| {
                        CheckpointError::BadDescriptor("missing state buffer".into())
                    })?;
                    *buf = read_f32s(&mut r, rec.len)?;
                }
            }
        }
        networks.push(net);
    }
    Ok((descriptor, networks))
}
