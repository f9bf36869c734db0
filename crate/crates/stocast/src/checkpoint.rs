//! Model checkpoints: a JSON manifest plus a `<path>.params` sidecar of
//! little-endian f64 values in the manifest's parameter order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stocast_core::dataset::StandardizationStats;
use stocast_core::net::{Architecture, StoCastModel};
use stocast_core::train::TrainConfig;

use crate::error::{Error, Result};
use crate::formats::{read_json, write_bytes, write_json};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotEntry {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub holdout_event: Option<String>,
    pub training_events: Vec<String>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub architecture: Architecture,
    pub fingerprint: String,
    pub n_params: usize,
    pub param_order: Vec<SlotEntry>,
    pub stats: StandardizationStats,
    pub training: Option<TrainingMeta>,
    pub params_file: String,
    pub params_sha256: String,
}

pub fn params_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".params");
    PathBuf::from(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn save_checkpoint(model: &StoCastModel, training: Option<TrainingMeta>, path: &Path) -> Result<()> {
    model.arch.validate().map_err(|e| Error::Internal(e.to_string()))?;
    if model.params.len() != model.arch.n_params() {
        return Err(Error::Internal(format!(
            "model has {} parameters, architecture needs {}",
            model.params.len(),
            model.arch.n_params()
        )));
    }
    let mut bytes = Vec::with_capacity(model.params.len() * 8);
    for p in &model.params {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    let sidecar = params_path(path);
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        architecture: model.arch,
        fingerprint: model.arch.fingerprint(),
        n_params: model.params.len(),
        param_order: model
            .layout()
            .into_iter()
            .map(|s| SlotEntry { name: s.name, offset: s.offset, rows: s.rows, cols: s.cols })
            .collect(),
        stats: model.stats.clone(),
        training,
        params_file: sidecar.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        params_sha256: sha256_hex(&bytes),
    };
    write_bytes(&sidecar, &bytes)?;
    write_json(path, &manifest)
}

/// Loads a checkpoint, refusing anything whose recorded fingerprint,
/// parameter layout, size or checksum disagrees with its architecture.
/// With `expected`, the architecture must also match it.
pub fn load_checkpoint(path: &Path, expected: Option<Architecture>) -> Result<(StoCastModel, CheckpointManifest)> {
    let m: CheckpointManifest = read_json(path)?;
    let bad = |msg: String| Error::format(path, msg);
    if m.format_version != FORMAT_VERSION {
        return Err(bad(format!("format_version {} is not supported (expected {FORMAT_VERSION})", m.format_version)));
    }
    m.architecture.validate().map_err(|e| bad(format!("architecture: {e}")))?;
    if m.architecture.fingerprint() != m.fingerprint {
        return Err(bad(format!(
            "architecture mismatch: dimensions give {} but the checkpoint records {}",
            m.architecture.fingerprint(),
            m.fingerprint
        )));
    }
    if let Some(arch) = expected {
        if arch != m.architecture {
            return Err(bad(format!(
                "architecture mismatch: expected {}, found {}",
                arch.fingerprint(),
                m.fingerprint
            )));
        }
    }
    let layout: Vec<SlotEntry> = m
        .architecture
        .layout()
        .into_iter()
        .map(|s| SlotEntry { name: s.name, offset: s.offset, rows: s.rows, cols: s.cols })
        .collect();
    if layout != m.param_order || m.n_params != m.architecture.n_params() {
        return Err(bad(String::from("architecture mismatch: parameter order disagrees with the dimensions")));
    }
    let sidecar = path.parent().unwrap_or(Path::new("")).join(&m.params_file);
    let bytes = fs::read(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    if bytes.len() != m.n_params * 8 {
        return Err(Error::format(&sidecar, format!("{} bytes, expected {}", bytes.len(), m.n_params * 8)));
    }
    if sha256_hex(&bytes) != m.params_sha256 {
        return Err(Error::format(&sidecar, "checksum does not match the manifest"));
    }
    let params: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunks of eight bytes")))
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::format(&sidecar, "non-finite parameter"));
    }
    let model = StoCastModel { arch: m.architecture, params, stats: m.stats.clone() };
    Ok((model, m))
}
