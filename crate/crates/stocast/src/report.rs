//! Tabular exports: training history, metric tables, attributions, regions,
//! and the per-command run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use stocast_core::eval::{AttributionSummary, MetricReport, RSquared, GROUP_NAMES};
use stocast_core::train::TrainHistory;

use crate::checkpoint::sha256_hex;
use crate::error::{Error, Result};
use crate::formats::{write_csv_with_header, write_json};

/// `epoch,train_loss,val_loss,lr,is_best,best_val_loss`; the last column is
/// the running minimum of the validation loss.
pub fn write_history(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut best = f64::INFINITY;
    let rows = history.epochs.iter().map(|r| {
        best = best.min(r.val_loss);
        (r.epoch, r.train_loss, r.val_loss, r.lr, r.is_best, best)
    });
    write_csv_with_header(path, &["epoch", "train_loss", "val_loss", "lr", "is_best", "best_val_loss"], rows.collect::<Vec<_>>())
}

/// Metric table in split order plus an R² entry per split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricReport>,
    /// R² of 6-hour summed outages per split.
    pub r_squared: BTreeMap<String, RSquared>,
}

pub fn write_metric_table(dir: &Path, table: &MetricTable) -> Result<()> {
    write_csv_with_header(
        &dir.join("metrics.csv"),
        &["split", "mae", "mse", "whl", "n_samples", "r2_6h", "r2_defined"],
        table.rows.iter().map(|r| {
            let r2 = table.r_squared.get(&r.split);
            (&r.split, r.mae, r.mse, r.whl, r.n_samples, r2.map_or(f64::NAN, |x| x.value), r2.is_some_and(|x| x.defined))
        }),
    )?;
    write_json(&dir.join("metrics.json"), table)
}

/// `group,instance_id,phi` for every instance, a ranked summary, and an
/// efficiency-check table.
pub fn write_attributions(dir: &Path, summary: &AttributionSummary, instance_ids: &[String]) -> Result<()> {
    let rows = summary.instances.iter().zip(instance_ids).flat_map(|(rep, id)| {
        GROUP_NAMES.iter().zip(rep.phi).map(move |(g, phi)| (*g, id.clone(), phi))
    });
    write_csv_with_header(&dir.join("attributions.csv"), &["group", "instance_id", "phi"], rows.collect::<Vec<_>>())?;
    write_csv_with_header(
        &dir.join("summary.csv"),
        &["rank", "group", "mean_abs_phi"],
        summary.ranked.iter().enumerate().map(|(i, (g, v))| (i + 1, g, v)),
    )?;
    write_csv_with_header(
        &dir.join("efficiency.csv"),
        &["instance_id", "baseline", "explained", "sum_phi", "efficiency_residual"],
        summary.instances.iter().zip(instance_ids).map(|(r, id)| {
            (id, r.baseline, r.explained, r.phi.iter().sum::<f64>(), r.efficiency_residual().abs())
        }),
    )
}

/// Written beside every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: Option<String>,
    pub input_hashes: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub rng: String,
    pub tool_version: String,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config_hash: None,
            input_hashes: BTreeMap::new(),
            seeds: BTreeMap::new(),
            rng: stocast_core::rng::RNG_RECIPE.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    /// Records the SHA-256 of a file, or of every file below a directory.
    pub fn hash_input(&mut self, path: &Path) -> Result<()> {
        if path.is_dir() {
            let mut entries: Vec<_> = fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            entries.sort();
            for p in entries {
                self.hash_input(&p)?;
            }
        } else {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            self.input_hashes.insert(path.display().to_string(), sha256_hex(&bytes));
        }
        Ok(())
    }

    pub fn hash_config(&mut self, bytes: &[u8]) {
        self.config_hash = Some(sha256_hex(bytes));
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }
}
