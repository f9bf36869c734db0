//! Windowed samples and the leave-one-storm-out partitioning protocol.
//!
//! A sample covers 12 consecutive panel hours: six observed hours followed by
//! six target hours. Dynamic inputs are (W, R, D, O-ratio) per hour with the
//! outage ratio zeroed over the target half; static inputs are
//! (E, S, A, G, I, C); labels are the target-half outage ratios.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geo::GridCell;
use crate::ingest::{EventPanel, CH_DIST, CH_OUTAGE, CH_RAIN, CH_WIND};
use crate::rng::StreamRng;

pub const WINDOW_HOURS: usize = 12;
pub const PAST_HOURS: usize = 6;
pub const HORIZON_HOURS: usize = 6;
pub const STRIDE_HOURS: usize = 3;
pub const N_DYNAMIC: usize = 4;
pub const N_STATIC: usize = 6;
pub const TRAIN_FRACTION: f64 = 0.8;

/// Index of the outage-ratio channel in `dynamic_in` rows.
pub const DYN_OUTAGE: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("cell {cell} in event {event} has outages but no transformers")]
    InconsistentCell { event: String, cell: usize },
    #[error("panel {event} has {hours} hours, shorter than a {window}-hour window")]
    ShortPanel { event: String, hours: usize, window: usize },
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    /// Index of the event in the panel list the sample was cut from.
    pub event: usize,
    pub cell_id: usize,
    /// Panel hour index of the first window hour.
    pub t0: usize,
    pub dynamic_in: [[f64; N_DYNAMIC]; WINDOW_HOURS],
    pub static_in: [f64; N_STATIC],
    pub label: [f64; HORIZON_HOURS],
    /// Raw transformer count C, kept so ratios can be turned back into counts.
    pub transformer_count: u32,
}

impl WindowSample {
    pub fn key(&self) -> (usize, usize, usize) {
        (self.event, self.cell_id, self.t0)
    }

    pub fn label_counts(&self) -> [f64; HORIZON_HOURS] {
        let c = self.transformer_count as f64;
        self.label.map(|r| r * c)
    }

    /// Outage counts over the six observed hours.
    pub fn past_counts(&self) -> [f64; PAST_HOURS] {
        let c = self.transformer_count as f64;
        core::array::from_fn(|h| self.dynamic_in[h][DYN_OUTAGE] * c)
    }
}

/// Number of windows a panel of `n_hours` yields.
pub fn window_count(n_hours: usize, window: usize, stride: usize) -> usize {
    if n_hours < window || stride == 0 {
        0
    } else {
        (n_hours - window) / stride + 1
    }
}

/// Cells with transformers or with any observed outage in any event.
pub fn active_cells(cells: &[GridCell], panels: &[EventPanel]) -> Vec<usize> {
    cells
        .iter()
        .filter(|c| {
            c.transformer_count() > 0 || panels.iter().any(|p| p.cell_outage_total(c.cell_id) > 0.0)
        })
        .map(|c| c.cell_id)
        .collect()
}

/// `round(fraction * n)` with halves rounded up, kept inside `[1, n - 1]`
/// so neither side of a split is empty when `n >= 2`.
pub fn split_size(n: usize, fraction: f64) -> usize {
    let k = libm::floor(fraction * n as f64 + 0.5) as usize;
    if n >= 2 { k.clamp(1, n - 1) } else { k.min(n) }
}

/// Seeded shuffle of `active` into train and test cell lists (each sorted).
pub fn split_spatial(active: &[usize], train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if active.len() < 2 {
        return Err(DatasetError::Config(String::from("spatial split needs at least two active cells")));
    }
    let mut ids = active.to_vec();
    ids.sort_unstable();
    StreamRng::new(seed).shuffle(&mut ids);
    let n_train = split_size(ids.len(), train_fraction);
    let mut test = ids.split_off(n_train);
    ids.sort_unstable();
    test.sort_unstable();
    Ok((ids, test))
}

/// Cuts 12-hour windows from one cell of a panel, starting at hour 0 and
/// advancing by `stride` hours.
pub fn slide_windows(
    panel: &EventPanel,
    event: usize,
    cell: &GridCell,
    stride: usize,
) -> Result<Vec<WindowSample>, DatasetError> {
    if panel.n_hours < WINDOW_HOURS {
        return Err(DatasetError::ShortPanel {
            event: panel.event_id.clone(),
            hours: panel.n_hours,
            window: WINDOW_HOURS,
        });
    }
    let c = cell.cell_id;
    let capacity = cell.transformer_count();
    if capacity == 0 {
        if panel.cell_outage_total(c) > 0.0 {
            return Err(DatasetError::InconsistentCell { event: panel.event_id.clone(), cell: c });
        }
    }
    let inv_c = if capacity > 0 { 1.0 / capacity as f64 } else { 0.0 };
    let static_in = cell.features.as_array();
    let n = window_count(panel.n_hours, WINDOW_HOURS, stride);
    let mut out = Vec::with_capacity(n);
    for w in 0..n {
        let t0 = w * stride;
        let mut dynamic_in = [[0.0; N_DYNAMIC]; WINDOW_HOURS];
        let mut label = [0.0; HORIZON_HOURS];
        for (h, row) in dynamic_in.iter_mut().enumerate() {
            let t = t0 + h;
            row[0] = panel.get(c, t, CH_WIND);
            row[1] = panel.get(c, t, CH_RAIN);
            row[2] = panel.get(c, t, CH_DIST);
            let ratio = panel.get(c, t, CH_OUTAGE) * inv_c;
            if h < PAST_HOURS {
                row[DYN_OUTAGE] = ratio;
            } else {
                label[h - PAST_HOURS] = ratio;
            }
        }
        out.push(WindowSample {
            event,
            cell_id: c,
            t0,
            dynamic_in,
            static_in,
            label,
            transformer_count: capacity,
        });
    }
    Ok(out)
}

/// Windows of the given cells across the given events, ordered by
/// (event, cell, t0).
pub fn windows_for(
    panels: &[EventPanel],
    events: &[usize],
    cells: &[GridCell],
    cell_ids: &[usize],
) -> Result<Vec<WindowSample>, DatasetError> {
    let mut events = events.to_vec();
    events.sort_unstable();
    let mut ids = cell_ids.to_vec();
    ids.sort_unstable();
    let mut out = Vec::new();
    for &e in &events {
        for &c in &ids {
            out.extend(slide_windows(&panels[e], e, &cells[c], STRIDE_HOURS)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosoExperiment {
    pub holdout_event_id: String,
    pub training_event_ids: Vec<String>,
    pub train_cell_ids: Vec<usize>,
    pub test_cell_ids: Vec<usize>,
    pub seed: u64,
}

impl LosoExperiment {
    /// Holds out `holdout` and splits `active` cells 80/20 with `seed`.
    pub fn new(event_ids: &[String], holdout: &str, active: &[usize], seed: u64) -> Result<Self, DatasetError> {
        if !event_ids.iter().any(|e| e == holdout) {
            return Err(DatasetError::Config(alloc::format!("holdout event {holdout} not among the events")));
        }
        let training: Vec<String> = event_ids.iter().filter(|e| *e != holdout).cloned().collect();
        if training.is_empty() {
            return Err(DatasetError::Config(String::from("no training events left after the holdout")));
        }
        let (train_cell_ids, test_cell_ids) = split_spatial(active, TRAIN_FRACTION, seed)?;
        Ok(Self {
            holdout_event_id: String::from(holdout),
            training_event_ids: training,
            train_cell_ids,
            test_cell_ids,
            seed,
        })
    }

    fn indices(&self, panels: &[EventPanel], ids: &[String]) -> Result<Vec<usize>, DatasetError> {
        ids.iter()
            .map(|id| {
                panels
                    .iter()
                    .position(|p| &p.event_id == id)
                    .ok_or_else(|| DatasetError::Config(alloc::format!("no panel for event {id}")))
            })
            .collect()
    }

    pub fn training_events(&self, panels: &[EventPanel]) -> Result<Vec<usize>, DatasetError> {
        self.indices(panels, &self.training_event_ids)
    }

    pub fn holdout_event(&self, panels: &[EventPanel]) -> Result<usize, DatasetError> {
        Ok(self.indices(panels, core::slice::from_ref(&self.holdout_event_id))?[0])
    }

    /// Seed of the train/validation shuffle, distinct from the cell split.
    pub fn sample_seed(&self) -> u64 {
        crate::rng::derive_seed(self.seed, 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LosoDataset {
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub test_grid: Vec<WindowSample>,
}

/// Training-event windows on train cells, split 80/20 into train/validation
/// by seeded shuffle, plus training-event windows on test cells.
pub fn build_loso_dataset(
    exp: &LosoExperiment,
    panels: &[EventPanel],
    cells: &[GridCell],
) -> Result<LosoDataset, DatasetError> {
    let events = exp.training_events(panels)?;
    if events.contains(&exp.holdout_event(panels)?) {
        return Err(DatasetError::Config(String::from("holdout event is also a training event")));
    }
    if exp.train_cell_ids.iter().any(|c| exp.test_cell_ids.binary_search(c).is_ok()) {
        return Err(DatasetError::Config(String::from("train and test cells overlap")));
    }
    let mut pool = windows_for(panels, &events, cells, &exp.train_cell_ids)?;
    let test_grid = windows_for(panels, &events, cells, &exp.test_cell_ids)?;
    if pool.len() < 2 {
        return Err(DatasetError::Config(alloc::format!(
            "training pool has {} windows; need at least 2 for a train/validation split",
            pool.len()
        )));
    }
    if test_grid.is_empty() {
        return Err(DatasetError::Config(String::from("test-grid set is empty")));
    }
    StreamRng::new(exp.sample_seed()).shuffle(&mut pool);
    let n_train = split_size(pool.len(), TRAIN_FRACTION);
    let val = pool.split_off(n_train);
    Ok(LosoDataset { train: pool, val, test_grid })
}

/// Windows of the held-out event on every active cell.
pub fn test_event_samples(
    exp: &LosoExperiment,
    panels: &[EventPanel],
    cells: &[GridCell],
    active: &[usize],
) -> Result<Vec<WindowSample>, DatasetError> {
    let e = exp.holdout_event(panels)?;
    windows_for(panels, &[e], cells, active)
}

/// Z-score statistics for W, R, D and the six static features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub dynamic_mean: [f64; 3],
    pub dynamic_std: [f64; 3],
    pub static_mean: [f64; N_STATIC],
    pub static_std: [f64; N_STATIC],
}

impl StandardizationStats {
    pub fn identity() -> Self {
        Self {
            dynamic_mean: [0.0; 3],
            dynamic_std: [1.0; 3],
            static_mean: [0.0; N_STATIC],
            static_std: [1.0; N_STATIC],
        }
    }

    /// Standardized copies of the dynamic and static inputs.
    pub fn transform(&self, s: &WindowSample) -> ([[f64; N_DYNAMIC]; WINDOW_HOURS], [f64; N_STATIC]) {
        let mut d = s.dynamic_in;
        for row in d.iter_mut() {
            for ch in 0..3 {
                row[ch] = (row[ch] - self.dynamic_mean[ch]) / self.dynamic_std[ch];
            }
        }
        let st = core::array::from_fn(|i| (s.static_in[i] - self.static_mean[i]) / self.static_std[i]);
        (d, st)
    }
}

/// Population mean and standard deviation (two-pass); zero spread maps to 1.
fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (sum, n) = values.clone().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = libm::sqrt(var);
    (mean, if std > 0.0 && std.is_finite() { std } else { 1.0 })
}

/// Fits statistics over every training entry of W, R, D (all 12 hours of
/// every sample) and every static feature. The outage-ratio channel is left
/// in its natural [0, 1] scale.
pub fn fit_standardization(train: &[WindowSample]) -> Result<StandardizationStats, DatasetError> {
    if train.is_empty() {
        return Err(DatasetError::Config(String::from("cannot fit standardization on an empty set")));
    }
    let mut stats = StandardizationStats::identity();
    for ch in 0..3 {
        let it = train.iter().flat_map(move |s| s.dynamic_in.iter().map(move |r| r[ch]));
        (stats.dynamic_mean[ch], stats.dynamic_std[ch]) = mean_std(it);
    }
    for f in 0..N_STATIC {
        let it = train.iter().map(move |s| s.static_in[f]);
        (stats.static_mean[f], stats.static_std[f]) = mean_std(it);
    }
    Ok(stats)
}

/// Standardizes W, R, D and the static features; outage ratios and labels
/// pass through untouched.
pub fn apply_standardization(stats: &StandardizationStats, s: &WindowSample) -> WindowSample {
    let (dynamic_in, static_in) = stats.transform(s);
    WindowSample { dynamic_in, static_in, ..s.clone() }
}

pub fn invert_standardization(stats: &StandardizationStats, s: &WindowSample) -> WindowSample {
    let mut out = s.clone();
    for row in out.dynamic_in.iter_mut() {
        for ch in 0..3 {
            row[ch] = row[ch] * stats.dynamic_std[ch] + stats.dynamic_mean[ch];
        }
    }
    for i in 0..N_STATIC {
        out.static_in[i] = out.static_in[i] * stats.static_std[i] + stats.static_mean[i];
    }
    out
}
