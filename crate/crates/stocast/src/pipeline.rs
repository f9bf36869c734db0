//! File-level building blocks shared by the command line and the tests.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stocast_core::dataset::{active_cells, build_loso_dataset, test_event_samples, LosoDataset, LosoExperiment, StandardizationStats, WindowSample};
use stocast_core::forecast::ForecastIssue;
use stocast_core::ingest::{
    build_event_panel, clean_outages, count_transformers, EventPanel, IdwParams, IngestWarning, PanelInputs, TrackPoint,
};
use stocast_core::synth::{gen_event, gen_forecast_issue, generate_world, IssuePerturbation, SyntheticConfig, SyntheticEvent, World};

use crate::error::{Error, Result};
use crate::formats::{self, format_hour, read_event_dir, write_asc, write_event_dir, write_grid, EventFiles, EventInfo, Grid};
use crate::runs::{issue_file_name, write_issue};

/// Grid and raster file names written at the top of a synthetic output.
pub const GRID_FILE: &str = "grid.csv";

/// Writes the shared grid and rasters plus one directory per storm.
pub fn write_synthetic(cfg: &SyntheticConfig, out: &Path) -> Result<(World, Vec<SyntheticEvent>)> {
    let world = generate_world(cfg)?;
    write_grid(&out.join(GRID_FILE), &Grid { spec: world.spec, cells: world.cells.clone() })?;
    write_asc(&out.join("dem.asc"), &world.dem)?;
    write_asc(&out.join("landuse.asc"), &world.land_use)?;
    let mut events = Vec::with_capacity(cfg.storms.len());
    for k in 0..cfg.storms.len() {
        let ev = gen_event(cfg, &world, k)?;
        let files = event_files(&ev);
        write_event_dir(&out.join(&ev.event_id), &files, Some(&ev.truth))?;
        events.push(ev);
    }
    Ok((world, events))
}

pub fn event_files(ev: &SyntheticEvent) -> EventFiles {
    EventFiles {
        info: EventInfo { event_id: ev.event_id.clone(), start_time: format_hour(ev.start_hour), n_hours: ev.n_hours },
        start_hour: ev.start_hour,
        stations: ev.stations.clone(),
        observations: ev.observations.clone(),
        track: ev.track.clone(),
        transformers: ev.transformers.clone(),
        outages: ev.outages.clone(),
    }
}

/// Cleans outages and builds the panel of one event.
pub fn ingest_files(ev: &EventFiles, grid: &Grid) -> Result<(EventPanel, Vec<IngestWarning>)> {
    let known: BTreeSet<String> = ev.transformers.iter().map(|t| t.transformer_id.clone()).collect();
    let end = ev.start_hour + ev.info.n_hours as i64;
    let cleaned = clean_outages(&ev.outages, &known, ev.start_hour, end);
    let counts = count_transformers(&grid.spec, &ev.transformers);
    let (panel, warnings) = build_event_panel(&PanelInputs {
        event_id: &ev.info.event_id,
        spec: &grid.spec,
        transformers: &ev.transformers,
        observations: &ev.observations,
        track: &ev.track,
        outages: &cleaned,
        start_hour: ev.start_hour,
        n_hours: ev.info.n_hours,
        idw: IdwParams::default(),
        transformer_counts: Some(&counts),
    })?;
    Ok((panel, warnings))
}

pub fn ingest_dir(event_dir: &Path, grid: &Grid) -> Result<(EventPanel, Vec<IngestWarning>)> {
    ingest_files(&read_event_dir(event_dir)?, grid)
}

/// Issues every `every_hours` from the panel start, each reaching the panel
/// end, so both rolling schemes always find a covering issue.
pub fn synthetic_issues(
    panel: &EventPanel,
    track: &[TrackPoint],
    every_hours: usize,
    perturbation: &IssuePerturbation,
) -> Result<Vec<ForecastIssue>> {
    if every_hours == 0 {
        return Err(Error::Input(String::from("issue interval must be at least one hour")));
    }
    let mut out = Vec::new();
    let mut offset = 0;
    while offset + stocast_core::dataset::HORIZON_HOURS <= panel.n_hours {
        let p = IssuePerturbation { seed: stocast_core::rng::derive_seed(perturbation.seed, offset as u64), ..*perturbation };
        out.push(gen_forecast_issue(panel, track, panel.start_hour + offset as i64, panel.n_hours - offset, &p)?);
        offset += every_hours;
    }
    Ok(out)
}

pub fn write_issues(dir: &Path, issues: &[ForecastIssue], grid: &Grid) -> Result<Vec<PathBuf>> {
    issues
        .iter()
        .map(|i| {
            let p = dir.join(issue_file_name(i.issue_hour));
            write_issue(&p, i, &grid.spec)?;
            Ok(p)
        })
        .collect()
}

/// Split manifest written next to a trained checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub experiment_id: String,
    pub experiment: LosoExperiment,
    pub seeds: SplitSeeds,
    pub stats: StandardizationStats,
    pub counts: SplitCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSeeds {
    pub cell_split: u64,
    pub sample_split: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub training: usize,
    pub validation: usize,
    pub test_grid: usize,
    pub test_event: usize,
}

/// The four sample sets of an experiment.
pub struct Splits {
    pub data: LosoDataset,
    pub test_event: Vec<WindowSample>,
}

pub fn materialize(exp: &LosoExperiment, panels: &[EventPanel], grid: &Grid) -> Result<Splits> {
    let data = build_loso_dataset(exp, panels, &grid.cells)?;
    let active = active_cells(&grid.cells, panels);
    let test_event = test_event_samples(exp, panels, &grid.cells, &active)?;
    Ok(Splits { data, test_event })
}

pub fn dataset_manifest(exp: &LosoExperiment, stats: &StandardizationStats, splits: &Splits) -> DatasetManifest {
    DatasetManifest {
        experiment_id: format!("loso-{}", exp.holdout_event_id),
        experiment: exp.clone(),
        seeds: SplitSeeds { cell_split: exp.seed, sample_split: exp.sample_seed() },
        stats: stats.clone(),
        counts: SplitCounts {
            training: splits.data.train.len(),
            validation: splits.data.val.len(),
            test_grid: splits.data.test_grid.len(),
            test_event: splits.test_event.len(),
        },
    }
}

/// Panels in the given order, checked for unique event ids and a common
/// cell count matching the grid.
pub fn read_panels(dirs: &[PathBuf], grid: &Grid) -> Result<Vec<EventPanel>> {
    let panels = dirs.iter().map(|d| formats::read_panel(d)).collect::<Result<Vec<_>>>()?;
    let mut ids = BTreeSet::new();
    for (p, d) in panels.iter().zip(dirs) {
        if p.n_cells != grid.cells.len() {
            return Err(Error::Input(format!("{}: panel has {} cells, grid has {}", d.display(), p.n_cells, grid.cells.len())));
        }
        if !ids.insert(p.event_id.clone()) {
            return Err(Error::Input(format!("event {} is given twice", p.event_id)));
        }
    }
    Ok(panels)
}
