//! Forecast issue files and rolling-run output directories.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stocast_core::dataset::HORIZON_HOURS;
use stocast_core::forecast::{
    accumulate, ErrorDecomposition, ForecastIssue, IterationRecord, RollingRun, Scheme, WeatherMode,
};
use stocast_core::geo::{GridCell, GridSpec, LatLon};
use stocast_core::ingest::TrackPoint;

use crate::error::{Error, Result};
use crate::formats::{format_hour, format_minute, parse_hour, parse_time, read_csv, read_json, read_text, write_bytes, write_csv_with_header, write_json};

/// Short description of a grid's geometry, stored in issue headers.
pub fn grid_fingerprint(spec: &GridSpec) -> String {
    format!(
        "rows={};cols={};origin={},{};cell_km={};ref_lat={}",
        spec.n_rows, spec.n_cols, spec.origin_lat, spec.origin_lon, spec.cell_km, spec.ref_lat
    )
}

// ------------------------------------------------------------ issue files

pub const ISSUE_EXTENSION: &str = "issue";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueTrackPoint {
    pub time_iso8601: String,
    pub eye_lat: f64,
    pub eye_lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssueHeader {
    pub issue_time: String,
    pub horizon_hours: usize,
    pub n_cells: usize,
    pub grid_fingerprint: String,
    pub track: Vec<IssueTrackPoint>,
}

#[derive(Debug, Deserialize)]
struct IssueRow {
    cell_id: usize,
    hour_offset: usize,
    wind_ms: f32,
    rain_mm: f32,
}

pub fn issue_file_name(issue_hour: i64) -> String {
    format!("issue_{issue_hour}.{ISSUE_EXTENSION}")
}

/// One JSON header line followed by a `cell_id,hour_offset,wind_ms,rain_mm`
/// CSV body.
pub fn write_issue(path: &Path, issue: &ForecastIssue, spec: &GridSpec) -> Result<()> {
    let header = IssueHeader {
        issue_time: format_hour(issue.issue_hour),
        horizon_hours: issue.horizon_hours,
        n_cells: issue.n_cells,
        grid_fingerprint: grid_fingerprint(spec),
        track: issue
            .track
            .iter()
            .map(|p| IssueTrackPoint { time_iso8601: format_minute(p.time), eye_lat: p.eye.lat, eye_lon: p.eye.lon })
            .collect(),
    };
    let mut out = serde_json::to_string(&header).map_err(|e| Error::format(path, e))?;
    out.push_str("\ncell_id,hour_offset,wind_ms,rain_mm\n");
    for c in 0..issue.n_cells {
        for h in 0..issue.horizon_hours {
            let i = c * issue.horizon_hours + h;
            out.push_str(&format!("{c},{h},{},{}\n", issue.wind[i], issue.rain[i]));
        }
    }
    write_bytes(path, out.as_bytes())
}

pub fn read_issue(path: &Path, spec: &GridSpec) -> Result<ForecastIssue> {
    let text = read_text(path)?;
    let (first, body) = text.split_once('\n').ok_or_else(|| Error::format(path, "missing CSV body"))?;
    let header: IssueHeader = serde_json::from_str(first).map_err(|e| Error::format(path, format!("header: {e}")))?;
    if header.grid_fingerprint != grid_fingerprint(spec) {
        return Err(Error::format(
            path,
            format!("issue grid {} does not match {}", header.grid_fingerprint, grid_fingerprint(spec)),
        ));
    }
    let issue_hour = parse_hour(&header.issue_time).map_err(|e| Error::format(path, e))?;
    let n = header.n_cells * header.horizon_hours;
    let mut wind = vec![f32::NAN; n];
    let mut rain = vec![f32::NAN; n];
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    for (line, row) in rdr.deserialize::<IssueRow>().enumerate() {
        let row = row.map_err(|e| Error::format(path, e))?;
        if row.cell_id >= header.n_cells || row.hour_offset >= header.horizon_hours {
            return Err(Error::format(path, format!("body row {}: cell or hour offset out of range", line + 1)));
        }
        let i = row.cell_id * header.horizon_hours + row.hour_offset;
        wind[i] = row.wind_ms;
        rain[i] = row.rain_mm;
    }
    let track = header
        .track
        .iter()
        .map(|p| {
            let time = parse_time(&p.time_iso8601).map_err(|e| Error::format(path, e))?;
            Ok(TrackPoint { time, eye: LatLon::new(p.eye_lat, p.eye_lon) })
        })
        .collect::<Result<Vec<_>>>()?;
    let issue = ForecastIssue { issue_hour, horizon_hours: header.horizon_hours, n_cells: header.n_cells, wind, rain, track };
    issue.validate(spec.n_cells()).map_err(|e| Error::format(path, e))?;
    Ok(issue)
}

/// Every `*.issue` file in `dir`, ordered by file name.
pub fn read_issue_dir(dir: &Path, spec: &GridSpec) -> Result<Vec<ForecastIssue>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ISSUE_EXTENSION))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_issue(p, spec)).collect()
}

// ------------------------------------------------------------- run output

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub event_id: String,
    pub scheme: Scheme,
    pub weather_mode: WeatherMode,
    pub start_time: String,
    pub start_hour: i64,
    pub n_iterations: usize,
    pub n_cells: usize,
    pub forecast_hours: usize,
    pub origin_hours: Vec<i64>,
    pub issue_hours: Vec<Option<i64>>,
    /// Mean absolute error per iteration over cells with transformers.
    pub iteration_mae: Vec<f64>,
    pub mae: f64,
    pub decomposition: Option<ErrorDecomposition>,
}

pub fn iteration_file(k: usize) -> String {
    format!("iteration_{k:02}.csv")
}

/// Cells whose transformer count is positive.
pub fn served_cells(cells: &[GridCell]) -> Vec<usize> {
    cells.iter().filter(|c| c.transformer_count() > 0).map(|c| c.cell_id).collect()
}

pub fn summarize_run(run: &RollingRun, cells: &[GridCell], decomposition: Option<ErrorDecomposition>) -> RunSummary {
    let served = served_cells(cells);
    RunSummary {
        event_id: run.event_id.clone(),
        scheme: run.scheme,
        weather_mode: run.weather_mode,
        start_time: format_hour(run.start_hour),
        start_hour: run.start_hour,
        n_iterations: run.n_iterations,
        n_cells: run.n_cells,
        forecast_hours: run.forecast_hours(),
        origin_hours: run.iterations.iter().map(|i| i.origin_hour).collect(),
        issue_hours: run.iterations.iter().map(|i| i.issue_hour).collect(),
        iteration_mae: run.iteration_mae(&served),
        mae: run.mae(&served),
        decomposition,
    }
}

/// Writes one CSV per iteration, `summary.json` and, when `pgm` is set, one
/// heat map of accumulated predicted counts per iteration.
pub fn write_run(dir: &Path, run: &RollingRun, cells: &[GridCell], spec: &GridSpec, pgm: bool) -> Result<RunSummary> {
    for (k, it) in run.iterations.iter().enumerate() {
        let rows = (0..run.n_cells).flat_map(|c| {
            (0..HORIZON_HOURS).map(move |h| {
                (c, format_hour(it.origin_hour + h as i64), it.pred_counts[c][h], it.pred_ratios[c][h], it.obs_counts[c][h])
            })
        });
        write_csv_with_header(
            &dir.join(iteration_file(k)),
            &["cell_id", "valid_hour", "pred_count", "pred_ratio", "obs_count"],
            rows,
        )?;
    }
    if pgm {
        let acc = accumulate(run, cells);
        let max = acc.predicted.iter().copied().fold(0.0f64, f64::max);
        for k in 0..run.iterations.len() {
            let h = (k + 1) * HORIZON_HOURS - 1;
            let values: Vec<f64> = (0..run.n_cells).map(|c| acc.predicted[c * acc.n_hours + h]).collect();
            write_pgm(&dir.join(format!("iteration_{k:02}.pgm")), spec, &values, max)?;
        }
    }
    let summary = summarize_run(run, cells, None);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Binary greyscale image, north row first, values scaled by `max` to 0-255.
pub fn write_pgm(path: &Path, spec: &GridSpec, values: &[f64], max: f64) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", spec.n_cols, spec.n_rows).into_bytes();
    for r in (0..spec.n_rows).rev() {
        for c in 0..spec.n_cols {
            let v = values[r * spec.n_cols + c];
            let px = if max > 0.0 { (v / max * 255.0).round().clamp(0.0, 255.0) as u8 } else { 0 };
            out.push(px);
        }
    }
    write_bytes(path, &out)
}

#[derive(Debug, Deserialize)]
struct RunRow {
    cell_id: usize,
    valid_hour: String,
    pred_count: f64,
    pred_ratio: f64,
    obs_count: f64,
}

/// Rebuilds a run (without its model inputs) from an output directory.
pub fn read_run(dir: &Path) -> Result<RollingRun> {
    let summary: RunSummary = read_json(&dir.join("summary.json"))?;
    let mut iterations = Vec::with_capacity(summary.n_iterations);
    for k in 0..summary.n_iterations {
        let path = dir.join(iteration_file(k));
        let origin = summary.origin_hours[k];
        let mut it = IterationRecord {
            origin_hour: origin,
            issue_hour: summary.issue_hours.get(k).copied().flatten(),
            inputs: Vec::new(),
            pred_counts: vec![[0.0; HORIZON_HOURS]; summary.n_cells],
            pred_ratios: vec![[0.0; HORIZON_HOURS]; summary.n_cells],
            obs_counts: vec![[0.0; HORIZON_HOURS]; summary.n_cells],
        };
        let rows: Vec<RunRow> = read_csv(&path)?;
        if rows.len() != summary.n_cells * HORIZON_HOURS {
            return Err(Error::format(&path, format!("{} rows, expected {}", rows.len(), summary.n_cells * HORIZON_HOURS)));
        }
        for r in rows {
            let hour = parse_hour(&r.valid_hour).map_err(|e| Error::format(&path, e))?;
            let h = hour - origin;
            if r.cell_id >= summary.n_cells || !(0..HORIZON_HOURS as i64).contains(&h) {
                return Err(Error::format(&path, format!("row for cell {} at {} is out of range", r.cell_id, r.valid_hour)));
            }
            let h = h as usize;
            it.pred_counts[r.cell_id][h] = r.pred_count;
            it.pred_ratios[r.cell_id][h] = r.pred_ratio;
            it.obs_counts[r.cell_id][h] = r.obs_count;
        }
        iterations.push(it);
    }
    Ok(RollingRun {
        scheme: summary.scheme,
        weather_mode: summary.weather_mode,
        event_id: summary.event_id,
        start_hour: summary.start_hour,
        n_iterations: summary.n_iterations,
        n_cells: summary.n_cells,
        iterations,
    })
}
