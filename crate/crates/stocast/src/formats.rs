//! On-disk formats for grids, rasters, event records and panels.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use stocast_core::geo::{GridCell, GridSpec, LatLon, Raster, StaticFeatures};
use stocast_core::ingest::{EventPanel, OutageRecord, StationObservation, TrackPoint, TransformerRecord, N_CHANNELS};
use stocast_core::synth::{Station, Truth};

use crate::error::{Error, Result};

/// Parses an ISO-8601 timestamp with an explicit offset into a UTC epoch
/// minute. Seconds are truncated toward the start of the minute.
pub fn parse_time(s: &str) -> std::result::Result<i64, String> {
    let t = DateTime::parse_from_rfc3339(s.trim())
        .map_err(|e| format!("timestamp {s:?} is not ISO-8601 with an offset ({e})"))?;
    Ok(t.timestamp().div_euclid(60))
}

pub fn format_minute(minute: i64) -> String {
    Utc.timestamp_opt(minute * 60, 0)
        .single()
        .map(|t| t.to_rfc3339_opts(SecondsFormat::Secs, false))
        .unwrap_or_else(|| format!("invalid-minute-{minute}"))
}

pub fn format_hour(hour: i64) -> String {
    format_minute(hour * 60)
}

/// Epoch hour of a timestamp that must fall on the hour.
pub fn parse_hour(s: &str) -> std::result::Result<i64, String> {
    let m = parse_time(s)?;
    if m.rem_euclid(60) != 0 {
        return Err(format!("timestamp {s:?} is not on the hour"));
    }
    Ok(m.div_euclid(60))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    rdr.deserialize().map(|r| r.map_err(|e| csv_error(path, e))).collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for row in rows {
        wtr.serialize(row).map_err(|e| Error::format(path, e))?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::format(path, e.error()))?;
    write_bytes(path, &bytes)
}

/// Writes a CSV whose header is given explicitly (useful when there may be
/// no rows).
pub fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    wtr.write_record(header).map_err(|e| Error::format(path, e))?;
    for row in rows {
        wtr.serialize(row).map_err(|e| Error::format(path, e))?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::format(path, e.error()))?;
    write_bytes(path, &bytes)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
            Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"))
        }
        _ => Error::format(path, e),
    }
}

// ---------------------------------------------------------------- rasters

/// Reads an ESRI ASCII grid. Header keys are case-insensitive.
pub fn read_asc(path: &Path) -> Result<Raster> {
    let text = read_text(path)?;
    let mut header = BTreeMap::new();
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.peek() {
        let mut parts = line.split_whitespace();
        let Some(key) = parts.next() else {
            lines.next();
            continue;
        };
        if key.parse::<f64>().is_ok() {
            break;
        }
        let value = parts.next().ok_or_else(|| Error::format(path, format!("header {key} has no value")))?;
        header.insert(key.to_ascii_lowercase(), value.to_string());
        lines.next();
    }
    let get = |k: &str| -> Result<f64> {
        header
            .get(k)
            .ok_or_else(|| Error::format(path, format!("missing header {k}")))?
            .parse::<f64>()
            .map_err(|e| Error::format(path, format!("header {k}: {e}")))
    };
    let n_cols = get("ncols")? as usize;
    let n_rows = get("nrows")? as usize;
    let x_ll = get("xllcorner")?;
    let y_ll = get("yllcorner")?;
    let cell_size = get("cellsize")?;
    let nodata = if header.contains_key("nodata_value") { get("nodata_value")? } else { -9999.0 };
    let values = lines
        .flat_map(str::split_whitespace)
        .map(|v| v.parse::<f64>().map_err(|e| Error::format(path, format!("value {v:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    Raster::new(n_rows, n_cols, x_ll, y_ll, cell_size, nodata, values).map_err(|e| Error::format(path, e))
}

pub fn write_asc(path: &Path, r: &Raster) -> Result<()> {
    let mut out = format!(
        "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {}\n",
        r.n_cols, r.n_rows, r.x_ll, r.y_ll, r.cell_size, r.nodata
    );
    for row in r.values.chunks(r.n_cols) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

// ------------------------------------------------------------------- grid

#[derive(Debug, Serialize, Deserialize)]
struct GridRow {
    cell_id: usize,
    row: usize,
    col: usize,
    center_lat: f64,
    center_lon: f64,
    elevation: f64,
    slope: f64,
    aspect: f64,
    green_ratio: f64,
    impervious_ratio: f64,
    transformer_count: u32,
    #[serde(default)]
    town_id: Option<String>,
    #[serde(default)]
    county_id: Option<String>,
    #[serde(default)]
    city_id: Option<String>,
    #[serde(default)]
    population: Option<f64>,
}

/// A grid file pair: the cell table and its geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub spec: GridSpec,
    pub cells: Vec<GridCell>,
}

/// Geometry sidecar of a grid CSV: same path with a `.json` extension.
pub fn grid_spec_path(grid_csv: &Path) -> PathBuf {
    grid_csv.with_extension("json")
}

pub fn write_grid(grid_csv: &Path, grid: &Grid) -> Result<()> {
    let rows = grid.cells.iter().map(|c| GridRow {
        cell_id: c.cell_id,
        row: c.row,
        col: c.col,
        center_lat: c.center.lat,
        center_lon: c.center.lon,
        elevation: c.features.elevation,
        slope: c.features.slope,
        aspect: c.features.aspect,
        green_ratio: c.features.green_ratio,
        impervious_ratio: c.features.impervious_ratio,
        transformer_count: c.features.transformer_count,
        town_id: c.town_id.clone(),
        county_id: c.county_id.clone(),
        city_id: c.city_id.clone(),
        population: c.population,
    });
    write_csv(grid_csv, rows)?;
    write_json(&grid_spec_path(grid_csv), &grid.spec)
}

/// Reads `grid.csv` and its `grid.json` geometry; cells must be listed in
/// `cell_id` order and agree with the geometry.
pub fn read_grid(grid_csv: &Path) -> Result<Grid> {
    let spec: GridSpec = read_json(&grid_spec_path(grid_csv))?;
    spec.validate().map_err(|e| Error::format(grid_spec_path(grid_csv), e))?;
    let rows: Vec<GridRow> = read_csv(grid_csv)?;
    if rows.len() != spec.n_cells() {
        return Err(Error::format(
            grid_csv,
            format!("{} rows for a {}x{} grid", rows.len(), spec.n_rows, spec.n_cols),
        ));
    }
    let empty = |s: Option<String>| s.filter(|v| !v.is_empty());
    let mut cells = Vec::with_capacity(rows.len());
    for (i, r) in rows.into_iter().enumerate() {
        if r.cell_id != i || spec.row_col(i) != (r.row, r.col) {
            return Err(Error::format(grid_csv, format!("row {} does not match cell {i} of the grid", i + 1)));
        }
        let cell = GridCell {
            cell_id: r.cell_id,
            row: r.row,
            col: r.col,
            center: LatLon::new(r.center_lat, r.center_lon),
            features: StaticFeatures {
                elevation: r.elevation,
                slope: r.slope,
                aspect: r.aspect,
                green_ratio: r.green_ratio,
                impervious_ratio: r.impervious_ratio,
                transformer_count: r.transformer_count,
            },
            town_id: empty(r.town_id),
            county_id: empty(r.county_id),
            city_id: empty(r.city_id),
            population: r.population,
        };
        cell.validate().map_err(|e| Error::format(grid_csv, format!("cell {i}: {e}")))?;
        cells.push(cell);
    }
    Ok(Grid { spec, cells })
}

// ------------------------------------------------------------ event files

/// `event.json`: the identity and panel window of one storm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventInfo {
    pub event_id: String,
    pub start_time: String,
    pub n_hours: usize,
}

impl EventInfo {
    pub fn start_hour(&self, path: &Path) -> Result<i64> {
        parse_hour(&self.start_time).map_err(|e| Error::format(path, e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StationRow {
    station_id: String,
    lat: f64,
    lon: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservationRow {
    station_id: String,
    time_iso8601: String,
    wind_ms: f64,
    rain_mm: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    time_iso8601: String,
    eye_lat: f64,
    eye_lon: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TransformerRow {
    transformer_id: String,
    lat: f64,
    lon: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct OutageRow {
    transformer_id: String,
    time_iso8601: String,
}

/// Everything ingest needs for one storm.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFiles {
    pub info: EventInfo,
    pub start_hour: i64,
    pub stations: Vec<Station>,
    pub observations: Vec<StationObservation>,
    pub track: Vec<TrackPoint>,
    pub transformers: Vec<TransformerRecord>,
    pub outages: Vec<OutageRecord>,
}

pub const EVENT_FILES: [&str; 6] =
    ["event.json", "stations.csv", "observations.csv", "track.csv", "transformers.csv", "outages.csv"];

pub fn read_event_dir(dir: &Path) -> Result<EventFiles> {
    for name in EVENT_FILES {
        let p = dir.join(name);
        if !p.is_file() {
            return Err(Error::io(&p, std::io::Error::new(std::io::ErrorKind::NotFound, "required event file is missing")));
        }
    }
    let info_path = dir.join("event.json");
    let info: EventInfo = read_json(&info_path)?;
    let start_hour = info.start_hour(&info_path)?;

    let st_path = dir.join("stations.csv");
    let stations: Vec<Station> = read_csv::<StationRow>(&st_path)?
        .into_iter()
        .map(|r| Station { station_id: r.station_id, location: LatLon::new(r.lat, r.lon) })
        .collect();
    let by_id: BTreeMap<&str, LatLon> = stations.iter().map(|s| (s.station_id.as_str(), s.location)).collect();

    let obs_path = dir.join("observations.csv");
    let mut observations = Vec::new();
    for (i, r) in read_csv::<ObservationRow>(&obs_path)?.into_iter().enumerate() {
        let location = *by_id
            .get(r.station_id.as_str())
            .ok_or_else(|| Error::format(&obs_path, format!("row {}: unknown station {}", i + 2, r.station_id)))?;
        let minute = parse_time(&r.time_iso8601).map_err(|e| Error::format(&obs_path, format!("row {}: {e}", i + 2)))?;
        observations.push(StationObservation {
            station_id: r.station_id,
            location,
            hour: minute.div_euclid(60),
            wind: r.wind_ms,
            rain: r.rain_mm,
        });
    }

    let track_path = dir.join("track.csv");
    let track = read_csv::<TrackRow>(&track_path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let time = parse_time(&r.time_iso8601).map_err(|e| Error::format(&track_path, format!("row {}: {e}", i + 2)))?;
            Ok(TrackPoint { time, eye: LatLon::new(r.eye_lat, r.eye_lon) })
        })
        .collect::<Result<Vec<_>>>()?;

    let tx_path = dir.join("transformers.csv");
    let transformers = read_csv::<TransformerRow>(&tx_path)?
        .into_iter()
        .map(|r| TransformerRecord { transformer_id: r.transformer_id, location: LatLon::new(r.lat, r.lon) })
        .collect();

    let out_path = dir.join("outages.csv");
    let outages = read_csv::<OutageRow>(&out_path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let time = parse_time(&r.time_iso8601).map_err(|e| Error::format(&out_path, format!("row {}: {e}", i + 2)))?;
            Ok(OutageRecord { transformer_id: r.transformer_id, time })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EventFiles { info, start_hour, stations, observations, track, transformers, outages })
}

pub fn write_event_dir(dir: &Path, ev: &EventFiles, truth: Option<&Truth>) -> Result<()> {
    write_json(&dir.join("event.json"), &ev.info)?;
    write_csv_with_header(
        &dir.join("stations.csv"),
        &["station_id", "lat", "lon"],
        ev.stations.iter().map(|s| (&s.station_id, s.location.lat, s.location.lon)),
    )?;
    write_csv_with_header(
        &dir.join("observations.csv"),
        &["station_id", "time_iso8601", "wind_ms", "rain_mm"],
        ev.observations.iter().map(|o| (&o.station_id, format_hour(o.hour), o.wind, o.rain)),
    )?;
    write_csv_with_header(
        &dir.join("track.csv"),
        &["time_iso8601", "eye_lat", "eye_lon"],
        ev.track.iter().map(|t| (format_minute(t.time), t.eye.lat, t.eye.lon)),
    )?;
    write_csv_with_header(
        &dir.join("transformers.csv"),
        &["transformer_id", "lat", "lon"],
        ev.transformers.iter().map(|t| (&t.transformer_id, t.location.lat, t.location.lon)),
    )?;
    write_csv_with_header(
        &dir.join("outages.csv"),
        &["transformer_id", "time_iso8601"],
        ev.outages.iter().map(|o| (&o.transformer_id, format_minute(o.time))),
    )?;
    if let Some(t) = truth {
        write_json(&dir.join("truth.json"), t)?;
    }
    Ok(())
}

// ------------------------------------------------------------------ panels

pub const CHANNEL_ORDER: [&str; N_CHANNELS] = ["W", "R", "D", "O"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelHeader {
    pub event_id: String,
    pub start_hour: i64,
    pub start_time: String,
    pub n_hours: usize,
    pub n_cells: usize,
    pub channels: Vec<String>,
}

pub fn write_panel(dir: &Path, panel: &EventPanel) -> Result<()> {
    let header = PanelHeader {
        event_id: panel.event_id.clone(),
        start_hour: panel.start_hour,
        start_time: format_hour(panel.start_hour),
        n_hours: panel.n_hours,
        n_cells: panel.n_cells,
        channels: CHANNEL_ORDER.iter().map(|s| s.to_string()).collect(),
    };
    write_json(&dir.join("panel.json"), &header)?;
    let mut bytes = Vec::with_capacity(panel.values.len() * 4);
    for v in &panel.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(&dir.join("panel.f32"), &bytes)
}

pub fn read_panel(dir: &Path) -> Result<EventPanel> {
    let hp = dir.join("panel.json");
    let header: PanelHeader = read_json(&hp)?;
    if header.channels != CHANNEL_ORDER {
        return Err(Error::format(&hp, format!("channel order {:?}, expected W,R,D,O", header.channels)));
    }
    let bp = dir.join("panel.f32");
    let bytes = fs::read(&bp).map_err(|e| Error::io(&bp, e))?;
    let n = header.n_cells * header.n_hours * N_CHANNELS;
    if bytes.len() != n * 4 {
        return Err(Error::format(&bp, format!("{} bytes, expected {}", bytes.len(), n * 4)));
    }
    let values = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    let panel = EventPanel {
        event_id: header.event_id,
        start_hour: header.start_hour,
        n_hours: header.n_hours,
        n_cells: header.n_cells,
        values,
    };
    panel.validate().map_err(|e| Error::format(&bp, e))?;
    Ok(panel)
}

/// Writes `bytes` through a buffered file handle (used for large text).
pub fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut buf = Vec::new();
    for l in lines {
        buf.write_all(l.as_bytes()).map_err(|e| Error::io(path, e))?;
        buf.push(b'\n');
    }
    write_bytes(path, &buf)
}
