//! Synthetic cyclones with a known outage process.
//!
//! A storm is a modified-Rankine vortex with an exponential rain kernel moving
//! along a jittered piecewise-linear track. Every transformer fails at most
//! once, with a per-hour logistic hazard in the wind and rain at its own
//! location. Stations sample the same analytic fields with multiplicative
//! noise, so running the emitted records through [`crate::ingest`] rebuilds
//! an ordinary event panel whose outage channel matches [`Truth`] exactly.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::forecast::ForecastIssue;
use crate::geo::{self, AggregateMode, GeoError, GridCell, GridSpec, LatLon, Raster, KM_PER_DEGREE};
use crate::ingest::{
    self, EventPanel, IngestError, OutageRecord, StationObservation, TrackPoint, TransformerRecord, CH_RAIN,
    CH_WIND,
};
use crate::rng::{derive_seed, StreamRng};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error("unknown storm {0}")]
    UnknownStorm(String),
    #[error("issue hours {from}..{to} fall outside the panel")]
    IssueOutsidePanel { from: i64, to: i64 },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexParams {
    /// Peak wind, m/s.
    pub v_max: f64,
    pub r_max_km: f64,
    pub decay_alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RainParams {
    /// Rain rate at the eye, mm/h.
    pub peak_mm: f64,
    pub efold_km: f64,
}

/// Modified-Rankine tangential wind at `r_km` from the eye.
pub fn wind_at(r_km: f64, storm: &VortexParams) -> f64 {
    if r_km <= storm.r_max_km {
        storm.v_max * (r_km / storm.r_max_km)
    } else {
        storm.v_max * libm::pow(storm.r_max_km / r_km, storm.decay_alpha)
    }
}

pub fn rain_at(r_km: f64, rain: &RainParams) -> f64 {
    rain.peak_mm * libm::exp(-r_km / rain.efold_km)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    /// Hours after the event start.
    pub hour: f64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StormConfig {
    pub event_id: String,
    /// UTC epoch hour of the first panel hour.
    pub start_hour: i64,
    pub waypoints: Vec<Waypoint>,
    pub vortex: VortexParams,
    pub rain: RainParams,
    /// Standard deviation (km) of the independent offset added to every
    /// emitted track point.
    pub jitter_km: f64,
}

fn ser_beta0<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if *v == f64::NEG_INFINITY {
        s.serialize_none()
    } else {
        s.serialize_some(v)
    }
}

fn de_beta0<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

/// Logistic per-hour failure hazard. `beta0 = -inf` (written as JSON `null`)
/// switches the hazard off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FragilityParams {
    #[serde(serialize_with = "ser_beta0", deserialize_with = "de_beta0")]
    pub beta0: f64,
    /// Per m/s of wind.
    pub beta_w: f64,
    /// Per mm/h of rain.
    pub beta_r: f64,
    /// Standard deviation of a fixed per-cell offset added to the logit.
    #[serde(default)]
    pub cell_sd: f64,
}

impl FragilityParams {
    pub fn hazard(&self, wind: f64, rain: f64, cell_offset: f64) -> f64 {
        if self.beta0 == f64::NEG_INFINITY {
            return 0.0;
        }
        let z = self.beta0 + self.beta_w * wind + self.beta_r * rain + cell_offset;
        1.0 / (1.0 + libm::exp(-z))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub grid: GridSpec,
    pub n_transformers: usize,
    /// Share of transformers clustered around town centres; the rest are
    /// spread uniformly.
    #[serde(default)]
    pub urban_fraction: f64,
    pub n_stations: usize,
    pub window_hours: usize,
    /// Standard deviation of the multiplicative station noise.
    pub observation_noise: f64,
    /// Terrain and land-use raster pixels along one cell edge.
    pub raster_pixels_per_cell: usize,
    pub fragility: FragilityParams,
    pub storms: Vec<StormConfig>,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        self.grid.validate()?;
        if !(0.0..=1.0).contains(&self.urban_fraction) {
            return bad(String::from("urban_fraction must lie in [0, 1]"));
        }
        if self.n_stations == 0 {
            return bad(String::from("n_stations must be at least 1"));
        }
        if self.window_hours < 12 {
            return bad(format!("window_hours must be at least 12, got {}", self.window_hours));
        }
        if !(self.observation_noise >= 0.0 && self.observation_noise < 1.0) {
            return bad(String::from("observation_noise must lie in [0, 1)"));
        }
        if self.raster_pixels_per_cell == 0 {
            return bad(String::from("raster_pixels_per_cell must be at least 1"));
        }
        let f = &self.fragility;
        if f.beta0.is_nan() || f.beta0 == f64::INFINITY || !f.beta_w.is_finite() || !f.beta_r.is_finite() {
            return bad(String::from("fragility coefficients must be finite (beta0 may be null)"));
        }
        if !(f.cell_sd >= 0.0 && f.cell_sd.is_finite()) {
            return bad(String::from("fragility.cell_sd must be non-negative"));
        }
        if self.storms.is_empty() {
            return bad(String::from("at least one storm is required"));
        }
        let mut ids = BTreeSet::new();
        for s in &self.storms {
            if s.event_id.is_empty() || !ids.insert(s.event_id.as_str()) {
                return bad(format!("storm ids must be unique and non-empty ({:?})", s.event_id));
            }
            let v = &s.vortex;
            if !(v.v_max > 0.0) {
                return bad(format!("{}: v_max must be positive", s.event_id));
            }
            if !(v.r_max_km > 0.0) {
                return bad(format!("{}: r_max_km must be positive", s.event_id));
            }
            if !(v.decay_alpha > 0.0) {
                return bad(format!("{}: decay_alpha must be positive", s.event_id));
            }
            if !(s.rain.peak_mm >= 0.0 && s.rain.efold_km > 0.0) {
                return bad(format!("{}: rain needs peak_mm >= 0 and efold_km > 0", s.event_id));
            }
            if !(s.jitter_km >= 0.0) {
                return bad(format!("{}: jitter_km must be non-negative", s.event_id));
            }
            if s.waypoints.is_empty() || s.waypoints.windows(2).any(|w| !(w[1].hour > w[0].hour)) {
                return bad(format!("{}: waypoints must be non-empty with increasing hours", s.event_id));
            }
        }
        Ok(())
    }

    pub fn storm(&self, event_id: &str) -> Result<(usize, &StormConfig), SynthError> {
        self.storms
            .iter()
            .enumerate()
            .find(|(_, s)| s.event_id == event_id)
            .ok_or_else(|| SynthError::UnknownStorm(String::from(event_id)))
    }
}

fn storm(
    event_id: &str,
    start_hour: i64,
    waypoints: &[(f64, f64, f64)],
    vortex: (f64, f64, f64),
    rain: (f64, f64),
) -> StormConfig {
    StormConfig {
        event_id: String::from(event_id),
        start_hour,
        waypoints: waypoints.iter().map(|&(hour, lat, lon)| Waypoint { hour, lat, lon }).collect(),
        vortex: VortexParams { v_max: vortex.0, r_max_km: vortex.1, decay_alpha: vortex.2 },
        rain: RainParams { peak_mm: rain.0, efold_km: rain.1 },
        jitter_km: 2.0,
    }
}

impl Default for SyntheticConfig {
    /// 30 x 34 cells of 4 km, 5,000 transformers and four 66-hour storms.
    fn default() -> Self {
        Self {
            grid: GridSpec {
                origin_lat: 28.0,
                origin_lon: 120.0,
                cell_km: 4.0,
                n_rows: 30,
                n_cols: 34,
                ref_lat: 28.5,
            },
            n_transformers: 5000,
            urban_fraction: 0.0,
            n_stations: 300,
            window_hours: 66,
            observation_noise: 0.03,
            raster_pixels_per_cell: 4,
            fragility: FragilityParams { beta0: -33.0, beta_w: 1.0, beta_r: 0.03, cell_sd: 0.8 },
            storms: vec![
                storm(
                    "storm-a",
                    434_808,
                    &[(0.0, 25.40, 124.37), (30.0, 28.45, 120.90), (65.0, 32.01, 116.85)],
                    (52.0, 35.0, 0.55),
                    (40.0, 60.0),
                ),
                storm(
                    "storm-b",
                    443_448,
                    &[(0.0, 24.57, 120.0), (32.0, 28.6, 120.35), (65.0, 32.2, 121.6)],
                    (45.0, 30.0, 0.6),
                    (55.0, 70.0),
                ),
                storm(
                    "storm-c",
                    451_968,
                    &[(0.0, 25.6, 123.9), (30.0, 28.6, 120.9), (65.0, 32.3, 118.4)],
                    (50.0, 35.0, 0.55),
                    (35.0, 50.0),
                ),
                storm(
                    "storm-d",
                    461_952,
                    &[(0.0, 25.09, 117.36), (28.0, 28.3, 121.0), (65.0, 32.54, 125.81)],
                    (48.0, 28.0, 0.65),
                    (45.0, 80.0),
                ),
            ],
            seed: 20_240_601,
        }
    }
}

/// Land-use class codes in the synthetic land-use raster.
pub const LAND_FOREST: i64 = 1;
pub const LAND_BUILT: i64 = 2;
pub const LAND_CROP: i64 = 3;
pub const LAND_WATER: i64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub station_id: String,
    pub location: LatLon,
}

/// Everything shared by the storms of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub spec: GridSpec,
    pub cells: Vec<GridCell>,
    pub transformers: Vec<TransformerRecord>,
    /// Cell of each transformer, same order as `transformers`.
    pub transformer_cells: Vec<usize>,
    pub stations: Vec<Station>,
    pub dem: Raster,
    pub land_use: Raster,
    /// Fixed logit offset per cell.
    pub cell_offset: Vec<f64>,
}

struct Bump {
    lat: f64,
    lon: f64,
    height: f64,
    radius_km: f64,
}

fn bump_sum(bumps: &[Bump], p: LatLon) -> f64 {
    bumps
        .iter()
        .map(|b| {
            let d = geo::haversine_unchecked(p, LatLon::new(b.lat, b.lon)) / b.radius_km;
            b.height * libm::exp(-0.5 * d * d)
        })
        .sum()
}

fn random_bumps(rng: &mut StreamRng, spec: &GridSpec, n: usize, height: (f64, f64), radius: (f64, f64)) -> Vec<Bump> {
    let (lat_span, lon_span) = envelope(spec);
    (0..n)
        .map(|_| Bump {
            lat: spec.origin_lat + rng.uniform_in(-0.1, 1.1) * lat_span,
            lon: spec.origin_lon + rng.uniform_in(-0.1, 1.1) * lon_span,
            height: rng.uniform_in(height.0, height.1),
            radius_km: rng.uniform_in(radius.0, radius.1),
        })
        .collect()
}

/// A uniform point, or with probability `urban_fraction` a Gaussian draw
/// around a random town centre (falling back to uniform when it leaves the
/// grid). Points stay off the outer edge so every one lands in a cell.
fn place_transformer(rng: &mut StreamRng, spec: &GridSpec, towns: &[Bump], urban_fraction: f64) -> (f64, f64) {
    let (lat_span, lon_span) = envelope(spec);
    let inside = |lat: f64, lon: f64| {
        let (y, x) = ((lat - spec.origin_lat) / lat_span, (lon - spec.origin_lon) / lon_span);
        (1e-9..1.0 - 1e-9).contains(&y) && (1e-9..1.0 - 1e-9).contains(&x)
    };
    if rng.uniform() < urban_fraction && !towns.is_empty() {
        let town = &towns[rng.below(towns.len())];
        for _ in 0..16 {
            let lat = town.lat + rng.normal() * town.radius_km / geo::KM_PER_DEGREE;
            let lon = town.lon + rng.normal() * town.radius_km * spec.lon_step() / spec.cell_km;
            if inside(lat, lon) {
                return (lat, lon);
            }
        }
    }
    (
        spec.origin_lat + rng.uniform_in(1e-9, 1.0 - 1e-9) * lat_span,
        spec.origin_lon + rng.uniform_in(1e-9, 1.0 - 1e-9) * lon_span,
    )
}

fn envelope(spec: &GridSpec) -> (f64, f64) {
    (spec.n_rows as f64 * spec.lat_step(), spec.n_cols as f64 * spec.lon_step())
}

/// Builds terrain, land use, transformers, stations and per-cell static
/// features. Deterministic in `cfg.seed`.
pub fn generate_world(cfg: &SyntheticConfig) -> Result<World, SynthError> {
    cfg.validate()?;
    let spec = cfg.grid;
    let root = StreamRng::new(derive_seed(cfg.seed, 1));
    let (lat_span, lon_span) = envelope(&spec);

    // Rasters share one square pixel size (degrees) and cover the envelope.
    let px = spec.lat_step() / cfg.raster_pixels_per_cell as f64;
    let n_rows = libm::ceil(lat_span / px - 1e-9) as usize;
    let n_cols = libm::ceil(lon_span / px - 1e-9) as usize;
    let mut terrain_rng = root.fork(1);
    let hills = random_bumps(&mut terrain_rng, &spec, 12, (80.0, 700.0), (6.0, 25.0));
    let towns = random_bumps(&mut terrain_rng, &spec, 4, (1.0, 1.0), (6.0, 14.0));
    let mut dem_values = Vec::with_capacity(n_rows * n_cols);
    let mut land_values = Vec::with_capacity(n_rows * n_cols);
    let mut pixel_rng = root.fork(2);
    let raster_at = |values: Vec<f64>| Raster::new(n_rows, n_cols, spec.origin_lon, spec.origin_lat, px, -9999.0, values);
    let probe = raster_at(vec![0.0; n_rows * n_cols])?;
    for r in 0..n_rows {
        for c in 0..n_cols {
            let p = probe.pixel_center(r, c);
            let elevation = 5.0 + bump_sum(&hills, p) + 4.0 * pixel_rng.normal();
            let urban = bump_sum(&towns, p);
            let u = pixel_rng.uniform();
            let class = if elevation < 4.0 {
                LAND_WATER
            } else if urban > 0.45 && u < 0.2 + urban {
                LAND_BUILT
            } else if elevation > 120.0 || u < 0.25 {
                LAND_FOREST
            } else {
                LAND_CROP
            };
            dem_values.push(elevation.max(0.0));
            land_values.push(class as f64);
        }
    }
    let dem = raster_at(dem_values)?;
    let land_use = raster_at(land_values)?;

    let elevation = geo::aggregate_raster(&dem, &spec, &AggregateMode::Mean)?;
    let slope = geo::aggregate_raster(&dem, &spec, &AggregateMode::SlopeMean)?;
    let aspect = geo::aggregate_raster(&dem, &spec, &AggregateMode::AspectMean)?;
    let green = geo::aggregate_raster(&land_use, &spec, &AggregateMode::ClassRatio(BTreeSet::from([LAND_FOREST])))?;
    let built = geo::aggregate_raster(&land_use, &spec, &AggregateMode::ClassRatio(BTreeSet::from([LAND_BUILT])))?;

    let mut place_rng = root.fork(3);
    let mut transformers = Vec::with_capacity(cfg.n_transformers);
    let mut transformer_cells = Vec::with_capacity(cfg.n_transformers);
    let mut counts = vec![0u32; spec.n_cells()];
    for i in 0..cfg.n_transformers {
        let (lat, lon) = place_transformer(&mut place_rng, &spec, &towns, cfg.urban_fraction);
        let cell = geo::assign_point(&spec, lat, lon)
            .ok_or_else(|| SynthError::Config(String::from("transformer placed outside the grid")))?;
        counts[cell] += 1;
        transformer_cells.push(cell);
        transformers.push(TransformerRecord {
            transformer_id: format!("TX{:05}", i + 1),
            location: LatLon::new(lat, lon),
        });
    }

    let mut station_rng = root.fork(4);
    let stations = (0..cfg.n_stations)
        .map(|i| Station {
            station_id: format!("ST{:03}", i + 1),
            location: LatLon::new(
                spec.origin_lat + station_rng.uniform_in(-0.05, 1.05) * lat_span,
                spec.origin_lon + station_rng.uniform_in(-0.05, 1.05) * lon_span,
            ),
        })
        .collect();

    let mut effect_rng = root.fork(5);
    let cell_offset = (0..spec.n_cells()).map(|_| cfg.fragility.cell_sd * effect_rng.normal()).collect();

    let cells = (0..spec.n_cells())
        .map(|id| {
            let mut cell = GridCell::bare(&spec, id);
            let f = &mut cell.features;
            f.elevation = elevation.values[id];
            f.slope = slope.values[id];
            f.aspect = aspect.values[id];
            f.green_ratio = green.values[id];
            f.impervious_ratio = built.values[id];
            f.transformer_count = counts[id];
            cell.town_id = Some(format!("T{:02}{:02}", cell.row / 5, cell.col / 5));
            cell.county_id = Some(format!("K{}{}", cell.row / 10, cell.col / 12));
            cell.city_id = Some(format!("C{}", cell.col * 2 / spec.n_cols));
            cell.population = Some(libm::round(counts[id] as f64 * (120.0 + 600.0 * f.impervious_ratio)));
            cell
        })
        .collect();

    Ok(World { spec, cells, transformers, transformer_cells, stations, dem, land_use, cell_offset })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthOutage {
    pub transformer_id: String,
    pub cell_id: usize,
    /// UTC epoch minute.
    pub time: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellHourCount {
    pub cell_id: usize,
    /// UTC epoch hour.
    pub hour: i64,
    pub count: u32,
}

/// Ground truth written beside the emitted records of one storm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub event_id: String,
    pub start_hour: i64,
    pub n_hours: usize,
    pub vortex: VortexParams,
    pub rain: RainParams,
    pub fragility: FragilityParams,
    pub cell_offset: Vec<f64>,
    /// Hourly eye positions, one per panel hour.
    pub eye: Vec<LatLon>,
    pub outages: Vec<TruthOutage>,
    /// Non-zero cell-hour counts, ordered by (cell, hour).
    pub cell_hour_counts: Vec<CellHourCount>,
}

impl Truth {
    pub fn total_outages(&self) -> usize {
        self.outages.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEvent {
    pub event_id: String,
    pub start_hour: i64,
    pub n_hours: usize,
    pub stations: Vec<Station>,
    pub observations: Vec<StationObservation>,
    pub track: Vec<TrackPoint>,
    pub transformers: Vec<TransformerRecord>,
    pub outages: Vec<OutageRecord>,
    pub truth: Truth,
}

fn track_position(waypoints: &[Waypoint], hour: f64) -> (f64, f64) {
    let first = waypoints[0];
    let last = waypoints[waypoints.len() - 1];
    if hour <= first.hour {
        return (first.lat, first.lon);
    }
    if hour >= last.hour {
        return (last.lat, last.lon);
    }
    let j = waypoints.partition_point(|w| w.hour <= hour);
    let (a, b) = (waypoints[j - 1], waypoints[j]);
    let f = (hour - a.hour) / (b.hour - a.hour);
    (a.lat + f * (b.lat - a.lat), a.lon + f * (b.lon - a.lon))
}

/// Track points every three hours from the event start through its last hour.
fn emit_track(storm: &StormConfig, n_hours: usize, rng: &mut StreamRng) -> Vec<TrackPoint> {
    let last = n_hours as i64 - 1;
    let n_points = (last + 2) / 3 + 1;
    (0..n_points)
        .map(|k| {
            let h = 3 * k;
            let (lat, lon) = track_position(&storm.waypoints, h as f64);
            let dn = storm.jitter_km * rng.normal();
            let de = storm.jitter_km * rng.normal();
            let dlat = dn / KM_PER_DEGREE;
            let dlon = de / (KM_PER_DEGREE * libm::cos(lat.to_radians()));
            TrackPoint { time: (storm.start_hour + h) * 60, eye: LatLon::new(lat + dlat, lon + dlon) }
        })
        .collect()
}

/// Seed that drives the uniform draws of one storm. Changing any storm
/// parameter other than its position in `cfg.storms` keeps these draws.
pub fn storm_seed(cfg: &SyntheticConfig, storm_index: usize) -> u64 {
    derive_seed(derive_seed(cfg.seed, 2), storm_index as u64)
}

/// Simulates one storm over `world`.
pub fn gen_event(cfg: &SyntheticConfig, world: &World, storm_index: usize) -> Result<SyntheticEvent, SynthError> {
    cfg.validate()?;
    let storm = cfg
        .storms
        .get(storm_index)
        .ok_or_else(|| SynthError::UnknownStorm(format!("index {storm_index}")))?;
    let n_hours = cfg.window_hours;
    let root = StreamRng::new(storm_seed(cfg, storm_index));

    let track = emit_track(storm, n_hours, &mut root.fork(1));
    let hours: Vec<i64> = (0..n_hours as i64).map(|h| storm.start_hour + h).collect();
    let eye = ingest::interpolate_track(&track, &hours)?.positions;

    let mut observations = Vec::with_capacity(n_hours * world.stations.len());
    let noise = cfg.observation_noise;
    for (s, st) in world.stations.iter().enumerate() {
        let mut rng = root.fork(1000 + s as u64);
        for (h, e) in eye.iter().enumerate() {
            let r = geo::haversine_unchecked(st.location, *e);
            let w = wind_at(r, &storm.vortex) * (1.0 + noise * rng.normal());
            let p = rain_at(r, &storm.rain) * (1.0 + noise * rng.normal());
            observations.push(StationObservation {
                station_id: st.station_id.clone(),
                location: st.location,
                hour: hours[h],
                wind: w.max(0.0),
                rain: p.max(0.0),
            });
        }
    }
    observations.sort_by(|a, b| (a.hour, &a.station_id).cmp(&(b.hour, &b.station_id)));

    // One substream per transformer; each hour consumes the same two draws
    // whether or not the transformer is still in service, so a pointwise
    // larger hazard can only move a failure earlier.
    let transformer_root = root.fork(2);
    let mut outages = Vec::new();
    let mut cell_hours: BTreeMap<(usize, i64), u32> = BTreeMap::new();
    for (j, t) in world.transformers.iter().enumerate() {
        let cell = world.transformer_cells[j];
        let offset = world.cell_offset[cell];
        let mut rng = transformer_root.fork(j as u64);
        for (h, e) in eye.iter().enumerate() {
            let u = rng.uniform();
            let minute = rng.below(60) as i64;
            let r = geo::haversine_unchecked(t.location, *e);
            let p = cfg.fragility.hazard(wind_at(r, &storm.vortex), rain_at(r, &storm.rain), offset);
            if u < p {
                outages.push(TruthOutage {
                    transformer_id: t.transformer_id.clone(),
                    cell_id: cell,
                    time: hours[h] * 60 + minute,
                });
                *cell_hours.entry((cell, hours[h])).or_default() += 1;
                break;
            }
        }
    }
    outages.sort_by(|a, b| (a.time, &a.transformer_id).cmp(&(b.time, &b.transformer_id)));
    let records = outages
        .iter()
        .map(|o| OutageRecord { transformer_id: o.transformer_id.clone(), time: o.time })
        .collect();

    let truth = Truth {
        event_id: storm.event_id.clone(),
        start_hour: storm.start_hour,
        n_hours,
        vortex: storm.vortex,
        rain: storm.rain,
        fragility: cfg.fragility,
        cell_offset: world.cell_offset.clone(),
        eye,
        outages,
        cell_hour_counts: cell_hours
            .into_iter()
            .map(|((cell_id, hour), count)| CellHourCount { cell_id, hour, count })
            .collect(),
    };
    Ok(SyntheticEvent {
        event_id: storm.event_id.clone(),
        start_hour: storm.start_hour,
        n_hours,
        stations: world.stations.clone(),
        observations,
        track,
        transformers: world.transformers.clone(),
        outages: records,
        truth,
    })
}

/// Multiplicative distortion applied to ideal weather when issuing a
/// forecast: `value · (1 + bias) · (1 + noise_sd · N(0, 1))`, floored at 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssuePerturbation {
    pub wind_bias: f64,
    pub rain_bias: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

/// A forecast issue derived from the panel's own (ideal) weather over
/// `[issue_hour, issue_hour + horizon)`, carrying the event track.
pub fn gen_forecast_issue(
    panel: &EventPanel,
    track: &[TrackPoint],
    issue_hour: i64,
    horizon_hours: usize,
    perturbation: &IssuePerturbation,
) -> Result<ForecastIssue, SynthError> {
    let to = issue_hour + horizon_hours as i64;
    let Some(first) = panel.hour_index(issue_hour).filter(|_| to <= panel.end_hour()) else {
        return Err(SynthError::IssueOutsidePanel { from: issue_hour, to });
    };
    let n_cells = panel.n_cells;
    let mut rng = StreamRng::new(perturbation.seed);
    let mut wind = Vec::with_capacity(n_cells * horizon_hours);
    let mut rain = Vec::with_capacity(n_cells * horizon_hours);
    for c in 0..n_cells {
        for h in 0..horizon_hours {
            let zw = rng.normal();
            let zr = rng.normal();
            let w = panel.get(c, first + h, CH_WIND) * (1.0 + perturbation.wind_bias) * (1.0 + perturbation.noise_sd * zw);
            let r = panel.get(c, first + h, CH_RAIN) * (1.0 + perturbation.rain_bias) * (1.0 + perturbation.noise_sd * zr);
            wind.push(w.max(0.0) as f32);
            rain.push(r.max(0.0) as f32);
        }
    }
    Ok(ForecastIssue { issue_hour, horizon_hours, n_cells, wind, rain, track: track.to_vec() })
}

#[cfg(test)]
mod tests;
