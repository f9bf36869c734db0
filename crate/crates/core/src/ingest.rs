//! Event ingestion: outage cleaning, station and track interpolation onto the
//! grid-hour lattice, and assembly of dense [`EventPanel`]s.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geo::{self, GridSpec, LatLon};

/// Channel order of a panel.
pub const CHANNELS: [&str; 4] = ["W", "R", "D", "O"];
pub const N_CHANNELS: usize = 4;
pub const CH_WIND: usize = 0;
pub const CH_RAIN: usize = 1;
pub const CH_DIST: usize = 2;
pub const CH_OUTAGE: usize = 3;

/// Records of one transformer inside one clock hour above this count are
/// treated as signal noise.
pub const NOISE_RECORDS_PER_HOUR: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("no station values for event {event}, hour {hour}, variable {variable}")]
    NoStations { event: String, hour: i64, variable: &'static str },
    #[error("track needs at least two points, got {0}")]
    ShortTrack(usize),
    #[error("track times must be strictly increasing (index {0})")]
    UnorderedTrack(usize),
    #[error("invalid interpolation parameters: {0}")]
    BadParams(&'static str),
    #[error("duplicate transformer id {0}")]
    DuplicateTransformer(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error(transparent)]
    Geo(#[from] geo::GeoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationObservation {
    pub station_id: String,
    pub location: LatLon,
    /// UTC epoch hour.
    pub hour: i64,
    pub wind: f64,
    pub rain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    /// UTC epoch minute.
    pub time: i64,
    pub eye: LatLon,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutageRecord {
    pub transformer_id: String,
    /// UTC epoch minute.
    pub time: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerRecord {
    pub transformer_id: String,
    pub location: LatLon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdwParams {
    pub power: f64,
    pub k: usize,
    /// Distances below this (km) return the station value exactly.
    pub exact_km: f64,
}

impl Default for IdwParams {
    fn default() -> Self {
        Self { power: 2.0, k: 8, exact_km: 1e-6 }
    }
}

/// One station value for a single hour and variable.
#[derive(Debug, Clone, PartialEq)]
pub struct StationValue<'a> {
    pub station_id: &'a str,
    pub location: LatLon,
    pub value: f64,
}

/// Inverse-distance weighting over the `k` nearest stations (haversine km,
/// ties by station id). Returns `None` when `stations` is empty.
pub fn idw_interpolate(
    stations: &[StationValue<'_>],
    targets: &[LatLon],
    params: &IdwParams,
) -> Result<Option<Vec<f64>>, IngestError> {
    check_idw(params)?;
    if stations.is_empty() {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..stations.len()).collect();
    let mut dist = vec![0.0; stations.len()];
    let out = targets
        .iter()
        .map(|t| {
            for (d, s) in dist.iter_mut().zip(stations) {
                *d = geo::haversine_unchecked(*t, s.location);
            }
            idw_one(&dist, &mut order, |i| stations[i].station_id, |i| stations[i].value, params)
        })
        .collect();
    Ok(Some(out))
}

fn check_idw(params: &IdwParams) -> Result<(), IngestError> {
    if !(params.power > 0.0) {
        return Err(IngestError::BadParams("IDW power must be positive"));
    }
    if params.k == 0 {
        return Err(IngestError::BadParams("IDW needs k >= 1"));
    }
    Ok(())
}

/// Weighted mean over the k nearest candidates in `order`. Reorders `order`.
fn idw_one<'s>(
    dist: &[f64],
    order: &mut [usize],
    id: impl Fn(usize) -> &'s str,
    value: impl Fn(usize) -> f64,
    params: &IdwParams,
) -> f64 {
    let cmp = |a: &usize, b: &usize| -> Ordering {
        dist[*a].total_cmp(&dist[*b]).then_with(|| id(*a).cmp(id(*b)))
    };
    let k = params.k.min(order.len());
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, cmp);
    }
    let nearest = &mut order[..k];
    nearest.sort_unstable_by(cmp);
    if dist[nearest[0]] < params.exact_km {
        return value(nearest[0]);
    }
    // offsets from the nearest value keep uniform inputs exact
    let base = value(nearest[0]);
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in nearest.iter() {
        let w = libm::pow(dist[i], -params.power);
        num += w * (value(i) - base);
        den += w;
    }
    base + num / den
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSeries {
    pub positions: Vec<LatLon>,
    /// Hours outside the recorded track that were held at an endpoint.
    pub clamped_hours: usize,
}

/// Piecewise-linear eye position at each epoch hour (latitude and longitude
/// interpolated independently). Hours beyond the recorded track hold the
/// nearest endpoint.
pub fn interpolate_track(points: &[TrackPoint], hours: &[i64]) -> Result<TrackSeries, IngestError> {
    if points.len() < 2 {
        return Err(IngestError::ShortTrack(points.len()));
    }
    if let Some(i) = points.windows(2).position(|w| w[1].time <= w[0].time) {
        return Err(IngestError::UnorderedTrack(i + 1));
    }
    let first = points[0];
    let last = points[points.len() - 1];
    let mut clamped = 0;
    let positions = hours
        .iter()
        .map(|&h| {
            let t = h * 60;
            if t <= first.time {
                clamped += usize::from(t < first.time);
                return first.eye;
            }
            if t >= last.time {
                clamped += usize::from(t > last.time);
                return last.eye;
            }
            // first index with time > t; segment is [j-1, j]
            let j = points.partition_point(|p| p.time <= t);
            let (a, b) = (points[j - 1], points[j]);
            if a.time == t {
                return a.eye;
            }
            let f = (t - a.time) as f64 / (b.time - a.time) as f64;
            LatLon::new(a.eye.lat + f * (b.eye.lat - a.eye.lat), a.eye.lon + f * (b.eye.lon - a.eye.lon))
        })
        .collect();
    Ok(TrackSeries { positions, clamped_hours: clamped })
}

pub fn distance_to_eye(cells: &[LatLon], eye: LatLon) -> Vec<f64> {
    cells.iter().map(|c| geo::haversine_unchecked(*c, eye)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleanedOutages {
    /// First surviving outage hour (epoch hour) per transformer.
    pub first_hour: BTreeMap<String, i64>,
    pub unknown_transformer_records: usize,
    pub noise_records_dropped: usize,
    pub outside_window_records: usize,
}

impl CleanedOutages {
    pub fn count(&self) -> usize {
        self.first_hour.len()
    }
}

/// Applies the outage cleaning rules for one event window `[start_hour, end_hour)`:
/// drop a transformer's whole clock hour when it holds more than
/// [`NOISE_RECORDS_PER_HOUR`] records, bin survivors by floor to the hour, and
/// keep only each transformer's earliest in-window hour.
pub fn clean_outages(
    records: &[OutageRecord],
    known_transformers: &BTreeSet<String>,
    start_hour: i64,
    end_hour: i64,
) -> CleanedOutages {
    let mut out = CleanedOutages::default();
    let mut buckets: BTreeMap<(&str, i64), usize> = BTreeMap::new();
    for r in records {
        if !known_transformers.contains(&r.transformer_id) {
            out.unknown_transformer_records += 1;
            continue;
        }
        *buckets.entry((r.transformer_id.as_str(), r.time.div_euclid(60))).or_default() += 1;
    }
    for ((id, hour), n) in buckets {
        if n > NOISE_RECORDS_PER_HOUR {
            out.noise_records_dropped += n;
            continue;
        }
        if hour < start_hour || hour >= end_hour {
            out.outside_window_records += n;
            continue;
        }
        // buckets iterate in (id, hour) order, so the first kept hour is the earliest
        out.first_hour.entry(String::from(id)).or_insert(hour);
    }
    out
}

/// Dense `[cell][hour][channel]` array for one event. Values are stored as
/// 32-bit floats, which is also the on-disk precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPanel {
    pub event_id: String,
    pub start_hour: i64,
    pub n_hours: usize,
    pub n_cells: usize,
    pub values: Vec<f32>,
}

impl EventPanel {
    pub fn zeros(event_id: impl Into<String>, start_hour: i64, n_cells: usize, n_hours: usize) -> Self {
        Self {
            event_id: event_id.into(),
            start_hour,
            n_hours,
            n_cells,
            values: vec![0.0; n_cells * n_hours * N_CHANNELS],
        }
    }

    #[inline]
    pub fn index(&self, cell: usize, hour: usize, channel: usize) -> usize {
        (cell * self.n_hours + hour) * N_CHANNELS + channel
    }

    #[inline]
    pub fn get(&self, cell: usize, hour: usize, channel: usize) -> f64 {
        self.values[self.index(cell, hour, channel)] as f64
    }

    pub fn set(&mut self, cell: usize, hour: usize, channel: usize, v: f64) {
        let i = self.index(cell, hour, channel);
        self.values[i] = v as f32;
    }

    pub fn outages(&self, cell: usize, hour: usize) -> f64 {
        self.get(cell, hour, CH_OUTAGE)
    }

    pub fn cell_outage_total(&self, cell: usize) -> f64 {
        (0..self.n_hours).map(|h| self.outages(cell, h)).sum()
    }

    pub fn total_outages(&self) -> f64 {
        (0..self.n_cells).map(|c| self.cell_outage_total(c)).sum()
    }

    pub fn end_hour(&self) -> i64 {
        self.start_hour + self.n_hours as i64
    }

    /// Panel hour index of an epoch hour, if inside the panel.
    pub fn hour_index(&self, epoch_hour: i64) -> Option<usize> {
        let i = epoch_hour - self.start_hour;
        (0..self.n_hours as i64).contains(&i).then_some(i as usize)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.values.len() != self.n_cells * self.n_hours * N_CHANNELS {
            return Err(IngestError::InvalidValue(format!(
                "panel {} has {} values, expected {}",
                self.event_id,
                self.values.len(),
                self.n_cells * self.n_hours * N_CHANNELS
            )));
        }
        for (i, v) in self.values.iter().enumerate() {
            let ch = i % N_CHANNELS;
            let bad = !v.is_finite() || *v < 0.0 || (ch == CH_OUTAGE && libm::truncf(*v) != *v);
            if bad {
                return Err(IngestError::InvalidValue(format!(
                    "panel {} channel {} holds {}",
                    self.event_id, CHANNELS[ch], v
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IngestWarning {
    TrackClamped { hours: usize },
    TransformerOutsideGrid { count: usize },
    UnknownTransformerRecords { count: usize },
    NoisyRecordsDropped { count: usize },
    OutsideWindowRecords { count: usize },
    OutagesAboveTransformerCount { cells: usize },
}

pub struct PanelInputs<'a> {
    pub event_id: &'a str,
    pub spec: &'a GridSpec,
    pub transformers: &'a [TransformerRecord],
    pub observations: &'a [StationObservation],
    pub track: &'a [TrackPoint],
    pub outages: &'a CleanedOutages,
    pub start_hour: i64,
    pub n_hours: usize,
    pub idw: IdwParams,
    /// Transformer count per cell, used to check the per-cell outage bound.
    pub transformer_counts: Option<&'a [u32]>,
}

/// Builds the W/R/D/O panel for one event.
pub fn build_event_panel(inp: &PanelInputs<'_>) -> Result<(EventPanel, Vec<IngestWarning>), IngestError> {
    check_idw(&inp.idw)?;
    let centers = geo::build_grid(inp.spec)?;
    let n_cells = centers.len();
    let mut panel = EventPanel::zeros(inp.event_id, inp.start_hour, n_cells, inp.n_hours);
    let mut warnings = Vec::new();

    // stations indexed once; distances cell x station precomputed
    let mut stations: BTreeMap<&str, LatLon> = BTreeMap::new();
    for o in inp.observations {
        stations.entry(o.station_id.as_str()).or_insert(o.location);
    }
    let ids: Vec<&str> = stations.keys().copied().collect();
    let locs: Vec<LatLon> = stations.values().copied().collect();
    let station_index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let n_st = ids.len();
    let mut dist = vec![0.0; n_cells * n_st];
    for (c, center) in centers.iter().enumerate() {
        for (s, loc) in locs.iter().enumerate() {
            dist[c * n_st + s] = geo::haversine_unchecked(*center, *loc);
        }
    }

    let mut by_hour: BTreeMap<i64, Vec<(usize, f64, f64)>> = BTreeMap::new();
    for o in inp.observations {
        if !(o.wind >= 0.0 && o.rain >= 0.0) {
            return Err(IngestError::InvalidValue(format!(
                "station {} hour {}: wind {} rain {}",
                o.station_id, o.hour, o.wind, o.rain
            )));
        }
        by_hour.entry(o.hour).or_default().push((station_index[o.station_id.as_str()], o.wind, o.rain));
    }

    let mut value_of = vec![0.0; n_st];
    let mut order: Vec<usize> = Vec::with_capacity(n_st);
    for h in 0..inp.n_hours {
        let epoch = inp.start_hour + h as i64;
        let present = by_hour.get(&epoch).map(Vec::as_slice).unwrap_or(&[]);
        for (ch, variable) in [(CH_WIND, "wind"), (CH_RAIN, "rain")] {
            if present.is_empty() {
                return Err(IngestError::NoStations {
                    event: String::from(inp.event_id),
                    hour: epoch,
                    variable,
                });
            }
            for &(s, w, r) in present {
                value_of[s] = if ch == CH_WIND { w } else { r };
            }
            for c in 0..n_cells {
                order.clear();
                order.extend(present.iter().map(|p| p.0));
                let row = &dist[c * n_st..(c + 1) * n_st];
                let v = idw_one(row, &mut order, |i| ids[i], |i| value_of[i], &inp.idw);
                panel.set(c, h, ch, v);
            }
        }
    }

    let hours: Vec<i64> = (0..inp.n_hours as i64).map(|h| inp.start_hour + h).collect();
    let track = interpolate_track(inp.track, &hours)?;
    if track.clamped_hours > 0 {
        warnings.push(IngestWarning::TrackClamped { hours: track.clamped_hours });
    }
    for (h, eye) in track.positions.iter().enumerate() {
        for (c, center) in centers.iter().enumerate() {
            panel.set(c, h, CH_DIST, geo::haversine_unchecked(*center, *eye));
        }
    }

    let mut seen = BTreeSet::new();
    let mut outside = 0;
    for t in inp.transformers {
        if !seen.insert(t.transformer_id.as_str()) {
            return Err(IngestError::DuplicateTransformer(t.transformer_id.clone()));
        }
        let Some(&hour) = inp.outages.first_hour.get(&t.transformer_id) else {
            continue;
        };
        let Some(cell) = geo::assign_point(inp.spec, t.location.lat, t.location.lon) else {
            outside += 1;
            continue;
        };
        if let Some(h) = panel.hour_index(hour) {
            let i = panel.index(cell, h, CH_OUTAGE);
            panel.values[i] += 1.0;
        }
    }
    if outside > 0 {
        warnings.push(IngestWarning::TransformerOutsideGrid { count: outside });
    }
    let o = inp.outages;
    if o.unknown_transformer_records > 0 {
        warnings.push(IngestWarning::UnknownTransformerRecords { count: o.unknown_transformer_records });
    }
    if o.noise_records_dropped > 0 {
        warnings.push(IngestWarning::NoisyRecordsDropped { count: o.noise_records_dropped });
    }
    if o.outside_window_records > 0 {
        warnings.push(IngestWarning::OutsideWindowRecords { count: o.outside_window_records });
    }
    if let Some(counts) = inp.transformer_counts {
        let over = (0..n_cells)
            .filter(|&c| panel.cell_outage_total(c) > counts.get(c).copied().unwrap_or(0) as f64)
            .count();
        if over > 0 {
            warnings.push(IngestWarning::OutagesAboveTransformerCount { cells: over });
        }
    }
    Ok((panel, warnings))
}

/// Transformers per cell from transformer locations.
pub fn count_transformers(spec: &GridSpec, transformers: &[TransformerRecord]) -> Vec<u32> {
    let mut counts = vec![0u32; spec.n_cells()];
    for t in transformers {
        if let Some(c) = geo::assign_point(spec, t.location.lat, t.location.lon) {
            counts[c] += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use alloc::string::ToString;

    fn sv(id: &str, lat: f64, lon: f64, value: f64) -> StationValue<'_> {
        StationValue { station_id: id, location: LatLon::new(lat, lon), value }
    }

    #[test]
    fn idw_single_source() {
        let st = [sv("a", 30.0, 120.0, 10.0)];
        let targets = [LatLon::new(29.0, 119.0), LatLon::new(31.0, 121.5)];
        let out = idw_interpolate(&st, &targets, &IdwParams::default()).unwrap().unwrap();
        assert_eq!(out, vec![10.0, 10.0]);
    }

    #[test]
    fn idw_symmetric_pair() {
        let st = [sv("a", 0.0, -1.0, 0.0), sv("b", 0.0, 1.0, 10.0)];
        let out = idw_interpolate(&st, &[LatLon::new(0.0, 0.0)], &IdwParams::default()).unwrap().unwrap();
        assert!((out[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn idw_direct_formula() {
        // stations 1 km and 2 km due north along a meridian
        let km = 1.0 / geo::KM_PER_DEGREE;
        let st = [sv("a", km, 0.0, 0.0), sv("b", 2.0 * km, 0.0, 30.0)];
        let p = IdwParams { k: 2, ..IdwParams::default() };
        let out = idw_interpolate(&st, &[LatLon::new(0.0, 0.0)], &p).unwrap().unwrap();
        assert!((out[0] - 6.0).abs() < 1e-9, "{}", out[0]);
    }

    #[test]
    fn idw_exact_hit_and_empty() {
        let st = [sv("a", 10.0, 10.0, 3.0), sv("b", 11.0, 10.0, 7.0)];
        let out = idw_interpolate(&st, &[LatLon::new(10.0, 10.0)], &IdwParams::default()).unwrap().unwrap();
        assert_eq!(out[0], 3.0);
        assert!(idw_interpolate(&[], &[LatLon::new(0.0, 0.0)], &IdwParams::default()).unwrap().is_none());
        assert!(idw_interpolate(&st, &[], &IdwParams { k: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn idw_ties_broken_by_station_id() {
        // three stations equidistant; k = 2 must pick ids "a" and "b"
        let st = [sv("c", 0.0, 1.0, 100.0), sv("b", 0.0, -1.0, 10.0), sv("a", 1.0, 0.0, 0.0)];
        let p = IdwParams { k: 2, ..IdwParams::default() };
        let out = idw_interpolate(&st, &[LatLon::new(0.0, 0.0)], &p).unwrap().unwrap();
        // 1 deg of latitude and of longitude at the equator are equal arcs
        assert!((out[0] - 5.0).abs() < 1e-9, "{}", out[0]);
    }

    fn tp(hour: i64, lat: f64, lon: f64) -> TrackPoint {
        TrackPoint { time: hour * 60, eye: LatLon::new(lat, lon) }
    }

    #[test]
    fn track_examples() {
        let t = [tp(0, 20.0, 118.0), tp(6, 26.0, 124.0)];
        let s = interpolate_track(&t, &[3, 0, 6]).unwrap();
        assert_eq!(s.positions[0], LatLon::new(23.0, 121.0));
        assert_eq!(s.positions[1], t[0].eye);
        assert_eq!(s.positions[2], t[1].eye);
        assert_eq!(s.clamped_hours, 0);

        let t = [tp(0, 20.0, 118.0), tp(3, 21.0, 119.0), tp(9, 27.0, 125.0)];
        let s = interpolate_track(&t, &[5]).unwrap();
        assert!((s.positions[0].lat - 23.0).abs() < 1e-12);
        assert!((s.positions[0].lon - 121.0).abs() < 1e-12);
    }

    #[test]
    fn track_clamps_and_errors() {
        let t = [tp(2, 20.0, 118.0), tp(4, 22.0, 118.0)];
        let s = interpolate_track(&t, &[0, 5]).unwrap();
        assert_eq!(s.positions, vec![t[0].eye, t[1].eye]);
        assert_eq!(s.clamped_hours, 2);
        assert_eq!(interpolate_track(&t[..1], &[0]), Err(IngestError::ShortTrack(1)));
        assert!(matches!(interpolate_track(&[t[1], t[0]], &[0]), Err(IngestError::UnorderedTrack(1))));
    }

    #[test]
    fn distance_examples() {
        let cells = [LatLon::new(0.0, 10.0), LatLon::new(1.0, 10.0)];
        let d = distance_to_eye(&cells, LatLon::new(1.0, 10.0));
        assert!((d[0] - 111.19).abs() < 0.01);
        assert_eq!(d[1], 0.0);
    }

    fn known(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn rec(id: &str, minute: i64) -> OutageRecord {
        OutageRecord { transformer_id: id.to_string(), time: minute }
    }

    #[test]
    fn clean_half_past_goes_to_hour_bin() {
        let c = clean_outages(&[rec("t1", 15 * 60 + 30)], &known(&["t1"]), 0, 24);
        assert_eq!(c.first_hour["t1"], 15);
    }

    #[test]
    fn clean_drops_more_than_three_per_hour() {
        let recs: Vec<_> = (0..4).map(|i| rec("t1", 600 + 5 * i)).collect();
        let c = clean_outages(&recs, &known(&["t1"]), 0, 24);
        assert_eq!(c.count(), 0);
        assert_eq!(c.noise_records_dropped, 4);
        // exactly three is kept
        let c = clean_outages(&recs[..3], &known(&["t1"]), 0, 24);
        assert_eq!(c.first_hour["t1"], 10);
    }

    #[test]
    fn clean_keeps_earliest_hour() {
        let c = clean_outages(&[rec("t1", 10 * 60), rec("t1", 3 * 60 + 59)], &known(&["t1"]), 0, 24);
        assert_eq!(c.first_hour["t1"], 3);
        assert_eq!(c.count(), 1);
    }

    #[test]
    fn clean_noisy_hour_falls_back_to_later_hour() {
        let mut recs: Vec<_> = (0..5).map(|i| rec("t1", 120 + i)).collect();
        recs.push(rec("t1", 300));
        let c = clean_outages(&recs, &known(&["t1"]), 0, 24);
        assert_eq!(c.first_hour["t1"], 5);
    }

    #[test]
    fn clean_unknown_and_window() {
        let c = clean_outages(&[rec("zz", 60), rec("t1", -60), rec("t1", 30 * 60)], &known(&["t1"]), 0, 24);
        assert_eq!(c.unknown_transformer_records, 1);
        assert_eq!(c.outside_window_records, 2);
        assert_eq!(c.count(), 0);
    }

    fn toy_inputs(
        n_hours: usize,
        outages: &[(&str, i64)],
    ) -> (GridSpec, Vec<TransformerRecord>, Vec<StationObservation>, Vec<TrackPoint>, CleanedOutages) {
        let spec = GridSpec { origin_lat: 28.0, origin_lon: 120.0, cell_km: 4.0, n_rows: 3, n_cols: 4, ref_lat: 28.0 };
        let mut rng = StreamRng::new(5);
        let transformers: Vec<_> = (0..30)
            .map(|i| {
                let c = spec.center(rng.below(12));
                TransformerRecord { transformer_id: format!("t{i}"), location: c }
            })
            .collect();
        let mut obs = Vec::new();
        for h in 0..n_hours as i64 {
            for (s, (lat, lon)) in [(28.01, 120.01), (28.1, 120.1), (28.05, 120.15)].iter().enumerate() {
                obs.push(StationObservation {
                    station_id: format!("s{s}"),
                    location: LatLon::new(*lat, *lon),
                    hour: 1000 + h,
                    wind: 10.0 + s as f64 + h as f64,
                    rain: s as f64,
                });
            }
        }
        let track = vec![
            TrackPoint { time: 1000 * 60, eye: LatLon::new(27.0, 121.0) },
            TrackPoint { time: (1000 + n_hours as i64) * 60, eye: LatLon::new(29.0, 119.0) },
        ];
        let ids: BTreeSet<String> = transformers.iter().map(|t| t.transformer_id.clone()).collect();
        let recs: Vec<_> = outages.iter().map(|(id, m)| rec(id, *m)).collect();
        let cleaned = clean_outages(&recs, &ids, 1000, 1000 + n_hours as i64);
        (spec, transformers, obs, track, cleaned)
    }

    #[test]
    fn panel_shape_and_conservation() {
        let outs = [("t1", 1000 * 60 + 5), ("t2", 1003 * 60), ("t2", 1010 * 60), ("t7", 1065 * 60 + 59)];
        let (spec, tr, obs, track, cleaned) = toy_inputs(66, &outs);
        let counts = count_transformers(&spec, &tr);
        let (panel, warnings) = build_event_panel(&PanelInputs {
            event_id: "toy",
            spec: &spec,
            transformers: &tr,
            observations: &obs,
            track: &track,
            outages: &cleaned,
            start_hour: 1000,
            n_hours: 66,
            idw: IdwParams::default(),
            transformer_counts: Some(&counts),
        })
        .unwrap();
        assert_eq!(panel.n_hours, 66);
        assert!(warnings.is_empty(), "{warnings:?}");
        panel.validate().unwrap();
        assert_eq!(panel.total_outages(), 3.0);
        assert_eq!(panel.total_outages() as usize, cleaned.count());
        for c in 0..12 {
            assert!(panel.cell_outage_total(c) <= counts[c] as f64);
            for h in 0..66 {
                let w = panel.get(c, h, CH_WIND);
                assert!((10.0 + h as f64..=12.0 + h as f64 + 1e-4).contains(&w));
            }
        }
    }

    #[test]
    fn panel_without_outages_is_zero() {
        let (spec, tr, obs, track, cleaned) = toy_inputs(12, &[]);
        let (panel, _) = build_event_panel(&PanelInputs {
            event_id: "quiet",
            spec: &spec,
            transformers: &tr,
            observations: &obs,
            track: &track,
            outages: &cleaned,
            start_hour: 1000,
            n_hours: 12,
            idw: IdwParams::default(),
            transformer_counts: None,
        })
        .unwrap();
        assert_eq!(panel.total_outages(), 0.0);
    }

    #[test]
    fn panel_missing_hour_is_named() {
        let (spec, tr, mut obs, track, cleaned) = toy_inputs(12, &[]);
        obs.retain(|o| o.hour != 1004);
        let err = build_event_panel(&PanelInputs {
            event_id: "gap",
            spec: &spec,
            transformers: &tr,
            observations: &obs,
            track: &track,
            outages: &cleaned,
            start_hour: 1000,
            n_hours: 12,
            idw: IdwParams::default(),
            transformer_counts: None,
        })
        .unwrap_err();
        assert_eq!(err, IngestError::NoStations { event: "gap".to_string(), hour: 1004, variable: "wind" });
    }
}
