//! Rolling deployment of a trained model: the 6-hour nowcast that assimilates
//! observed outages every iteration, the long-horizon rollout that feeds its
//! own predictions back, and the error decomposition that compares them.
//!
//! Iteration `k` of a run starting at epoch hour `s` predicts hours
//! `[s + 6k, s + 6k + 6)` from a window covering `[s + 6k - 6, s + 6k + 6)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{WindowSample, DYN_OUTAGE, HORIZON_HOURS, N_DYNAMIC, PAST_HOURS, WINDOW_HOURS};
use crate::eval::mae;
use crate::geo::{haversine_unchecked, GridCell};
use crate::ingest::{interpolate_track, EventPanel, IngestError, TrackPoint, CH_DIST, CH_OUTAGE, CH_RAIN, CH_WIND};
use crate::net::StoCastModel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForecastError {
    #[error("no forecast issue covers hours {from}..{to} (issued at or before {issued_by})")]
    NoCoveringIssue { from: i64, to: i64, issued_by: i64 },
    #[error("observed panel does not cover hour {hour}")]
    PanelCoverage { hour: i64 },
    #[error("invalid forecast issue: {0}")]
    InvalidIssue(String),
    #[error("runs cannot be compared: {0}")]
    Mismatch(String),
    #[error("invalid run request: {0}")]
    Request(String),
    #[error(transparent)]
    Track(#[from] IngestError),
}

/// One weather forecast release: hourly wind and rain per cell from
/// `issue_hour` for `horizon_hours`, plus the forecast track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastIssue {
    pub issue_hour: i64,
    pub horizon_hours: usize,
    pub n_cells: usize,
    /// `[cell][hour offset]`
    pub wind: Vec<f32>,
    pub rain: Vec<f32>,
    pub track: Vec<TrackPoint>,
}

impl ForecastIssue {
    pub fn validate(&self, n_cells: usize) -> Result<(), ForecastError> {
        let bad = |m: String| Err(ForecastError::InvalidIssue(m));
        if self.horizon_hours < HORIZON_HOURS {
            return bad(format!("horizon {} is shorter than {HORIZON_HOURS} hours", self.horizon_hours));
        }
        if self.n_cells != n_cells {
            return bad(format!("issue has {} cells, grid has {n_cells}", self.n_cells));
        }
        let n = self.n_cells * self.horizon_hours;
        if self.wind.len() != n || self.rain.len() != n {
            return bad(format!("expected {n} wind and rain values"));
        }
        if self.wind.iter().chain(&self.rain).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad(String::from("wind and rain must be finite and non-negative"));
        }
        if self.track.len() < 2 {
            return bad(String::from("track needs at least two points"));
        }
        Ok(())
    }

    pub fn end_hour(&self) -> i64 {
        self.issue_hour + self.horizon_hours as i64
    }

    /// True when hours `[from, to)` lie inside the horizon.
    pub fn covers(&self, from: i64, to: i64) -> bool {
        self.issue_hour <= from && to <= self.end_hour()
    }

    pub fn wind_at(&self, cell: usize, hour: i64) -> f32 {
        self.wind[cell * self.horizon_hours + (hour - self.issue_hour) as usize]
    }

    pub fn rain_at(&self, cell: usize, hour: i64) -> f32 {
        self.rain[cell * self.horizon_hours + (hour - self.issue_hour) as usize]
    }

    /// Eye distance per `[cell][hour offset]` from the forecast track,
    /// rounded to panel precision.
    pub fn distances(&self, cells: &[GridCell]) -> Result<Vec<f32>, ForecastError> {
        let hours: Vec<i64> = (0..self.horizon_hours as i64).map(|h| self.issue_hour + h).collect();
        let eyes = interpolate_track(&self.track, &hours)?.positions;
        let mut out = vec![0.0; cells.len() * self.horizon_hours];
        for (c, cell) in cells.iter().enumerate() {
            for (h, eye) in eyes.iter().enumerate() {
                out[c * self.horizon_hours + h] = haversine_unchecked(cell.center, *eye) as f32;
            }
        }
        Ok(out)
    }
}

/// The latest issue released at or before `issued_by` that covers
/// `[from, to)`.
pub fn freshest_issue(issues: &[ForecastIssue], issued_by: i64, from: i64, to: i64) -> Option<usize> {
    issues
        .iter()
        .enumerate()
        .filter(|(_, i)| i.issue_hour <= issued_by && i.covers(from, to))
        .max_by_key(|(_, i)| i.issue_hour)
        .map(|(k, _)| k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Nowcast,
    Longterm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherMode {
    Ideal,
    Actual,
}

/// Counts for one cell: the model's ratios times `C`; cells without
/// transformers short-circuit to zero.
pub fn predict_step(
    model: &StoCastModel,
    dynamic_in: &[[f64; N_DYNAMIC]; WINDOW_HOURS],
    static_in: &[f64; 6],
    transformer_count: u32,
) -> [f64; HORIZON_HOURS] {
    if transformer_count == 0 {
        return [0.0; HORIZON_HOURS];
    }
    let s = WindowSample {
        event: 0,
        cell_id: 0,
        t0: 0,
        dynamic_in: *dynamic_in,
        static_in: *static_in,
        label: [0.0; HORIZON_HOURS],
        transformer_count,
    };
    let c = transformer_count as f64;
    model.predict(core::slice::from_ref(&s))[0].map(|r| r * c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// First predicted epoch hour.
    pub origin_hour: i64,
    /// Issue that supplied forecast weather, if any.
    pub issue_hour: Option<i64>,
    /// Model inputs per cell (raw, unstandardized); all zeros for cells
    /// without transformers.
    pub inputs: Vec<[[f64; N_DYNAMIC]; WINDOW_HOURS]>,
    /// `[cell][6]`
    pub pred_counts: Vec<[f64; HORIZON_HOURS]>,
    pub pred_ratios: Vec<[f64; HORIZON_HOURS]>,
    pub obs_counts: Vec<[f64; HORIZON_HOURS]>,
}

impl IterationRecord {
    /// MAE over the given cells and the six predicted hours.
    pub fn mae(&self, cells: &[usize]) -> f64 {
        let p: Vec<f64> = cells.iter().flat_map(|&c| self.pred_counts[c]).collect();
        let o: Vec<f64> = cells.iter().flat_map(|&c| self.obs_counts[c]).collect();
        mae(&p, &o)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingRun {
    pub scheme: Scheme,
    pub weather_mode: WeatherMode,
    pub event_id: String,
    pub start_hour: i64,
    pub n_iterations: usize,
    pub n_cells: usize,
    pub iterations: Vec<IterationRecord>,
}

impl RollingRun {
    pub fn iteration_mae(&self, cells: &[usize]) -> Vec<f64> {
        self.iterations.iter().map(|it| it.mae(cells)).collect()
    }

    /// MAE over every iteration, cell and hour.
    pub fn mae(&self, cells: &[usize]) -> f64 {
        let m = self.iteration_mae(cells);
        if m.is_empty() {
            0.0
        } else {
            m.iter().sum::<f64>() / m.len() as f64
        }
    }

    fn flat_pred(&self, cells: &[usize]) -> Vec<f64> {
        self.iterations.iter().flat_map(|it| cells.iter().flat_map(move |&c| it.pred_counts[c])).collect()
    }

    fn flat_obs(&self, cells: &[usize]) -> Vec<f64> {
        self.iterations.iter().flat_map(|it| cells.iter().flat_map(move |&c| it.obs_counts[c])).collect()
    }

    pub fn forecast_hours(&self) -> usize {
        self.n_iterations * HORIZON_HOURS
    }
}

/// Where the W, R, D inputs for one window hour come from.
enum Source {
    Panel,
    Issue(usize),
}

struct RunContext<'a> {
    model: &'a StoCastModel,
    cells: &'a [GridCell],
    panel: &'a EventPanel,
    issues: &'a [ForecastIssue],
    issue_dist: Vec<Option<Vec<f32>>>,
}

impl RunContext<'_> {
    fn panel_hour(&self, hour: i64) -> Result<usize, ForecastError> {
        self.panel.hour_index(hour).ok_or(ForecastError::PanelCoverage { hour })
    }

    fn weather(&mut self, src: &Source, cell: usize, hour: i64) -> Result<[f64; 3], ForecastError> {
        Ok(match *src {
            Source::Panel => {
                let h = self.panel_hour(hour)?;
                [self.panel.get(cell, h, CH_WIND), self.panel.get(cell, h, CH_RAIN), self.panel.get(cell, h, CH_DIST)]
            }
            Source::Issue(k) => {
                if self.issue_dist[k].is_none() {
                    self.issue_dist[k] = Some(self.issues[k].distances(self.cells)?);
                }
                let issue = &self.issues[k];
                let d = self.issue_dist[k].as_ref().unwrap()[cell * issue.horizon_hours + (hour - issue.issue_hour) as usize];
                [issue.wind_at(cell, hour) as f64, issue.rain_at(cell, hour) as f64, d as f64]
            }
        })
    }

    fn observed(&self, cell: usize, from: i64) -> Result<[f64; HORIZON_HOURS], ForecastError> {
        let mut out = [0.0; HORIZON_HOURS];
        for (i, o) in out.iter_mut().enumerate() {
            let h = self.panel_hour(from + i as i64)?;
            *o = self.panel.get(cell, h, CH_OUTAGE);
        }
        Ok(out)
    }

    /// Builds every cell's window and predicts. `past_ratio[c]` is the
    /// O(-6) channel; `sources[i]` covers window hour `i`.
    fn iterate(
        &mut self,
        origin: i64,
        sources: &[Source; WINDOW_HOURS],
        past_ratio: &[[f64; PAST_HOURS]],
        issue_hour: Option<i64>,
    ) -> Result<IterationRecord, ForecastError> {
        let n = self.cells.len();
        let mut inputs = vec![[[0.0; N_DYNAMIC]; WINDOW_HOURS]; n];
        let mut samples = Vec::new();
        for (c, cell) in self.cells.iter().enumerate() {
            if cell.transformer_count() == 0 {
                continue;
            }
            let w = &mut inputs[c];
            for (i, src) in sources.iter().enumerate() {
                let hour = origin - PAST_HOURS as i64 + i as i64;
                let [wv, rv, dv] = self.weather(src, c, hour)?;
                w[i][0] = wv;
                w[i][1] = rv;
                w[i][2] = dv;
                if i < PAST_HOURS {
                    w[i][DYN_OUTAGE] = past_ratio[c][i];
                }
            }
            samples.push(WindowSample {
                event: 0,
                cell_id: c,
                t0: 0,
                dynamic_in: *w,
                static_in: cell.features.as_array(),
                label: [0.0; HORIZON_HOURS],
                transformer_count: cell.transformer_count(),
            });
        }
        let ratios = self.model.predict(&samples);
        let mut pred_ratios = vec![[0.0; HORIZON_HOURS]; n];
        let mut pred_counts = vec![[0.0; HORIZON_HOURS]; n];
        for (s, r) in samples.iter().zip(ratios) {
            let c = s.transformer_count as f64;
            pred_ratios[s.cell_id] = r;
            pred_counts[s.cell_id] = r.map(|v| v * c);
        }
        let obs_counts = (0..n).map(|c| self.observed(c, origin)).collect::<Result<_, _>>()?;
        Ok(IterationRecord { origin_hour: origin, issue_hour, inputs, pred_counts, pred_ratios, obs_counts })
    }

    /// Observed O(-6) ratios for the six hours before `origin`.
    fn observed_past(&self, origin: i64) -> Result<Vec<[f64; PAST_HOURS]>, ForecastError> {
        self.cells
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                let cap = cell.transformer_count();
                let inv_c = if cap > 0 { 1.0 / cap as f64 } else { 0.0 };
                let counts = self.observed(c, origin - PAST_HOURS as i64)?;
                Ok(counts.map(|v| v * inv_c))
            })
            .collect()
    }
}

fn check_request(cells: &[GridCell], panel: &EventPanel, issues: &[ForecastIssue], n_iterations: usize) -> Result<(), ForecastError> {
    if n_iterations == 0 {
        return Err(ForecastError::Request(String::from("at least one iteration is required")));
    }
    if cells.len() != panel.n_cells {
        return Err(ForecastError::Request(format!("grid has {} cells, panel has {}", cells.len(), panel.n_cells)));
    }
    for i in issues {
        i.validate(cells.len())?;
    }
    Ok(())
}

/// Rolling 6-hour forecasts that read observed outages before every
/// iteration. In actual mode the future half of each window comes from the
/// freshest issue released by the forecast origin.
pub fn run_nowcast(
    model: &StoCastModel,
    cells: &[GridCell],
    panel: &EventPanel,
    issues: &[ForecastIssue],
    mode: WeatherMode,
    start_hour: i64,
    n_iterations: usize,
) -> Result<RollingRun, ForecastError> {
    check_request(cells, panel, issues, n_iterations)?;
    let mut ctx = RunContext { model, cells, panel, issues, issue_dist: vec![None; issues.len()] };
    let mut iterations = Vec::with_capacity(n_iterations);
    for k in 0..n_iterations {
        let origin = start_hour + (k * HORIZON_HOURS) as i64;
        let (sources, issue_hour) = match mode {
            WeatherMode::Ideal => (core::array::from_fn(|_| Source::Panel), None),
            WeatherMode::Actual => {
                let to = origin + HORIZON_HOURS as i64;
                let i = freshest_issue(issues, origin, origin, to)
                    .ok_or(ForecastError::NoCoveringIssue { from: origin, to, issued_by: origin })?;
                let s = core::array::from_fn(|h| if h < PAST_HOURS { Source::Panel } else { Source::Issue(i) });
                (s, Some(issues[i].issue_hour))
            }
        };
        let past = ctx.observed_past(origin)?;
        iterations.push(ctx.iterate(origin, &sources, &past, issue_hour)?);
    }
    Ok(RollingRun {
        scheme: Scheme::Nowcast,
        weather_mode: mode,
        event_id: panel.event_id.clone(),
        start_hour,
        n_iterations,
        n_cells: cells.len(),
        iterations,
    })
}

/// Recursive rollout: observed outages and weather are read once at
/// `start_hour`; later iterations use the previous iteration's predicted
/// ratios as O(-6) and slide over the same initial weather horizon (the
/// panel in ideal mode, the latest issue released by `start_hour` in actual
/// mode).
pub fn run_longterm(
    model: &StoCastModel,
    cells: &[GridCell],
    panel: &EventPanel,
    issues: &[ForecastIssue],
    mode: WeatherMode,
    start_hour: i64,
    n_iterations: usize,
) -> Result<RollingRun, ForecastError> {
    check_request(cells, panel, issues, n_iterations)?;
    let mut ctx = RunContext { model, cells, panel, issues, issue_dist: vec![None; issues.len()] };
    let end = start_hour + (n_iterations * HORIZON_HOURS) as i64;
    let issue = match mode {
        WeatherMode::Ideal => None,
        WeatherMode::Actual => Some(
            freshest_issue(issues, start_hour, start_hour, end)
                .ok_or(ForecastError::NoCoveringIssue { from: start_hour, to: end, issued_by: start_hour })?,
        ),
    };
    let mut past = ctx.observed_past(start_hour)?;
    let mut iterations = Vec::with_capacity(n_iterations);
    for k in 0..n_iterations {
        let origin = start_hour + (k * HORIZON_HOURS) as i64;
        let sources: [Source; WINDOW_HOURS] = core::array::from_fn(|h| match issue {
            Some(i) if k > 0 || h >= PAST_HOURS => Source::Issue(i),
            _ => Source::Panel,
        });
        let rec = ctx.iterate(origin, &sources, &past, issue.map(|i| issues[i].issue_hour))?;
        past = rec.pred_ratios.clone();
        iterations.push(rec);
    }
    Ok(RollingRun {
        scheme: Scheme::Longterm,
        weather_mode: mode,
        event_id: panel.event_id.clone(),
        start_hour,
        n_iterations,
        n_cells: cells.len(),
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    pub e_total: f64,
    pub e_model: f64,
    pub e_weather: f64,
    pub e_obs: f64,
    pub share_model: f64,
    pub share_weather: f64,
    pub n_cells: usize,
}

/// Splits forecast error into the part the model makes with perfect inputs,
/// the part due to weather forecasts and the excess from running without
/// outage observations. All terms are MAEs over `cells`.
pub fn decompose_errors(
    nowcast_ideal: &RollingRun,
    nowcast_actual: &RollingRun,
    longterm_ideal: &RollingRun,
    cells: &[usize],
) -> Result<ErrorDecomposition, ForecastError> {
    let expect = |r: &RollingRun, scheme: Scheme, mode: WeatherMode, name: &str| {
        if r.scheme != scheme || r.weather_mode != mode {
            return Err(ForecastError::Mismatch(format!("{name} run has scheme {:?} and weather {:?}", r.scheme, r.weather_mode)));
        }
        Ok(())
    };
    expect(nowcast_ideal, Scheme::Nowcast, WeatherMode::Ideal, "ideal nowcast")?;
    expect(nowcast_actual, Scheme::Nowcast, WeatherMode::Actual, "actual nowcast")?;
    expect(longterm_ideal, Scheme::Longterm, WeatherMode::Ideal, "ideal long-term")?;
    for r in [nowcast_actual, longterm_ideal] {
        if r.start_hour != nowcast_ideal.start_hour
            || r.n_iterations != nowcast_ideal.n_iterations
            || r.n_cells != nowcast_ideal.n_cells
            || r.event_id != nowcast_ideal.event_id
        {
            return Err(ForecastError::Mismatch(String::from("runs differ in event, start hour, iterations or grid")));
        }
    }
    if cells.iter().any(|&c| c >= nowcast_ideal.n_cells) {
        return Err(ForecastError::Mismatch(String::from("evaluation cell outside the grid")));
    }
    let obs = nowcast_ideal.flat_obs(cells);
    let ideal = nowcast_ideal.flat_pred(cells);
    let actual = nowcast_actual.flat_pred(cells);
    let e_model = mae(&ideal, &obs);
    let e_total = mae(&actual, &obs);
    let e_weather = mae(&actual, &ideal);
    let e_obs = (mae(&longterm_ideal.flat_pred(cells), &obs) - e_model).max(0.0);
    let denom = e_model + e_weather;
    let (share_model, share_weather) = if denom > 0.0 { (e_model / denom, e_weather / denom) } else { (1.0, 0.0) };
    Ok(ErrorDecomposition { e_total, e_model, e_weather, e_obs, share_model, share_weather, n_cells: cells.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accumulation {
    pub n_hours: usize,
    /// `[cell][hour]` running totals of predicted counts, capped at `C`.
    pub predicted: Vec<f64>,
    /// Set where the uncapped running total exceeded `C`.
    pub clamped: Vec<bool>,
    pub observed: Vec<f64>,
    /// Sum over cells per hour.
    pub provincial_predicted: Vec<f64>,
    pub provincial_observed: Vec<f64>,
}

impl Accumulation {
    pub fn final_predicted(&self, cell: usize) -> f64 {
        self.predicted[(cell + 1) * self.n_hours - 1]
    }

    pub fn final_observed(&self, cell: usize) -> f64 {
        self.observed[(cell + 1) * self.n_hours - 1]
    }
}

/// Per-cell running totals over the forecast hours of `run`.
pub fn accumulate(run: &RollingRun, cells: &[GridCell]) -> Accumulation {
    let n_hours = run.forecast_hours();
    let n = run.n_cells;
    let mut predicted = vec![0.0; n * n_hours];
    let mut clamped = vec![false; n * n_hours];
    let mut observed = vec![0.0; n * n_hours];
    for c in 0..n {
        let cap = cells.get(c).map_or(0.0, |cell| cell.transformer_count() as f64);
        let (mut p, mut o) = (0.0, 0.0);
        let hours = run.iterations.iter().flat_map(|it| it.pred_counts[c].into_iter().zip(it.obs_counts[c]));
        for (h, (pv, ov)) in hours.enumerate() {
            p += pv;
            o += ov;
            let i = c * n_hours + h;
            predicted[i] = p.min(cap);
            clamped[i] = p > cap;
            observed[i] = o;
        }
    }
    let provincial = |v: &[f64]| (0..n_hours).map(|h| (0..n).map(|c| v[c * n_hours + h]).sum()).collect();
    Accumulation {
        n_hours,
        provincial_predicted: provincial(&predicted),
        provincial_observed: provincial(&observed),
        predicted,
        clamped,
        observed,
    }
}
