//! Count-scale metrics, R², administrative aggregation, affected residents,
//! grouped Shapley attribution and the two naive baselines used as yardsticks.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{WindowSample, DYN_OUTAGE, HORIZON_HOURS, PAST_HOURS, WINDOW_HOURS};
use crate::geo::GridCell;
use crate::ingest::{CH_DIST, CH_RAIN, CH_WIND};
use crate::net::StoCastModel;
use crate::rng::{derive_seed, StreamRng};
use crate::train::LossParams;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("metrics need at least one element")]
    Empty,
    #[error("length mismatch: {0} predictions vs {1} observations")]
    Length(usize, usize),
    #[error("cells without a {level} id: {cells:?}")]
    MissingRegion { level: &'static str, cells: Vec<usize> },
    #[error("unknown cell id {0}")]
    UnknownCell(usize),
    #[error("invalid attribution request: {0}")]
    Attribution(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub split: String,
    pub mae: f64,
    pub mse: f64,
    pub whl: f64,
    pub n_samples: usize,
}

/// Element-wise MAE, MSE and WHL of count predictions.
pub fn metrics(split: &str, pred: &[f64], obs: &[f64], loss: &LossParams) -> Result<MetricReport, EvalError> {
    if pred.len() != obs.len() {
        return Err(EvalError::Length(pred.len(), obs.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut ae, mut se, mut wl) = (0.0, 0.0, 0.0);
    for (f, y) in pred.iter().zip(obs) {
        let e = y - f;
        ae += e.abs();
        se += e * e;
        wl += loss.whl(*y, *f);
    }
    let n = pred.len() as f64;
    Ok(MetricReport { split: String::from(split), mae: ae / n, mse: se / n, whl: wl / n, n_samples: pred.len() })
}

pub fn mae(pred: &[f64], obs: &[f64]) -> f64 {
    assert_eq!(pred.len(), obs.len());
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(obs).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RSquared {
    /// NaN when undefined.
    pub value: f64,
    /// False when fewer than two units or zero observed variance.
    pub defined: bool,
}

/// Coefficient of determination about the observed mean.
pub fn r_squared(pred: &[f64], obs: &[f64]) -> Result<RSquared, EvalError> {
    if pred.len() != obs.len() {
        return Err(EvalError::Length(pred.len(), obs.len()));
    }
    if obs.len() < 2 {
        return Ok(RSquared { value: f64::NAN, defined: false });
    }
    let mean = obs.iter().sum::<f64>() / obs.len() as f64;
    let ss_tot: f64 = obs.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return Ok(RSquared { value: f64::NAN, defined: false });
    }
    let ss_res: f64 = pred.iter().zip(obs).map(|(f, y)| (y - f) * (y - f)).sum();
    Ok(RSquared { value: 1.0 - ss_res / ss_tot, defined: true })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionLevel {
    Town,
    County,
    City,
}

impl RegionLevel {
    pub fn name(self) -> &'static str {
        match self {
            RegionLevel::Town => "town",
            RegionLevel::County => "county",
            RegionLevel::City => "city",
        }
    }

    fn id(self, cell: &GridCell) -> Option<&str> {
        match self {
            RegionLevel::Town => cell.town_id.as_deref(),
            RegionLevel::County => cell.county_id.as_deref(),
            RegionLevel::City => cell.city_id.as_deref(),
        }
    }
}

fn cell_by_id(cells: &[GridCell], id: usize) -> Result<&GridCell, EvalError> {
    match cells.get(id) {
        Some(c) if c.cell_id == id => Ok(c),
        _ => cells.iter().find(|c| c.cell_id == id).ok_or(EvalError::UnknownCell(id)),
    }
}

/// Sums `(cell_id, value)` pairs per region id.
pub fn aggregate_regions(
    values: &[(usize, f64)],
    cells: &[GridCell],
    level: RegionLevel,
) -> Result<BTreeMap<String, f64>, EvalError> {
    let mut out = BTreeMap::new();
    let mut missing = Vec::new();
    for &(id, v) in values {
        match level.id(cell_by_id(cells, id)?) {
            Some(region) => *out.entry(String::from(region)).or_insert(0.0) += v,
            None => missing.push(id),
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingRegion { level: level.name(), cells: missing });
    }
    Ok(out)
}

/// `population * clamp(count / C, 0, 1)` per cell; zero when C = 0 or the
/// population is unknown.
pub fn affected_residents(accumulated: &[(usize, f64)], cells: &[GridCell]) -> Result<Vec<(usize, f64)>, EvalError> {
    accumulated
        .iter()
        .map(|&(id, count)| {
            let cell = cell_by_id(cells, id)?;
            let c = cell.transformer_count() as f64;
            let pop = cell.population.unwrap_or(0.0);
            let r = if c > 0.0 { pop * (count / c).clamp(0.0, 1.0) } else { 0.0 };
            Ok((id, r))
        })
        .collect()
}

/// Exact Shapley values of an `n`-player game given as a function of the
/// coalition bitmask.
pub fn exact_shapley(n: usize, mut value: impl FnMut(u32) -> f64) -> Vec<f64> {
    assert!(n < 21, "exact enumeration is limited to small games");
    let fact: Vec<f64> = (0..=n).scan(1.0, |acc, k| {
        if k > 0 {
            *acc *= k as f64;
        }
        Some(*acc)
    })
    .collect();
    let v: Vec<f64> = (0..1u32 << n).map(&mut value).collect();
    let mut phi = vec![0.0; n];
    for (g, p) in phi.iter_mut().enumerate() {
        let bit = 1u32 << g;
        let mut total = 0.0;
        for s in 0..1u32 << n {
            if s & bit != 0 {
                continue;
            }
            let k = s.count_ones() as usize;
            total += fact[k] * fact[n - k - 1] * (v[(s | bit) as usize] - v[s as usize]);
        }
        *p = total / fact[n];
    }
    phi
}

/// Mean marginal contribution of every player over the given orderings.
pub fn permutation_shapley(n: usize, perms: &[Vec<usize>], mut value: impl FnMut(u32) -> f64) -> Vec<f64> {
    let mut phi = vec![0.0; n];
    for perm in perms {
        let mut mask = 0u32;
        let mut prev = value(mask);
        for &g in perm {
            mask |= 1 << g;
            let v = value(mask);
            phi[g] += v - prev;
            prev = v;
        }
    }
    phi.iter().map(|p| p / perms.len() as f64).collect()
}

/// Every ordering of `0..n` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else { break };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
    out
}

pub const N_GROUPS: usize = 13;

/// Feature groups: each weather variable split into past and future halves,
/// the past outage ratio, then the six static features.
pub const GROUP_NAMES: [&str; N_GROUPS] =
    ["W(-6)", "W(+6)", "R(-6)", "R(+6)", "D(-6)", "D(+6)", "O(-6)", "E", "S", "A", "G", "I", "C"];

/// Copies group `g` of `src` into `dst`.
pub fn copy_group(dst: &mut WindowSample, src: &WindowSample, g: usize) {
    let dyn_group = |channel: usize, future: bool| {
        let hours = if future { PAST_HOURS..WINDOW_HOURS } else { 0..PAST_HOURS };
        (channel, hours)
    };
    let target = match g {
        0 => Some(dyn_group(CH_WIND, false)),
        1 => Some(dyn_group(CH_WIND, true)),
        2 => Some(dyn_group(CH_RAIN, false)),
        3 => Some(dyn_group(CH_RAIN, true)),
        4 => Some(dyn_group(CH_DIST, false)),
        5 => Some(dyn_group(CH_DIST, true)),
        6 => Some(dyn_group(DYN_OUTAGE, false)),
        _ => None,
    };
    match target {
        Some((ch, hours)) => {
            for h in hours {
                dst.dynamic_in[h][ch] = src.dynamic_in[h][ch];
            }
        }
        None => {
            let f = g - 7;
            dst.static_in[f] = src.static_in[f];
            if f == 5 {
                dst.transformer_count = src.transformer_count;
            }
        }
    }
}

/// `background` with the groups in `mask` taken from `instance`.
pub fn compose(instance: &WindowSample, background: &WindowSample, mask: u32) -> WindowSample {
    let mut out = background.clone();
    for g in 0..N_GROUPS {
        if mask & (1 << g) != 0 {
            copy_group(&mut out, instance, g);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub phi: [f64; N_GROUPS],
    /// Mean value over the background draws used.
    pub baseline: f64,
    pub explained: f64,
    pub n_permutations: usize,
    pub n_background: usize,
}

impl AttributionReport {
    /// `sum(phi) - (explained - baseline)`.
    pub fn efficiency_residual(&self) -> f64 {
        self.phi.iter().sum::<f64>() - (self.explained - self.baseline)
    }
}

/// Permutation-sampling Shapley over the 13 groups for any batched value
/// function of raw samples. Permutation `p` draws its ordering and its
/// background sample from substream `p` of `seed`.
pub fn shapley_sampled(
    mut value: impl FnMut(&[WindowSample]) -> Vec<f64>,
    instance: &WindowSample,
    background: &[WindowSample],
    n_permutations: usize,
    seed: u64,
) -> Result<AttributionReport, EvalError> {
    if n_permutations < 1 {
        return Err(EvalError::Attribution(String::from("need at least one permutation")));
    }
    if background.is_empty() {
        return Err(EvalError::Attribution(String::from("background set is empty")));
    }
    let mut batch = Vec::with_capacity(n_permutations * (N_GROUPS + 1) + 1);
    let mut perms = Vec::with_capacity(n_permutations);
    batch.push(instance.clone());
    for p in 0..n_permutations {
        let mut rng = StreamRng::new(derive_seed(seed, p as u64));
        let mut perm: Vec<usize> = (0..N_GROUPS).collect();
        rng.shuffle(&mut perm);
        let z = &background[rng.below(background.len())];
        let mut cur = z.clone();
        batch.push(cur.clone());
        for &g in &perm {
            copy_group(&mut cur, instance, g);
            batch.push(cur.clone());
        }
        perms.push(perm);
    }
    let v = value(&batch);
    assert_eq!(v.len(), batch.len(), "value function must return one scalar per sample");
    let explained = v[0];
    let mut phi = [0.0; N_GROUPS];
    let mut baseline = 0.0;
    for (p, perm) in perms.iter().enumerate() {
        let row = &v[1 + p * (N_GROUPS + 1)..1 + (p + 1) * (N_GROUPS + 1)];
        baseline += row[0];
        for (k, &g) in perm.iter().enumerate() {
            phi[g] += row[k + 1] - row[k];
        }
    }
    let n = n_permutations as f64;
    Ok(AttributionReport {
        phi: phi.map(|s| s / n),
        baseline: baseline / n,
        explained,
        n_permutations,
        n_background: background.len(),
    })
}

/// Sum of the six predicted counts for each sample.
pub fn predicted_total(model: &StoCastModel, samples: &[WindowSample]) -> Vec<f64> {
    model
        .predict(samples)
        .iter()
        .zip(samples)
        .map(|(r, s)| r.iter().sum::<f64>() * s.transformer_count as f64)
        .collect()
}

pub fn shapley_attribution(
    model: &StoCastModel,
    instance: &WindowSample,
    background: &[WindowSample],
    n_permutations: usize,
    seed: u64,
) -> Result<AttributionReport, EvalError> {
    shapley_sampled(|b| predicted_total(model, b), instance, background, n_permutations, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionSummary {
    /// `(group, mean |phi|)` sorted by importance, ties by group order.
    pub ranked: Vec<(String, f64)>,
    pub instances: Vec<AttributionReport>,
}

/// Attributes every explained sample (instance `i` uses substream `i` of
/// `seed`) and ranks groups by mean absolute attribution.
pub fn attribution_summary(
    model: &StoCastModel,
    background: &[WindowSample],
    explained: &[WindowSample],
    n_permutations: usize,
    seed: u64,
) -> Result<AttributionSummary, EvalError> {
    let instances = explained
        .iter()
        .enumerate()
        .map(|(i, x)| shapley_attribution(model, x, background, n_permutations, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(instances))
}

pub fn summarize(instances: Vec<AttributionReport>) -> AttributionSummary {
    let n = instances.len().max(1) as f64;
    let mut ranked: Vec<(usize, f64)> = (0..N_GROUPS)
        .map(|g| (g, instances.iter().map(|r| r.phi[g].abs()).sum::<f64>() / n))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    AttributionSummary { ranked: ranked.into_iter().map(|(g, v)| (String::from(GROUP_NAMES[g]), v)).collect(), instances }
}

/// `k` distinct indices from `0..n` by partial Fisher-Yates, in draw order.
pub fn draw_subset(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = StreamRng::new(seed);
    let k = k.min(n);
    for i in 0..k {
        let j = i + rng.below(n - i);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// Predicts no outages.
pub fn zeros_baseline(samples: &[WindowSample]) -> Vec<[f64; HORIZON_HOURS]> {
    vec![[0.0; HORIZON_HOURS]; samples.len()]
}

/// Repeats the six observed hourly increments over the next six hours.
pub fn persistence_baseline(samples: &[WindowSample]) -> Vec<[f64; HORIZON_HOURS]> {
    samples.iter().map(|s| s.past_counts()).collect()
}

pub fn describe(report: &MetricReport) -> String {
    format!("{}: MAE {:.4} MSE {:.4} WHL {:.4} (n={})", report.split, report.mae, report.mse, report.whl, report.n_samples)
}
