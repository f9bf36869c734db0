//! Weighted Huber loss, Adam, plateau scheduling, early stopping, the epoch
//! loop and the leave-one-storm-out harness.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    active_cells, build_loso_dataset, fit_standardization, test_event_samples, DatasetError, LosoExperiment, WindowSample,
    HORIZON_HOURS, N_DYNAMIC, N_STATIC, WINDOW_HOURS,
};
use crate::eval::{metrics, MetricReport};
use crate::geo::GridCell;
use crate::ingest::EventPanel;
use crate::net::{init_params, Architecture, ModelInput, NetError, StoCastModel, OUTPUTS};
use crate::rng::{derive_seed, StreamRng};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("non-finite gradient for {param} at epoch {epoch}, batch {batch}")]
    NonFiniteGradient { epoch: usize, batch: usize, param: String },
    #[error("non-finite validation loss at epoch {epoch}")]
    NonFiniteValidation { epoch: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Huber loss of observation `y` against prediction `f`.
pub fn huber(y: f64, f: f64, delta: f64) -> f64 {
    let e = y - f;
    let a = e.abs();
    if a <= delta {
        0.5 * e * e
    } else {
        delta * a - 0.5 * delta * delta
    }
}

/// Derivative of [`huber`] with respect to the prediction `f`.
pub fn huber_grad(y: f64, f: f64, delta: f64) -> f64 {
    let e = y - f;
    if e.abs() <= delta {
        -e
    } else if e > 0.0 {
        -delta
    } else {
        delta
    }
}

/// Huber loss scaled by `weight_w` when the observed value exceeds
/// `threshold_t`.
pub fn whl(y: f64, f: f64, delta: f64, weight_w: f64, threshold_t: f64) -> f64 {
    let h = huber(y, f, delta);
    if y > threshold_t {
        weight_w * h
    } else {
        h
    }
}

pub fn whl_grad(y: f64, f: f64, delta: f64, weight_w: f64, threshold_t: f64) -> f64 {
    let g = huber_grad(y, f, delta);
    if y > threshold_t {
        weight_w * g
    } else {
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub delta: f64,
    pub weight_w: f64,
    pub threshold_t: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self { delta: 10.0, weight_w: 1000.0, threshold_t: 5.0 }
    }
}

impl LossParams {
    pub fn whl(&self, y: f64, f: f64) -> f64 {
        whl(y, f, self.delta, self.weight_w, self.threshold_t)
    }

    pub fn whl_grad(&self, y: f64, f: f64) -> f64 {
        whl_grad(y, f, self.delta, self.weight_w, self.threshold_t)
    }
}

/// Mean WHL over `[B x 6]` ratio predictions, evaluated on counts
/// (`ratio * counts[b]`).
pub fn batch_loss(pred: &[f64], labels: &[f64], counts: &[f64], loss: &LossParams) -> f64 {
    assert_eq!(pred.len(), labels.len());
    assert_eq!(pred.len(), counts.len() * OUTPUTS);
    let mut total = 0.0;
    for (i, (p, l)) in pred.iter().zip(labels).enumerate() {
        let c = counts[i / OUTPUTS];
        total += loss.whl(l * c, p * c);
    }
    total / pred.len() as f64
}

/// [`batch_loss`] plus its gradient with respect to the predicted ratios.
pub fn batch_loss_grad(pred: &[f64], labels: &[f64], counts: &[f64], loss: &LossParams, grad: &mut [f64]) -> f64 {
    assert_eq!(grad.len(), pred.len());
    let n = pred.len() as f64;
    for (i, g) in grad.iter_mut().enumerate() {
        let c = counts[i / OUTPUTS];
        *g = c * loss.whl_grad(labels[i] * c, pred[i] * c) / n;
    }
    batch_loss(pred, labels, counts, loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of steps taken so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected Adam update; advances `state.t` first.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, cfg: &AdamConfig) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let c1 = 1.0 - libm::pow(cfg.beta1, state.t as f64);
    let c2 = 1.0 - libm::pow(cfg.beta2, state.t as f64);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
    }
}

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without a strictly lower validation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub patience: usize,
    pub factor: f64,
    best: f64,
    stagnant: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, patience: usize, factor: f64) -> Self {
        Self { lr, patience, factor, best: f64::INFINITY, stagnant: 0 }
    }

    /// Records one epoch's validation loss and returns the learning rate for
    /// the next epoch.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best {
            self.best = val_loss;
            self.stagnant = 0;
        } else {
            self.stagnant += 1;
            if self.stagnant >= self.patience {
                self.lr *= self.factor;
                self.stagnant = 0;
            }
        }
        self.lr
    }
}

/// Replays a validation-loss history through a fresh [`PlateauScheduler`].
pub fn lr_on_plateau(history: &[f64], lr: f64, patience: usize, factor: f64) -> f64 {
    let mut s = PlateauScheduler::new(lr, patience, factor);
    for v in history {
        s.observe(*v);
    }
    s.lr
}

/// Stops once `patience` epochs pass without a strictly lower validation
/// loss. Epochs are numbered from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    best: f64,
    best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0 }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    /// Returns `(is_new_best, should_stop)`.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> (bool, bool) {
        let improved = val_loss < self.best;
        if improved {
            self.best = val_loss;
            self.best_epoch = epoch;
        }
        (improved, epoch >= self.best_epoch + self.patience)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub delta: f64,
    pub weight_w: f64,
    pub threshold_t: f64,
    pub lr0: f64,
    pub batch_size: usize,
    pub plateau_patience: usize,
    pub lr_factor: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            delta: 10.0,
            weight_w: 1000.0,
            threshold_t: 5.0,
            lr0: 5e-4,
            batch_size: 256,
            plateau_patience: 9,
            lr_factor: 0.99,
            early_stop_patience: 99,
            max_epochs: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(String::from(m)));
        if !(self.delta > 0.0) {
            return bad("delta must be positive");
        }
        if !(self.weight_w >= 1.0) {
            return bad("weight_w must be at least 1");
        }
        if !self.threshold_t.is_finite() {
            return bad("threshold_t must be finite");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return bad("lr_factor must lie in (0, 1)");
        }
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be finite and non-negative");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        Ok(())
    }

    pub fn loss(&self) -> LossParams {
        LossParams { delta: self.delta, weight_w: self.weight_w, threshold_t: self.threshold_t }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub is_best: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Filled in by callers that have a clock.
    pub wall_time_s: f64,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch).map(|e| e.val_loss)
    }
}

/// Standardized inputs kept in memory for the whole run.
struct Prepared {
    rows: Vec<([[f64; N_DYNAMIC]; WINDOW_HOURS], [f64; N_STATIC])>,
    labels: Vec<[f64; HORIZON_HOURS]>,
    counts: Vec<f64>,
}

impl Prepared {
    fn new(model: &StoCastModel, samples: &[WindowSample]) -> Self {
        Self {
            rows: samples.iter().map(|s| model.stats.transform(s)).collect(),
            labels: samples.iter().map(|s| s.label).collect(),
            counts: samples.iter().map(|s| s.transformer_count as f64).collect(),
        }
    }

    fn gather(&self, idx: &[usize]) -> (ModelInput, Vec<f64>, Vec<f64>) {
        let rows: Vec<_> = idx.iter().map(|&i| self.rows[i]).collect();
        let labels = idx.iter().flat_map(|&i| self.labels[i]).collect();
        let counts = idx.iter().map(|&i| self.counts[i]).collect();
        (ModelInput::from_arrays(&rows), labels, counts)
    }
}

fn mean_loss(model: &StoCastModel, data: &Prepared, loss: &LossParams) -> Result<f64, TrainError> {
    let n = data.rows.len();
    let mut total = 0.0;
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(1024) {
        let (input, labels, counts) = data.gather(chunk);
        let cache = model.forward(&input)?;
        total += batch_loss(cache.outputs(), &labels, &counts, loss) * (chunk.len() * OUTPUTS) as f64;
    }
    Ok(total / (n * OUTPUTS) as f64)
}

/// Mean WHL of `model` over `samples`.
pub fn evaluate_loss(model: &StoCastModel, samples: &[WindowSample], loss: &LossParams) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::Config(String::from("cannot evaluate an empty set")));
    }
    mean_loss(model, &Prepared::new(model, samples), loss)
}

/// Trains from `init` (whose embedded statistics are used to standardize
/// inputs) and returns the parameters with the lowest validation loss.
/// `observer` sees every finished epoch.
pub fn train_loop(
    config: &TrainConfig,
    train: &[WindowSample],
    val: &[WindowSample],
    init: StoCastModel,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<(StoCastModel, TrainHistory), TrainError> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::Config(String::from("training and validation sets must be nonempty")));
    }
    let loss = config.loss();
    let adam = AdamConfig::default();
    let train_data = Prepared::new(&init, train);
    let val_data = Prepared::new(&init, val);
    let mut model = init;
    let mut best = model.params.clone();
    let mut state = AdamState::new(model.params.len());
    let mut scheduler = PlateauScheduler::new(config.lr0, config.plateau_patience, config.lr_factor);
    let mut stopper = EarlyStopping::new(config.early_stop_patience);
    let mut history = TrainHistory::default();
    let shuffle_rng = StreamRng::new(derive_seed(config.seed, 2));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad_out = Vec::new();

    for epoch in 1..=config.max_epochs {
        let lr = scheduler.lr;
        order.sort_unstable();
        shuffle_rng.fork(epoch as u64).shuffle(&mut order);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let (input, labels, counts) = train_data.gather(idx);
            let cache = model.forward(&input)?;
            grad_out.resize(idx.len() * OUTPUTS, 0.0);
            let l = batch_loss_grad(cache.outputs(), &labels, &counts, &loss, &mut grad_out);
            if !l.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch });
            }
            let grads = model.backward(&cache, &grad_out)?;
            if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
                let param = model.param_name(i).unwrap_or_default();
                return Err(TrainError::NonFiniteGradient { epoch, batch, param: format!("{param}[{i}]") });
            }
            adam_step(&mut model.params, &grads, &mut state, lr, &adam);
            total += l * (idx.len() * OUTPUTS) as f64;
        }
        let train_loss = total / (train.len() * OUTPUTS) as f64;
        let val_loss = mean_loss(&model, &val_data, &loss)?;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteValidation { epoch });
        }
        let (is_best, stop) = stopper.observe(epoch, val_loss);
        if is_best {
            best.copy_from_slice(&model.params);
        }
        scheduler.observe(val_loss);
        let record = EpochRecord { epoch, train_loss, val_loss, lr, is_best };
        observer(&record);
        history.epochs.push(record);
        if stop {
            break;
        }
    }
    history.best_epoch = stopper.best_epoch();
    model.params = best;
    Ok((model, history))
}

pub const SPLIT_NAMES: [&str; 4] = ["training", "validation", "test-grid", "test-event"];

/// Count-scale predictions for `samples`.
pub fn predict_counts(model: &StoCastModel, samples: &[WindowSample]) -> Vec<[f64; OUTPUTS]> {
    model
        .predict(samples)
        .into_iter()
        .zip(samples)
        .map(|(r, s)| r.map(|v| v * s.transformer_count as f64))
        .collect()
}

/// MAE, MSE and WHL of `model` on `samples`.
pub fn split_metrics(split: &str, model: &StoCastModel, samples: &[WindowSample], loss: &LossParams) -> Result<MetricReport, TrainError> {
    let pred: Vec<f64> = predict_counts(model, samples).into_iter().flatten().collect();
    let obs: Vec<f64> = samples.iter().flat_map(|s| s.label_counts()).collect();
    metrics(split, &pred, &obs, loss).map_err(|e| TrainError::Config(format!("{e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LosoRun {
    pub experiment: LosoExperiment,
    pub model: StoCastModel,
    pub history: TrainHistory,
    /// One row per entry of [`SPLIT_NAMES`].
    pub metrics: Vec<MetricReport>,
}

/// Trains and evaluates the experiment that holds out `holdout`.
pub fn run_loso_experiment(
    panels: &[EventPanel],
    cells: &[GridCell],
    holdout: &str,
    config: &TrainConfig,
    arch: Architecture,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<LosoRun, TrainError> {
    config.validate()?;
    arch.validate()?;
    let active = active_cells(cells, panels);
    let ids: Vec<String> = panels.iter().map(|p| p.event_id.clone()).collect();
    let exp = LosoExperiment::new(&ids, holdout, &active, config.seed)?;
    let data = build_loso_dataset(&exp, panels, cells)?;
    let test_event = test_event_samples(&exp, panels, cells, &active)?;
    let mut init = init_params(arch, derive_seed(config.seed, 3));
    init.stats = fit_standardization(&data.train)?;
    let (model, history) = train_loop(config, &data.train, &data.val, init, observer)?;
    let loss = config.loss();
    let splits: [&[WindowSample]; 4] = [&data.train, &data.val, &data.test_grid, &test_event];
    let metrics = SPLIT_NAMES
        .iter()
        .zip(splits)
        .map(|(name, s)| split_metrics(name, &model, s, &loss))
        .collect::<Result<_, _>>()?;
    Ok(LosoRun { experiment: exp, model, history, metrics })
}

/// One experiment per event, each holding that event out.
pub fn loso_harness(
    panels: &[EventPanel],
    cells: &[GridCell],
    config: &TrainConfig,
    arch: Architecture,
    observer: &mut dyn FnMut(&str, &EpochRecord),
) -> Result<Vec<LosoRun>, TrainError> {
    if panels.len() < 2 {
        return Err(TrainError::Config(String::from("leave-one-storm-out needs at least two events")));
    }
    panels
        .iter()
        .map(|p| {
            let id = p.event_id.clone();
            run_loso_experiment(panels, cells, &id, config, arch, &mut |r| observer(&id, r))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::model_forward;
    use proptest::prelude::*;

    fn direct_huber(y: f64, f: f64, d: f64) -> f64 {
        if (y - f).abs() <= d {
            0.5 * (y - f) * (y - f)
        } else {
            d * (y - f).abs() - 0.5 * d * d
        }
    }

    #[test]
    fn huber_and_whl_examples() {
        assert_eq!(huber(3.0, 3.0, 10.0), 0.0);
        assert_eq!(huber(4.0, 0.0, 10.0), 8.0);
        assert_eq!(huber(20.0, 0.0, 10.0), 150.0);
        assert_eq!(whl(4.0, 0.0, 10.0, 1000.0, 5.0), 8.0);
        assert_eq!(whl(20.0, 0.0, 10.0, 1000.0, 5.0), 150_000.0);
        assert_eq!(whl(5.0, 5.0, 10.0, 1000.0, 5.0), 0.0);
        // branch is on the observation, not the prediction
        assert_eq!(whl(0.0, 20.0, 10.0, 1000.0, 5.0), 150.0);
    }

    #[test]
    fn huber_is_smooth_at_transition() {
        let d = 10.0;
        for s in [-1.0, 1.0] {
            let e = s * d;
            let left = huber(e, 0.0, d);
            assert!((huber(e * (1.0 + 1e-12), 0.0, d) - left).abs() < 1e-9);
            // derivative w.r.t. e equals delta*sign(e) from both sides
            let h = 1e-6;
            let below = (huber(e, 0.0, d) - huber(e - h, 0.0, d)) / h;
            let above = (huber(e + h, 0.0, d) - huber(e, 0.0, d)) / h;
            assert!((below - s * d).abs() < 1e-5 && (above - s * d).abs() < 1e-5);
            assert_eq!(huber_grad(e, 0.0, d), -s * d);
        }
    }

    #[test]
    fn batch_loss_example_and_mean_invariance() {
        let loss = LossParams::default();
        let labels = [2.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(batch_loss(&[0.0; 6], &labels, &[10.0], &loss), 25_000.0);
        assert_eq!(batch_loss(&labels, &labels, &[10.0], &loss), 0.0);
        let p = [0.1, 0.3, 0.0, 0.9, 0.5, 0.2];
        let one = batch_loss(&p, &labels, &[10.0], &loss);
        let pp: Vec<f64> = p.iter().chain(&p).copied().collect();
        let ll: Vec<f64> = labels.iter().chain(&labels).copied().collect();
        assert!((batch_loss(&pp, &ll, &[10.0, 10.0], &loss) - one).abs() <= 1e-12);
    }

    #[test]
    fn batch_loss_gradient_matches_differences() {
        let loss = LossParams::default();
        let mut rng = StreamRng::new(4);
        let b = 5;
        let counts: Vec<f64> = (0..b).map(|_| 1.0 + rng.below(30) as f64).collect();
        let labels: Vec<f64> = (0..b * 6).map(|_| rng.uniform()).collect();
        let pred: Vec<f64> = (0..b * 6).map(|_| rng.uniform()).collect();
        let mut g = vec![0.0; b * 6];
        batch_loss_grad(&pred, &labels, &counts, &loss, &mut g);
        // quadratic pieces make central differences exact up to roundoff
        let h = 1e-4;
        for i in 0..pred.len() {
            let mut p = pred.clone();
            p[i] += h;
            let up = batch_loss(&p, &labels, &counts, &loss);
            p[i] -= 2.0 * h;
            let down = batch_loss(&p, &labels, &counts, &loss);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * fd.abs().max(g[i].abs()).max(1e-3), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn adam_first_step_closed_form() {
        let mut p = [0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 5e-4, &AdamConfig::default());
        assert_eq!(p[0], -5e-4 / (1.0 + 1e-8));
        let mut q = [1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut q, &[0.0, 0.0], &mut s, 5e-4, &AdamConfig::default());
        assert_eq!(q, [1.0, -2.0]);
    }

    #[test]
    fn adam_two_step_hand_trace() {
        let (b1, b2, eps, lr): (f64, f64, f64, f64) = (0.9, 0.999, 1e-8, 1e-3);
        let mut theta = 0.5;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * 1.0;
            v = b2 * v + (1.0 - b2) * 1.0;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            theta -= lr * mh / (vh.sqrt() + eps);
        }
        let mut p = [0.5];
        let mut s = AdamState::new(1);
        for _ in 0..2 {
            adam_step(&mut p, &[1.0], &mut s, lr, &AdamConfig::default());
        }
        assert!((p[0] - theta).abs() <= 1e-15);
        assert_eq!(s.t, 2);
    }

    #[test]
    fn plateau_schedule_examples() {
        assert_eq!(lr_on_plateau(&[5.0, 4.0, 3.0, 2.0], 5e-4, 9, 0.99), 5e-4);
        let flat9: Vec<f64> = core::iter::once(1.0).chain([1.0; 9]).collect();
        assert_eq!(lr_on_plateau(&flat9, 5e-4, 9, 0.99), 5e-4 * 0.99);
        assert_eq!(lr_on_plateau(&flat9[..9], 5e-4, 9, 0.99), 5e-4);
        let flat18: Vec<f64> = core::iter::once(1.0).chain([1.0; 18]).collect();
        assert_eq!(lr_on_plateau(&flat18, 5e-4, 9, 0.99), 5e-4 * 0.99 * 0.99);
        assert!((lr_on_plateau(&flat18, 1.0, 9, 0.99) - 0.9801).abs() < 1e-15);
    }

    #[test]
    fn early_stop_fires_at_best_plus_patience() {
        for best in [1usize, 7, 40] {
            let mut es = EarlyStopping::new(99);
            let mut stopped_at = None;
            for epoch in 1..=500 {
                let loss = if epoch <= best { 100.0 - epoch as f64 } else { 1000.0 + epoch as f64 };
                if es.observe(epoch, loss).1 {
                    stopped_at = Some(epoch);
                    break;
                }
            }
            assert_eq!(stopped_at, Some(best + 99));
            assert_eq!(es.best_epoch(), best);
        }
    }

    const TINY: Architecture = Architecture { gru1: 3, gru2: 3, gru3: 3, gru4: 2, fc1: 4, fc2: 3, fc3: 4, fc4: 4 };

    fn teacher_samples(teacher: &StoCastModel, n: usize, seed: u64) -> Vec<WindowSample> {
        let mut rng = StreamRng::new(seed);
        (0..n)
            .map(|i| {
                let dynamic_in = core::array::from_fn(|h| {
                    let mut r: [f64; 4] = core::array::from_fn(|_| rng.normal());
                    r[3] = if h < 6 { rng.uniform() * 0.2 } else { 0.0 };
                    r
                });
                let static_in = core::array::from_fn(|_| rng.normal());
                let label = model_forward(teacher, &dynamic_in, &static_in);
                WindowSample { event: 0, cell_id: i, t0: 0, dynamic_in, static_in, label, transformer_count: 1 }
            })
            .collect()
    }

    #[test]
    fn fits_teacher_generated_labels() {
        let mut teacher = init_params(TINY, 100);
        let last_bias = teacher.slot("fc5.b").unwrap();
        for v in &mut teacher.params[last_bias.range()] {
            *v = -1.0;
        }
        let train = teacher_samples(&teacher, 512, 1);
        let val = teacher_samples(&teacher, 128, 2);
        // the student starts from a perturbed copy of the teacher
        let mut student = teacher.clone();
        let mut rng = StreamRng::new(5);
        for v in &mut student.params {
            *v += 0.1 * rng.normal();
        }
        let config = TrainConfig { lr0: 3e-3, batch_size: 32, max_epochs: 300, ..TrainConfig::default() };
        let loss = config.loss();
        let initial = evaluate_loss(&student, &val, &loss).unwrap();
        let (model, history) = train_loop(&config, &train, &val, student, &mut |_| {}).unwrap();
        let best = history.best_val_loss().unwrap();
        assert!(best < 1e-3 * initial, "{best} vs initial {initial}");
        assert_eq!(evaluate_loss(&model, &val, &loss).unwrap(), best);
        let min = history.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(best, min);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters_and_runs_are_repeatable() {
        let teacher = init_params(TINY, 1);
        let train = teacher_samples(&teacher, 40, 3);
        let val = teacher_samples(&teacher, 10, 4);
        let init = init_params(TINY, 9);
        let frozen = TrainConfig { lr0: 0.0, batch_size: 16, max_epochs: 3, ..TrainConfig::default() };
        let (m, h) = train_loop(&frozen, &train, &val, init.clone(), &mut |_| {}).unwrap();
        assert_eq!(m.params, init.params);
        assert_eq!(h.epochs.len(), 3);

        let cfg = TrainConfig { lr0: 1e-2, batch_size: 16, max_epochs: 4, seed: 77, ..TrainConfig::default() };
        let mut seen = Vec::new();
        let (a, ha) = train_loop(&cfg, &train, &val, init.clone(), &mut |r| seen.push(r.epoch)).unwrap();
        let (b, hb) = train_loop(&cfg, &train, &val, init, &mut |_| {}).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert_eq!(seen, [1, 2, 3, 4]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { delta: 0.0, ..TrainConfig::default() },
            TrainConfig { weight_w: 0.5, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { lr_factor: 1.0, ..TrainConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    proptest! {
        #[test]
        fn whl_matches_branch_rule(y in 0.0f64..40.0, f in 0.0f64..40.0) {
            let h = direct_huber(y, f, 10.0);
            prop_assert_eq!(huber(y, f, 10.0), h);
            let w = whl(y, f, 10.0, 1000.0, 5.0);
            if y <= 5.0 { prop_assert_eq!(w, h) } else { prop_assert_eq!(w, 1000.0 * h) }
        }

        #[test]
        fn adam_is_odd_in_the_gradient(g in proptest::collection::vec(-5.0f64..5.0, 1..8), lr in 1e-5f64..1e-1) {
            let mut a = vec![0.0; g.len()];
            let mut b = a.clone();
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            adam_step(&mut a, &g, &mut AdamState::new(g.len()), lr, &AdamConfig::default());
            adam_step(&mut b, &neg, &mut AdamState::new(g.len()), lr, &AdamConfig::default());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(*x, -*y);
            }
        }
    }
}
