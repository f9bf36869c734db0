//! The outage network: four GRU layers over the 12-hour dynamic window, two
//! dense layers over the static features, and three dense output layers
//! ending in a sigmoid that yields six hourly outage ratios.
//!
//! Wiring (default widths):
//!
//! ```text
//! dynamic [12 x 4] -> GRU1 (4->32) -+-> GRU2 (32->64) -+
//!                                   +-> GRU3 (32->64) -+-> concat per step (128) -> GRU4 (128->32)
//!                                                            steps 6..11 flattened -> 192 --+
//! static [6] -> FC1 (6->64, relu) -> FC2 (64->32, relu) -----------------------------> 32 ---+
//!                                              concat 224 -> FC3 (relu) -> FC4 (relu) -> FC5 (sigmoid) -> 6
//! ```
//!
//! GRU gates use the logistic sigmoid; the candidate state uses ReLU.
//! All parameters live in one flat `Vec<f64>` whose order is given by
//! [`Architecture::layout`]; gradients and optimizer state share it.

mod kernels;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dataset::{StandardizationStats, WindowSample, HORIZON_HOURS, N_DYNAMIC, N_STATIC, PAST_HOURS, WINDOW_HOURS};
use crate::rng::StreamRng;


pub const OUTPUTS: usize = HORIZON_HOURS;
pub const FUTURE_STEPS: usize = WINDOW_HOURS - PAST_HOURS;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward pass does not match the recorded forward pass: {0}")]
    CacheMismatch(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

/// Hidden widths of the network. Input and output widths are fixed by the
/// data layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub gru1: usize,
    pub gru2: usize,
    pub gru3: usize,
    pub gru4: usize,
    pub fc1: usize,
    pub fc2: usize,
    pub fc3: usize,
    pub fc4: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self::STOCAST
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlot {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamSlot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

impl Architecture {
    pub const STOCAST: Self = Self { gru1: 32, gru2: 64, gru3: 64, gru4: 32, fc1: 64, fc2: 32, fc3: 64, fc4: 32 };

    /// (input, hidden) per GRU layer.
    pub fn gru_dims(&self) -> [(usize, usize); 4] {
        [
            (N_DYNAMIC, self.gru1),
            (self.gru1, self.gru2),
            (self.gru1, self.gru3),
            (self.gru2 + self.gru3, self.gru4),
        ]
    }

    /// (input, output, activation) per dense layer.
    pub fn fc_dims(&self) -> [(usize, usize, Activation); 5] {
        [
            (N_STATIC, self.fc1, Activation::Relu),
            (self.fc1, self.fc2, Activation::Relu),
            (self.latent_dim(), self.fc3, Activation::Relu),
            (self.fc3, self.fc4, Activation::Relu),
            (self.fc4, OUTPUTS, Activation::Sigmoid),
        ]
    }

    pub fn latent_dim(&self) -> usize {
        FUTURE_STEPS * self.gru4 + self.fc2
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let w = [self.gru1, self.gru2, self.gru3, self.gru4, self.fc1, self.fc2, self.fc3, self.fc4];
        if w.contains(&0) {
            return Err(NetError::Shape(String::from("every layer width must be at least 1")));
        }
        Ok(())
    }

    /// Parameter order: for GRU1..4 `w` `[3H x I]`, `u` `[3H x H]`, `b`
    /// `[3H]` with gate blocks stacked as (update, reset, candidate); then for
    /// FC1..5 `w` `[out x in]`, `b` `[out]`.
    pub fn layout(&self) -> Vec<ParamSlot> {
        let mut slots = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize| {
            slots.push(ParamSlot { name, offset, rows, cols });
            offset += rows * cols;
        };
        for (i, (inp, h)) in self.gru_dims().iter().enumerate() {
            push(format!("gru{}.w", i + 1), 3 * h, *inp);
            push(format!("gru{}.u", i + 1), 3 * h, *h);
            push(format!("gru{}.b", i + 1), 3 * h, 1);
        }
        for (i, (inp, out, _)) in self.fc_dims().iter().enumerate() {
            push(format!("fc{}.w", i + 1), *out, *inp);
            push(format!("fc{}.b", i + 1), *out, 1);
        }
        slots
    }

    pub fn n_params(&self) -> usize {
        self.layout().iter().map(ParamSlot::len).sum()
    }

    /// Stable textual description of every layer shape.
    pub fn fingerprint(&self) -> String {
        let g = self.gru_dims();
        let f = self.fc_dims();
        format!(
            "gru[{}>{},{}>{},{}>{},{}>{}];fc[{}>{},{}>{},{}>{},{}>{},{}>{}];steps={};future={}",
            g[0].0, g[0].1, g[1].0, g[1].1, g[2].0, g[2].1, g[3].0, g[3].1,
            f[0].0, f[0].1, f[1].0, f[1].1, f[2].0, f[2].1, f[3].0, f[3].1, f[4].0, f[4].1,
            WINDOW_HOURS, FUTURE_STEPS
        )
    }

    fn gru_range(&self, i: usize) -> Range<usize> {
        let l = self.layout();
        l[3 * i].offset..l[3 * i + 2].range().end
    }

    fn fc_range(&self, i: usize) -> Range<usize> {
        let l = self.layout();
        l[12 + 2 * i].offset..l[12 + 2 * i + 1].range().end
    }
}

/// Row-major dense array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, NetError> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(NetError::Shape(format!("shape {shape:?} needs {n} values, got {}", values.len())));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, values: vec![0.0; n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.shape.get(1).copied().unwrap_or(1);
        &self.values[i * w..(i + 1) * w]
    }
}

/// Borrowed view of one GRU layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct GruLayer<'a> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Input weights `[3H x I]`, rows (update, reset, candidate).
    pub w: &'a [f64],
    /// Recurrent weights `[3H x H]`.
    pub u: &'a [f64],
    pub b: &'a [f64],
}

impl<'a> GruLayer<'a> {
    /// Splits a packed `[w | u | b]` buffer.
    pub fn from_packed(input_dim: usize, hidden_dim: usize, packed: &'a [f64]) -> Result<Self, NetError> {
        let (nw, nu, nb) = (3 * hidden_dim * input_dim, 3 * hidden_dim * hidden_dim, 3 * hidden_dim);
        if packed.len() != nw + nu + nb {
            return Err(NetError::Shape(format!("GRU {input_dim}->{hidden_dim} needs {} values, got {}", nw + nu + nb, packed.len())));
        }
        let (w, rest) = packed.split_at(nw);
        let (u, b) = rest.split_at(nu);
        Ok(Self { input_dim, hidden_dim, w, u, b })
    }

    fn gate_rows(m: &'a [f64], cols: usize, h: usize, gate: usize) -> &'a [f64] {
        &m[gate * h * cols..(gate + 1) * h * cols]
    }

    pub fn w_z(&self) -> &'a [f64] {
        Self::gate_rows(self.w, self.input_dim, self.hidden_dim, 0)
    }
    pub fn w_r(&self) -> &'a [f64] {
        Self::gate_rows(self.w, self.input_dim, self.hidden_dim, 1)
    }
    pub fn w_h(&self) -> &'a [f64] {
        Self::gate_rows(self.w, self.input_dim, self.hidden_dim, 2)
    }
    pub fn u_z(&self) -> &'a [f64] {
        Self::gate_rows(self.u, self.hidden_dim, self.hidden_dim, 0)
    }
    pub fn u_r(&self) -> &'a [f64] {
        Self::gate_rows(self.u, self.hidden_dim, self.hidden_dim, 1)
    }
    pub fn u_h(&self) -> &'a [f64] {
        Self::gate_rows(self.u, self.hidden_dim, self.hidden_dim, 2)
    }
    pub fn b_z(&self) -> &'a [f64] {
        &self.b[..self.hidden_dim]
    }
    pub fn b_r(&self) -> &'a [f64] {
        &self.b[self.hidden_dim..2 * self.hidden_dim]
    }
    pub fn b_h(&self) -> &'a [f64] {
        &self.b[2 * self.hidden_dim..]
    }
}

/// Borrowed view of one dense layer.
#[derive(Debug, Clone, Copy)]
pub struct FcLayer<'a> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out x in]`
    pub weight: &'a [f64],
    pub bias: &'a [f64],
    pub activation: Activation,
}

impl FcLayer<'_> {
    fn kernel(&self) -> kernels::DenseParams<'_> {
        kernels::DenseParams { in_dim: self.in_dim, out_dim: self.out_dim, w: self.weight, b: self.bias, act: self.activation }
    }
}

impl GruLayer<'_> {
    fn kernel(&self) -> kernels::GruParams<'_> {
        kernels::GruParams { input_dim: self.input_dim, hidden_dim: self.hidden_dim, w: self.w, u: self.u, b: self.b }
    }
}

/// Runs a GRU over a `[T x input_dim]` sequence; returns `[T x hidden_dim]`.
/// `h0` defaults to zeros.
pub fn gru_forward(layer: &GruLayer<'_>, seq: &Tensor, h0: Option<&[f64]>) -> Result<Tensor, NetError> {
    let steps = match seq.shape() {
        [t, i] if *i == layer.input_dim => *t,
        s => return Err(NetError::Shape(format!("GRU expects [T x {}], got {s:?}", layer.input_dim))),
    };
    if let Some(h) = h0 {
        if h.len() != layer.hidden_dim {
            return Err(NetError::Shape(format!("h0 has {} values, expected {}", h.len(), layer.hidden_dim)));
        }
    }
    let cache = kernels::gru_forward(layer.kernel(), seq.values(), steps, 1, h0);
    Tensor::new(vec![steps, layer.hidden_dim], cache.h)
}

/// A batch of standardized inputs in time-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub batch: usize,
    /// `[12][B][4]`
    pub dynamic: Vec<f64>,
    /// `[B][6]`
    pub statics: Vec<f64>,
}

impl ModelInput {
    pub fn from_arrays(rows: &[([[f64; N_DYNAMIC]; WINDOW_HOURS], [f64; N_STATIC])]) -> Self {
        let batch = rows.len();
        let mut dynamic = vec![0.0; WINDOW_HOURS * batch * N_DYNAMIC];
        let mut statics = Vec::with_capacity(batch * N_STATIC);
        for (b, (d, s)) in rows.iter().enumerate() {
            for (t, row) in d.iter().enumerate() {
                let at = (t * batch + b) * N_DYNAMIC;
                dynamic[at..at + N_DYNAMIC].copy_from_slice(row);
            }
            statics.extend_from_slice(s);
        }
        Self { batch, dynamic, statics }
    }

    /// Standardizes raw samples with `stats`.
    pub fn from_samples<'a>(stats: &StandardizationStats, samples: impl IntoIterator<Item = &'a WindowSample>) -> Self {
        let rows: Vec<_> = samples.into_iter().map(|s| stats.transform(s)).collect();
        Self::from_arrays(&rows)
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    arch: Architecture,
    batch: usize,
    dynamic: Vec<f64>,
    statics: Vec<f64>,
    gru: [kernels::GruCache; 4],
    cat: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    latent: Vec<f64>,
    a3: Vec<f64>,
    a4: Vec<f64>,
    out: Vec<f64>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Predicted ratios, `[B x 6]`.
    pub fn outputs(&self) -> &[f64] {
        &self.out
    }

    pub fn output_row(&self, b: usize) -> [f64; OUTPUTS] {
        core::array::from_fn(|j| self.out[b * OUTPUTS + j])
    }

    /// Which ReLU units fired, over FC1, FC2, FC3 and FC4 in that order.
    /// Two passes with different patterns sit on different linear pieces.
    pub fn relu_pattern(&self) -> Vec<bool> {
        [&self.s1, &self.s2, &self.a3, &self.a4].into_iter().flatten().map(|&v| v > 0.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoCastModel {
    pub arch: Architecture,
    pub params: Vec<f64>,
    pub stats: StandardizationStats,
}

impl StoCastModel {
    pub fn zeros(arch: Architecture) -> Self {
        Self { arch, params: vec![0.0; arch.n_params()], stats: StandardizationStats::identity() }
    }

    pub fn layout(&self) -> Vec<ParamSlot> {
        self.arch.layout()
    }

    pub fn slot(&self, name: &str) -> Option<ParamSlot> {
        self.layout().into_iter().find(|s| s.name == name)
    }

    /// Parameter name holding flat index `i`.
    pub fn param_name(&self, i: usize) -> Option<String> {
        self.layout().into_iter().find(|s| s.range().contains(&i)).map(|s| s.name)
    }

    /// GRU layer `i` (0-based).
    pub fn gru(&self, i: usize) -> GruLayer<'_> {
        let (inp, h) = self.arch.gru_dims()[i];
        GruLayer::from_packed(inp, h, &self.params[self.arch.gru_range(i)]).expect("layout is consistent")
    }

    /// Dense layer `i` (0-based).
    pub fn fc(&self, i: usize) -> FcLayer<'_> {
        let (inp, out, activation) = self.arch.fc_dims()[i];
        let p = &self.params[self.arch.fc_range(i)];
        let (weight, bias) = p.split_at(inp * out);
        FcLayer { in_dim: inp, out_dim: out, weight, bias, activation }
    }

    pub fn forward(&self, input: &ModelInput) -> Result<ForwardCache, NetError> {
        let b = input.batch;
        if input.dynamic.len() != WINDOW_HOURS * b * N_DYNAMIC || input.statics.len() != b * N_STATIC {
            return Err(NetError::Shape(format!("model input does not match batch {b}")));
        }
        let a = &self.arch;
        let t = WINDOW_HOURS;
        let g1 = kernels::gru_forward(self.gru(0).kernel(), &input.dynamic, t, b, None);
        let g2 = kernels::gru_forward(self.gru(1).kernel(), &g1.h, t, b, None);
        let g3 = kernels::gru_forward(self.gru(2).kernel(), &g1.h, t, b, None);
        let w23 = a.gru2 + a.gru3;
        let mut cat = vec![0.0; t * b * w23];
        for (row, (h2, h3)) in cat.chunks_exact_mut(w23).zip(g2.h.chunks_exact(a.gru2).zip(g3.h.chunks_exact(a.gru3))) {
            row[..a.gru2].copy_from_slice(h2);
            row[a.gru2..].copy_from_slice(h3);
        }
        let g4 = kernels::gru_forward(self.gru(3).kernel(), &cat, t, b, None);

        let s1 = kernels::dense_forward(self.fc(0).kernel(), &input.statics, b);
        let s2 = kernels::dense_forward(self.fc(1).kernel(), &s1, b);

        let ld = a.latent_dim();
        let mut latent = vec![0.0; b * ld];
        for bi in 0..b {
            let row = &mut latent[bi * ld..(bi + 1) * ld];
            for k in 0..FUTURE_STEPS {
                let step = PAST_HOURS + k;
                let src = &g4.h[(step * b + bi) * a.gru4..(step * b + bi + 1) * a.gru4];
                row[k * a.gru4..(k + 1) * a.gru4].copy_from_slice(src);
            }
            row[FUTURE_STEPS * a.gru4..].copy_from_slice(&s2[bi * a.fc2..(bi + 1) * a.fc2]);
        }
        let a3 = kernels::dense_forward(self.fc(2).kernel(), &latent, b);
        let a4 = kernels::dense_forward(self.fc(3).kernel(), &a3, b);
        let out = kernels::dense_forward(self.fc(4).kernel(), &a4, b);
        Ok(ForwardCache {
            arch: self.arch,
            batch: b,
            dynamic: input.dynamic.clone(),
            statics: input.statics.clone(),
            gru: [g1, g2, g3, g4],
            cat,
            s1,
            s2,
            latent,
            a3,
            a4,
            out,
        })
    }

    /// Gradient of `sum(upstream * outputs)` w.r.t. every parameter, in
    /// layout order.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Vec<f64>, NetError> {
        if cache.arch != self.arch {
            return Err(NetError::CacheMismatch("architecture differs"));
        }
        let b = cache.batch;
        if upstream.len() != b * OUTPUTS {
            return Err(NetError::CacheMismatch("upstream gradient does not match the batch"));
        }
        let a = &self.arch;
        let t = WINDOW_HOURS;
        let mut grad = vec![0.0; self.params.len()];

        let (w5, b5) = self.fc_slots(4);
        let (gw, gb) = split_two(&mut grad, w5, b5);
        let d_a4 = kernels::dense_backward(self.fc(4).kernel(), &cache.a4, &cache.out, upstream, b, gw, gb, true).unwrap();
        let (w4, b4) = self.fc_slots(3);
        let (gw, gb) = split_two(&mut grad, w4, b4);
        let d_a3 = kernels::dense_backward(self.fc(3).kernel(), &cache.a3, &cache.a4, &d_a4, b, gw, gb, true).unwrap();
        let (w3, b3) = self.fc_slots(2);
        let (gw, gb) = split_two(&mut grad, w3, b3);
        let d_latent = kernels::dense_backward(self.fc(2).kernel(), &cache.latent, &cache.a3, &d_a3, b, gw, gb, true).unwrap();

        let ld = a.latent_dim();
        let mut d_s2 = vec![0.0; b * a.fc2];
        let mut d_h4 = vec![0.0; t * b * a.gru4];
        for bi in 0..b {
            let row = &d_latent[bi * ld..(bi + 1) * ld];
            for k in 0..FUTURE_STEPS {
                let step = PAST_HOURS + k;
                d_h4[(step * b + bi) * a.gru4..(step * b + bi + 1) * a.gru4].copy_from_slice(&row[k * a.gru4..(k + 1) * a.gru4]);
            }
            d_s2[bi * a.fc2..(bi + 1) * a.fc2].copy_from_slice(&row[FUTURE_STEPS * a.gru4..]);
        }
        let (w2, b2) = self.fc_slots(1);
        let (gw, gb) = split_two(&mut grad, w2, b2);
        let d_s1 = kernels::dense_backward(self.fc(1).kernel(), &cache.s1, &cache.s2, &d_s2, b, gw, gb, true).unwrap();
        let (w1, b1) = self.fc_slots(0);
        let (gw, gb) = split_two(&mut grad, w1, b1);
        kernels::dense_backward(self.fc(0).kernel(), &cache.statics, &cache.s1, &d_s1, b, gw, gb, false);

        let w23 = a.gru2 + a.gru3;
        let mut d_cat = vec![0.0; t * b * w23];
        kernels::gru_backward(self.gru(3).kernel(), &cache.cat, &cache.gru[3], &mut d_h4, self.gru_grads(&mut grad, 3), Some(&mut d_cat));
        let mut d_h2 = Vec::with_capacity(t * b * a.gru2);
        let mut d_h3 = Vec::with_capacity(t * b * a.gru3);
        for row in d_cat.chunks_exact(w23) {
            d_h2.extend_from_slice(&row[..a.gru2]);
            d_h3.extend_from_slice(&row[a.gru2..]);
        }
        let mut d_h1 = vec![0.0; t * b * a.gru1];
        let h1 = &cache.gru[0].h;
        kernels::gru_backward(self.gru(1).kernel(), h1, &cache.gru[1], &mut d_h2, self.gru_grads(&mut grad, 1), Some(&mut d_h1));
        kernels::gru_backward(self.gru(2).kernel(), h1, &cache.gru[2], &mut d_h3, self.gru_grads(&mut grad, 2), Some(&mut d_h1));
        kernels::gru_backward(self.gru(0).kernel(), &cache.dynamic, &cache.gru[0], &mut d_h1, self.gru_grads(&mut grad, 0), None);
        Ok(grad)
    }

    fn fc_slots(&self, i: usize) -> (Range<usize>, Range<usize>) {
        let r = self.arch.fc_range(i);
        let (inp, out, _) = self.arch.fc_dims()[i];
        (r.start..r.start + inp * out, r.start + inp * out..r.end)
    }

    fn gru_grads<'g>(&self, grad: &'g mut [f64], i: usize) -> kernels::GruGrads<'g> {
        let (inp, h) = self.arch.gru_dims()[i];
        let r = self.arch.gru_range(i);
        let (w, rest) = grad[r].split_at_mut(3 * h * inp);
        let (u, b) = rest.split_at_mut(3 * h * h);
        kernels::GruGrads { w, u, b }
    }

    /// Predicted ratios for raw (unstandardized) samples, using the embedded
    /// statistics.
    pub fn predict(&self, samples: &[WindowSample]) -> Vec<[f64; OUTPUTS]> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(1024) {
            let input = ModelInput::from_samples(&self.stats, chunk);
            let cache = self.forward(&input).expect("input built from samples");
            out.extend((0..chunk.len()).map(|b| cache.output_row(b)));
        }
        out
    }
}

fn split_two(grad: &mut [f64], a: Range<usize>, b: Range<usize>) -> (&mut [f64], &mut [f64]) {
    debug_assert_eq!(a.end, b.start);
    let (left, right) = grad[a.start..b.end].split_at_mut(a.end - a.start);
    (left, right)
}

/// Forward pass for one standardized sample.
pub fn model_forward(
    model: &StoCastModel,
    dynamic_in: &[[f64; N_DYNAMIC]; WINDOW_HOURS],
    static_in: &[f64; N_STATIC],
) -> [f64; OUTPUTS] {
    let input = ModelInput::from_arrays(&[(*dynamic_in, *static_in)]);
    model.forward(&input).expect("single-sample input is well formed").output_row(0)
}

/// Parameter gradients for a recorded forward pass.
pub fn model_backward(model: &StoCastModel, cache: &ForwardCache, upstream: &[f64]) -> Result<Vec<f64>, NetError> {
    model.backward(cache, upstream)
}

/// Glorot-uniform weights (`U(-sqrt(6/(fan_in+fan_out)), +...)` per gate
/// matrix), zero biases, drawn in layout order from one seeded stream.
pub fn init_params(arch: Architecture, seed: u64) -> StoCastModel {
    let mut model = StoCastModel::zeros(arch);
    let mut rng = StreamRng::new(seed);
    for slot in arch.layout() {
        if slot.cols == 1 && slot.name.ends_with(".b") {
            continue;
        }
        // GRU matrices stack three gates; each gate is fan_in x hidden
        let fan_out = if slot.name.starts_with("gru") { slot.rows / 3 } else { slot.rows };
        let bound = libm::sqrt(6.0 / (slot.cols + fan_out) as f64);
        for v in &mut model.params[slot.range()] {
            *v = rng.uniform_in(-bound, bound);
        }
    }
    model
}
