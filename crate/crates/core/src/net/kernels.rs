//! Batched GRU and dense-layer kernels on time-major buffers.
//!
//! Sequence buffers are laid out `[t][b][feature]`, matrices row-major.
//! GRU gate blocks are stacked as rows `[z; r; candidate]`.

use alloc::vec;
use alloc::vec::Vec;

use super::Activation;

/// `C[m x n] = beta * C + A[m x k] * B[k x n]`, arbitrary positive strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!((m - 1) * rsc + (n - 1) * csc < c.len(), "gemm: C out of bounds");
    if k > 0 {
        assert!((m - 1) * rsa + (k - 1) * csa < a.len(), "gemm: A out of bounds");
        assert!((k - 1) * rsb + (n - 1) * csb < b.len(), "gemm: B out of bounds");
    }
    // SAFETY: every element addressed by the strides was bounds-checked above
    // and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 { x } else { 0.0 }
}

/// Borrowed GRU parameters.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GruParams<'a> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `[3H x I]`
    pub w: &'a [f64],
    /// `[3H x H]`
    pub u: &'a [f64],
    /// `[3H]`
    pub b: &'a [f64],
}

pub(crate) struct GruGrads<'a> {
    pub w: &'a mut [f64],
    pub u: &'a mut [f64],
    pub b: &'a mut [f64],
}

/// Intermediates of one batched GRU pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct GruCache {
    pub steps: usize,
    pub batch: usize,
    pub hidden: usize,
    /// Outputs `h_t`, `[T][B][H]`.
    pub h: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    /// Candidate state after ReLU.
    pub cand: Vec<f64>,
    /// `r * h_{t-1}`.
    pub rh: Vec<f64>,
    /// Initial state, `[B][H]`.
    pub h0: Vec<f64>,
}

impl GruCache {
    fn h_prev(&self, t: usize) -> &[f64] {
        let n = self.batch * self.hidden;
        if t == 0 { &self.h0 } else { &self.h[(t - 1) * n..t * n] }
    }
}

pub(crate) fn gru_forward(p: GruParams<'_>, x: &[f64], steps: usize, batch: usize, h0: Option<&[f64]>) -> GruCache {
    let (i_dim, h_dim) = (p.input_dim, p.hidden_dim);
    let g = 3 * h_dim;
    assert_eq!(x.len(), steps * batch * i_dim, "GRU input shape");
    let n = steps * batch * h_dim;
    let mut c = GruCache {
        steps,
        batch,
        hidden: h_dim,
        h: vec![0.0; n],
        z: vec![0.0; n],
        r: vec![0.0; n],
        cand: vec![0.0; n],
        rh: vec![0.0; n],
        h0: match h0 {
            Some(h) => {
                assert_eq!(h.len(), batch * h_dim, "GRU initial state shape");
                h.to_vec()
            }
            None => vec![0.0; batch * h_dim],
        },
    };
    let zero_h0 = c.h0.iter().all(|v| *v == 0.0);

    // input projections for every step at once
    let mut pre = vec![0.0; steps * batch * g];
    gemm(steps * batch, i_dim, g, x, i_dim, 1, p.w, 1, i_dim, 0.0, &mut pre, g, 1);
    for row in pre.chunks_exact_mut(g) {
        for (v, b) in row.iter_mut().zip(p.b) {
            *v += b;
        }
    }

    let bh = batch * h_dim;
    let mut hp = c.h0.clone();
    for t in 0..steps {
        let pre_t = &mut pre[t * batch * g..(t + 1) * batch * g];
        let recurrent = t > 0 || !zero_h0;
        if recurrent {
            gemm(batch, h_dim, 2 * h_dim, &hp, h_dim, 1, p.u, 1, h_dim, 1.0, pre_t, g, 1);
        }
        let s = t * bh..(t + 1) * bh;
        {
            let (z, r, rh) = (&mut c.z[s.clone()], &mut c.r[s.clone()], &mut c.rh[s.clone()]);
            for b in 0..batch {
                let row = &pre_t[b * g..(b + 1) * g];
                for j in 0..h_dim {
                    let k = b * h_dim + j;
                    z[k] = sigmoid(row[j]);
                    r[k] = sigmoid(row[h_dim + j]);
                    rh[k] = r[k] * hp[k];
                }
            }
        }
        if recurrent {
            let rh = &c.rh[s.clone()];
            gemm(batch, h_dim, h_dim, rh, h_dim, 1, &p.u[2 * h_dim * h_dim..], 1, h_dim, 1.0, &mut pre_t[2 * h_dim..], g, 1);
        }
        for b in 0..batch {
            let row = &pre_t[b * g..(b + 1) * g];
            for j in 0..h_dim {
                let k = b * h_dim + j;
                let cand = relu(row[2 * h_dim + j]);
                let z = c.z[t * bh + k];
                c.cand[t * bh + k] = cand;
                c.h[t * bh + k] = (1.0 - z) * hp[k] + z * cand;
            }
        }
        hp.copy_from_slice(&c.h[s]);
    }
    c
}

/// Backpropagates `dh` (gradient w.r.t. every output step, consumed as
/// scratch) through the layer. Parameter gradients are accumulated into
/// `grads`; input gradients are accumulated into `dx` when given.
pub(crate) fn gru_backward(
    p: GruParams<'_>,
    x: &[f64],
    c: &GruCache,
    dh: &mut [f64],
    grads: GruGrads<'_>,
    dx: Option<&mut [f64]>,
) {
    let (i_dim, h_dim, batch, steps) = (p.input_dim, p.hidden_dim, c.batch, c.steps);
    let g = 3 * h_dim;
    let bh = batch * h_dim;
    assert_eq!(dh.len(), steps * bh, "GRU upstream gradient shape");
    let zero_h0 = c.h0.iter().all(|v| *v == 0.0);

    let mut dpre = vec![0.0; steps * batch * g];
    let mut carry = vec![0.0; bh];
    let mut d_rh = vec![0.0; bh];
    for t in (0..steps).rev() {
        let s = t * bh..(t + 1) * bh;
        let hp = c.h_prev(t);
        let (z, r, cand) = (&c.z[s.clone()], &c.r[s.clone()], &c.cand[s.clone()]);
        let dh_t = &mut dh[s.clone()];
        let dpre_t = &mut dpre[t * batch * g..(t + 1) * batch * g];
        for b in 0..batch {
            for j in 0..h_dim {
                let k = b * h_dim + j;
                let d = dh_t[k] + carry[k];
                dh_t[k] = d;
                let dz = d * (cand[k] - hp[k]);
                let dcand = d * z[k];
                dpre_t[b * g + j] = dz * z[k] * (1.0 - z[k]);
                dpre_t[b * g + 2 * h_dim + j] = if cand[k] > 0.0 { dcand } else { 0.0 };
            }
        }
        let recurrent = t > 0 || !zero_h0;
        if recurrent {
            gemm(batch, h_dim, h_dim, &dpre_t[2 * h_dim..], g, 1, &p.u[2 * h_dim * h_dim..], h_dim, 1, 0.0, &mut d_rh, h_dim, 1);
        } else {
            d_rh.iter_mut().for_each(|v| *v = 0.0);
        }
        for b in 0..batch {
            for j in 0..h_dim {
                let k = b * h_dim + j;
                let dr = d_rh[k] * hp[k];
                dpre_t[b * g + h_dim + j] = dr * r[k] * (1.0 - r[k]);
                carry[k] = dh_t[k] * (1.0 - z[k]) + d_rh[k] * r[k];
            }
        }
        if recurrent {
            gemm(batch, 2 * h_dim, h_dim, dpre_t, g, 1, p.u, h_dim, 1, 1.0, &mut carry, h_dim, 1);
            gemm(2 * h_dim, batch, h_dim, dpre_t, 1, g, hp, h_dim, 1, 1.0, grads.u, h_dim, 1);
            let rh = &c.rh[s];
            gemm(h_dim, batch, h_dim, &dpre_t[2 * h_dim..], 1, g, rh, h_dim, 1, 1.0, &mut grads.u[2 * h_dim * h_dim..], h_dim, 1);
        }
    }
    let tb = steps * batch;
    gemm(g, tb, i_dim, &dpre, 1, g, x, i_dim, 1, 1.0, grads.w, i_dim, 1);
    for row in dpre.chunks_exact(g) {
        for (gb, d) in grads.b.iter_mut().zip(row) {
            *gb += d;
        }
    }
    if let Some(dx) = dx {
        assert_eq!(dx.len(), tb * i_dim, "GRU input gradient shape");
        gemm(tb, g, i_dim, &dpre, g, 1, p.w, i_dim, 1, 1.0, dx, i_dim, 1);
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DenseParams<'a> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out x in]`
    pub w: &'a [f64],
    pub b: &'a [f64],
    pub act: Activation,
}

/// `act(x W^T + b)` for a `[rows x in]` batch.
pub(crate) fn dense_forward(p: DenseParams<'_>, x: &[f64], rows: usize) -> Vec<f64> {
    assert_eq!(x.len(), rows * p.in_dim, "dense input shape");
    let mut y = vec![0.0; rows * p.out_dim];
    gemm(rows, p.in_dim, p.out_dim, x, p.in_dim, 1, p.w, 1, p.in_dim, 0.0, &mut y, p.out_dim, 1);
    for row in y.chunks_exact_mut(p.out_dim) {
        for (v, b) in row.iter_mut().zip(p.b) {
            let pre = *v + b;
            *v = match p.act {
                Activation::Relu => relu(pre),
                Activation::Sigmoid => sigmoid(pre),
                Activation::Identity => pre,
            };
        }
    }
    y
}

/// Backward through a dense layer given its input `x`, output `y` and the
/// gradient `dy` w.r.t. `y`. Returns the gradient w.r.t. `x` when requested.
pub(crate) fn dense_backward(
    p: DenseParams<'_>,
    x: &[f64],
    y: &[f64],
    dy: &[f64],
    rows: usize,
    gw: &mut [f64],
    gb: &mut [f64],
    want_dx: bool,
) -> Option<Vec<f64>> {
    let mut dpre = dy.to_vec();
    for (d, y) in dpre.iter_mut().zip(y) {
        *d *= match p.act {
            Activation::Relu => (*y > 0.0) as u8 as f64,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        };
    }
    gemm(p.out_dim, rows, p.in_dim, &dpre, 1, p.out_dim, x, p.in_dim, 1, 1.0, gw, p.in_dim, 1);
    for row in dpre.chunks_exact(p.out_dim) {
        for (g, d) in gb.iter_mut().zip(row) {
            *g += d;
        }
    }
    want_dx.then(|| {
        let mut dx = vec![0.0; rows * p.in_dim];
        gemm(rows, p.out_dim, p.in_dim, &dpre, p.out_dim, 1, p.w, p.in_dim, 1, 0.0, &mut dx, p.in_dim, 1);
        dx
    })
}
