//! Stacked GRU layers with a linear head: parameters, batched forward pass
//! and backpropagation through time.
//!
//! A batch of `B` sequences of `T` steps is laid out as a matrix with one
//! column per (step, sequence) pair, column index `t * B + b`.
//!
//! Gate equations (gate rows ordered update `z`, reset `r`, candidate `n`):
//!
//! ```text
//! z = sigmoid(W_z x + U_z h + b_z)
//! r = sigmoid(W_r x + U_r h + b_r)
//! n = tanh(W_n x + U_n (r * h) + b_n)
//! h' = z * h + (1 - z) * n
//! ```

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Weights of one GRU layer.
#[derive(Clone, Debug, PartialEq)]
pub struct GruLayerParams {
    /// Input weights, `3h x input`.
    pub w: DMatrix<f64>,
    /// Recurrent weights, `3h x h`.
    pub u: DMatrix<f64>,
    /// Biases, `3h`.
    pub b: DVector<f64>,
}

impl GruLayerParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruLayerParams {
            w: DMatrix::zeros(3 * hidden, input),
            u: DMatrix::zeros(3 * hidden, hidden),
            b: DVector::zeros(3 * hidden),
        }
    }

    pub fn input_width(&self) -> usize {
        self.w.ncols()
    }

    pub fn hidden_width(&self) -> usize {
        self.u.ncols()
    }
}

/// Affine output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub layers: Vec<GruLayerParams>,
    pub head: LinearParams,
}

impl GruParams {
    pub fn zeros(input: usize, widths: &[usize], output: usize) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = input;
        for &h in widths {
            layers.push(GruLayerParams::zeros(prev, h));
            prev = h;
        }
        GruParams { layers, head: LinearParams { w: DMatrix::zeros(output, prev), b: DVector::zeros(output) } }
    }

    /// Glorot-uniform input and head weights, orthogonal recurrent blocks,
    /// zero biases.
    pub fn init(input: usize, widths: &[usize], output: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input, widths, output);
        for layer in &mut p.layers {
            let (n_in, h) = (layer.input_width(), layer.hidden_width());
            glorot(&mut layer.w, n_in, h, rng);
            for g in 0..3 {
                let q = orthogonal(h, rng);
                layer.u.view_mut((g * h, 0), (h, h)).copy_from(&q);
            }
        }
        let (out, last) = p.head.w.shape();
        glorot(&mut p.head.w, last, out, rng);
        p
    }

    pub fn zeros_like(&self) -> Self {
        let widths = self.widths();
        Self::zeros(self.input_width(), &widths, self.output_width())
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(self.head.w.ncols(), |l| l.input_width())
    }

    pub fn output_width(&self) -> usize {
        self.head.w.nrows()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.hidden_width()).collect()
    }

    /// Parameter blocks in declaration order with a flag marking weights
    /// (as opposed to biases).
    pub fn blocks(&self) -> Vec<(&[f64], bool)> {
        let mut out = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &self.layers {
            out.push((l.w.as_slice(), true));
            out.push((l.u.as_slice(), true));
            out.push((l.b.as_slice(), false));
        }
        out.push((self.head.w.as_slice(), true));
        out.push((self.head.b.as_slice(), false));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        let mut out = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push((l.w.as_mut_slice(), true));
            out.push((l.u.as_mut_slice(), true));
            out.push((l.b.as_mut_slice(), false));
        }
        out.push((self.head.w.as_mut_slice(), true));
        out.push((self.head.b.as_mut_slice(), false));
        out
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|(b, _)| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sum of squared weights (biases excluded).
    pub fn l2(&self) -> f64 {
        self.blocks().iter().filter(|(_, w)| *w).flat_map(|(b, _)| b.iter()).map(|x| x * x).sum()
    }

    /// Euclidean norm over all parameters.
    pub fn norm(&self) -> f64 {
        self.blocks().iter().flat_map(|(b, _)| b.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(b, _)| b.iter().all(|x| x.is_finite()))
    }

    pub fn scale(&mut self, factor: f64) {
        for (b, _) in self.blocks_mut() {
            b.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Adds `2 lambda w` to the weight blocks of `self` (a gradient).
    pub fn add_l2_gradient(&mut self, params: &GruParams, lambda: f64) {
        for ((g, is_w), (p, _)) in self.blocks_mut().into_iter().zip(params.blocks()) {
            if is_w {
                g.iter_mut().zip(p).for_each(|(g, p)| *g += 2.0 * lambda * p);
            }
        }
    }
}

fn glorot(m: &mut DMatrix<f64>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    m.iter_mut().for_each(|x| *x = rng.random_range(-limit..limit));
}

fn orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    steps: usize,
    batch: usize,
    layers: Vec<LayerCache>,
    mask: Option<DMatrix<f64>>,
    top: DMatrix<f64>,
}

#[derive(Clone, Debug)]
struct LayerCache {
    input: DMatrix<f64>,
    hprev: DMatrix<f64>,
    z: DMatrix<f64>,
    r: DMatrix<f64>,
    n: DMatrix<f64>,
    rh: DMatrix<f64>,
}

/// Batched forward pass from zero hidden states. `mask` (dropout, already
/// scaled) multiplies the last GRU output before the head.
pub fn forward(
    params: &GruParams,
    x: &DMatrix<f64>,
    steps: usize,
    batch: usize,
    mask: Option<&DMatrix<f64>>,
) -> Result<(DMatrix<f64>, ForwardCache)> {
    let tb = steps * batch;
    if x.ncols() != tb || x.nrows() != params.input_width() {
        return Err(Error::Shape(format!(
            "input is {}x{}, expected {}x{tb}",
            x.nrows(),
            x.ncols(),
            params.input_width()
        )));
    }
    let mut input = x.clone();
    let mut caches = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let h = layer.hidden_width();
        let mut g = &layer.w * &input;
        for mut col in g.column_iter_mut() {
            col += &layer.b;
        }
        let mut z = DMatrix::zeros(h, tb);
        let mut r = DMatrix::zeros(h, tb);
        let mut n = DMatrix::zeros(h, tb);
        let mut rh = DMatrix::zeros(h, tb);
        let mut hprev = DMatrix::zeros(h, tb);
        let mut out = DMatrix::zeros(h, tb);
        let u_zr = layer.u.rows(0, 2 * h).clone_owned();
        let u_n = layer.u.rows(2 * h, h).clone_owned();
        let mut hp = DMatrix::zeros(h, batch);
        let mut a_zr = DMatrix::zeros(2 * h, batch);
        let mut a_n = DMatrix::zeros(h, batch);
        let mut rh_t = DMatrix::zeros(h, batch);
        for t in 0..steps {
            let c0 = t * batch;
            a_zr.gemm(1.0, &u_zr, &hp, 0.0);
            for b in 0..batch {
                let c = c0 + b;
                let gc = g.column(c);
                let ac = a_zr.column(b);
                for i in 0..h {
                    let zi = sigmoid(gc[i] + ac[i]);
                    let ri = sigmoid(gc[h + i] + ac[h + i]);
                    z[(i, c)] = zi;
                    r[(i, c)] = ri;
                    rh_t[(i, b)] = ri * hp[(i, b)];
                }
            }
            a_n.gemm(1.0, &u_n, &rh_t, 0.0);
            for b in 0..batch {
                let c = c0 + b;
                for i in 0..h {
                    let ni = (g[(2 * h + i, c)] + a_n[(i, b)]).tanh();
                    let zi = z[(i, c)];
                    let hpi = hp[(i, b)];
                    n[(i, c)] = ni;
                    hprev[(i, c)] = hpi;
                    rh[(i, c)] = rh_t[(i, b)];
                    let hn = zi * hpi + (1.0 - zi) * ni;
                    out[(i, c)] = hn;
                    hp[(i, b)] = hn;
                }
            }
        }
        caches.push(LayerCache { input, hprev, z, r, n, rh });
        input = out;
    }
    let top = match mask {
        Some(m) => {
            if m.shape() != input.shape() {
                return Err(Error::Shape("dropout mask shape".into()));
            }
            input.component_mul(m)
        }
        None => input,
    };
    let mut y = &params.head.w * &top;
    for mut col in y.column_iter_mut() {
        col += &params.head.b;
    }
    Ok((y, ForwardCache { steps, batch, layers: caches, mask: mask.cloned(), top }))
}

/// Gradient of a scalar cost with respect to all parameters, given the
/// cost's gradient `dy` with respect to the head outputs.
pub fn backward(params: &GruParams, cache: &ForwardCache, dy: &DMatrix<f64>) -> GruParams {
    let (steps, batch) = (cache.steps, cache.batch);
    let mut grads = params.zeros_like();
    grads.head.w = dy * cache.top.transpose();
    grads.head.b = row_sums(dy);
    let mut dh_all = params.head.w.transpose() * dy;
    if let Some(m) = &cache.mask {
        dh_all.component_mul_assign(m);
    }
    for (l, layer) in params.layers.iter().enumerate().rev() {
        let c = &cache.layers[l];
        let h = layer.hidden_width();
        let tb = steps * batch;
        let u_zr_t = layer.u.rows(0, 2 * h).transpose();
        let u_n_t = layer.u.rows(2 * h, h).transpose();
        let mut dpre = DMatrix::zeros(3 * h, tb);
        let mut carry = DMatrix::zeros(h, batch);
        let mut dzr = DMatrix::zeros(2 * h, batch);
        let mut dn = DMatrix::zeros(h, batch);
        let mut drh = DMatrix::zeros(h, batch);
        for t in (0..steps).rev() {
            let c0 = t * batch;
            for b in 0..batch {
                let col = c0 + b;
                for i in 0..h {
                    let dh = dh_all[(i, col)] + carry[(i, b)];
                    let (z, n, hp) = (c.z[(i, col)], c.n[(i, col)], c.hprev[(i, col)]);
                    let dz_pre = dh * (hp - n) * z * (1.0 - z);
                    let dn_pre = dh * (1.0 - z) * (1.0 - n * n);
                    dpre[(i, col)] = dz_pre;
                    dpre[(2 * h + i, col)] = dn_pre;
                    dzr[(i, b)] = dz_pre;
                    dn[(i, b)] = dn_pre;
                    carry[(i, b)] = dh * z;
                }
            }
            drh.gemm(1.0, &u_n_t, &dn, 0.0);
            for b in 0..batch {
                let col = c0 + b;
                for i in 0..h {
                    let (r, hp) = (c.r[(i, col)], c.hprev[(i, col)]);
                    let dr_pre = drh[(i, b)] * hp * r * (1.0 - r);
                    dpre[(h + i, col)] = dr_pre;
                    dzr[(h + i, b)] = dr_pre;
                    carry[(i, b)] += drh[(i, b)] * r;
                }
            }
            carry.gemm(1.0, &u_zr_t, &dzr, 1.0);
        }
        let g = &mut grads.layers[l];
        g.w = &dpre * c.input.transpose();
        g.b = row_sums(&dpre);
        g.u.rows_mut(0, 2 * h).copy_from(&(dpre.rows(0, 2 * h) * c.hprev.transpose()));
        g.u.rows_mut(2 * h, h).copy_from(&(dpre.rows(2 * h, h) * c.rh.transpose()));
        if l > 0 {
            dh_all = layer.w.transpose() * &dpre;
        }
    }
    grads
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    let mut s = DVector::zeros(m.nrows());
    for col in m.column_iter() {
        s += col;
    }
    s
}

/// `1 / (2 T B) * sum of squared errors`: the per-sequence cost averaged
/// over the batch.
pub fn data_cost(pred: &DMatrix<f64>, target: &DMatrix<f64>, steps: usize, batch: usize) -> f64 {
    let sse: f64 = pred.iter().zip(target.iter()).map(|(p, t)| (p - t) * (p - t)).sum();
    sse / (2.0 * (steps * batch) as f64)
}

/// Data cost plus `lambda` times the squared weight norm, and its gradient.
pub fn loss_and_gradient(
    params: &GruParams,
    x: &DMatrix<f64>,
    target: &DMatrix<f64>,
    steps: usize,
    batch: usize,
    mask: Option<&DMatrix<f64>>,
    lambda: f64,
) -> Result<(f64, GruParams)> {
    let (pred, cache) = forward(params, x, steps, batch, mask)?;
    if pred.shape() != target.shape() {
        return Err(Error::Shape("target shape".into()));
    }
    let cost = data_cost(&pred, target, steps, batch) + lambda * params.l2();
    let dy = (pred - target) / (steps * batch) as f64;
    let mut grads = backward(params, &cache, &dy);
    grads.add_l2_gradient(params, lambda);
    Ok((cost, grads))
}
