use std::sync::atomic::{AtomicU64, Ordering};

use super::{NnError, Tensor};

/// Probabilities below this are clamped before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

/// `x[n, i] * w[i, o] + b[o]`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let (n, i) = (x.rows(), x.cols());
    if w.shape().len() != 2 || w.rows() != i {
        return Err(shape_err("linear", x, w));
    }
    let o = w.cols();
    if b.len() != o {
        return Err(shape_err("linear bias", w, b));
    }
    let mut y = Tensor::zeros(&[n, o]);
    let wd = w.data();
    for r in 0..n {
        let xr = x.row(r);
        let yr = y.row_mut(r);
        yr.copy_from_slice(b.data());
        for (k, &xv) in xr.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (yv, &wv) in yr.iter_mut().zip(&wd[k * o..(k + 1) * o]) {
                *yv += xv * wv;
            }
        }
    }
    Ok(y)
}

/// Accumulates `dL/dw` and `dL/db` and returns `dL/dx`.
pub fn linear_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    gw: &mut Tensor,
    gb: &mut Tensor,
) -> Tensor {
    let (n, i, o) = (x.rows(), x.cols(), w.cols());
    debug_assert_eq!(dy.rows(), n);
    debug_assert_eq!(dy.cols(), o);
    let mut dx = Tensor::zeros(&[n, i]);
    let wd = w.data();
    let gwd = gw.data_mut();
    for r in 0..n {
        let dyr = dy.row(r);
        let xr = x.row(r);
        for (k, &xv) in xr.iter().enumerate() {
            let wrow = &wd[k * o..(k + 1) * o];
            let mut acc = 0.0;
            for (&d, &wv) in dyr.iter().zip(wrow) {
                acc += d * wv;
            }
            dx.row_mut(r)[k] = acc;
            if xv != 0.0 {
                for (g, &d) in gwd[k * o..(k + 1) * o].iter_mut().zip(dyr) {
                    *g += xv * d;
                }
            }
        }
        for (g, &d) in gb.data_mut().iter_mut().zip(dyr) {
            *g += d;
        }
    }
    dx
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Subgradient 0 at the kink.
pub fn relu_backward(pre: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (d, &p) in dx.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

pub fn tanh(x: &Tensor) -> Tensor {
    x.map(f64::tanh)
}

/// Takes the forward *output*.
pub fn tanh_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(y.data()) {
        *d *= 1.0 - v * v;
    }
    dx
}

pub fn embedding_lookup(table: &Tensor, ids: &[u32]) -> Result<Tensor, NnError> {
    let rows = table.rows();
    let mut idx = Vec::with_capacity(ids.len());
    for &id in ids {
        if id as usize >= rows {
            return Err(NnError::IdOutOfRange {
                id: id as usize,
                rows,
            });
        }
        idx.push(id as usize);
    }
    Ok(table.select_rows(&idx))
}

/// Scatter-adds row gradients into the table gradient; repeated ids add up.
pub fn embedding_backward(ids: &[u32], drows: &Tensor, gtable: &mut Tensor) {
    for (r, &id) in ids.iter().enumerate() {
        for (g, &d) in gtable.row_mut(id as usize).iter_mut().zip(drows.row(r)) {
            *g += d;
        }
    }
}

/// Column means of `rows[n, d]` as a `[1, d]` matrix.
pub fn mean_pool(rows: &Tensor) -> Result<Tensor, NnError> {
    let n = rows.rows();
    if n == 0 || rows.is_empty() {
        return Err(NnError::Empty("mean_pool"));
    }
    let mut out = Tensor::zeros(&[1, rows.cols()]);
    for r in 0..n {
        for (o, &v) in out.data_mut().iter_mut().zip(rows.row(r)) {
            *o += v;
        }
    }
    out.scale(1.0 / n as f64);
    Ok(out)
}

pub fn mean_pool_backward(n: usize, dy: &Tensor) -> Tensor {
    let d = dy.cols();
    let mut dx = Tensor::zeros(&[n, d]);
    for r in 0..n {
        for (o, &v) in dx.row_mut(r).iter_mut().zip(dy.data()) {
            *o = v / n as f64;
        }
    }
    dx
}

/// Stable row-wise softmax.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

/// Cross-entropy of one logit row against `target`.
///
/// Returns `(loss, probs)`; the gradient with respect to the logits is
/// `probs - one_hot(target)`.
pub fn softmax_ce(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>), NnError> {
    if target >= logits.len() {
        return Err(NnError::TargetOutOfRange {
            target,
            classes: logits.len(),
        });
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    let probs = logits.iter().map(|&z| (z - lse).exp()).collect();
    Ok(((lse - logits[target]).max(0.0), probs))
}

/// Counts how often [`ce_on_probs`] had to clamp.
#[derive(Debug, Default)]
pub struct ClampCounter(AtomicU64);

impl ClampCounter {
    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }
}

/// `-ln probs[target]` for an already normalized distribution.
///
/// Returns `(loss, d loss / d probs[target])`. Values under [`PROB_FLOOR`]
/// are clamped; the clamped branch is flat, so its gradient is zero.
pub fn ce_on_probs(
    probs: &[f64],
    target: usize,
    clamps: Option<&ClampCounter>,
) -> Result<(f64, f64), NnError> {
    if target >= probs.len() {
        return Err(NnError::TargetOutOfRange {
            target,
            classes: probs.len(),
        });
    }
    let p = probs[target];
    if p < PROB_FLOOR {
        if let Some(c) = clamps {
            c.bump();
        }
        return Ok((-PROB_FLOOR.ln(), 0.0));
    }
    Ok((-p.ln(), -1.0 / p))
}
