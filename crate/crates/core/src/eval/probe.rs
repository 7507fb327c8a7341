use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::nn::{linear, linear_backward, softmax_rows, Adam, Parameters, Tensor};
use crate::seed::{derive_seed, rng, stream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub train_frac: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-2,
            train_frac: 0.8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Probe {
    w: Tensor,
    b: Tensor,
}

impl Parameters for Probe {
    fn named(&self) -> Vec<(String, &Tensor)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }

    fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("w".into(), &mut self.w), ("b".into(), &mut self.b)]
    }
}

/// Accuracy of a fresh linear classifier predicting `targets` from frozen
/// `reps`, trained full-batch with Adam on a random `train_frac` of rows
/// and scored on the rest.
pub fn linear_probe(reps: &Tensor, targets: &[usize], cfg: &ProbeConfig) -> Result<f64, EvalError> {
    let n = reps.rows();
    if n != targets.len() {
        return Err(EvalError::Shape(format!("{n} representations but {} targets", targets.len())));
    }
    let classes = targets.iter().copied().max().map_or(0, |m| m + 1);
    if classes < 2 {
        return Err(EvalError::DegenerateProbe);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(derive_seed(cfg.seed, stream::PROBE)));
    let cut = ((cfg.train_frac * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
    if cut == 0 || cut >= n {
        return Err(EvalError::Shape(format!("{n} rows cannot be split for a probe")));
    }
    let (tr, te) = order.split_at(cut);
    let x = reps.select_rows(tr);
    let y: Vec<usize> = tr.iter().map(|&i| targets[i]).collect();

    let mut probe = Probe {
        w: Tensor::zeros(&[reps.cols(), classes]),
        b: Tensor::zeros(&[classes]),
    };
    let mut opt = Adam::new(&probe);
    let m = tr.len() as f64;
    for _ in 0..cfg.epochs {
        let p = softmax_rows(&linear(&x, &probe.w, &probe.b)?);
        let mut dl = p;
        for (i, &t) in y.iter().enumerate() {
            dl.row_mut(i)[t] -= 1.0;
        }
        dl.scale(1.0 / m);
        let mut g = probe.zeros_like();
        linear_backward(&x, &probe.w, &dl, &mut g.w, &mut g.b);
        opt.step(&mut probe, &g, cfg.lr)?;
    }

    let xt = reps.select_rows(te);
    let logits = linear(&xt, &probe.w, &probe.b)?;
    let hit = te
        .iter()
        .enumerate()
        .filter(|(r, &i)| {
            let row = logits.row(*r);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best == targets[i]
        })
        .count();
    Ok(hit as f64 / te.len() as f64)
}

/// Probe for domain identity.
pub fn domain_probe(reps: &Tensor, domains: &[usize], cfg: &ProbeConfig) -> Result<f64, EvalError> {
    linear_probe(reps, domains, cfg)
}
