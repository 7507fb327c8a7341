//! Loss terms of the disentangled objective, each with its gradient at the
//! model outputs, and their weighted composition.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ForwardOut, OutputGrads};
use crate::nn::{ce_on_probs, ClampCounter, NnError, Tensor, PROB_FLOOR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("batch has {outputs} outputs but {targets} targets")]
    BatchMismatch { outputs: usize, targets: usize },
    #[error("label target: {0}")]
    Label(NnError),
    #[error("domain target: {0}")]
    Domain(NnError),
    #[error("invalid loss weights: {0}")]
    Weights(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    /// Off: backdoor and adjustment terms are dropped (alpha = beta = 0).
    #[serde(default = "yes")]
    pub enable_invariant: bool,
    /// Off: joint and specific terms are dropped.
    #[serde(default = "yes")]
    pub enable_specific: bool,
    /// Off: the plain classification term is dropped as well.
    #[serde(default = "yes")]
    pub keep_classification: bool,
    /// Square per example and average, instead of squaring batch means.
    #[serde(default)]
    pub per_example_adjustment: bool,
}

fn yes() -> bool {
    true
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::full(1.0, 1.0)
    }
}

impl LossWeights {
    pub fn full(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            enable_invariant: true,
            enable_specific: true,
            keep_classification: true,
            per_example_adjustment: false,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(LossError::Weights(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// `(classification, alpha, beta)` after applying the flags.
    pub fn effective(&self) -> (f64, f64, f64) {
        let c = if self.keep_classification { 1.0 } else { 0.0 };
        if self.enable_invariant {
            (c, self.alpha, self.beta)
        } else {
            (c, 0.0, 0.0)
        }
    }
}

/// Batch-mean values of every term. `invariant` and `all` reflect the weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub joint: f64,
    pub specific: f64,
    pub classification: f64,
    pub backdoor: f64,
    pub adjustment: f64,
    pub invariant: f64,
    pub all: f64,
}

impl LossBreakdown {
    pub const FIELDS: [&'static str; 7] = [
        "joint",
        "specific",
        "classification",
        "backdoor",
        "adjustment",
        "invariant",
        "all",
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.joint,
            self.specific,
            self.classification,
            self.backdoor,
            self.adjustment,
            self.invariant,
            self.all,
        ]
    }

    /// Name of the first non-finite term, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        Self::FIELDS
            .iter()
            .zip(self.values())
            .find(|(_, v)| !v.is_finite())
            .map(|(n, _)| *n)
    }
}

/// Per-example CE losses of probability rows and the gradient of their mean
/// with respect to the logits that produced them.
fn softmax_term(probs: &Tensor, targets: &[usize]) -> Result<(Vec<f64>, Tensor), NnError> {
    let n = targets.len();
    let mut per = Vec::with_capacity(n);
    let mut grad = probs.clone();
    for (i, &t) in targets.iter().enumerate() {
        let row = probs.row(i);
        if t >= row.len() {
            return Err(NnError::TargetOutOfRange {
                target: t,
                classes: row.len(),
            });
        }
        per.push(-row[t].max(PROB_FLOOR).ln());
        let g = grad.row_mut(i);
        g[t] -= 1.0;
        g.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok((per, grad))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn check_len(out: &ForwardOut, n: usize) -> Result<(), LossError> {
    if out.m_inv.rows() != n {
        return Err(LossError::BatchMismatch {
            outputs: out.m_inv.rows(),
            targets: n,
        });
    }
    Ok(())
}

fn as_targets(labels: &[u8]) -> Vec<usize> {
    labels.iter().map(|&y| y as usize).collect()
}

/// `CE(f_joint(m_inv + m_spc), y)`, batch mean.
pub fn loss_joint(out: &ForwardOut, labels: &[u8]) -> Result<f64, LossError> {
    check_len(out, labels.len())?;
    let (per, _) = softmax_term(&out.probs_joint, &as_targets(labels)).map_err(LossError::Label)?;
    Ok(mean(&per))
}

/// `CE(f_specific(m_spc), d)`, batch mean.
pub fn loss_specific(out: &ForwardOut, domains: &[usize]) -> Result<f64, LossError> {
    check_len(out, domains.len())?;
    let (per, _) = softmax_term(&out.probs_specific, domains).map_err(LossError::Domain)?;
    Ok(mean(&per))
}

/// `CE(f_classification(m_inv), y)`, batch mean.
pub fn loss_classification(out: &ForwardOut, labels: &[u8]) -> Result<f64, LossError> {
    check_len(out, labels.len())?;
    let (per, _) =
        softmax_term(&out.probs_classification, &as_targets(labels)).map_err(LossError::Label)?;
    Ok(mean(&per))
}

/// CE of the domain-averaged backdoor mixture, batch mean.
pub fn loss_backdoor(out: &ForwardOut, labels: &[u8]) -> Result<f64, LossError> {
    check_len(out, labels.len())?;
    Ok(mean(&backdoor_term(out, labels, None)?.0))
}

/// `(L_classification - L_backdoor)^2` on batch means.
pub fn loss_adjustment(out: &ForwardOut, labels: &[u8]) -> Result<f64, LossError> {
    let d = loss_classification(out, labels)? - loss_backdoor(out, labels)?;
    Ok(d * d)
}

/// `L_classification + alpha L_backdoor + beta L_adjustment` under `w`'s flags.
pub fn loss_invariant(out: &ForwardOut, labels: &[u8], w: &LossWeights) -> Result<f64, LossError> {
    w.validate()?;
    let (c, a, b) = w.effective();
    let adj = if w.per_example_adjustment {
        let (lc, _) = softmax_term(&out.probs_classification, &as_targets(labels))
            .map_err(LossError::Label)?;
        let (lb, _) = backdoor_term(out, labels, None)?;
        mean(&lc.iter().zip(&lb).map(|(x, y)| (x - y) * (x - y)).collect::<Vec<_>>())
    } else {
        loss_adjustment(out, labels)?
    };
    Ok(c * loss_classification(out, labels)? + a * loss_backdoor(out, labels)? + b * adj)
}

/// Per-example backdoor CE and `d(per_i)/d(mixture_i)` (not divided by n).
fn backdoor_term(
    out: &ForwardOut,
    labels: &[u8],
    clamps: Option<&ClampCounter>,
) -> Result<(Vec<f64>, Tensor), LossError> {
    let mix = &out.probs_backdoor_mixture;
    let mut per = Vec::with_capacity(labels.len());
    let mut grad = Tensor::zeros(mix.shape());
    for (i, &y) in labels.iter().enumerate() {
        let (l, g) = ce_on_probs(mix.row(i), y as usize, clamps).map_err(LossError::Label)?;
        per.push(l);
        grad.row_mut(i)[y as usize] = g;
    }
    Ok((per, grad))
}

pub fn loss_all(
    out: &ForwardOut,
    labels: &[u8],
    domains: &[usize],
    w: &LossWeights,
) -> Result<LossBreakdown, LossError> {
    Ok(loss_all_with_grads(out, labels, domains, w, None)?.0)
}

/// All terms plus the gradient of `all` with respect to the model outputs.
/// Disabled terms still report their values but contribute zero gradient.
pub fn loss_all_with_grads(
    out: &ForwardOut,
    labels: &[u8],
    domains: &[usize],
    w: &LossWeights,
    clamps: Option<&ClampCounter>,
) -> Result<(LossBreakdown, OutputGrads), LossError> {
    w.validate()?;
    let n = labels.len();
    check_len(out, n)?;
    check_len(out, domains.len())?;
    let targets = as_targets(labels);

    let (joint_per, joint_g) = softmax_term(&out.probs_joint, &targets).map_err(LossError::Label)?;
    let (spec_per, spec_g) = softmax_term(&out.probs_specific, domains).map_err(LossError::Domain)?;
    let (cls_per, cls_g) =
        softmax_term(&out.probs_classification, &targets).map_err(LossError::Label)?;
    let (back_per, back_g) = backdoor_term(out, labels, clamps)?;

    let joint = mean(&joint_per);
    let specific = mean(&spec_per);
    let classification = mean(&cls_per);
    let backdoor = mean(&back_per);
    let nf = n as f64;

    let (c, a, b) = w.effective();
    // d(all)/d(cls logits) = k_cls * cls_g ; d(all)/d(mix) = k_back * back_g / n,
    // with per-example scalings when the adjustment is squared per example
    let mut cls_scale = vec![c; n];
    let mut back_scale = vec![a; n];
    let adjustment = if w.per_example_adjustment {
        let mut acc = 0.0;
        for i in 0..n {
            let d = cls_per[i] - back_per[i];
            acc += d * d;
            cls_scale[i] += b * 2.0 * d;
            back_scale[i] -= b * 2.0 * d;
        }
        acc / nf
    } else {
        let d = classification - backdoor;
        for i in 0..n {
            cls_scale[i] += b * 2.0 * d;
            back_scale[i] -= b * 2.0 * d;
        }
        d * d
    };
    let invariant = c * classification + a * backdoor + b * adjustment;
    let s = if w.enable_specific { 1.0 } else { 0.0 };
    let all = invariant + s * (joint + specific);

    let mut classification_logits = cls_g;
    for (i, &k) in cls_scale.iter().enumerate() {
        classification_logits.row_mut(i).iter_mut().for_each(|v| *v *= k);
    }
    let mut backdoor_mixture = back_g;
    for (i, &k) in back_scale.iter().enumerate() {
        backdoor_mixture
            .row_mut(i)
            .iter_mut()
            .for_each(|v| *v *= k / nf);
    }
    let mut joint_logits = joint_g;
    let mut specific_logits = spec_g;
    joint_logits.scale(s);
    specific_logits.scale(s);

    Ok((
        LossBreakdown {
            joint,
            specific,
            classification,
            backdoor,
            adjustment,
            invariant,
            all,
        },
        OutputGrads {
            classification_logits,
            joint_logits,
            specific_logits,
            backdoor_mixture,
        },
    ))
}
