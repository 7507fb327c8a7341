//! Mini-batch training with validation-based model selection, the
//! leave-one-domain-out protocol, and the loss-weight grid search.

mod config;
mod grid;
mod lodo;
mod manifest;

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{DataError, Example};
use crate::losses::{loss_all_with_grads, LossBreakdown, LossError};
use crate::model::{ErmParams, InputMode, ModelConfig, ModelError, ModelParams, PredictHead};
use crate::nn::{Adam, ClampCounter, NnError, Parameters, Tensor, PROB_FLOOR};
use crate::seed::{derive_seed, rng, stream};

pub use config::{LrPreset, Method, ModelDims, TrainConfig, LR_PAPER, LR_TOY};
pub use grid::{grid_search, GridCell, GridOutcome, GridReport, DEFAULT_GRID};
pub use lodo::{
    evaluate_folds, leave_one_domain_out, lodo_runs, train_excluding, AccessEvent, AccessLog, FoldRun,
    FoldSummary, LodoReport, Phase,
};
pub use manifest::{sha256_hex, RunManifest};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("example has domain {domain} but the task has {num_domains} domains")]
    Domain { domain: usize, num_domains: usize },
    #[error("non-finite value at step {step}: {term}")]
    NonFinite { step: usize, term: String },
    #[error("leave-one-domain-out needs at least 2 domains, got {0}")]
    TooFewDomains(usize),
    #[error("held-out domain `{domain}` was read during {phase:?}")]
    Leak { domain: String, phase: Phase },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl TrainError {
    /// Numerical failures as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, TrainError::NonFinite { .. })
    }
}

/// Examples plus what the model needs to know about their space.
#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a> {
    pub train: &'a [Example],
    pub validation: &'a [Example],
    /// Training domains; example domains must be `< num_domains`.
    pub num_domains: usize,
    pub vocab_size: usize,
    pub input: InputMode,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    Full(ModelParams),
    Erm(ErmParams),
}

const EVAL_CHUNK: usize = 512;

impl TrainedModel {
    pub fn predict(&self, examples: &[&Example], head: PredictHead) -> Result<Vec<u8>, ModelError> {
        let mut out = Vec::with_capacity(examples.len());
        for chunk in examples.chunks(EVAL_CHUNK) {
            let labels = match self {
                TrainedModel::Full(p) => p.predict(chunk, head)?.0,
                TrainedModel::Erm(p) => p.predict(chunk)?.0,
            };
            out.extend(labels);
        }
        Ok(out)
    }

    /// Fraction of `examples` predicted correctly.
    pub fn accuracy(&self, examples: &[&Example], head: PredictHead) -> Result<f64, ModelError> {
        if examples.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let pred = self.predict(examples, head)?;
        let hit = pred
            .iter()
            .zip(examples)
            .filter(|(p, e)| **p == e.label)
            .count();
        Ok(hit as f64 / examples.len() as f64)
    }

    pub fn checkpoint(&self, cfg: &ModelConfig) -> String {
        match self {
            TrainedModel::Full(p) => p.to_checkpoint(cfg),
            TrainedModel::Erm(p) => p.to_checkpoint(cfg),
        }
    }

    pub fn num_parameters(&self) -> usize {
        match self {
            TrainedModel::Full(p) => p.num_parameters(),
            TrainedModel::Erm(p) => p.num_parameters(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Epoch 0 is the untrained model.
    pub epoch: usize,
    /// Mean `all` over the epoch's steps; for epoch 0, over one pass without updates.
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl History {
    /// `step,joint,specific,classification,backdoor,adjustment,invariant,all`.
    pub fn steps_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["step"];
        header.extend(LossBreakdown::FIELDS);
        w.write_record(&header).expect("in-memory write");
        for s in &self.steps {
            let mut row = vec![s.step.to_string()];
            row.extend(s.loss.values().iter().map(|v| format!("{v:?}")));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn epochs_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "train_loss", "val_accuracy"])
            .expect("in-memory write");
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{:?}", e.train_loss),
                format!("{:?}", e.val_accuracy),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub model_config: ModelConfig,
    pub model: TrainedModel,
    pub head: PredictHead,
    pub history: History,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Times `ce_on_probs` clamped a vanishing probability.
    pub clamp_count: u64,
    /// Not part of any serialized report.
    pub wall_seconds: f64,
}

impl RunResult {
    pub fn checkpoint(&self) -> String {
        self.model.checkpoint(&self.model_config)
    }

    pub fn best_train_loss(&self) -> f64 {
        self.history.epochs[self.best_epoch].train_loss
    }

    pub fn initial_train_loss(&self) -> f64 {
        self.history.epochs[0].train_loss
    }
}

/// Per-domain mean risks present in the batch, their population variance,
/// and the variance's gradient with respect to each example's loss.
pub fn risk_variance(per_example: &[f64], domains: &[usize]) -> (f64, Vec<f64>) {
    let k_max = domains.iter().copied().max().map_or(0, |d| d + 1);
    let mut sum = vec![0.0; k_max];
    let mut count = vec![0usize; k_max];
    for (&l, &d) in per_example.iter().zip(domains) {
        sum[d] += l;
        count[d] += 1;
    }
    let present: Vec<usize> = (0..k_max).filter(|&d| count[d] > 0).collect();
    let k = present.len() as f64;
    if present.is_empty() {
        return (0.0, vec![0.0; per_example.len()]);
    }
    let risk: Vec<f64> = (0..k_max)
        .map(|d| if count[d] > 0 { sum[d] / count[d] as f64 } else { 0.0 })
        .collect();
    let m = present.iter().map(|&d| risk[d]).sum::<f64>() / k;
    let var = present.iter().map(|&d| (risk[d] - m).powi(2)).sum::<f64>() / k;
    let grad = domains
        .iter()
        .map(|&d| 2.0 / k * (risk[d] - m) / count[d] as f64)
        .collect();
    (var, grad)
}

fn erm_step(
    p: &ErmParams,
    batch: &[&Example],
    lambda: f64,
) -> Result<(LossBreakdown, ErmParams), TrainError> {
    let (probs, cache) = p.forward(batch)?;
    let n = batch.len() as f64;
    let per: Vec<f64> = batch
        .iter()
        .enumerate()
        .map(|(i, e)| -probs.get(i, e.label as usize).max(PROB_FLOOR).ln())
        .collect();
    let ce = per.iter().sum::<f64>() / n;
    let domains: Vec<usize> = batch.iter().map(|e| e.domain).collect();
    let (var, dvar) = risk_variance(&per, &domains);
    let mut dl = Tensor::zeros(probs.shape());
    for (i, e) in batch.iter().enumerate() {
        let scale = 1.0 / n + lambda * dvar[i];
        let row = dl.row_mut(i);
        for (k, v) in row.iter_mut().enumerate() {
            let target = if k == e.label as usize { 1.0 } else { 0.0 };
            *v = (probs.get(i, k) - target) * scale;
        }
    }
    let grads = p.backward(batch, &cache, &dl);
    let loss = LossBreakdown {
        classification: ce,
        all: ce + lambda * var,
        ..Default::default()
    };
    Ok((loss, grads))
}

fn full_step(
    p: &ModelParams,
    batch: &[&Example],
    cfg: &TrainConfig,
    clamps: &ClampCounter,
) -> Result<(LossBreakdown, ModelParams), TrainError> {
    let (out, cache) = p.forward(batch)?;
    let labels: Vec<u8> = batch.iter().map(|e| e.label).collect();
    let domains: Vec<usize> = batch.iter().map(|e| e.domain).collect();
    let (loss, og) = loss_all_with_grads(&out, &labels, &domains, &cfg.loss, Some(clamps))?;
    Ok((loss, p.backward(batch, &out, &cache, &og)))
}

fn loss_only(
    model: &TrainedModel,
    batch: &[&Example],
    cfg: &TrainConfig,
    clamps: &ClampCounter,
) -> Result<f64, TrainError> {
    Ok(match model {
        TrainedModel::Full(p) => full_step(p, batch, cfg, clamps)?.0.all,
        TrainedModel::Erm(p) => erm_step(p, batch, lambda_of(cfg))?.0.all,
    })
}

fn lambda_of(cfg: &TrainConfig) -> f64 {
    match cfg.method {
        Method::VariancePenalty => cfg.penalty_lambda,
        _ => 0.0,
    }
}

fn check_domains(set: &[Example], num_domains: usize) -> Result<(), TrainError> {
    if let Some(e) = set.iter().find(|e| e.domain >= num_domains) {
        return Err(TrainError::Domain {
            domain: e.domain,
            num_domains,
        });
    }
    Ok(())
}

fn nn_to_train(e: NnError, step: usize) -> TrainError {
    match e {
        NnError::NonFiniteGradient(name) => TrainError::NonFinite {
            step,
            term: format!("gradient of `{name}`"),
        },
        other => TrainError::Model(other.into()),
    }
}

/// Trains one model and returns it at its best validation epoch.
pub fn train(cfg: &TrainConfig, data: TrainData<'_>) -> Result<RunResult, TrainError> {
    cfg.validate().map_err(TrainError::Config)?;
    if data.train.is_empty() {
        return Err(TrainError::EmptySet("training"));
    }
    if data.validation.is_empty() {
        return Err(TrainError::EmptySet("validation"));
    }
    check_domains(data.train, data.num_domains)?;
    check_domains(data.validation, data.num_domains)?;

    let start = Instant::now();
    let model_config = cfg.model_config(data.vocab_size, data.num_domains, data.input, cfg.seed);
    let mut model = match cfg.method {
        Method::Full => TrainedModel::Full(ModelParams::init(&model_config)?),
        Method::Erm | Method::VariancePenalty => TrainedModel::Erm(ErmParams::init(&model_config)?),
    };
    let mut opt = match &model {
        TrainedModel::Full(p) => Adam::new(p),
        TrainedModel::Erm(p) => Adam::new(p),
    };
    let head = cfg.head();
    let lr = cfg.effective_lr();
    let lambda = lambda_of(cfg);
    let clamps = ClampCounter::default();
    let mut shuffle = rng(derive_seed(cfg.seed, stream::SHUFFLE));
    let val: Vec<&Example> = data.validation.iter().collect();
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    let mut history = History::default();
    let initial_loss = {
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data.train[i]).collect();
            total += loss_only(&model, &batch, cfg, &clamps)?;
            batches += 1;
        }
        total / batches as f64
    };
    let val0 = model.accuracy(&val, head)?;
    history.epochs.push(EpochRecord {
        epoch: 0,
        train_loss: initial_loss,
        val_accuracy: val0,
    });
    let mut best = (0usize, val0, model.clone());

    let mut step = 0usize;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data.train[i]).collect();
            let loss = match &mut model {
                TrainedModel::Full(p) => {
                    let (loss, g) = full_step(p, &batch, cfg, &clamps)?;
                    check_loss(&loss, step)?;
                    opt.step(p, &g, lr).map_err(|e| nn_to_train(e, step))?;
                    loss
                }
                TrainedModel::Erm(p) => {
                    let (loss, g) = erm_step(p, &batch, lambda)?;
                    check_loss(&loss, step)?;
                    opt.step(p, &g, lr).map_err(|e| nn_to_train(e, step))?;
                    loss
                }
            };
            total += loss.all;
            batches += 1;
            history.steps.push(StepRecord { step, epoch, loss });
            step += 1;
        }
        let acc = model.accuracy(&val, head)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: total / batches as f64,
            val_accuracy: acc,
        });
        if acc > best.1 {
            best = (epoch, acc, model.clone());
        } else if cfg.patience > 0 && epoch - best.0 >= cfg.patience {
            break;
        }
    }

    Ok(RunResult {
        model_config,
        model: best.2,
        head,
        history,
        best_epoch: best.0,
        best_val_accuracy: best.1,
        test_accuracy: None,
        clamp_count: clamps.get(),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn check_loss(loss: &LossBreakdown, step: usize) -> Result<(), TrainError> {
    match loss.first_non_finite() {
        Some(term) => Err(TrainError::NonFinite {
            step,
            term: format!("loss term `{term}`"),
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests;
