use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, RunResult, TrainConfig, TrainData, TrainError};
use crate::datagen::{split, DatasetBundle, Example};
use crate::model::InputMode;
use crate::seed::{derive_seed, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Training and validation examples, split after the read.
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessEvent {
    pub phase: Phase,
    pub domain: usize,
    pub examples: usize,
}

/// Ordered record of which domain's examples were handed to which phase.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessLog {
    pub events: Vec<AccessEvent>,
}

impl AccessLog {
    fn read<'a>(&mut self, bundle: &'a DatasetBundle, domain: usize, phase: Phase) -> &'a [Example] {
        let ex = &bundle.examples[domain];
        self.events.push(AccessEvent {
            phase,
            domain,
            examples: ex.len(),
        });
        ex
    }

    /// Reads of `domain` in any phase other than `Test`.
    pub fn non_test_reads(&self, domain: usize) -> usize {
        self.events
            .iter()
            .filter(|e| e.domain == domain && e.phase != Phase::Test)
            .count()
    }
}

/// One trained fold, before its held-out domain has been touched.
#[derive(Clone, Debug)]
pub struct FoldRun {
    pub held_out: usize,
    /// Original indices of the training domains, in model domain order.
    pub train_domains: Vec<usize>,
    pub run: RunResult,
    pub log: AccessLog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub held_out: String,
    pub test_accuracy: f64,
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub initial_train_loss: f64,
    pub best_train_loss: f64,
    pub held_out_reads_before_test: usize,
    pub clamp_count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LodoReport {
    pub label: String,
    pub domains: Vec<String>,
    /// Test accuracy with each domain held out, in domain order.
    pub per_domain: Vec<f64>,
    pub average: f64,
    /// Mean best validation accuracy over folds.
    pub mean_val_accuracy: f64,
    pub folds: Vec<FoldSummary>,
}

impl LodoReport {
    pub fn render(&self) -> String {
        let width = self.domains.iter().map(String::len).max().unwrap_or(0).max(8);
        let mut out = format!("{:<16}", "method");
        for d in &self.domains {
            out.push_str(&format!(" {:>width$}", d));
        }
        out.push_str(&format!(" {:>width$}\n", "Avg"));
        out.push_str(&format!("{:<16}", self.label));
        for a in &self.per_domain {
            out.push_str(&format!(" {:>width$.2}", 100.0 * a));
        }
        out.push_str(&format!(" {:>width$.2}\n", 100.0 * self.average));
        out
    }
}

fn fold_input(bundle: &DatasetBundle) -> InputMode {
    match bundle.iter().find_map(|e| e.features.as_ref()) {
        Some(f) => InputMode::Features { dim: f.len() },
        None => InputMode::Tokens,
    }
}

fn run_fold(cfg: &TrainConfig, bundle: &DatasetBundle, held_out: usize) -> Result<FoldRun, TrainError> {
    let mut log = AccessLog::default();
    let train_domains: Vec<usize> = (0..bundle.num_domains()).filter(|&d| d != held_out).collect();
    let fold_seed = derive_seed(cfg.seed, stream::FOLD + held_out as u64);
    let run = fit(cfg, bundle, &train_domains, fold_seed, &mut log)?;
    Ok(FoldRun {
        held_out,
        train_domains,
        run,
        log,
    })
}

/// Trains on every domain except `held_out`, or on all of them. With a
/// held-out domain the run is identical to that fold of
/// [`leave_one_domain_out`]. Returns the training domains in model order.
pub fn train_excluding(
    cfg: &TrainConfig,
    bundle: &DatasetBundle,
    held_out: Option<usize>,
) -> Result<(Vec<usize>, RunResult), TrainError> {
    if let Some(h) = held_out.filter(|&h| h >= bundle.num_domains()) {
        return Err(TrainError::Domain {
            domain: h,
            num_domains: bundle.num_domains(),
        });
    }
    match held_out {
        Some(h) => run_fold(cfg, bundle, h).map(|f| (f.train_domains, f.run)),
        None => {
            let all: Vec<usize> = (0..bundle.num_domains()).collect();
            let run = fit(cfg, bundle, &all, cfg.seed, &mut AccessLog::default())?;
            Ok((all, run))
        }
    }
}

fn fit(
    cfg: &TrainConfig,
    bundle: &DatasetBundle,
    train_domains: &[usize],
    run_seed: u64,
    log: &mut AccessLog,
) -> Result<RunResult, TrainError> {
    let sub = DatasetBundle {
        domains: train_domains.iter().map(|&d| bundle.domains[d].clone()).collect(),
        examples: train_domains
            .iter()
            .enumerate()
            .map(|(local, &d)| {
                log.read(bundle, d, Phase::Train)
                    .iter()
                    .map(|e| Example {
                        domain: local,
                        ..e.clone()
                    })
                    .collect()
            })
            .collect(),
        vocab: bundle.vocab.clone(),
        config: None,
    };
    let parts = split(&sub, cfg.train_frac, derive_seed(run_seed, stream::SPLIT))?;
    let train_set: Vec<Example> = parts.iter().flat_map(|p| p.train.iter().cloned()).collect();
    let val_set: Vec<Example> = parts.iter().flat_map(|p| p.validation.iter().cloned()).collect();
    let run_cfg = TrainConfig {
        seed: run_seed,
        ..cfg.clone()
    };
    train(
        &run_cfg,
        TrainData {
            train: &train_set,
            validation: &val_set,
            num_domains: train_domains.len(),
            vocab_size: bundle.vocab.len(),
            input: fold_input(bundle),
        },
    )
}

/// Trains every fold without reading any held-out domain.
pub fn lodo_runs(cfg: &TrainConfig, bundle: &DatasetBundle) -> Result<Vec<FoldRun>, TrainError> {
    let n = bundle.num_domains();
    if n < 2 {
        return Err(TrainError::TooFewDomains(n));
    }
    (0..n)
        .into_par_iter()
        .map(|h| run_fold(cfg, bundle, h))
        .collect()
}

/// Scores each fold on its held-out domain. Fails if a held-out domain was
/// read before this point.
pub fn evaluate_folds(
    label: &str,
    bundle: &DatasetBundle,
    folds: &mut [FoldRun],
) -> Result<LodoReport, TrainError> {
    let mut per_domain = vec![0.0; bundle.num_domains()];
    let mut summaries = Vec::with_capacity(folds.len());
    for f in folds.iter_mut() {
        let leaked = f.log.non_test_reads(f.held_out);
        if leaked > 0 {
            let phase = f
                .log
                .events
                .iter()
                .find(|e| e.domain == f.held_out)
                .map(|e| e.phase)
                .unwrap_or(Phase::Train);
            return Err(TrainError::Leak {
                domain: bundle.domains[f.held_out].clone(),
                phase,
            });
        }
        let test: Vec<&Example> = f.log.read(bundle, f.held_out, Phase::Test).iter().collect();
        let acc = f.run.model.accuracy(&test, f.run.head)?;
        f.run.test_accuracy = Some(acc);
        per_domain[f.held_out] = acc;
        summaries.push(FoldSummary {
            held_out: bundle.domains[f.held_out].clone(),
            test_accuracy: acc,
            best_val_accuracy: f.run.best_val_accuracy,
            best_epoch: f.run.best_epoch,
            epochs_run: f.run.history.epochs.len() - 1,
            initial_train_loss: f.run.initial_train_loss(),
            best_train_loss: f.run.best_train_loss(),
            held_out_reads_before_test: leaked,
            clamp_count: f.run.clamp_count,
        });
    }
    let n = folds.len().max(1) as f64;
    Ok(LodoReport {
        label: label.to_string(),
        domains: bundle.domains.clone(),
        average: per_domain.iter().sum::<f64>() / per_domain.len() as f64,
        per_domain,
        mean_val_accuracy: folds.iter().map(|f| f.run.best_val_accuracy).sum::<f64>() / n,
        folds: summaries,
    })
}

/// One training run per held-out domain and the resulting accuracy table.
pub fn leave_one_domain_out(
    cfg: &TrainConfig,
    bundle: &DatasetBundle,
) -> Result<(LodoReport, Vec<FoldRun>), TrainError> {
    let mut folds = lodo_runs(cfg, bundle)?;
    let report = evaluate_folds(&cfg.label(), bundle, &mut folds)?;
    Ok((report, folds))
}
