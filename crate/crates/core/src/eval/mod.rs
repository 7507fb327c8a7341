//! Metrics, baselines, representation probes and report tables.

mod export;
mod probe;
#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{DatasetBundle, Example};
use crate::losses::LossWeights;
use crate::model::{ModelError, PredictHead};
use crate::nn::NnError;
use crate::training::{
    evaluate_folds, lodo_runs, FoldRun, LodoReport, Method, TrainConfig, TrainError, TrainedModel,
};

pub use export::{export_representations, pca_2d, representations, representations_csv, REP_KINDS};
pub use probe::{domain_probe, linear_probe, ProbeConfig};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{0}")]
    Shape(String),
    #[error("probe targets take a single value; nothing to discriminate")]
    DegenerateProbe,
    #[error("{method} needs at least {needed} domains, got {got}")]
    TooFewDomains {
        method: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("no runs to summarize")]
    NoRuns,
    #[error("probes need a disentangled model")]
    NotDisentangled,
    #[error("csv: {0}")]
    Csv(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<csv::Error> for EvalError {
    fn from(e: csv::Error) -> Self {
        EvalError::Csv(e.to_string())
    }
}

impl EvalError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, EvalError::Train(e) if e.is_numerical())
    }
}

pub fn accuracy(model: &TrainedModel, test: &[&Example], head: PredictHead) -> Result<f64, EvalError> {
    let predicted = model.predict(test, head)?;
    fraction_correct(&predicted, test)
}

/// Share of `predicted` labels matching `examples`.
pub fn fraction_correct(predicted: &[u8], examples: &[&Example]) -> Result<f64, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::Model(ModelError::EmptyBatch));
    }
    if predicted.len() != examples.len() {
        return Err(EvalError::Shape(format!(
            "{} predictions for {} examples",
            predicted.len(),
            examples.len()
        )));
    }
    let hit = predicted.iter().zip(examples).filter(|(p, e)| **p == e.label).count();
    Ok(hit as f64 / examples.len() as f64)
}

/// Leave-one-domain-out with the encoder and a single linear head.
pub fn erm_baseline(cfg: &TrainConfig, bundle: &DatasetBundle) -> Result<LodoReport, EvalError> {
    run_method(&MethodSpec::Erm.config(cfg), bundle)
}

/// Leave-one-domain-out with ERM plus `lambda` times the variance of the
/// per-domain risks.
pub fn variance_penalty_baseline(
    cfg: &TrainConfig,
    bundle: &DatasetBundle,
    lambda: f64,
) -> Result<LodoReport, EvalError> {
    if bundle.num_domains() < 3 {
        return Err(EvalError::TooFewDomains {
            method: "variance penalty",
            needed: 3,
            got: bundle.num_domains(),
        });
    }
    run_method(&MethodSpec::VariancePenalty { lambda }.config(cfg), bundle)
}

fn run_method(cfg: &TrainConfig, bundle: &DatasetBundle) -> Result<LodoReport, EvalError> {
    let mut folds = lodo_runs(cfg, bundle)?;
    Ok(evaluate_folds(&cfg.label(), bundle, &mut folds)?)
}

/// A row of the comparison table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MethodSpec {
    Full { alpha: f64, beta: f64 },
    Erm,
    VariancePenalty { lambda: f64 },
    WithoutInvariant { alpha: f64, beta: f64 },
    WithoutSpecific { alpha: f64, beta: f64 },
    WithoutBoth,
}

impl MethodSpec {
    /// The standard table: ours, both baselines and the three ablations.
    pub fn table(alpha: f64, beta: f64, lambda: f64) -> Vec<MethodSpec> {
        vec![
            MethodSpec::Full { alpha, beta },
            MethodSpec::Erm,
            MethodSpec::VariancePenalty { lambda },
            MethodSpec::WithoutInvariant { alpha, beta },
            MethodSpec::WithoutSpecific { alpha, beta },
            MethodSpec::WithoutBoth,
        ]
    }

    pub fn config(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        let weights = |alpha, beta, inv, spc| LossWeights {
            enable_invariant: inv,
            enable_specific: spc,
            ..LossWeights::full(alpha, beta)
        };
        match *self {
            MethodSpec::Full { alpha, beta } => {
                cfg.method = Method::Full;
                cfg.loss = weights(alpha, beta, true, true);
            }
            MethodSpec::Erm => cfg.method = Method::Erm,
            MethodSpec::VariancePenalty { lambda } => {
                cfg.method = Method::VariancePenalty;
                cfg.penalty_lambda = lambda;
            }
            MethodSpec::WithoutInvariant { alpha, beta } => {
                cfg.method = Method::Full;
                cfg.loss = weights(alpha, beta, false, true);
            }
            MethodSpec::WithoutSpecific { alpha, beta } => {
                cfg.method = Method::Full;
                cfg.loss = weights(alpha, beta, true, false);
            }
            MethodSpec::WithoutBoth => {
                cfg.method = Method::Full;
                cfg.loss = weights(1.0, 1.0, false, false);
            }
        }
        cfg
    }
}

/// Probe accuracies on frozen representations of one trained model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeScores {
    pub domain_on_inv: f64,
    pub domain_on_spc: f64,
    pub sentiment_on_inv: f64,
}

impl ProbeScores {
    pub fn gap(&self) -> f64 {
        self.domain_on_spc - self.domain_on_inv
    }
}

/// Probes a fold's model on the examples of its training domains.
pub fn probe_fold(fold: &FoldRun, bundle: &DatasetBundle, cfg: &ProbeConfig) -> Result<ProbeScores, EvalError> {
    let TrainedModel::Full(params) = &fold.run.model else {
        return Err(EvalError::NotDisentangled);
    };
    let mut examples = Vec::new();
    let mut domains = Vec::new();
    for (local, &d) in fold.train_domains.iter().enumerate() {
        for e in &bundle.examples[d] {
            examples.push(e);
            domains.push(local);
        }
    }
    let labels: Vec<usize> = examples.iter().map(|e| e.label as usize).collect();
    let reps = representations(params, &examples)?;
    let (m_inv, m_spc) = (&reps[1], &reps[2]);
    Ok(ProbeScores {
        domain_on_inv: domain_probe(m_inv, &domains, cfg)?,
        domain_on_spc: domain_probe(m_spc, &domains, cfg)?,
        sentiment_on_inv: linear_probe(m_inv, &labels, cfg)?,
    })
}

/// Fold-averaged probe scores.
pub fn probe_folds(folds: &[FoldRun], bundle: &DatasetBundle, cfg: &ProbeConfig) -> Result<ProbeScores, EvalError> {
    if folds.is_empty() {
        return Err(EvalError::NoRuns);
    }
    let all = folds
        .iter()
        .map(|f| probe_fold(f, bundle, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let n = all.len() as f64;
    Ok(ProbeScores {
        domain_on_inv: all.iter().map(|p| p.domain_on_inv).sum::<f64>() / n,
        domain_on_spc: all.iter().map(|p| p.domain_on_spc).sum::<f64>() / n,
        sentiment_on_inv: all.iter().map(|p| p.sentiment_on_inv).sum::<f64>() / n,
    })
}

/// Every method's table row for one seed, plus probes of the first full
/// model when `probe` is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub reports: Vec<LodoReport>,
    pub probes: Option<ProbeScores>,
}

pub fn evaluate_seed(
    base: &TrainConfig,
    methods: &[MethodSpec],
    bundle: &DatasetBundle,
    probe: Option<&ProbeConfig>,
) -> Result<SeedResult, EvalError> {
    let mut reports = Vec::with_capacity(methods.len());
    let mut probes = None;
    for m in methods {
        if matches!(m, MethodSpec::VariancePenalty { .. }) && bundle.num_domains() < 3 {
            return Err(EvalError::TooFewDomains {
                method: "variance penalty",
                needed: 3,
                got: bundle.num_domains(),
            });
        }
        let cfg = m.config(base);
        let mut folds = lodo_runs(&cfg, bundle)?;
        reports.push(evaluate_folds(&cfg.label(), bundle, &mut folds)?);
        if let (Some(pc), None, MethodSpec::Full { .. }) = (probe, probes, m) {
            let pc = ProbeConfig {
                seed: base.seed,
                ..*pc
            };
            probes = Some(probe_folds(&folds, bundle, &pc)?);
        }
    }
    Ok(SeedResult {
        seed: base.seed,
        reports,
        probes,
    })
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Standard deviation uses `n - 1`; a single value has zero spread.
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Stat { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub label: String,
    /// Mean over seeds of each held-out domain's accuracy.
    pub per_domain: Vec<Stat>,
    pub average: Stat,
    pub seed_averages: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub domain_on_inv: Stat,
    pub domain_on_spc: Stat,
    pub sentiment_on_inv: Stat,
    /// Per-seed `domain_on_spc - domain_on_inv`.
    pub gap: Stat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub domains: Vec<String>,
    pub seeds: Vec<u64>,
    pub rows: Vec<MethodRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probes: Option<ProbeSummary>,
    /// Path of a representation dump, when one was written.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub representations: Option<String>,
}

impl EvalReport {
    /// Aggregates seeds that ran the same methods in the same order.
    pub fn aggregate(results: &[SeedResult]) -> Result<EvalReport, EvalError> {
        let first = results.first().ok_or(EvalError::NoRuns)?;
        let domains = first.reports.first().ok_or(EvalError::NoRuns)?.domains.clone();
        let mut rows = Vec::new();
        for (i, head) in first.reports.iter().enumerate() {
            let reps: Vec<&LodoReport> = results
                .iter()
                .map(|r| {
                    r.reports
                        .get(i)
                        .filter(|x| x.label == head.label)
                        .ok_or_else(|| EvalError::Shape(format!("seed {} lacks row {}", r.seed, head.label)))
                })
                .collect::<Result<_, _>>()?;
            let per_domain = (0..domains.len())
                .map(|d| Stat::of(&reps.iter().map(|r| r.per_domain[d]).collect::<Vec<_>>()))
                .collect();
            let seed_averages: Vec<f64> = reps.iter().map(|r| r.average).collect();
            rows.push(MethodRow {
                label: head.label.clone(),
                per_domain,
                average: Stat::of(&seed_averages),
                seed_averages,
            });
        }
        let probes: Vec<ProbeScores> = results.iter().filter_map(|r| r.probes).collect();
        let probes = (!probes.is_empty()).then(|| {
            let col = |f: fn(&ProbeScores) -> f64| Stat::of(&probes.iter().map(f).collect::<Vec<_>>());
            ProbeSummary {
                domain_on_inv: col(|p| p.domain_on_inv),
                domain_on_spc: col(|p| p.domain_on_spc),
                sentiment_on_inv: col(|p| p.sentiment_on_inv),
                gap: col(ProbeScores::gap),
            }
        });
        Ok(EvalReport {
            domains,
            seeds: results.iter().map(|r| r.seed).collect(),
            rows,
            probes,
            representations: None,
        })
    }

    pub fn row(&self, label: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Percent table, `mean±std` per cell.
    pub fn render(&self) -> String {
        let cell = |s: &Stat| format!("{:.2}±{:.2}", 100.0 * s.mean, 100.0 * s.std);
        let width = self
            .rows
            .iter()
            .flat_map(|r| r.per_domain.iter().chain([&r.average]).map(|s| cell(s).chars().count()))
            .chain(self.domains.iter().map(|d| d.chars().count()))
            .max()
            .unwrap_or(8);
        let label_w = self.rows.iter().map(|r| r.label.chars().count()).max().unwrap_or(6).max(6);
        let mut out = format!("{:<label_w$}", "method");
        for d in self.domains.iter().map(String::as_str).chain(["Avg"]) {
            out.push_str(&format!("  {d:>width$}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{:<label_w$}", r.label));
            for s in r.per_domain.iter().chain([&r.average]) {
                out.push_str(&format!("  {:>width$}", cell(s)));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "seeds: {}\n",
            self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
        ));
        if let Some(p) = &self.probes {
            out.push_str(&format!(
                "probe domain|m_inv {}  domain|m_spc {}  sentiment|m_inv {}  gap {}\n",
                cell(&p.domain_on_inv),
                cell(&p.domain_on_spc),
                cell(&p.sentiment_on_inv),
                cell(&p.gap)
            ));
        }
        out
    }
}
