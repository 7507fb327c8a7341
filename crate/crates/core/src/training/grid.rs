use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_folds, lodo_runs, FoldRun, LodoReport, TrainConfig, TrainError};
use crate::datagen::DatasetBundle;
use crate::seed::{derive_seed, stream};

pub const DEFAULT_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    /// Mean over folds of the best validation accuracy; `None` if the cell failed.
    pub mean_val_accuracy: Option<f64>,
    pub fold_val_accuracy: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub cells: Vec<GridCell>,
    pub best_index: usize,
    pub best_alpha: f64,
    pub best_beta: f64,
}

/// Grid report plus the held-out evaluation of the selected cell only.
#[derive(Clone, Debug)]
pub struct GridOutcome {
    pub report: GridReport,
    pub best: LodoReport,
    pub best_folds: Vec<FoldRun>,
}

/// Leave-one-domain-out training for every `(alpha, beta)`; selection uses
/// validation accuracy only, and only the winner is scored on held-out data.
pub fn grid_search(
    base: &TrainConfig,
    alphas: &[f64],
    betas: &[f64],
    bundle: &DatasetBundle,
) -> Result<GridOutcome, TrainError> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(TrainError::Config(vec!["grid needs at least one alpha and one beta".into()]));
    }
    let cells: Vec<(f64, f64, u64)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .enumerate()
        .map(|(i, (a, b))| (a, b, derive_seed(base.seed, stream::CELL + i as u64)))
        .collect();
    let runs: Vec<Result<Vec<FoldRun>, TrainError>> = cells
        .par_iter()
        .map(|&(alpha, beta, seed)| {
            let mut cfg = base.clone();
            cfg.loss.alpha = alpha;
            cfg.loss.beta = beta;
            cfg.seed = seed;
            lodo_runs(&cfg, bundle)
        })
        .collect();

    let mut report_cells = Vec::with_capacity(cells.len());
    let mut best: Option<(usize, f64)> = None;
    let mut kept: Vec<Option<Vec<FoldRun>>> = Vec::with_capacity(cells.len());
    for (i, (&(alpha, beta, seed), run)) in cells.iter().zip(runs).enumerate() {
        match run {
            Ok(folds) => {
                let vals: Vec<f64> = folds.iter().map(|f| f.run.best_val_accuracy).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                if best.is_none_or(|(_, b)| mean > b) {
                    best = Some((i, mean));
                }
                report_cells.push(GridCell {
                    alpha,
                    beta,
                    seed,
                    mean_val_accuracy: Some(mean),
                    fold_val_accuracy: vals,
                    error: None,
                });
                kept.push(Some(folds));
            }
            Err(e) => {
                report_cells.push(GridCell {
                    alpha,
                    beta,
                    seed,
                    mean_val_accuracy: None,
                    fold_val_accuracy: Vec::new(),
                    error: Some(e.to_string()),
                });
                kept.push(None);
            }
        }
    }
    let Some((best_index, _)) = best else {
        let first = report_cells[0].error.clone().unwrap_or_default();
        return Err(TrainError::Config(vec![format!("every grid cell failed; first error: {first}")]));
    };
    let mut best_folds = kept[best_index].take().expect("successful cell");
    let mut label_cfg = base.clone();
    label_cfg.loss.alpha = cells[best_index].0;
    label_cfg.loss.beta = cells[best_index].1;
    let best = evaluate_folds(&label_cfg.label(), bundle, &mut best_folds)?;
    Ok(GridOutcome {
        report: GridReport {
            best_alpha: cells[best_index].0,
            best_beta: cells[best_index].1,
            best_index,
            cells: report_cells,
        },
        best,
        best_folds,
    })
}
