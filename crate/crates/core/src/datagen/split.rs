use rand::seq::SliceRandom;

use super::{DataError, DatasetBundle, Example};
use crate::seed::{derive_seed, rng, stream};

/// Train/validation partition of one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSplit {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
}

/// Stratified per-domain split. Each class contributes `round(frac * count)`
/// examples to the training side; both sides must receive every class.
pub fn split(
    bundle: &DatasetBundle,
    train_frac: f64,
    seed: u64,
) -> Result<Vec<DomainSplit>, DataError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(DataError::BadFraction(train_frac));
    }
    bundle
        .examples
        .iter()
        .enumerate()
        .map(|(d, examples)| {
            let name = &bundle.domains[d];
            let mut r = rng(derive_seed(seed, stream::SPLIT + stream::DOMAIN * (d as u64 + 1)));
            let mut train = Vec::new();
            let mut validation = Vec::new();
            for class in 0..2u8 {
                let mut idx: Vec<usize> = examples
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.label == class)
                    .map(|(i, _)| i)
                    .collect();
                if idx.len() < 2 {
                    return Err(DataError::TooFewExamples {
                        domain: name.clone(),
                        class,
                        count: idx.len(),
                    });
                }
                idx.shuffle(&mut r);
                let n_train = (train_frac * idx.len() as f64).round() as usize;
                let which = if n_train == 0 {
                    Some("training")
                } else if n_train == idx.len() {
                    Some("validation")
                } else {
                    None
                };
                if let Some(which) = which {
                    return Err(DataError::DegenerateSplit {
                        domain: name.clone(),
                        class,
                        which,
                    });
                }
                train.extend(idx[..n_train].iter().map(|&i| examples[i].clone()));
                validation.extend(idx[n_train..].iter().map(|&i| examples[i].clone()));
            }
            train.shuffle(&mut r);
            validation.shuffle(&mut r);
            Ok(DomainSplit { train, validation })
        })
        .collect()
}
