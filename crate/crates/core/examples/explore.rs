//! Held-out accuracy by prediction head for several methods.
//!
//! `cargo run --release -p bdg-core --example explore -- seed=0 epochs=10 inv=0.75 amb=0.9 ka=4 ki=3 conf=0.3 grid=1:1,10:10`

use std::collections::HashMap;
use std::time::Instant;

use bdg_core::datagen::{generate, GenConfig};
use bdg_core::losses::LossWeights;
use bdg_core::model::PredictHead;
use bdg_core::training::{lodo_runs, Method, TrainConfig};

fn main() {
    let kv: HashMap<String, String> = std::env::args()
        .skip(1)
        .filter_map(|a| a.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    let get = |k: &str, d: &str| kv.get(k).cloned().unwrap_or_else(|| d.to_string());
    let seed: u64 = get("seed", "0").parse().unwrap();
    let mut gen = GenConfig::hard_preset(seed);
    gen.invariant_strength = get("inv", "0.75").parse().unwrap();
    gen.ambiguous_strength = get("amb", "0.9").parse().unwrap();
    gen.slots.ambiguous = get("ka", "4").parse().unwrap();
    gen.slots.invariant = get("ki", "3").parse().unwrap();
    gen.confound_strength = get("conf", "0.3").parse().unwrap();
    if kv.contains_key("uniform") {
        gen.ambiguity_sign = vec![vec![1; gen.pools.ambiguous]; gen.num_domains];
    }
    let bundle = generate(&gen).unwrap();
    let base = TrainConfig {
        epochs: get("epochs", "10").parse().unwrap(),
        seed,
        ..TrainConfig::default()
    };
    let mut cfgs = vec![TrainConfig {
        method: Method::Erm,
        ..base.clone()
    }];
    for cell in get("grid", "1:1").split(',') {
        let (a, b) = cell.split_once(':').unwrap();
        cfgs.push(TrainConfig {
            loss: LossWeights::full(a.parse().unwrap(), b.parse().unwrap()),
            ..base.clone()
        });
    }
    if kv.contains_key("ablate") {
        let mut w = LossWeights::full(1.0, 1.0);
        w.enable_invariant = false;
        cfgs.push(TrainConfig { loss: w, ..base.clone() });
        let mut w = LossWeights::full(1.0, 1.0);
        w.enable_specific = false;
        cfgs.push(TrainConfig { loss: w, ..base.clone() });
    }
    for cfg in cfgs {
        let t = Instant::now();
        let folds = lodo_runs(&cfg, &bundle).unwrap();
        let mut joint = 0.0;
        let mut cls = 0.0;
        let mut val = 0.0;
        for f in &folds {
            let ex: Vec<_> = bundle.examples[f.held_out].iter().collect();
            joint += f.run.model.accuracy(&ex, PredictHead::Joint).unwrap_or(f64::NAN);
            cls += f.run.model.accuracy(&ex, PredictHead::Classification).unwrap_or(f64::NAN);
            val += f.run.best_val_accuracy;
        }
        let k = folds.len() as f64;
        println!(
            "{:<24} joint {:.4}  cls {:.4}  val {:.4}  {:.1}s",
            format!("{} a={} b={}", cfg.label(), cfg.loss.alpha, cfg.loss.beta),
            joint / k,
            cls / k,
            val / k,
            t.elapsed().as_secs_f64()
        );
    }
}
