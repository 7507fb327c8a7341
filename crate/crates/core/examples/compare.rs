//! Leave-one-domain-out accuracy of several methods on the hard preset.
//!
//! `cargo run --release -p bdg-core --example compare -- [seed] [epochs]`

use std::time::Instant;

use bdg_core::datagen::{generate, GenConfig, UnigramBayes};
use bdg_core::losses::LossWeights;
use bdg_core::training::{leave_one_domain_out, Method, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let gen = GenConfig::hard_preset(seed);
    let bundle = generate(&gen).expect("valid preset");
    for held in 0..gen.num_domains {
        let others: Vec<usize> = (0..gen.num_domains).filter(|&d| d != held).collect();
        let nb = UnigramBayes::fit(&gen, &others);
        println!(
            "unigram  held-out {held}: {:.3}  (in-domain {:.3})",
            nb.accuracy(&bundle.examples[held]),
            nb.accuracy(bundle.examples[others[0]].iter())
        );
    }
    let base = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let methods = [
        TrainConfig {
            method: Method::Erm,
            ..base.clone()
        },
        TrainConfig {
            loss: LossWeights::full(1.0, 1.0),
            ..base.clone()
        },
    ];
    for cfg in methods {
        let t = Instant::now();
        let (rep, _) = leave_one_domain_out(&cfg, &bundle).expect("run");
        print!("{}", rep.render());
        println!("  val {:.4}  {:.1}s", rep.mean_val_accuracy, t.elapsed().as_secs_f64());
    }
}
