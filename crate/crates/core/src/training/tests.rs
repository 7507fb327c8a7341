use super::*;
use crate::datagen::{generate, split, DatasetBundle, GenConfig, UnigramBayes};

fn small_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        model: ModelDims {
            embed_dim: 8,
            hidden_dim: 8,
            rep_dim: 6,
            domain_embed_dim: 3,
        },
        ..TrainConfig::default()
    }
}

fn flat(bundle: &DatasetBundle, seed: u64) -> (Vec<Example>, Vec<Example>) {
    let parts = split(bundle, 0.8, seed).unwrap();
    (
        parts.iter().flat_map(|p| p.train.clone()).collect(),
        parts.iter().flat_map(|p| p.validation.clone()).collect(),
    )
}

fn data_of<'a>(b: &DatasetBundle, tr: &'a [Example], va: &'a [Example]) -> TrainData<'a> {
    TrainData {
        train: tr,
        validation: va,
        num_domains: b.num_domains(),
        vocab_size: b.vocab.len(),
        input: InputMode::Tokens,
    }
}

#[test]
fn config_validation() {
    let cfg = TrainConfig {
        epochs: 0,
        batch_size: 0,
        ..TrainConfig::default()
    };
    let err = cfg.validate().unwrap_err();
    assert!(err.iter().any(|e| e.contains("epochs")));
    assert!(err.iter().any(|e| e.contains("batch_size")));
    let paper = TrainConfig {
        lr_preset: Some(LrPreset::Paper),
        ..TrainConfig::default()
    };
    assert_eq!(paper.effective_lr(), 1e-5);
    let text = toml::to_string(&paper).unwrap();
    assert_eq!(toml::from_str::<TrainConfig>(&text).unwrap(), paper);
    assert!(toml::from_str::<TrainConfig>("epochz = 3").is_err());
    assert_eq!(TrainConfig::from_toml_str(&paper.to_toml_string()).unwrap(), paper);
    let err = TrainConfig::from_toml_str("seed = 1\nbatch_size = -4\n").unwrap_err();
    assert!(err[0].starts_with("line 2: batch_size:"), "{err:?}");
    let err = TrainConfig::from_toml_str("epochs = 0\n").unwrap_err();
    assert!(err[0].contains("epochs"));
}

#[test]
fn runs_are_bit_identical() {
    let b = generate(&GenConfig::small(2, 100, 1)).unwrap();
    let (tr, va) = flat(&b, 0);
    let cfg = small_cfg();
    let a = train(&cfg, data_of(&b, &tr, &va)).unwrap();
    let c = train(&cfg, data_of(&b, &tr, &va)).unwrap();
    assert_eq!(a.checkpoint(), c.checkpoint());
    assert_eq!(a.history, c.history);
    assert_eq!(a.history.steps.len(), 3 * 160_usize.div_ceil(16));
    let best = a.history.epochs[a.best_epoch].val_accuracy;
    assert!(a.history.epochs.iter().all(|e| e.val_accuracy <= best));
    assert!(a.history.steps_csv().starts_with(
        "step,joint,specific,classification,backdoor,adjustment,invariant,all\n"
    ));
}

#[test]
fn separable_data_is_learned() {
    let gen = GenConfig {
        invariant_strength: 1.0,
        ambiguous_strength: 0.5,
        ..GenConfig::small(3, 300, 2)
    };
    let b = generate(&gen).unwrap();
    // odd slot count: the invariant majority always matches the label
    assert_eq!(UnigramBayes::fit(&gen, &[0, 1, 2]).accuracy(b.iter()), 1.0);
    let (tr, va) = flat(&b, 0);
    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let r = train(&cfg, data_of(&b, &tr, &va)).unwrap();
    assert!(r.best_val_accuracy >= 0.99, "{}", r.best_val_accuracy);
    assert!(r.best_train_loss() < r.initial_train_loss());
}

#[test]
fn rejects_bad_domains_and_empty_sets() {
    let b = generate(&GenConfig::small(2, 20, 1)).unwrap();
    let (tr, va) = flat(&b, 0);
    let mut d = data_of(&b, &tr, &va);
    d.num_domains = 1;
    assert!(matches!(train(&small_cfg(), d), Err(TrainError::Domain { .. })));
    let d = data_of(&b, &tr, &[]);
    assert!(matches!(train(&small_cfg(), d), Err(TrainError::EmptySet("validation"))));
}

#[test]
fn variance_penalty_formula() {
    let (v, g) = risk_variance(&[1.0, 3.0, 2.0], &[0, 0, 1]);
    // risks 2 and 2
    assert_eq!(v, 0.0);
    assert!(g.iter().all(|&x| x == 0.0));
    let (v, _) = risk_variance(&[0.5, 1.5], &[0, 1]);
    let m = 1.0;
    assert_eq!(v, ((0.5f64 - m).powi(2) + (1.5f64 - m).powi(2)) / 2.0);
}

#[test]
fn zero_penalty_matches_erm() {
    let b = generate(&GenConfig::small(2, 60, 3)).unwrap();
    let (tr, va) = flat(&b, 0);
    let erm = TrainConfig {
        method: Method::Erm,
        ..small_cfg()
    };
    let vp = TrainConfig {
        method: Method::VariancePenalty,
        penalty_lambda: 0.0,
        ..erm.clone()
    };
    let a = train(&erm, data_of(&b, &tr, &va)).unwrap();
    let c = train(&vp, data_of(&b, &tr, &va)).unwrap();
    assert_eq!(a.model, c.model);
    assert_eq!(a.history, c.history);
}

#[test]
fn lodo_shape_and_hygiene() {
    let b = generate(&GenConfig::small(4, 60, 4)).unwrap();
    let (rep, folds) = leave_one_domain_out(&small_cfg(), &b).unwrap();
    assert_eq!(rep.per_domain.len(), 4);
    let mean = rep.per_domain.iter().sum::<f64>() / 4.0;
    assert!((rep.average - mean).abs() < 1e-12);
    for f in &folds {
        assert_eq!(f.log.non_test_reads(f.held_out), 0);
        assert_eq!(f.log.events.last().unwrap().phase, Phase::Test);
        assert_eq!(f.log.events.last().unwrap().domain, f.held_out);
        assert!(!f.train_domains.contains(&f.held_out));
    }
    assert!(rep.render().contains("Avg"));
    let one = generate(&GenConfig::small(1, 60, 4)).unwrap();
    assert!(matches!(
        leave_one_domain_out(&small_cfg(), &one),
        Err(TrainError::TooFewDomains(1))
    ));
}

#[test]
fn leak_is_detected() {
    let b = generate(&GenConfig::small(2, 40, 4)).unwrap();
    let mut folds = lodo_runs(&small_cfg(), &b).unwrap();
    let held = folds[0].held_out;
    folds[0].log.events.push(AccessEvent {
        phase: Phase::Train,
        domain: held,
        examples: 1,
    });
    assert!(matches!(
        evaluate_folds("x", &b, &mut folds),
        Err(TrainError::Leak { .. })
    ));
}

#[test]
fn identical_domains_score_alike() {
    let one = generate(&GenConfig::small(1, 400, 5)).unwrap();
    let mut b = one.clone();
    b.domains = vec!["a".into(), "b".into()];
    let copy: Vec<Example> = one.examples[0]
        .iter()
        .map(|e| Example { domain: 1, ..e.clone() })
        .collect();
    b.examples.push(copy);
    let cfg = TrainConfig {
        epochs: 15,
        ..small_cfg()
    };
    let (rep, _) = leave_one_domain_out(&cfg, &b).unwrap();
    assert!((rep.per_domain[0] - rep.per_domain[1]).abs() < 0.05, "{:?}", rep.per_domain);
}

#[test]
fn grid_shapes() {
    let b = generate(&GenConfig::small(2, 40, 6)).unwrap();
    let out = grid_search(&small_cfg(), &[0.5], &[2.0], &b).unwrap();
    assert_eq!(out.report.cells.len(), 1);
    assert_eq!((out.report.best_alpha, out.report.best_beta), (0.5, 2.0));

    let out = grid_search(&small_cfg(), &[0.1, 1.0], &[0.1, 10.0, 100.0], &b).unwrap();
    assert_eq!(out.report.cells.len(), 6);
    let best = out.report.cells[out.report.best_index].mean_val_accuracy.unwrap();
    assert!(out
        .report
        .cells
        .iter()
        .all(|c| c.mean_val_accuracy.unwrap() <= best));
    assert_eq!(out.best.per_domain.len(), 2);
    assert!(grid_search(&small_cfg(), &[], &[1.0], &b).is_err());
}

#[test]
fn manifest_hashes() {
    let m = RunManifest::new("train", 0, &small_cfg(), b"data");
    assert_eq!(m.data_sha256.len(), 64);
    assert_eq!(m, RunManifest::new("train", 0, &small_cfg(), b"data"));
    assert_ne!(m.config_sha256, RunManifest::new("train", 0, &TrainConfig::default(), b"data").config_sha256);
}
