use rand::Rng;

use super::*;
use crate::datagen::{generate, GenConfig};
use crate::model::PredictHead;
use crate::nn::Tensor;
use crate::seed::rng;
use crate::training::{sha256_hex, TrainConfig};

fn quick(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 4,
        seed,
        ..TrainConfig::default()
    }
}

fn labelled(labels: &[u8]) -> Vec<Example> {
    labels
        .iter()
        .map(|&label| Example {
            tokens: vec![0],
            label,
            domain: 0,
            features: None,
        })
        .collect()
}

#[test]
fn fraction_correct_extremes() {
    let ex = labelled(&[0, 1, 1, 0, 1]);
    let refs: Vec<&Example> = ex.iter().collect();
    let truth: Vec<u8> = ex.iter().map(|e| e.label).collect();
    let flipped: Vec<u8> = truth.iter().map(|l| 1 - l).collect();
    assert_eq!(fraction_correct(&truth, &refs).unwrap(), 1.0);
    assert_eq!(fraction_correct(&flipped, &refs).unwrap(), 0.0);
    assert!(fraction_correct(&[], &[]).is_err());
    assert!(fraction_correct(&[1], &refs).is_err());
}

#[test]
fn random_predictor_is_near_half() {
    let n = 10_000;
    let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let ex = labelled(&labels);
    let refs: Vec<&Example> = ex.iter().collect();
    let mut r = rng(11);
    let guesses: Vec<u8> = (0..n).map(|_| r.random_range(0..2u8)).collect();
    let acc = fraction_correct(&guesses, &refs).unwrap();
    let se = (0.25 / n as f64).sqrt();
    assert!((acc - 0.5).abs() <= 3.0 * se, "{acc}");
}

#[test]
fn erm_beats_chance_with_fewer_parameters() {
    let mut gen = GenConfig::small(3, 200, 4);
    gen.invariant_strength = 1.0;
    let bundle = generate(&gen).unwrap();
    let erm = erm_baseline(&quick(0), &bundle).unwrap();
    assert!(erm.average > 0.7, "{}", erm.average);

    let folds_erm = lodo_runs(&MethodSpec::Erm.config(&quick(0)), &bundle).unwrap();
    let folds_full = lodo_runs(&MethodSpec::Full { alpha: 1.0, beta: 1.0 }.config(&quick(0)), &bundle).unwrap();
    let test: Vec<&Example> = bundle.examples[0].iter().collect();
    let acc = accuracy(&folds_erm[0].run.model, &test, PredictHead::Joint).unwrap();
    assert_eq!(acc, folds_erm[0].run.model.accuracy(&test, PredictHead::Joint).unwrap());
    assert!(folds_erm[0].run.model.num_parameters() < folds_full[0].run.model.num_parameters());
}

#[test]
fn zero_variance_penalty_is_erm() {
    let bundle = generate(&GenConfig::small(3, 120, 2)).unwrap();
    let erm = erm_baseline(&quick(3), &bundle).unwrap();
    let vp = variance_penalty_baseline(&quick(3), &bundle, 0.0).unwrap();
    assert_eq!(erm.per_domain, vp.per_domain);
    assert_eq!(erm.folds, vp.folds);

    let two = generate(&GenConfig::small(2, 120, 2)).unwrap();
    assert!(matches!(
        variance_penalty_baseline(&quick(3), &two, 1.0),
        Err(EvalError::TooFewDomains { got: 2, .. })
    ));
}

#[test]
fn unconfounded_data_puts_methods_level() {
    let mut erm = Vec::new();
    let mut full = Vec::new();
    for seed in 0..5 {
        let mut gen = GenConfig::small(3, 300, seed);
        gen.ambiguous_strength = 0.0;
        let bundle = generate(&gen).unwrap();
        let cfg = TrainConfig {
            epochs: 8,
            seed,
            ..TrainConfig::default()
        };
        erm.push(erm_baseline(&cfg, &bundle).unwrap().average);
        full.push(run_method(&MethodSpec::Full { alpha: 1.0, beta: 1.0 }.config(&cfg), &bundle).unwrap().average);
    }
    let (e, f) = (Stat::of(&erm), Stat::of(&full));
    let noise = 3.0 * ((e.std.powi(2) + f.std.powi(2)) / 5.0).sqrt() + 0.02;
    assert!((e.mean - f.mean).abs() <= noise, "erm {e:?} full {f:?}");
}

#[test]
fn probe_on_constant_reps_finds_majority() {
    let n = 500;
    let domains: Vec<usize> = (0..n).map(|i| usize::from(i % 5 < 3)).collect();
    let reps = Tensor::from_rows(&vec![vec![0.3, -1.0]; n]).unwrap();
    let acc = domain_probe(&reps, &domains, &ProbeConfig::default()).unwrap();
    assert!((acc - 0.6).abs() < 0.06, "{acc}");
}

#[test]
fn probe_on_one_hot_domains_is_perfect() {
    let domains: Vec<usize> = (0..300).map(|i| i % 3).collect();
    let rows: Vec<Vec<f64>> = domains
        .iter()
        .map(|&d| (0..3).map(|k| f64::from(u8::from(k == d))).collect())
        .collect();
    let acc = domain_probe(&Tensor::from_rows(&rows).unwrap(), &domains, &ProbeConfig::default()).unwrap();
    assert!(acc > 0.99, "{acc}");
}

#[test]
fn probe_rejects_single_domain() {
    let reps = Tensor::from_rows(&vec![vec![1.0]; 10]).unwrap();
    assert!(matches!(
        domain_probe(&reps, &[0; 10], &ProbeConfig::default()),
        Err(EvalError::DegenerateProbe)
    ));
    assert!(domain_probe(&reps, &[0, 1], &ProbeConfig::default()).is_err());
}

#[test]
fn probing_leaves_the_model_alone() {
    let bundle = generate(&GenConfig::small(3, 100, 1)).unwrap();
    let cfg = MethodSpec::Full { alpha: 1.0, beta: 1.0 }.config(&quick(1));
    let folds = lodo_runs(&cfg, &bundle).unwrap();
    let before = sha256_hex(folds[0].run.checkpoint().as_bytes());
    let p = probe_fold(&folds[0], &bundle, &ProbeConfig::default()).unwrap();
    assert_eq!(before, sha256_hex(folds[0].run.checkpoint().as_bytes()));
    for v in [p.domain_on_inv, p.domain_on_spc, p.sentiment_on_inv] {
        assert!((0.0..=1.0).contains(&v));
    }
    let erm = lodo_runs(&MethodSpec::Erm.config(&quick(1)), &bundle).unwrap();
    assert!(matches!(probe_fold(&erm[0], &bundle, &ProbeConfig::default()), Err(EvalError::NotDisentangled)));
}

#[test]
fn pca_of_identical_rows_is_constant() {
    let x = Tensor::from_rows(&vec![vec![1.0, 2.0, 3.0]; 7]).unwrap();
    let p = pca_2d(&x);
    assert!(p.iter().all(|c| c == &p[0]));
}

#[test]
fn pca_in_two_dimensions_preserves_distances() {
    let mut r = rng(5);
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|_| vec![r.random_range(-2.0..2.0), r.random_range(-1.0..1.0) * 0.3])
        .collect();
    let p = pca_2d(&Tensor::from_rows(&rows).unwrap());
    for i in 0..rows.len() {
        for j in 0..i {
            let raw = ((rows[i][0] - rows[j][0]).powi(2) + (rows[i][1] - rows[j][1]).powi(2)).sqrt();
            let proj = ((p[i][0] - p[j][0]).powi(2) + (p[i][1] - p[j][1]).powi(2)).sqrt();
            assert!((raw - proj).abs() < 1e-9);
        }
    }
}

#[test]
fn pca_sign_is_fixed() {
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, -(i as f64) * 2.0]).collect();
    let neg: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    let a = pca_2d(&Tensor::from_rows(&rows).unwrap());
    let b = pca_2d(&Tensor::from_rows(&neg).unwrap());
    // Loading (1, -2)/sqrt(5) has a positive first entry, so larger inputs
    // project further right.
    assert!(a[19][0] > a[0][0]);
    for (x, y) in a.iter().zip(&b) {
        assert!((x[0] + y[0]).abs() < 1e-9);
    }
}

#[test]
fn export_writes_four_kinds_per_example() {
    let bundle = generate(&GenConfig::small(3, 40, 6)).unwrap();
    let cfg = MethodSpec::Full { alpha: 1.0, beta: 1.0 }.config(&quick(2));
    let folds = lodo_runs(&cfg, &bundle).unwrap();
    let TrainedModel::Full(params) = &folds[0].run.model else {
        panic!("full model expected")
    };
    let test: Vec<&Example> = bundle.examples[0].iter().collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reps.csv");
    export_representations(params, &test, &path).unwrap();
    let mut rd = csv::Reader::from_path(&path).unwrap();
    let header = rd.headers().unwrap().clone();
    assert_eq!(&header[0], "id");
    assert_eq!(&header[header.len() - 1], "pca_y");
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), test.len() * REP_KINDS.len());
    for kind in REP_KINDS {
        assert_eq!(rows.iter().filter(|r| &r[3] == kind).count(), test.len());
    }
    assert_eq!(
        representations_csv(params, &test).unwrap(),
        std::fs::read_to_string(&path).unwrap()
    );
    assert!(matches!(
        export_representations(params, &test, &dir.path().join("missing/reps.csv")),
        Err(EvalError::Io { .. })
    ));
}

#[test]
fn stats_and_report() {
    let s = Stat::of(&[0.5, 0.7]);
    assert!((s.mean - 0.6).abs() < 1e-15);
    assert!((s.std - 0.02f64.sqrt()).abs() < 1e-15);
    assert_eq!(Stat::of(&[0.4]).std, 0.0);

    let bundle = generate(&GenConfig::small(3, 80, 8)).unwrap();
    let methods = [MethodSpec::Full { alpha: 1.0, beta: 1.0 }, MethodSpec::Erm];
    let results: Vec<SeedResult> = (0..2)
        .map(|seed| evaluate_seed(&quick(seed), &methods, &bundle, Some(&ProbeConfig::default())).unwrap())
        .collect();
    let report = EvalReport::aggregate(&results).unwrap();
    assert_eq!(report.seeds, vec![0, 1]);
    assert_eq!(report.rows.len(), 2);
    for row in &report.rows {
        let recomputed = row.per_domain.iter().map(|s| s.mean).sum::<f64>() / row.per_domain.len() as f64;
        assert!((recomputed - row.average.mean).abs() < 1e-12);
        assert!(row.per_domain.iter().all(|s| (0.0..=1.0).contains(&s.mean)));
    }
    assert!(report.probes.is_some());
    let text = report.render();
    assert!(text.contains("Ours") && text.contains("ERM") && text.contains("Avg"));
    let back: EvalReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(back, report);
    assert!(matches!(EvalReport::aggregate(&[]), Err(EvalError::NoRuns)));
}
