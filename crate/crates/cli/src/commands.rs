use std::fs;
use std::path::{Path, PathBuf};

use bdg_core::datagen::{generate, load_jsonl, save_jsonl, sidecar_string, to_jsonl_string, DatasetBundle, Example, GenConfig};
use bdg_core::eval::{
    evaluate_seed, export_representations, EvalReport, MethodSpec, ProbeConfig,
};
use bdg_core::model::ModelParams;
use bdg_core::scm::{backdoor_criterion, check_backdoor_condition, parse_scm};
use bdg_core::training::{
    grid_search, leave_one_domain_out, train_excluding, GridReport, LodoReport, Method, RunManifest, TrainConfig,
    TrainedModel,
};
use serde::Serialize;

use crate::error::CliError;
use crate::{
    AblateArgs, Ablation, CheckArgs, EvalArgs, ExportArgs, GenDataArgs, GridArgs, LodoArgs, MethodArg, MethodOpts,
    TrainArgs, TrainOpts,
};

pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: PathBuf) -> Self {
        Self { root }
    }

    fn path(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    fn read(&self, p: &Path) -> Result<String, CliError> {
        let full = self.path(p);
        fs::read_to_string(&full).map_err(|e| CliError::io(&full, e))
    }

    fn write(&self, p: &Path, contents: &str) -> Result<PathBuf, CliError> {
        let full = self.path(p);
        if let Some(dir) = full.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(&full, contents).map_err(|e| CliError::io(&full, e))?;
        Ok(full)
    }

    fn write_json<T: Serialize>(&self, p: &Path, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.write(p, &text)
    }
}

fn train_config(ws: &Workspace, opts: &TrainOpts) -> Result<TrainConfig, CliError> {
    let label = opts
        .config
        .as_ref()
        .map_or_else(|| "default training config".to_string(), |p| p.display().to_string());
    let mut cfg = match &opts.config {
        Some(p) => TrainConfig::from_toml_str(&ws.read(p)?).map_err(|problems| CliError::Config {
            path: label.clone(),
            problems,
        })?,
        None => TrainConfig::default(),
    };
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(e) = opts.epochs {
        cfg.epochs = e;
    }
    cfg.validate()
        .map_err(|problems| CliError::Config { path: label, problems })?;
    Ok(cfg)
}

fn apply_method(cfg: &mut TrainConfig, m: &MethodOpts) -> Result<(), CliError> {
    if let Some(method) = m.method {
        cfg.method = match method {
            MethodArg::Full => Method::Full,
            MethodArg::Erm => Method::Erm,
            MethodArg::VariancePenalty => Method::VariancePenalty,
        };
    }
    if let Some(a) = m.ablate {
        if cfg.method != Method::Full {
            return Err(CliError::Usage("--ablate applies only to the full method".into()));
        }
        let (inv, spc) = match a {
            Ablation::Invariant => (false, true),
            Ablation::Specific => (true, false),
            Ablation::Both => (false, false),
        };
        cfg.loss.enable_invariant = inv;
        cfg.loss.enable_specific = spc;
    }
    Ok(())
}

fn bundle(ws: &Workspace, data: &Path) -> Result<DatasetBundle, CliError> {
    Ok(load_jsonl(&ws.path(data))?)
}

fn data_bytes(b: &DatasetBundle) -> Vec<u8> {
    let mut bytes = to_jsonl_string(b).into_bytes();
    bytes.extend(sidecar_string(b).into_bytes());
    bytes
}

fn domain_index(b: &DatasetBundle, key: &str) -> Result<usize, CliError> {
    if let Some(i) = b.domains.iter().position(|d| d == key) {
        return Ok(i);
    }
    match key.parse::<usize>() {
        Ok(i) if i < b.num_domains() => Ok(i),
        _ => Err(CliError::Usage(format!(
            "unknown domain `{key}`; known domains: {}",
            b.domains.join(", ")
        ))),
    }
}

pub fn gen_data(ws: &Workspace, a: GenDataArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(p) => GenConfig::from_toml_str(&ws.read(p)?)?,
        None => GenConfig::hard_preset(0),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let b = generate(&cfg)?;
    let out = ws.path(&a.out);
    save_jsonl(&b, &out)?;
    let manifest = RunManifest::new("gen-data", cfg.seed, &cfg, &data_bytes(&b));
    ws.write_json(&a.out.join("manifest.json"), &manifest)?;
    println!(
        "wrote {} examples over {} domains to {}",
        b.len(),
        b.num_domains(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    label: String,
    train_domains: Vec<String>,
    held_out: Option<String>,
    best_epoch: usize,
    best_val_accuracy: f64,
    test_accuracy: Option<f64>,
    num_parameters: usize,
}

pub fn train(ws: &Workspace, a: TrainArgs) -> Result<(), CliError> {
    let mut cfg = train_config(ws, &a.opts)?;
    apply_method(&mut cfg, &a.method)?;
    let b = bundle(ws, &a.opts.data)?;
    let held = a.held_out.as_deref().map(|k| domain_index(&b, k)).transpose()?;
    let (domains, mut run) = train_excluding(&cfg, &b, held)?;
    if let Some(h) = held {
        let test: Vec<&Example> = b.examples[h].iter().collect();
        run.test_accuracy = Some(run.model.accuracy(&test, run.head)?);
    }
    ws.write(&a.out.join("checkpoint.txt"), &run.checkpoint())?;
    ws.write(&a.out.join("steps.csv"), &run.history.steps_csv())?;
    ws.write(&a.out.join("epochs.csv"), &run.history.epochs_csv())?;
    let summary = TrainSummary {
        label: cfg.label(),
        train_domains: domains.iter().map(|&d| b.domains[d].clone()).collect(),
        held_out: held.map(|h| b.domains[h].clone()),
        best_epoch: run.best_epoch,
        best_val_accuracy: run.best_val_accuracy,
        test_accuracy: run.test_accuracy,
        num_parameters: run.model.num_parameters(),
    };
    ws.write_json(&a.out.join("summary.json"), &summary)?;
    ws.write_json(&a.out.join("manifest.json"), &RunManifest::new("train", cfg.seed, &cfg, &data_bytes(&b)))?;
    print!(
        "{}: best epoch {}, validation accuracy {:.4}",
        summary.label, summary.best_epoch, summary.best_val_accuracy
    );
    match (summary.held_out, summary.test_accuracy) {
        (Some(d), Some(acc)) => println!(", {d} accuracy {acc:.4}"),
        _ => println!(),
    }
    Ok(())
}

pub fn lodo(ws: &Workspace, a: LodoArgs) -> Result<(), CliError> {
    let mut cfg = train_config(ws, &a.opts)?;
    apply_method(&mut cfg, &a.method)?;
    let b = bundle(ws, &a.opts.data)?;
    let (report, _) = leave_one_domain_out(&cfg, &b)?;
    ws.write_json(&a.report, &report)?;
    print!("{}", report.render());
    Ok(())
}

#[derive(Serialize)]
struct GridOutput<'a> {
    grid: &'a GridReport,
    best: &'a LodoReport,
}

pub fn grid(ws: &Workspace, a: GridArgs) -> Result<(), CliError> {
    let cfg = train_config(ws, &a.opts)?;
    let b = bundle(ws, &a.opts.data)?;
    let outcome = grid_search(&cfg, &a.alphas, &a.betas, &b)?;
    ws.write_json(
        &a.report,
        &GridOutput {
            grid: &outcome.report,
            best: &outcome.best,
        },
    )?;
    for c in &outcome.report.cells {
        match (c.mean_val_accuracy, &c.error) {
            (Some(v), _) => println!("alpha {:<6} beta {:<6} val {:.4}", c.alpha, c.beta, v),
            (None, Some(e)) => println!("alpha {:<6} beta {:<6} failed: {e}", c.alpha, c.beta),
            (None, None) => println!("alpha {:<6} beta {:<6} -", c.alpha, c.beta),
        }
    }
    println!(
        "best alpha {} beta {}",
        outcome.report.best_alpha, outcome.report.best_beta
    );
    print!("{}", outcome.best.render());
    Ok(())
}

fn seeds(given: &[u64], cfg: &TrainConfig) -> Vec<u64> {
    if given.is_empty() {
        vec![cfg.seed]
    } else {
        given.to_vec()
    }
}

fn run_seeds(
    cfg: &TrainConfig,
    seeds: &[u64],
    methods: &[MethodSpec],
    b: &DatasetBundle,
    probe: Option<&ProbeConfig>,
) -> Result<EvalReport, CliError> {
    let results = seeds
        .iter()
        .map(|&seed| {
            let base = TrainConfig { seed, ..cfg.clone() };
            evaluate_seed(&base, methods, b, probe)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::aggregate(&results)?)
}

pub fn eval(ws: &Workspace, a: EvalArgs) -> Result<(), CliError> {
    let cfg = train_config(ws, &a.opts)?;
    let b = bundle(ws, &a.opts.data)?;
    let alpha = a.alpha.unwrap_or(cfg.loss.alpha);
    let beta = a.beta.unwrap_or(cfg.loss.beta);
    let lambda = a.lambda.unwrap_or(cfg.penalty_lambda);
    let seeds = seeds(&a.seeds, &cfg);
    let mut report = run_seeds(&cfg, &seeds, &MethodSpec::table(alpha, beta, lambda), &b, Some(&ProbeConfig::default()))?;
    if let Some(path) = &a.reps {
        let full = MethodSpec::Full { alpha, beta }.config(&TrainConfig {
            seed: seeds[0],
            ..cfg.clone()
        });
        let (_, run) = train_excluding(&full, &b, Some(0))?;
        let TrainedModel::Full(params) = &run.model else {
            unreachable!("full method trains a disentangled model")
        };
        let test: Vec<&Example> = b.examples[0].iter().collect();
        export_representations(params, &test, &ws.path(path))?;
        report.representations = Some(path.display().to_string());
    }
    ws.write_json(&a.report, &report)?;
    print!("{}", report.render());
    Ok(())
}

pub fn ablate(ws: &Workspace, a: AblateArgs) -> Result<(), CliError> {
    let cfg = train_config(ws, &a.opts)?;
    let b = bundle(ws, &a.opts.data)?;
    let (alpha, beta) = (cfg.loss.alpha, cfg.loss.beta);
    let methods = [
        MethodSpec::Full { alpha, beta },
        MethodSpec::WithoutInvariant { alpha, beta },
        MethodSpec::WithoutSpecific { alpha, beta },
        MethodSpec::WithoutBoth,
    ];
    let report = run_seeds(&cfg, &seeds(&a.seeds, &cfg), &methods, &b, None)?;
    ws.write_json(&a.report, &report)?;
    print!("{}", report.render());
    Ok(())
}

fn dist(p: &[f64]) -> String {
    let cells: Vec<String> = p.iter().map(|v| format!("{v:.6}")).collect();
    format!("[{}]", cells.join(", "))
}

pub fn check_backdoor(ws: &Workspace, a: CheckArgs) -> Result<(), CliError> {
    let scm = parse_scm(&ws.read(&a.scm)?)?;
    let criterion = backdoor_criterion(&scm, &a.x, &a.y, &[a.adj.as_str()])?;
    print!("{criterion}");
    let report = check_backdoor_condition(&scm, &a.x, &a.y, &a.adj, a.eps)?;
    let (x, y) = (&a.x, &a.y);
    for row in &report.rows {
        let v = row.m_value;
        println!(
            "{x}={v}  P({y}|{x}={v})={}  P({y}|do({x}={v}))={}  deviation {:.6}",
            dist(&row.observational),
            dist(&row.adjusted),
            row.tv_distance
        );
    }
    println!("max deviation {:.12}", report.max_deviation);
    if report.holds {
        println!("backdoor condition holds (eps {:e})", report.eps);
    } else {
        println!("backdoor condition violated (eps {:e})", report.eps);
    }
    Ok(())
}

pub fn export_reps(ws: &Workspace, a: ExportArgs) -> Result<(), CliError> {
    let (model_cfg, params) = ModelParams::from_checkpoint(&ws.read(&a.checkpoint)?)?;
    let b = bundle(ws, &a.data)?;
    if b.vocab.len() != model_cfg.vocab_size {
        return Err(CliError::Usage(format!(
            "checkpoint expects a vocabulary of {} tokens but the data has {}",
            model_cfg.vocab_size,
            b.vocab.len()
        )));
    }
    let examples: Vec<&Example> = match &a.domain {
        Some(k) => b.examples[domain_index(&b, k)?].iter().collect(),
        None => b.iter().collect(),
    };
    let out = ws.path(&a.out);
    export_representations(&params, &examples, &out)?;
    println!("wrote {} rows to {}", examples.len() * 4, out.display());
    Ok(())
}
