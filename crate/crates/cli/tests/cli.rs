use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const GEN: &str = "\
num_domains = 4
examples_per_domain = 60
seq_len = 8
invariant_strength = 0.9
ambiguous_strength = 0.8
ambiguity_sign = [[1, -1], [-1, 1], [1, 1], [-1, -1]]
confound_strength = 0.0
seed = 5

[pools]
invariant_positive = 3
invariant_negative = 3
ambiguous = 2
domain_marker = 2
neutral = 6

[slots]
invariant = 2
ambiguous = 2
marker = 1
";

const COPY_SCM: &str = "\
var D 2
var M 2
var Y 2
edge D -> M
edge D -> Y
edge M -> Y
cpt D
  0.5 0.5
cpt M | D
  1 0
  0 1
cpt Y | D M
  0.9 0.1
  0.5 0.5
  0.5 0.5
  0.1 0.9
";

fn bdg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bdg"))
        .arg("--workdir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn with_data() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("gen.toml"), GEN).unwrap();
    let o = bdg(dir.path(), &["gen-data", "--config", "gen.toml", "--out", "data"]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir
}

#[test]
fn gen_data_writes_every_example_and_is_repeatable() {
    let dir = with_data();
    let data = fs::read_to_string(dir.path().join("data/data.jsonl")).unwrap();
    assert_eq!(data.lines().count(), 4 * 60);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("data/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["seed"], 5);

    let o = bdg(dir.path(), &["gen-data", "--config", "gen.toml", "--out", "again"]);
    assert!(o.status.success());
    for f in ["data.jsonl", "vocab.json", "manifest.json"] {
        assert_eq!(
            fs::read(dir.path().join("data").join(f)).unwrap(),
            fs::read(dir.path().join("again").join(f)).unwrap(),
            "{f}"
        );
    }
    let o = bdg(dir.path(), &["gen-data", "--config", "gen.toml", "--out", "other", "--seed", "6"]);
    assert!(o.status.success());
    assert_ne!(
        fs::read(dir.path().join("data/data.jsonl")).unwrap(),
        fs::read(dir.path().join("other/data.jsonl")).unwrap()
    );
}

#[test]
fn bad_generator_config_exits_two_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), GEN.replace("seq_len = 8", "seq_len = -8")).unwrap();
    let o = bdg(dir.path(), &["gen-data", "--config", "bad.toml", "--out", "d"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seq_len"), "{}", stderr(&o));

    fs::write(dir.path().join("bad.toml"), GEN.replace("invariant_strength = 0.9", "invariant_strength = 1.9")).unwrap();
    let o = bdg(dir.path(), &["gen-data", "--config", "bad.toml", "--out", "d"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("invariant_strength"), "{}", stderr(&o));
}

#[test]
fn lodo_reports_every_domain_and_average() {
    let dir = with_data();
    let o = bdg(dir.path(), &["lodo", "--data", "data", "--epochs", "2", "--report", "out/lodo.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.contains("Avg") && table.contains("Ours"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/lodo.json")).unwrap()).unwrap();
    assert_eq!(report["per_domain"].as_array().unwrap().len(), 4);

    let o = bdg(
        dir.path(),
        &["lodo", "--data", "data", "--epochs", "2", "--report", "abl.json", "--ablate", "w/o-invariant"],
    );
    assert!(o.status.success());
    assert!(stdout(&o).contains("w/o Invariant"));

    let again = bdg(dir.path(), &["lodo", "--data", "data", "--epochs", "2", "--report", "out/lodo2.json"]);
    assert!(again.status.success());
    assert_eq!(
        fs::read(dir.path().join("out/lodo.json")).unwrap(),
        fs::read(dir.path().join("out/lodo2.json")).unwrap()
    );
}

#[test]
fn missing_data_and_unknown_flags_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = bdg(dir.path(), &["lodo", "--data", "nowhere", "--report", "r.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bdg(dir.path(), &["lodo", "--data", "nowhere", "--report", "r.json", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bdg(dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_training_config_exits_two() {
    let dir = with_data();
    fs::write(dir.path().join("train.toml"), "epochs = 0\n").unwrap();
    let o = bdg(dir.path(), &["lodo", "--data", "data", "--config", "train.toml", "--report", "r.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epochs"));
}

#[test]
fn diverging_training_exits_three() {
    let dir = with_data();
    fs::write(dir.path().join("train.toml"), "lr = 1e300\nepochs = 2\n").unwrap();
    let o = bdg(dir.path(), &["train", "--data", "data", "--config", "train.toml", "--out", "run"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn train_then_export_representations() {
    let dir = with_data();
    let o = bdg(
        dir.path(),
        &["train", "--data", "data", "--epochs", "2", "--held-out", "domain3", "--out", "run"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("domain3 accuracy"));
    for f in ["checkpoint.txt", "steps.csv", "epochs.csv", "summary.json", "manifest.json"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
    let o = bdg(
        dir.path(),
        &["export-reps", "--checkpoint", "run/checkpoint.txt", "--data", "data", "--domain", "domain3", "--out", "reps.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("reps.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 60 * 4);

    let o = bdg(
        dir.path(),
        &["train", "--data", "data", "--epochs", "2", "--method", "erm", "--out", "erm"],
    );
    assert!(o.status.success());
    let o = bdg(
        dir.path(),
        &["export-reps", "--checkpoint", "erm/checkpoint.txt", "--data", "data", "--out", "x.csv"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn grid_eval_and_ablate_run() {
    let dir = with_data();
    let o = bdg(
        dir.path(),
        &["grid-search", "--data", "data", "--epochs", "1", "--alphas", "0.1,1", "--betas", "1", "--report", "grid.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let grid: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("grid.json")).unwrap()).unwrap();
    assert_eq!(grid["grid"]["cells"].as_array().unwrap().len(), 2);

    let o = bdg(
        dir.path(),
        &["eval", "--data", "data", "--epochs", "1", "--seeds", "1,2", "--report", "eval.json", "--reps", "reps.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for label in ["Ours", "ERM", "VarPenalty", "w/o Invariant", "w/o Specific", "w/o Both", "probe"] {
        assert!(text.contains(label), "{label}");
    }
    assert!(dir.path().join("reps.csv").exists());

    let o = bdg(dir.path(), &["ablate", "--data", "data", "--epochs", "1", "--report", "abl.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("w/o Both"));
}

#[test]
fn check_backdoor_reports_copy_model_deviation() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("copy.scm"), COPY_SCM).unwrap();
    let o = bdg(dir.path(), &["check-backdoor", "--scm", "copy.scm", "--x", "M", "--y", "Y", "--adj", "D"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("M=1  P(Y|M=1)=[0.100000, 0.900000]  P(Y|do(M=1))=[0.300000, 0.700000]  deviation 0.200000"), "{text}");
    assert!(text.contains("backdoor condition violated"));
}

#[test]
fn check_backdoor_independent_and_cyclic() {
    let dir = tempfile::tempdir().unwrap();
    let indep = "var D 2\nvar M 2\nvar Y 2\nedge D -> Y\nedge M -> Y\ncpt D\n  0.3 0.7\ncpt M\n  0.6 0.4\ncpt Y | D M\n  0.9 0.1\n  0.6 0.4\n  0.2 0.8\n  0.3 0.7\n";
    fs::write(dir.path().join("indep.scm"), indep).unwrap();
    let o = bdg(dir.path(), &["check-backdoor", "--scm", "indep.scm", "--x", "M", "--y", "Y", "--adj", "D"]);
    let text = stdout(&o);
    assert!(text.contains("backdoor condition holds"));
    let dev: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("max deviation "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(dev < 1e-9);

    let cyc = "var A 2\nvar B 2\nedge A -> B\nedge B -> A\ncpt A | B\n  0.5 0.5\n  0.5 0.5\ncpt B | A\n  0.5 0.5\n  0.5 0.5\n";
    fs::write(dir.path().join("cyc.scm"), cyc).unwrap();
    let o = bdg(dir.path(), &["check-backdoor", "--scm", "cyc.scm", "--x", "A", "--y", "B", "--adj", "A"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("A -> B -> A"));
}
