use std::path::Path;
use std::process::{Command, Output};

const SMOKE: &str = r#"
name = "smoke"

[train]
system = "pendulum"
gmm = "pendulum2"
lambda = 45.0
horizon = 10
outer_iterations = 1
ppo_epochs = 2
estimator_epochs = 2
rollouts_per_epoch = 2
estimator_rollouts = 2
baseline_epochs = 2
hidden = [8]

[eval]
seeds = [0, 1, 2]
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_silence-lab"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), config).unwrap();
    dir
}

#[test]
fn missing_lambda_exits_2_and_names_field() {
    let dir = setup(&SMOKE.replace("lambda = 45.0", ""));
    let o = run(dir.path(), &["--config", "c.toml", "train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lambda"), "{}", stderr(&o));
}

#[test]
fn missing_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--config", "nope.toml", "train"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn smoke_train_writes_expected_files() {
    let dir = setup(SMOKE);
    let o = run(dir.path(), &["--config", "c.toml", "--out", "runs", "train", "--run-id", "a"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run_dir = dir.path().join("runs/a");
    for f in ["config.toml", "policy_1.ckpt", "value_1.ckpt", "estimator_1.ckpt", "training_log.csv", "iterations.csv"] {
        assert!(run_dir.join(f).exists(), "{f} missing");
    }
    // refuses to reuse an explicit run id
    let again = run(dir.path(), &["--config", "c.toml", "--out", "runs", "train", "--run-id", "a"]);
    assert_eq!(again.status.code(), Some(2));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = setup(SMOKE);
    for id in ["a", "b"] {
        let o = run(dir.path(), &["--config", "c.toml", "--out", "runs", "--seed", "7", "train", "--run-id", id]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["config.toml", "policy_1.ckpt", "value_1.ckpt", "estimator_1.ckpt", "training_log.csv", "iterations.csv"] {
        let a = std::fs::read(dir.path().join("runs/a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("runs/b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let o = run(dir.path(), &["--out", "e1", "evaluate", "--run", "runs/a"]);
    let p = run(dir.path(), &["--out", "e2", "evaluate", "--run", "runs/b"]);
    assert_eq!(stdout(&o), stdout(&p));
    for f in ["eval.csv", "trajectory.csv"] {
        assert_eq!(std::fs::read(dir.path().join("e1").join(f)).unwrap(), std::fs::read(dir.path().join("e2").join(f)).unwrap());
    }
}

#[test]
fn always_transmit_prints_geometric_cost() {
    let dir = setup(SMOKE);
    let o = run(dir.path(), &["--config", "c.toml", "--out", "ev", "evaluate", "--policy", "always"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    let cost: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    let expected = 45.0 * (1.0 - 0.99f64.powi(500)) / 0.01;
    assert!((cost - expected).abs() < 1e-9, "{line}");
    assert!(line.contains("transmissions 500 / 500"));
}

#[test]
fn landscape_on_fresh_networks_emits_requested_rows() {
    let dir = setup(SMOKE);
    let o = run(dir.path(), &["--config", "c.toml", "--out", "ls", "landscape", "--points", "137"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut reader = csv::Reader::from_path(dir.path().join("ls/landscape.csv")).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["e_1", "e_2", "delta", "gmm_component"]);
    assert_eq!(reader.records().count(), 137);
}

#[test]
fn pareto_emits_one_row_per_rule_plus_learned() {
    let config = format!("{SMOKE}\n[sweep]\nperiods = [1, 2, 3, 5]\nthresholds = [1.0, 4.0, 9.0]\n");
    let dir = setup(&config);
    let o = run(dir.path(), &["--config", "c.toml", "--out", "pa", "pareto"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut reader = csv::Reader::from_path(dir.path().join("pa/pareto.csv")).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["policy_id", "param", "mean_tx", "mean_cost", "std_cost"]);
    assert_eq!(reader.records().count(), 4 + 3 + 1);
}

#[test]
fn dimension_mismatch_exits_2() {
    let dir = setup(SMOKE);
    let o = run(dir.path(), &["--config", "c.toml", "--out", "runs", "train", "--run-id", "a"]);
    assert!(o.status.success());
    let boeing = SMOKE.replace("\"pendulum\"", "\"boeing747\"").replace("\"pendulum2\"", "\"boeing2\"");
    std::fs::write(dir.path().join("b.toml"), boeing).unwrap();
    let o = run(dir.path(), &["--config", "b.toml", "--out", "x", "evaluate", "--run", "runs/a"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn evaluation_does_not_modify_run_files() {
    let dir = setup(SMOKE);
    assert!(run(dir.path(), &["--config", "c.toml", "--out", "runs", "train", "--run-id", "a"]).status.success());
    let run_dir = dir.path().join("runs/a");
    let before: Vec<_> = std::fs::read_dir(&run_dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    let o = run(dir.path(), &["evaluate", "--run", "runs/a", "--policy", "periodic:2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let after: Vec<_> = std::fs::read_dir(&run_dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(after.len(), before.len() + 1);
    assert!(after.iter().any(|n| n.to_string_lossy().starts_with("eval-")));
}

#[test]
fn baseline_adds_linear_checkpoints() {
    let dir = setup(SMOKE);
    assert!(run(dir.path(), &["--config", "c.toml", "--out", "runs", "train", "--run-id", "a"]).status.success());
    let o = run(dir.path(), &["baseline", "--run", "runs/a"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("runs/a/linear_policy.ckpt").exists());
    let o = run(dir.path(), &["--out", "lb", "evaluate", "--run", "runs/a", "--policy", "linear-baseline"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let again = run(dir.path(), &["baseline", "--run", "runs/a"]);
    assert_eq!(again.status.code(), Some(2));
}

#[test]
fn bad_policy_flag_exits_2() {
    let dir = setup(SMOKE);
    let o = run(dir.path(), &["--config", "c.toml", "--out", "x", "evaluate", "--policy", "periodic:0"]);
    assert_eq!(o.status.code(), Some(2));
}
