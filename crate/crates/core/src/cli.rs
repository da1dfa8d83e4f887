//! Command-line driver.
//!
//! `train` and `baseline` create run directories; `evaluate`, `landscape`
//! and `pareto` read one (or a config with fresh networks) and write CSVs
//! into a new directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimator::{Estimator, EstimatorNet, LinearEstimator};
use crate::eval::{
    evaluate, evaluation_trajectory, landscape_scan, pareto_sweep, silence_rate_by_component, write_eval_csv,
    write_landscape_csv, write_pareto_csv, write_trajectory_csv, EvalSettings, SchedulePolicy,
};
use crate::nn::Checkpoint;
use crate::scheduler::{PolicyNet, ValueNet};
use crate::training::{alternating_train_with, init_networks, pretrain_linear_baseline, Problem};

/// Overrides `--out` when the flag is absent.
pub const OUT_ENV: &str = "SILENCE_LAB_OUT";
/// Overrides `--threads` when the flag is absent.
pub const THREADS_ENV: &str = "SILENCE_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "silence-lab", version, about = "Train and evaluate transmission schedulers with learned remote estimators")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Parent of new run directories (train, baseline) or the artifact directory (evaluation commands).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for rollouts and evaluation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Alternating scheduler/estimator training.
    Train(TrainArgs),
    /// Scheduler trained against the piecewise-linear estimator.
    Baseline(TrainArgs),
    /// Evaluate one scheduling rule over the configured seeds.
    Evaluate(EvalArgs),
    /// Scheduler decisions on visited lookahead errors.
    Landscape(LandscapeArgs),
    /// Periodic and event-triggered sweep plus the learned policy.
    Pareto(SourceArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Name of the run directory; defaults to `<name>-<unix time>`.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Add the baseline checkpoints to an existing run directory instead.
    #[arg(long)]
    pub run: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Run directory with checkpoints; its config.toml is used unless --config is given.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Checkpoint iteration to load; the latest by default.
    #[arg(long)]
    pub iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// always | never | periodic:P | event:TAU | learned | linear-baseline
    #[arg(long, default_value = "learned")]
    pub policy: String,
    /// Estimator to pair with the rule: learned | linear. Defaults to linear for linear-baseline.
    #[arg(long)]
    pub estimator: Option<String>,
}

#[derive(Debug, Args)]
pub struct LandscapeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Number of points; defaults to `landscape.num_points`.
    #[arg(long)]
    pub points: Option<usize>,
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::InvalidArgument(_) | Error::Json(_) => 2,
        Error::Numeric(_) | Error::NotConverged { .. } => 3,
        Error::Io(_) | Error::Csv(_) => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()),
    };
    if let Some(t) = threads {
        // a second call in the same process (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let out = cli.out.clone().or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from));
    match &cli.command {
        Command::Train(args) => cmd_train(&cli, args, out),
        Command::Baseline(args) => cmd_baseline(&cli, args, out),
        Command::Evaluate(args) => cmd_evaluate(&cli, args, out),
        Command::Landscape(args) => cmd_landscape(&cli, args, out),
        Command::Pareto(args) => cmd_pareto(&cli, args, out),
    }
}

fn load_config(cli: &Cli, run: Option<&Path>) -> Result<RunConfig> {
    let path = match (&cli.config, run) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join("config.toml"),
        (None, None) => {
            return Err(Error::Config { field: "--config".into(), message: "a config file or --run directory is required".into() })
        }
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config { field: "--config".into(), message: format!("{}: {e}", path.display()) })?;
    let mut cfg = RunConfig::from_toml_str(&text)?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn unix_time() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Creates a directory that did not exist before, suffixing `-2`, `-3`, … on collision
/// unless the name was given explicitly.
fn fresh_dir(parent: &Path, name: &str, explicit: bool) -> Result<PathBuf> {
    std::fs::create_dir_all(parent)?;
    let mut candidate = parent.join(name);
    let mut k = 2;
    while candidate.exists() {
        if explicit {
            return Err(Error::invalid(format!("{} already exists", candidate.display())));
        }
        candidate = parent.join(format!("{name}-{k}"));
        k += 1;
    }
    std::fs::create_dir(&candidate)?;
    Ok(candidate)
}

fn new_file(path: &Path) -> Result<()> {
    if path.exists() {
        return Err(Error::invalid(format!("{} already exists; run directories are never overwritten", path.display())));
    }
    Ok(())
}

fn metadata(cfg: &RunConfig, role: &str, iteration: usize) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("role".to_string(), role.to_string()),
        ("system".to_string(), cfg.train.system.name().to_string()),
        ("state_dim".to_string(), cfg.train.system.state_dim().to_string()),
        ("iteration".to_string(), iteration.to_string()),
    ])
}

fn save_value(path: &Path, value: &ValueNet<f64>, mut meta: BTreeMap<String, String>) -> Result<()> {
    meta.insert("scale".into(), value.scale.to_string());
    new_file(path)?;
    Checkpoint::from_mlp(&value.net, meta).save(path)
}

fn save_net(path: &Path, net: &crate::nn::Mlp<f64>, meta: BTreeMap<String, String>) -> Result<()> {
    new_file(path)?;
    Checkpoint::from_mlp(net, meta).save(path)
}

fn cmd_train(cli: &Cli, args: &TrainArgs, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(cli, None)?;
    let parent = out.unwrap_or_else(|| cfg.out_dir.clone());
    let name = args.run_id.clone().unwrap_or_else(|| format!("{}-{}", cfg.name, unix_time()));
    let dir = fresh_dir(&parent, &name, args.run_id.is_some())?;
    std::fs::write(dir.join("config.toml"), cfg.resolved_toml()?)?;

    let last = cfg.train.outer_iterations;
    let result = alternating_train_with::<f64>(&cfg.train, &mut |it, policy, value, estimator| {
        if !cfg.export.every_iteration && it != last {
            return Ok(());
        }
        save_net(&dir.join(format!("policy_{it}.ckpt")), &policy.net, metadata(&cfg, "policy", it))?;
        save_value(&dir.join(format!("value_{it}.ckpt")), value, metadata(&cfg, "value", it))?;
        save_net(&dir.join(format!("estimator_{it}.ckpt")), &estimator.net, metadata(&cfg, "estimator", it))?;
        eprintln!("iteration {it}/{last} written");
        Ok(())
    })?;
    result.log.write_csv(&dir.join("training_log.csv"))?;
    result.log.write_iterations_csv(&dir.join("iterations.csv"))?;
    if let Some(s) = result.log.iterations.last() {
        println!("run {} | final return {} | tx rate {}", dir.display(), s.mean_return, s.tx_rate);
    }
    Ok(())
}

fn cmd_baseline(cli: &Cli, args: &TrainArgs, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(cli, args.run.as_deref())?;
    let dir = match &args.run {
        Some(run) => run.clone(),
        None => {
            let parent = out.unwrap_or_else(|| cfg.out_dir.clone());
            let name = args.run_id.clone().unwrap_or_else(|| format!("{}-baseline-{}", cfg.name, unix_time()));
            let dir = fresh_dir(&parent, &name, args.run_id.is_some())?;
            std::fs::write(dir.join("config.toml"), cfg.resolved_toml()?)?;
            dir
        }
    };
    for f in ["linear_policy.ckpt", "linear_value.ckpt", "baseline_log.csv"] {
        new_file(&dir.join(f))?;
    }
    let (policy, value, log) = pretrain_linear_baseline::<f64>(&cfg.train)?;
    let epochs = cfg.train.baseline_epochs;
    save_net(&dir.join("linear_policy.ckpt"), &policy.net, metadata(&cfg, "linear_policy", epochs))?;
    save_value(&dir.join("linear_value.ckpt"), &value, metadata(&cfg, "linear_value", epochs))?;
    log.write_csv(&dir.join("baseline_log.csv"))?;
    if let Some(s) = log.iterations.last() {
        println!("run {} | final return {} | tx rate {}", dir.display(), s.mean_return, s.tx_rate);
    }
    Ok(())
}

/// Networks used by the evaluation commands.
struct Loaded {
    cfg: RunConfig,
    problem: Problem<f64>,
    policy: PolicyNet<f64>,
    estimator: EstimatorNet<f64>,
    linear_policy: Option<PolicyNet<f64>>,
}

fn latest_iteration(dir: &Path) -> Result<Option<usize>> {
    let mut best = None;
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(k) = name.strip_prefix("policy_").and_then(|s| s.strip_suffix(".ckpt")) {
            if let Ok(k) = k.parse::<usize>() {
                best = best.max(Some(k));
            }
        }
    }
    Ok(best)
}

fn load_checkpoint(path: &Path, expect_in: usize, expect_out: usize) -> Result<crate::nn::Mlp<f64>> {
    let net = Checkpoint::load(path)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?
        .to_mlp::<f64>()
        .map_err(|e| e.context(path.display()))?;
    if net.input_dim() != expect_in || net.output_dim() != expect_out {
        return Err(Error::invalid(format!(
            "{}: network maps {} → {}, the configured system needs {expect_in} → {expect_out}",
            path.display(),
            net.input_dim(),
            net.output_dim()
        )));
    }
    Ok(net)
}

fn load(cli: &Cli, source: &SourceArgs) -> Result<Loaded> {
    let cfg = load_config(cli, source.run.as_deref())?;
    let problem = Problem::<f64>::from_config(&cfg.train)?;
    let n = cfg.train.system.state_dim();
    let (mut policy, _, mut estimator) = init_networks::<f64>(&cfg.train)?;
    let mut linear_policy = None;
    if let Some(dir) = &source.run {
        let iter = match source.iter {
            Some(k) => Some(k),
            None => latest_iteration(dir)?,
        };
        if let Some(k) = iter {
            policy = PolicyNet::from_mlp(load_checkpoint(&dir.join(format!("policy_{k}.ckpt")), n, 2)?)?;
            estimator = EstimatorNet::from_mlp(load_checkpoint(&dir.join(format!("estimator_{k}.ckpt")), n + 1, n)?)?;
        }
        let lp = dir.join("linear_policy.ckpt");
        if lp.exists() {
            linear_policy = Some(PolicyNet::from_mlp(load_checkpoint(&lp, n, 2)?)?);
        }
    }
    Ok(Loaded { cfg, problem, policy, estimator, linear_policy })
}

fn artifact_dir(source: &SourceArgs, cfg: &RunConfig, out: Option<PathBuf>, kind: &str) -> Result<PathBuf> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            Ok(dir)
        }
        None => {
            let parent = source.run.clone().unwrap_or_else(|| cfg.out_dir.clone());
            fresh_dir(&parent, &format!("{kind}-{}", unix_time()), false)
        }
    }
}

fn settings(l: &Loaded) -> EvalSettings<f64> {
    EvalSettings { horizon: l.cfg.eval.horizon, cost: l.problem.cost.clone(), seeds: l.cfg.eval.seeds.clone() }
}

/// Parses a `--policy` value.
pub fn parse_policy(spec: &str) -> Result<PolicyChoice> {
    let bad = || Error::invalid(format!("unknown policy `{spec}`"));
    let choice = match spec.split_once(':') {
        None => match spec {
            "always" => PolicyChoice::Rule(SchedulePolicy::Always),
            "never" => PolicyChoice::Rule(SchedulePolicy::Never),
            "learned" => PolicyChoice::Learned,
            "linear-baseline" => PolicyChoice::LinearBaseline,
            _ => return Err(bad()),
        },
        Some(("periodic", p)) => PolicyChoice::Rule(SchedulePolicy::Periodic(p.parse().map_err(|_| bad())?)),
        Some(("event", t)) => PolicyChoice::Rule(SchedulePolicy::EventTriggered(t.parse().map_err(|_| bad())?)),
        Some(_) => return Err(bad()),
    };
    if let PolicyChoice::Rule(rule) = &choice {
        rule.validate()?;
    }
    Ok(choice)
}

#[derive(Debug, Clone)]
pub enum PolicyChoice {
    Rule(SchedulePolicy<f64>),
    Learned,
    LinearBaseline,
}

fn cmd_evaluate(cli: &Cli, args: &EvalArgs, out: Option<PathBuf>) -> Result<()> {
    let choice = parse_policy(&args.policy)?;
    let l = load(cli, &args.source)?;
    let linear = LinearEstimator::mean_aware(&l.problem.gmm);
    let (policy, default_linear) = match choice {
        PolicyChoice::Rule(rule) => (rule, false),
        PolicyChoice::Learned => (SchedulePolicy::Learned(l.policy.clone()), false),
        PolicyChoice::LinearBaseline => {
            let p = l.linear_policy.clone().ok_or_else(|| {
                Error::invalid("linear-baseline needs a run directory containing linear_policy.ckpt (see `baseline --run`)")
            })?;
            (SchedulePolicy::Learned(p), true)
        }
    };
    let use_linear = match args.estimator.as_deref() {
        None => default_linear,
        Some("linear") => true,
        Some("learned") => false,
        Some(other) => return Err(Error::invalid(format!("unknown estimator `{other}`"))),
    };
    let estimator = if use_linear { Estimator::Linear(&linear) } else { Estimator::Learned(&l.estimator) };
    let s = settings(&l);
    let report = evaluate(&policy, estimator, &l.problem.model, &l.problem.gmm, &s)?;
    let dir = artifact_dir(&args.source, &l.cfg, out, "eval")?;
    write_eval_csv(&dir.join("eval.csv"), &report)?;
    if l.cfg.export.trajectory {
        let rec = evaluation_trajectory(&policy, estimator, &l.problem.model, &l.problem.gmm, &s, s.seeds[0])?;
        write_trajectory_csv(&dir.join("trajectory.csv"), &rec)?;
    }
    println!("{}", report.summary_line());
    Ok(())
}

fn cmd_landscape(cli: &Cli, args: &LandscapeArgs, out: Option<PathBuf>) -> Result<()> {
    let l = load(cli, &args.source)?;
    let points = args.points.unwrap_or(l.cfg.landscape.num_points);
    let s = settings(&l);
    let policy = SchedulePolicy::Learned(l.policy.clone());
    let pts = landscape_scan(&policy, Estimator::Learned(&l.estimator), &l.problem.model, &l.problem.gmm, &s, points)?;
    let dir = artifact_dir(&args.source, &l.cfg, out, "landscape")?;
    write_landscape_csv(&dir.join("landscape.csv"), &pts)?;
    let rates = silence_rate_by_component(&pts, l.problem.gmm.components());
    println!("landscape {} points | silence rate by component {:?}", pts.len(), rates);
    Ok(())
}

fn cmd_pareto(cli: &Cli, args: &SourceArgs, out: Option<PathBuf>) -> Result<()> {
    let l = load(cli, args)?;
    let s = settings(&l);
    let points = pareto_sweep(
        &l.problem.model,
        &l.problem.gmm,
        Estimator::Learned(&l.estimator),
        &l.policy,
        &l.cfg.sweep.periods,
        &l.cfg.sweep.thresholds,
        &s,
    )?;
    let dir = artifact_dir(args, &l.cfg, out, "pareto")?;
    write_pareto_csv(&dir.join("pareto.csv"), &points)?;
    for p in &points {
        let param = if p.param.is_nan() { "-".to_string() } else { p.param.to_string() };
        println!("{} {param} | transmissions {} | error cost {} ± {}", p.policy_id, p.mean_tx, p.mean_cost, p.std_cost);
    }
    Ok(())
}
