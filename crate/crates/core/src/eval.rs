//! Baseline schedulers, cost evaluation, scheduling landscapes and trade-off sweeps.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::rng::{self, Purpose, Rng};
use crate::rollout::{simulate, CostSpec, Scheduler, TrajectoryRecord};
use crate::scalar::{sq_norm, Scalar};
use crate::scheduler::{policy_sample, PolicyNet};
use crate::systems::{GmmSpec, SystemModel};

/// Transmission rule.
#[derive(Debug, Clone, PartialEq)]
pub enum SchedulePolicy<T> {
    Learned(PolicyNet<T>),
    /// Fires at `t = 0, p, 2p, …`.
    Periodic(u64),
    /// Fires iff `‖e‖² ≥ τ`.
    EventTriggered(T),
    Always,
    Never,
}

impl<T: Scalar> SchedulePolicy<T> {
    pub fn id(&self) -> &'static str {
        match self {
            SchedulePolicy::Learned(_) => "learned",
            SchedulePolicy::Periodic(_) => "periodic",
            SchedulePolicy::EventTriggered(_) => "event",
            SchedulePolicy::Always => "always",
            SchedulePolicy::Never => "never",
        }
    }

    /// Period or threshold; `NaN` for parameterless rules.
    pub fn param(&self) -> f64 {
        match self {
            SchedulePolicy::Periodic(p) => *p as f64,
            SchedulePolicy::EventTriggered(tau) => tau.f64(),
            _ => f64::NAN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SchedulePolicy::Periodic(0) => Err(Error::invalid("period must be at least 1")),
            SchedulePolicy::EventTriggered(tau) if !(*tau > T::zero()) => {
                Err(Error::invalid("event-trigger threshold must be positive"))
            }
            _ => Ok(()),
        }
    }
}

impl<T: Scalar> Scheduler<T> for SchedulePolicy<T> {
    fn decide(&self, error: &[T], t: u64, rng: &mut Rng) -> Result<(bool, T)> {
        let fire = match self {
            SchedulePolicy::Learned(p) => return policy_sample(p, error, rng),
            SchedulePolicy::Periodic(p) => t % *p == 0,
            SchedulePolicy::EventTriggered(tau) => sq_norm(error) >= *tau,
            SchedulePolicy::Always => true,
            SchedulePolicy::Never => false,
        };
        Ok((fire, T::zero()))
    }
}

/// Horizon, cost and seeds of an evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings<T> {
    pub horizon: usize,
    pub cost: CostSpec<T>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    /// Discounted cost `Σ γᵗ((1−δₜ)‖e°ₜ‖²_Γ + λδₜ)`.
    pub cost: f64,
    /// Discounted error term alone.
    pub error_cost: f64,
    pub transmissions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub horizon: usize,
    pub per_seed: Vec<SeedResult>,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub mean_error_cost: f64,
    pub std_error_cost: f64,
    pub mean_transmissions: f64,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn from_seeds(horizon: usize, per_seed: Vec<SeedResult>) -> Self {
        let costs: Vec<f64> = per_seed.iter().map(|s| s.cost).collect();
        let errs: Vec<f64> = per_seed.iter().map(|s| s.error_cost).collect();
        let (mean_cost, std_cost) = mean_std(&costs);
        let (mean_error_cost, std_error_cost) = mean_std(&errs);
        let mean_transmissions =
            per_seed.iter().map(|s| s.transmissions as f64).sum::<f64>() / per_seed.len() as f64;
        EvalReport { horizon, per_seed, mean_cost, std_cost, mean_error_cost, std_error_cost, mean_transmissions }
    }

    pub fn summary_line(&self) -> String {
        format!(
            "cost {} ± {} | transmissions {} / {} | error cost {}",
            self.mean_cost, self.std_cost, self.mean_transmissions, self.horizon, self.mean_error_cost
        )
    }
}

/// Trajectory for one evaluation seed; the same generator stream as [`evaluate`].
pub fn evaluation_trajectory<T: Scalar>(
    policy: &SchedulePolicy<T>,
    estimator: Estimator<'_, T>,
    model: &SystemModel<T>,
    gmm: &GmmSpec<T>,
    settings: &EvalSettings<T>,
    seed: u64,
) -> Result<TrajectoryRecord<T>> {
    let mut r = rng::stream(seed, Purpose::Evaluation, 0);
    simulate(model, gmm, policy, estimator, &settings.cost, settings.horizon, None, &mut r)
        .map_err(|e| e.context(format!("evaluation seed {seed}")))
}

/// One rollout per seed without learning; aggregates discounted cost and transmissions.
pub fn evaluate<T: Scalar>(
    policy: &SchedulePolicy<T>,
    estimator: Estimator<'_, T>,
    model: &SystemModel<T>,
    gmm: &GmmSpec<T>,
    settings: &EvalSettings<T>,
) -> Result<EvalReport> {
    policy.validate()?;
    if settings.horizon == 0 || settings.seeds.is_empty() {
        return Err(Error::invalid("evaluation needs a positive horizon and at least one seed"));
    }
    let per_seed = settings
        .seeds
        .par_iter()
        .map(|&seed| {
            let rec = evaluation_trajectory(policy, estimator, model, gmm, settings, seed)?;
            Ok(SeedResult {
                seed,
                cost: rec.lookahead_cost(&settings.cost).f64(),
                error_cost: rec.discounted_error_cost(&settings.cost).f64(),
                transmissions: rec.transmissions,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_seeds(settings.horizon, per_seed))
}

/// A visited lookahead error with the decision taken there.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapePoint<T> {
    pub error: Vec<T>,
    pub transmit: bool,
    /// Mixture component of the noise that produced this step's state.
    pub component: Option<usize>,
}

/// Collects `(e°, δ, component)` triples from evaluation rollouts until
/// `num_points` are gathered, cycling over seeds with fresh streams.
pub fn landscape_scan<T: Scalar>(
    policy: &SchedulePolicy<T>,
    estimator: Estimator<'_, T>,
    model: &SystemModel<T>,
    gmm: &GmmSpec<T>,
    settings: &EvalSettings<T>,
    num_points: usize,
) -> Result<Vec<LandscapePoint<T>>> {
    policy.validate()?;
    if settings.seeds.is_empty() || settings.horizon == 0 {
        return Err(Error::invalid("landscape scan needs seeds and a positive horizon"));
    }
    let mut points = Vec::with_capacity(num_points);
    let mut round = 0u64;
    while points.len() < num_points {
        for &seed in &settings.seeds {
            let mut r = rng::stream(seed, Purpose::Landscape, round);
            let rec = simulate(model, gmm, policy, estimator, &settings.cost, settings.horizon, None, &mut r)
                .map_err(|e| e.context(format!("landscape seed {seed}")))?;
            for t in 0..rec.len() {
                if points.len() == num_points {
                    break;
                }
                points.push(LandscapePoint {
                    error: rec.lookahead_errors[t].clone(),
                    transmit: rec.actions[t],
                    component: rec.noise_components[t],
                });
            }
            if points.len() == num_points {
                break;
            }
        }
        round += 1;
    }
    Ok(points)
}

/// Accuracy of predicting a two-way component split from the decisions,
/// under the better of the two label assignments. Components other than
/// `a` and `b` and unlabeled points are ignored.
pub fn mode_separation_accuracy<T>(points: &[LandscapePoint<T>], a: usize, b: usize) -> f64 {
    let mut agree = 0usize;
    let mut total = 0usize;
    for p in points {
        let Some(c) = p.component else { continue };
        if c != a && c != b {
            continue;
        }
        total += 1;
        if (c == a) == p.transmit {
            agree += 1;
        }
    }
    if total == 0 {
        return f64::NAN;
    }
    let acc = agree as f64 / total as f64;
    acc.max(1.0 - acc)
}

/// Per-component fraction of silent decisions (`NaN` for unseen components).
pub fn silence_rate_by_component<T>(points: &[LandscapePoint<T>], components: usize) -> Vec<f64> {
    let mut silent = vec![0usize; components];
    let mut seen = vec![0usize; components];
    for p in points {
        if let Some(c) = p.component {
            seen[c] += 1;
            silent[c] += (!p.transmit) as usize;
        }
    }
    silent
        .iter()
        .zip(&seen)
        .map(|(&s, &n)| if n == 0 { f64::NAN } else { s as f64 / n as f64 })
        .collect()
}

/// One point of the communication/accuracy trade-off.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub policy_id: String,
    pub param: f64,
    pub mean_tx: f64,
    /// Mean discounted estimation-error term (communication excluded).
    pub mean_cost: f64,
    pub std_cost: f64,
}

/// Evaluates periodic and event-triggered rules and the learned policy
/// against one fixed estimator.
pub fn pareto_sweep<T: Scalar>(
    model: &SystemModel<T>,
    gmm: &GmmSpec<T>,
    estimator: Estimator<'_, T>,
    learned: &PolicyNet<T>,
    periods: &[u64],
    thresholds: &[T],
    settings: &EvalSettings<T>,
) -> Result<Vec<ParetoPoint>> {
    let mut policies: Vec<SchedulePolicy<T>> = periods.iter().map(|&p| SchedulePolicy::Periodic(p)).collect();
    policies.extend(thresholds.iter().map(|&tau| SchedulePolicy::EventTriggered(tau)));
    policies.push(SchedulePolicy::Learned(learned.clone()));
    policies
        .iter()
        .map(|p| {
            let rep = evaluate(p, estimator, model, gmm, settings)?;
            Ok(ParetoPoint {
                policy_id: p.id().to_string(),
                param: p.param(),
                mean_tx: rep.mean_transmissions,
                mean_cost: rep.mean_error_cost,
                std_cost: rep.std_error_cost,
            })
        })
        .collect()
}

/// Whether `other` beats `point` on both axes, with `tol` slack on cost.
pub fn dominates(other: &ParetoPoint, point: &ParetoPoint, tol: f64) -> bool {
    other.mean_tx <= point.mean_tx && other.mean_cost < point.mean_cost - tol
}

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

pub fn write_landscape_csv<T: Scalar>(path: &Path, points: &[LandscapePoint<T>]) -> Result<()> {
    let n = points.first().map_or(0, |p| p.error.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=n).map(|i| format!("e_{i}")).collect();
    header.push("delta".into());
    header.push("gmm_component".into());
    w.write_record(&header)?;
    for p in points {
        let mut row: Vec<String> = p.error.iter().map(|v| v.f64().to_string()).collect();
        row.push((p.transmit as u8).to_string());
        row.push(p.component.map_or(String::new(), |c| c.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory_csv<T: Scalar>(path: &Path, rec: &TrajectoryRecord<T>) -> Result<()> {
    let n = rec.states.first().map_or(0, |s| s.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=n).map(|i| format!("xhat_{i}")));
    header.extend(["e_norm", "delta", "aoi"].map(String::from));
    w.write_record(&header)?;
    for t in 0..rec.len() {
        let mut row = vec![t.to_string()];
        row.extend(rec.states[t].iter().map(|v| v.f64().to_string()));
        row.extend(rec.estimates[t].iter().map(|v| v.f64().to_string()));
        row.push(sq_norm(&rec.errors[t]).sqrt().f64().to_string());
        row.push((rec.actions[t] as u8).to_string());
        row.push(rec.aoi[t].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pareto_csv(path: &Path, points: &[ParetoPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["policy_id", "param", "mean_tx", "mean_cost", "std_cost"])?;
    for p in points {
        w.write_record([
            p.policy_id.clone(),
            fmt_opt(p.param),
            p.mean_tx.to_string(),
            p.mean_cost.to_string(),
            p.std_cost.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_eval_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "seed,cost,error_cost,transmissions")?;
    for s in &report.per_seed {
        writeln!(f, "{},{},{},{}", s.seed, s.cost, s.error_cost, s.transmissions)?;
    }
    writeln!(f, "mean,{},{},{}", report.mean_cost, report.mean_error_cost, report.mean_transmissions)?;
    writeln!(f, "std,{},{},", report.std_cost, report.std_error_cost)?;
    Ok(())
}
