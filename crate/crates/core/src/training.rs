//! Alternating scheduler/estimator training.
//!
//! Each outer iteration first improves the scheduler with PPO while the
//! estimator is frozen, then regresses the estimator's silent-step residual
//! while the scheduler is frozen.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{train_estimator_with, Estimator, EstimatorNet, EstimatorTrainConfig, LinearEstimator};
use crate::nn::{AdamConfig, OptimizerState};
use crate::rng::{self, Purpose, Rng};
use crate::rollout::{simulate, CostSpec, TrajectoryRecord};
use crate::scalar::{LinalgScalar, Scalar};
use crate::scheduler::{ppo_update, PolicyNet, PpoConfig, PpoStats, RolloutBuffer, ValueNet};
use crate::systems::{build_with_default_lqr, presets, GmmParams, GmmSpec, SystemKind, SystemModel};

/// Every knob of a training run. Missing optional fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub system: SystemKind,
    pub gmm: GmmParams,
    /// Price of one transmission.
    pub lambda: f64,
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    /// `Γ`, row by row; identity when absent.
    #[serde(default)]
    pub cost_weight: Option<Vec<Vec<f64>>>,
    #[serde(default = "defaults::horizon")]
    pub horizon: usize,
    #[serde(default = "defaults::outer_iterations")]
    pub outer_iterations: usize,
    #[serde(default = "defaults::ppo_epochs")]
    pub ppo_epochs: usize,
    #[serde(default = "defaults::ppo_update_iters")]
    pub ppo_update_iters: usize,
    #[serde(default = "defaults::estimator_epochs")]
    pub estimator_epochs: usize,
    #[serde(default = "defaults::rollouts")]
    pub rollouts_per_epoch: usize,
    #[serde(default = "defaults::rollouts")]
    pub estimator_rollouts: usize,
    #[serde(default = "defaults::lr")]
    pub policy_lr: f64,
    #[serde(default = "defaults::lr")]
    pub value_lr: f64,
    #[serde(default = "defaults::lr")]
    pub estimator_lr: f64,
    #[serde(default = "defaults::weight_decay")]
    pub estimator_weight_decay: f64,
    #[serde(default = "defaults::clip")]
    pub clip: f64,
    #[serde(default = "defaults::gae_lambda")]
    pub gae_lambda: f64,
    #[serde(default = "defaults::entropy_coef")]
    pub entropy_coef: f64,
    /// Output scale of the value network.
    #[serde(default = "defaults::value_scale")]
    pub value_scale: f64,
    #[serde(default = "defaults::hidden")]
    pub hidden: Vec<usize>,
    /// PPO epochs for the scheduler paired with the linear estimator.
    #[serde(default = "defaults::baseline_epochs")]
    pub baseline_epochs: usize,
    /// Discount the estimator loss with the `L ← γL + c` recursion.
    #[serde(default)]
    pub reverse_discount_loss: bool,
    #[serde(default)]
    pub seed: u64,
}

pub mod defaults {
    pub fn gamma() -> f64 {
        0.99
    }
    pub fn horizon() -> usize {
        80
    }
    pub fn outer_iterations() -> usize {
        10
    }
    pub fn ppo_epochs() -> usize {
        80
    }
    pub fn ppo_update_iters() -> usize {
        10
    }
    pub fn estimator_epochs() -> usize {
        150
    }
    pub fn rollouts() -> usize {
        32
    }
    pub fn lr() -> f64 {
        1e-3
    }
    pub fn weight_decay() -> f64 {
        1e-4
    }
    pub fn clip() -> f64 {
        0.2
    }
    pub fn gae_lambda() -> f64 {
        0.9
    }
    pub fn entropy_coef() -> f64 {
        0.01
    }
    pub fn value_scale() -> f64 {
        100.0
    }
    pub fn hidden() -> Vec<usize> {
        vec![64, 64]
    }
    pub fn baseline_epochs() -> usize {
        1000
    }
}

impl TrainConfig {
    /// Defaults for a system and mixture at price `lambda`.
    pub fn new(system: SystemKind, gmm: GmmParams, lambda: f64) -> Self {
        TrainConfig {
            system,
            gmm,
            lambda,
            gamma: defaults::gamma(),
            cost_weight: None,
            horizon: defaults::horizon(),
            outer_iterations: defaults::outer_iterations(),
            ppo_epochs: defaults::ppo_epochs(),
            ppo_update_iters: defaults::ppo_update_iters(),
            estimator_epochs: defaults::estimator_epochs(),
            rollouts_per_epoch: defaults::rollouts(),
            estimator_rollouts: defaults::rollouts(),
            policy_lr: defaults::lr(),
            value_lr: defaults::lr(),
            estimator_lr: defaults::lr(),
            estimator_weight_decay: defaults::weight_decay(),
            clip: defaults::clip(),
            gae_lambda: defaults::gae_lambda(),
            entropy_coef: defaults::entropy_coef(),
            value_scale: defaults::value_scale(),
            hidden: defaults::hidden(),
            baseline_epochs: defaults::baseline_epochs(),
            reverse_discount_loss: false,
            seed: 0,
        }
    }

    /// Pendulum with the two-mode mixture.
    pub fn pendulum(lambda: f64) -> Self {
        TrainConfig::new(SystemKind::Pendulum, presets::pendulum_two_mode(), lambda)
    }

    /// Checks invariants; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| Error::Config { field: field.into(), message: message.into() };
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(bad("lambda", "must be a finite non-negative number"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(bad("gamma", "must lie in (0, 1)"));
        }
        for (name, v) in [
            ("horizon", self.horizon),
            ("outer_iterations", self.outer_iterations),
            ("ppo_epochs", self.ppo_epochs),
            ("ppo_update_iters", self.ppo_update_iters),
            ("estimator_epochs", self.estimator_epochs),
            ("rollouts_per_epoch", self.rollouts_per_epoch),
            ("estimator_rollouts", self.estimator_rollouts),
            ("baseline_epochs", self.baseline_epochs),
        ] {
            if v == 0 {
                return Err(bad(name, "must be at least 1"));
            }
        }
        for (name, v) in [
            ("policy_lr", self.policy_lr),
            ("value_lr", self.value_lr),
            ("estimator_lr", self.estimator_lr),
            ("clip", self.clip),
            ("value_scale", self.value_scale),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(bad(name, "must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(bad("gae_lambda", "must lie in [0, 1]"));
        }
        if self.entropy_coef < 0.0 || self.estimator_weight_decay < 0.0 {
            return Err(bad("entropy_coef", "coefficients must be non-negative"));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(bad("hidden", "layer widths must be positive"));
        }
        let n = self.system.state_dim();
        GmmSpec::<f64>::from_params(&self.gmm).map_err(|e| bad("gmm", &e.to_string()))?;
        if self.gmm.means[0].len() != n {
            return Err(bad("gmm", &format!("noise dimension must equal the state dimension {n}")));
        }
        let w = self.cost_weight_flat();
        if w.len() != n * n {
            return Err(bad("cost_weight", &format!("must be {n}×{n}")));
        }
        crate::systems::psd_cholesky(&w, n).map_err(|_| bad("cost_weight", "must be symmetric positive semi-definite"))?;
        Ok(())
    }

    pub fn cost_weight_flat(&self) -> Vec<f64> {
        let n = self.system.state_dim();
        match &self.cost_weight {
            Some(rows) => rows.iter().flatten().copied().collect(),
            None => (0..n * n).map(|k| if k % (n + 1) == 0 { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Same config with `Γ` written out explicitly.
    pub fn resolved(&self) -> Self {
        let n = self.system.state_dim();
        let w = self.cost_weight_flat();
        TrainConfig { cost_weight: Some(w.chunks(n).map(|r| r.to_vec()).collect()), ..self.clone() }
    }

    pub fn cost<T: Scalar>(&self) -> Result<CostSpec<T>> {
        let n = self.system.state_dim();
        CostSpec::new(T::of(self.lambda), T::of(self.gamma), self.cost_weight_flat().into_iter().map(T::of).collect(), n)
    }

    pub fn ppo_config(&self) -> PpoConfig {
        PpoConfig {
            clip: self.clip,
            entropy_coef: self.entropy_coef,
            update_iters: self.ppo_update_iters,
            normalize_advantages: true,
            policy_adam: AdamConfig { learning_rate: self.policy_lr, ..AdamConfig::default() },
            value_adam: AdamConfig { learning_rate: self.value_lr, ..AdamConfig::default() },
        }
    }

    pub fn estimator_config(&self) -> EstimatorTrainConfig {
        EstimatorTrainConfig {
            epochs: self.estimator_epochs,
            rollouts: self.estimator_rollouts,
            horizon: self.horizon,
            gamma: self.gamma,
            lambda: self.lambda,
            cost_weight: self.cost_weight_flat(),
            adam: AdamConfig {
                learning_rate: self.estimator_lr,
                weight_decay: self.estimator_weight_decay,
                ..AdamConfig::default()
            },
            reverse_discount: self.reverse_discount_loss,
            seed: self.seed,
        }
    }

    /// Seed for network initialisation, distinct per network role.
    pub fn init_seed(&self, role: u64) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(role)
    }
}

/// Model and mixture described by a config.
pub struct Problem<T: LinalgScalar> {
    pub model: SystemModel<T>,
    pub gmm: GmmSpec<T>,
    pub cost: CostSpec<T>,
}

impl<T: LinalgScalar> Problem<T> {
    pub fn from_config(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let gmm = GmmSpec::from_params(&config.gmm)?;
        let model = build_with_default_lqr(config.system, &gmm)?;
        Ok(Problem { model, gmm, cost: config.cost()? })
    }
}

/// Fresh `(policy, value, estimator)` networks for a config.
pub fn init_networks<T: Scalar>(config: &TrainConfig) -> Result<(PolicyNet<T>, ValueNet<T>, EstimatorNet<T>)> {
    let n = config.system.state_dim();
    Ok((
        PolicyNet::new(n, &config.hidden, config.init_seed(1))?,
        ValueNet::new(n, &config.hidden, T::of(config.value_scale), config.init_seed(2))?,
        EstimatorNet::new(n, &config.hidden, config.init_seed(3))?,
    ))
}

/// Simulates one trajectory and packs it into a PPO buffer with values and GAE.
#[allow(clippy::too_many_arguments)]
pub fn collect_rollout<T: Scalar>(
    policy: &PolicyNet<T>,
    value: &ValueNet<T>,
    estimator: Estimator<'_, T>,
    model: &SystemModel<T>,
    gmm: &GmmSpec<T>,
    cost: &CostSpec<T>,
    horizon: usize,
    gae_lambda: T,
    rng: &mut Rng,
) -> Result<(RolloutBuffer<T>, TrajectoryRecord<T>)> {
    let rec = simulate(model, gmm, policy, estimator, cost, horizon, None, rng)?;
    let values = rec
        .lookahead_errors
        .iter()
        .map(|e| value.value(e))
        .collect::<Result<Vec<T>>>()?;
    let mut buf = RolloutBuffer {
        errors: rec.lookahead_errors.clone(),
        actions: rec.actions.clone(),
        log_probs: rec.log_probs.clone(),
        rewards: rec.rewards(),
        values,
        advantages: Vec::new(),
        returns: Vec::new(),
    };
    buf.finish(cost.gamma, gae_lambda)?;
    Ok((buf, rec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Scheduler,
    Estimator,
    Baseline,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Scheduler => "scheduler",
            Phase::Estimator => "estimator",
            Phase::Baseline => "baseline",
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub outer_iter: usize,
    pub phase: Phase,
    pub epoch: usize,
    pub mean_return: f64,
    pub tx_rate: f64,
    pub estimator_loss: Option<f64>,
    pub entropy: Option<f64>,
}

/// End-of-iteration metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationSummary {
    pub outer_iter: usize,
    pub mean_return: f64,
    pub tx_rate: f64,
    pub estimator_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
    pub iterations: Vec<IterationSummary>,
}

impl TrainLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["outer_iter", "phase", "epoch", "mean_return", "tx_rate", "estimator_loss", "entropy"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.rows {
            w.write_record([
                r.outer_iter.to_string(),
                r.phase.name().to_string(),
                r.epoch.to_string(),
                r.mean_return.to_string(),
                r.tx_rate.to_string(),
                opt(r.estimator_loss),
                opt(r.entropy),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_iterations_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["outer_iter", "mean_return", "tx_rate", "estimator_loss"])?;
        for s in &self.iterations {
            w.write_record([
                s.outer_iter.to_string(),
                s.mean_return.to_string(),
                s.tx_rate.to_string(),
                s.estimator_loss.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trained networks plus log.
#[derive(Debug, Clone)]
pub struct TrainOutput<T> {
    pub policy: PolicyNet<T>,
    pub value: ValueNet<T>,
    pub estimator: EstimatorNet<T>,
    pub log: TrainLog,
}

/// PPO learner state: networks with their optimizers.
pub struct SchedulerLearner<T> {
    pub policy: PolicyNet<T>,
    pub value: ValueNet<T>,
    policy_opt: OptimizerState<T>,
    value_opt: OptimizerState<T>,
    config: PpoConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerEpoch {
    pub mean_return: f64,
    pub tx_rate: f64,
    pub stats: PpoStats,
}

impl<T: Scalar> SchedulerLearner<T> {
    pub fn new(policy: PolicyNet<T>, value: ValueNet<T>, config: PpoConfig) -> Self {
        let policy_opt = OptimizerState::new(&policy.net, config.policy_adam);
        let value_opt = OptimizerState::new(&value.net, config.value_adam);
        SchedulerLearner { policy, value, policy_opt, value_opt, config }
    }

    /// Collects `rollouts` trajectories against a frozen estimator and applies one PPO update.
    #[allow(clippy::too_many_arguments)]
    pub fn epoch(
        &mut self,
        estimator: Estimator<'_, T>,
        model: &SystemModel<T>,
        gmm: &GmmSpec<T>,
        cost: &CostSpec<T>,
        horizon: usize,
        gae_lambda: f64,
        rollouts: usize,
        seed: u64,
        purpose: Purpose,
        stream_base: u64,
    ) -> Result<SchedulerEpoch> {
        let (policy, value) = (&self.policy, &self.value);
        let results = (0..rollouts)
            .into_par_iter()
            .map(|k| {
                let mut r = rng::stream(seed, purpose, stream_base + k as u64);
                collect_rollout(policy, value, estimator, model, gmm, cost, horizon, T::of(gae_lambda), &mut r)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut buffers = Vec::with_capacity(rollouts);
        let mut ret = 0.0;
        let mut tx = 0usize;
        for (buf, rec) in results {
            ret -= rec.discounted_cost.f64();
            tx += rec.transmissions;
            buffers.push(buf);
        }
        let stats = ppo_update(
            &mut self.policy,
            &mut self.value,
            &mut self.policy_opt,
            &mut self.value_opt,
            &buffers,
            &self.config,
        )?;
        Ok(SchedulerEpoch {
            mean_return: ret / rollouts as f64,
            tx_rate: tx as f64 / (rollouts * horizon) as f64,
            stats,
        })
    }
}

/// Called after each outer iteration with `(iteration, policy, value, estimator)`.
pub type IterationHook<'a, T> = dyn FnMut(usize, &PolicyNet<T>, &ValueNet<T>, &EstimatorNet<T>) -> Result<()> + 'a;

/// Full alternating training from freshly initialised networks.
pub fn alternating_train<T: LinalgScalar>(config: &TrainConfig) -> Result<TrainOutput<T>> {
    alternating_train_with(config, &mut |_, _, _, _| Ok(()))
}

pub fn alternating_train_with<T: LinalgScalar>(config: &TrainConfig, hook: &mut IterationHook<'_, T>) -> Result<TrainOutput<T>> {
    let problem = Problem::<T>::from_config(config)?;
    let (policy, value, estimator) = init_networks::<T>(config)?;
    let mut learner = SchedulerLearner::new(policy, value, config.ppo_config());
    let mut estimator = estimator;
    let est_cfg = config.estimator_config();
    let mut est_opt = OptimizerState::new(&estimator.net, est_cfg.adam);
    let mut log = TrainLog::default();

    for outer in 0..config.outer_iterations {
        let mut last = None;
        for epoch in 0..config.ppo_epochs {
            let base = ((outer * config.ppo_epochs + epoch) * config.rollouts_per_epoch) as u64;
            let ep = learner
                .epoch(
                    Estimator::Learned(&estimator),
                    &problem.model,
                    &problem.gmm,
                    &problem.cost,
                    config.horizon,
                    config.gae_lambda,
                    config.rollouts_per_epoch,
                    config.seed,
                    Purpose::PolicyRollout,
                    base,
                )
                .map_err(|e| e.context(format!("outer iteration {outer}, scheduler epoch {epoch}")))?;
            log.rows.push(LogRow {
                outer_iter: outer,
                phase: Phase::Scheduler,
                epoch,
                mean_return: ep.mean_return,
                tx_rate: ep.tx_rate,
                estimator_loss: None,
                entropy: Some(ep.stats.entropy),
            });
            last = Some(ep);
        }

        let base = (outer * config.estimator_epochs * config.estimator_rollouts) as u64;
        let stats = train_estimator_with(
            &mut estimator,
            &mut est_opt,
            &learner.policy,
            &problem.model,
            &problem.gmm,
            &est_cfg,
            base,
        )
        .map_err(|e| e.context(format!("outer iteration {outer}")))?;
        for (epoch, s) in stats.iter().enumerate() {
            log.rows.push(LogRow {
                outer_iter: outer,
                phase: Phase::Estimator,
                epoch,
                mean_return: -s.loss,
                tx_rate: s.tx_rate,
                estimator_loss: Some(s.loss),
                entropy: None,
            });
        }
        let last = last.expect("at least one scheduler epoch");
        log.iterations.push(IterationSummary {
            outer_iter: outer,
            mean_return: last.mean_return,
            tx_rate: last.tx_rate,
            estimator_loss: stats.last().map_or(f64::NAN, |s| s.loss),
        });
        hook(outer + 1, &learner.policy, &learner.value, &estimator)?;
    }
    Ok(TrainOutput { policy: learner.policy, value: learner.value, estimator, log })
}

/// Trains a scheduler against the piecewise-linear estimator (mixture-mean
/// propagation on silence) for `config.baseline_epochs` PPO epochs.
pub fn pretrain_linear_baseline<T: LinalgScalar>(config: &TrainConfig) -> Result<(PolicyNet<T>, ValueNet<T>, TrainLog)> {
    let problem = Problem::<T>::from_config(config)?;
    let (policy, value, _) = init_networks::<T>(config)?;
    let linear = LinearEstimator::mean_aware(&problem.gmm);
    let mut learner = SchedulerLearner::new(policy, value, config.ppo_config());
    let mut log = TrainLog::default();
    for epoch in 0..config.baseline_epochs {
        let base = (epoch * config.rollouts_per_epoch) as u64;
        let ep = learner
            .epoch(
                Estimator::Linear(&linear),
                &problem.model,
                &problem.gmm,
                &problem.cost,
                config.horizon,
                config.gae_lambda,
                config.rollouts_per_epoch,
                config.seed,
                Purpose::Baseline,
                base,
            )
            .map_err(|e| e.context(format!("baseline epoch {epoch}")))?;
        log.rows.push(LogRow {
            outer_iter: 0,
            phase: Phase::Baseline,
            epoch,
            mean_return: ep.mean_return,
            tx_rate: ep.tx_rate,
            estimator_loss: None,
            entropy: Some(ep.stats.entropy),
        });
    }
    if let Some(last) = log.rows.last() {
        log.iterations.push(IterationSummary {
            outer_iter: 0,
            mean_return: last.mean_return,
            tx_rate: last.tx_rate,
            estimator_loss: f64::NAN,
        });
    }
    Ok((learner.policy, learner.value, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(lambda: f64) -> TrainConfig {
        TrainConfig {
            horizon: 4,
            outer_iterations: 1,
            ppo_epochs: 1,
            estimator_epochs: 1,
            rollouts_per_epoch: 1,
            estimator_rollouts: 1,
            baseline_epochs: 1,
            hidden: vec![8],
            ..TrainConfig::pendulum(lambda)
        }
    }

    #[test]
    fn smoke_run_logs_one_iteration() {
        let out = alternating_train::<f64>(&tiny(45.0)).unwrap();
        assert_eq!(out.log.iterations.len(), 1);
        assert_eq!(out.log.rows.len(), 2);
        let (_, _, log) = pretrain_linear_baseline::<f64>(&tiny(45.0)).unwrap();
        assert_eq!(log.iterations.len(), 1);
    }

    #[test]
    fn validation_names_fields() {
        let mut c = tiny(1.0);
        c.gamma = 1.0;
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "gamma"),
            other => panic!("{other:?}"),
        }
        let mut c = tiny(1.0);
        c.horizon = 0;
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "horizon"));
        let mut c = tiny(1.0);
        c.cost_weight = Some(vec![vec![1.0, 0.0], vec![0.0, -1.0]]);
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "cost_weight"));
    }

    #[test]
    fn always_transmit_buffer_rewards() {
        let cfg = tiny(2.0);
        let p = Problem::<f64>::from_config(&cfg).unwrap();
        let (_, value, est) = init_networks::<f64>(&cfg).unwrap();
        // logits (−50, 50) → transmits with probability 1 − e^{-100}
        let mut policy = PolicyNet::new(2, &[4], 0).unwrap();
        for l in policy.net.layers_mut() {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        policy.net.layers_mut()[1].bias = vec![-50.0, 50.0];
        let mut r = rng::seeded(0);
        let (buf, rec) = collect_rollout(&policy, &value, Estimator::Learned(&est), &p.model, &p.gmm, &p.cost, 5, 0.9, &mut r).unwrap();
        assert!(buf.rewards.iter().all(|&x| x == -2.0));
        assert_eq!(rec.transmissions, 5);
        buf.check().unwrap();
    }
}
