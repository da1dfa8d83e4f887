//! Closed-loop simulation of plant, scheduler and remote estimator.
//!
//! Step `t` of a trajectory:
//! 1. the scheduler sees the lookahead error `e°ₜ = xₜ − x̂°ₜ` and picks `δₜ`;
//! 2. on `δₜ = 1` the estimate becomes `xₜ` and the age of information resets;
//! 3. the step cost is `‖xₜ − x̂ₜ‖²_Γ + λδₜ`;
//! 4. the plant advances with fresh mixture noise and the estimator predicts
//!    `x̂°ₜ₊₁` from the post-decision estimate.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::nn::Trace;
use crate::rng::Rng;
use crate::scalar::{all_finite, weighted_sq_norm, Scalar};
use crate::scheduler::{policy_sample, PolicyNet};
use crate::systems::{GmmSpec, SystemModel};

/// Anything that maps the lookahead error (and time) to a transmission decision.
pub trait Scheduler<T> {
    /// Returns `(δ, log P(δ))`.
    fn decide(&self, error: &[T], t: u64, rng: &mut Rng) -> Result<(bool, T)>;
}

impl<T: Scalar> Scheduler<T> for PolicyNet<T> {
    fn decide(&self, error: &[T], _t: u64, rng: &mut Rng) -> Result<(bool, T)> {
        policy_sample(self, error, rng)
    }
}

/// `Σₜ γᵗ xₜ`, accumulated front to back.
pub fn discounted_sum<T: Scalar>(xs: &[T], gamma: T) -> T {
    let mut w = T::one();
    let mut acc = T::zero();
    for &x in xs {
        acc = acc + w * x;
        w = w * gamma;
    }
    acc
}

/// Communication price, discount and error weighting `Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec<T> {
    pub lambda: T,
    pub gamma: T,
    /// Row-major `n×n`.
    pub weight: Vec<T>,
}

impl<T: Scalar> CostSpec<T> {
    pub fn new(lambda: T, gamma: T, weight: Vec<T>, n: usize) -> Result<Self> {
        if weight.len() != n * n {
            return Err(Error::invalid(format!("cost weight must be {n}×{n}")));
        }
        if !(lambda >= T::zero()) || !(gamma > T::zero() && gamma <= T::one()) {
            return Err(Error::invalid("cost needs λ ≥ 0 and γ in (0, 1]"));
        }
        Ok(CostSpec { lambda, gamma, weight })
    }

    pub fn identity(lambda: T, gamma: T, n: usize) -> Self {
        let mut weight = vec![T::zero(); n * n];
        for i in 0..n {
            weight[i * n + i] = T::one();
        }
        CostSpec { lambda, gamma, weight }
    }

    /// `(1 − δ)‖e°‖²_Γ + λδ`.
    pub fn step_cost(&self, lookahead_error: &[T], transmit: bool) -> T {
        let d = if transmit { T::one() } else { T::zero() };
        (T::one() - d) * weighted_sq_norm(lookahead_error, &self.weight) + self.lambda * d
    }
}

/// Time series of one simulated trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord<T> {
    pub states: Vec<Vec<T>>,
    /// Estimate after the transmission decision.
    pub estimates: Vec<Vec<T>>,
    /// `xₜ − x̂ₜ` after the decision (zero on transmissions).
    pub errors: Vec<Vec<T>>,
    /// `e°ₜ`, the error the scheduler observed.
    pub lookahead_errors: Vec<Vec<T>>,
    pub actions: Vec<bool>,
    pub log_probs: Vec<T>,
    /// Age of information after the decision.
    pub aoi: Vec<u64>,
    /// Step costs `‖xₜ − x̂ₜ‖²_Γ + λδₜ`.
    pub costs: Vec<T>,
    /// Mixture component of the noise that produced `xₜ` (`None` at `t = 0`).
    pub noise_components: Vec<Option<usize>>,
    pub discounted_cost: T,
    pub transmissions: usize,
}

impl<T: Scalar> TrajectoryRecord<T> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn rewards(&self) -> Vec<T> {
        self.costs.iter().map(|&c| -c).collect()
    }

    /// Discounted error term alone, `Σ γᵗ (1 − δₜ)‖e°ₜ‖²_Γ`.
    pub fn discounted_error_cost(&self, cost: &CostSpec<T>) -> T {
        let terms: Vec<T> = self
            .lookahead_errors
            .iter()
            .zip(&self.actions)
            .map(|(e, &d)| if d { T::zero() } else { weighted_sq_norm(e, &cost.weight) })
            .collect();
        discounted_sum(&terms, cost.gamma)
    }

    /// Recomputes the discounted cost from lookahead errors and decisions.
    pub fn lookahead_cost(&self, cost: &CostSpec<T>) -> T {
        let terms: Vec<T> = self
            .lookahead_errors
            .iter()
            .zip(&self.actions)
            .map(|(e, &d)| cost.step_cost(e, d))
            .collect();
        discounted_sum(&terms, cost.gamma)
    }
}

/// Simulates `horizon` steps. `x0` defaults to a draw from `U[−1, 1]ⁿ`; the
/// estimator starts at the prior mean `0`.
#[allow(clippy::too_many_arguments)]
pub fn simulate<T: Scalar, S: Scheduler<T> + ?Sized>(
    model: &SystemModel<T>,
    gmm: &GmmSpec<T>,
    scheduler: &S,
    estimator: Estimator<'_, T>,
    cost: &CostSpec<T>,
    horizon: usize,
    x0: Option<&[T]>,
    rng: &mut Rng,
) -> Result<TrajectoryRecord<T>> {
    let n = model.state_dim();
    if gmm.dim() != n || estimator.state_dim() != n || cost.weight.len() != n * n {
        return Err(Error::invalid("system, noise, estimator and cost dimensions disagree"));
    }
    let mut x: Vec<T> = match x0 {
        Some(v) if v.len() == n => v.to_vec(),
        Some(_) => return Err(Error::invalid("initial state has the wrong dimension")),
        None => (0..n).map(|_| T::of(rng.gen_range(-1.0..=1.0))).collect(),
    };
    let mut lookahead = vec![T::zero(); n];
    let mut last_transmit = 0u64;
    let mut component: Option<usize> = None;

    let mut rec = TrajectoryRecord {
        states: Vec::with_capacity(horizon),
        estimates: Vec::with_capacity(horizon),
        errors: Vec::with_capacity(horizon),
        lookahead_errors: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        log_probs: Vec::with_capacity(horizon),
        aoi: Vec::with_capacity(horizon),
        costs: Vec::with_capacity(horizon),
        noise_components: Vec::with_capacity(horizon),
        discounted_cost: T::zero(),
        transmissions: 0,
    };
    let mut noise = vec![T::zero(); n];
    let mut next = vec![T::zero(); n];
    let mut feats = Vec::with_capacity(n + 1);
    let mut trace = Trace::default();

    for t in 0..horizon {
        if !all_finite(&x) || !all_finite(&lookahead) {
            return Err(Error::numeric(format!("non-finite state or estimate at step {t}")));
        }
        let e_look: Vec<T> = x.iter().zip(&lookahead).map(|(&a, &b)| a - b).collect();
        let (transmit, log_prob) = scheduler
            .decide(&e_look, t as u64, rng)
            .map_err(|e| e.context(format!("step {t}")))?;
        let estimate = if transmit {
            last_transmit = t as u64;
            x.clone()
        } else {
            lookahead.clone()
        };
        let err: Vec<T> = x.iter().zip(&estimate).map(|(&a, &b)| a - b).collect();
        let d = if transmit { T::one() } else { T::zero() };
        let c = weighted_sq_norm(&err, &cost.weight) + cost.lambda * d;
        let aoi = t as u64 - last_transmit;

        let k = gmm.sample_into(rng, &mut noise);
        rec.noise_components.push(component);
        component = Some(k);
        model.step_into(&x, &noise, &mut next);
        estimator.predict_into(model, &estimate, aoi, &mut lookahead, &mut feats, &mut trace);

        rec.states.push(std::mem::replace(&mut x, next.clone()));
        rec.estimates.push(estimate);
        rec.errors.push(err);
        rec.lookahead_errors.push(e_look);
        rec.actions.push(transmit);
        rec.log_probs.push(log_prob);
        rec.aoi.push(aoi);
        rec.costs.push(c);
        rec.transmissions += transmit as usize;
    }
    rec.discounted_cost = discounted_sum(&rec.costs, cost.gamma);
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{EstimatorNet, LinearEstimator};
    use crate::eval::SchedulePolicy;
    use crate::rng;
    use crate::systems::{build_with_default_lqr, SystemKind};

    fn setup(zero_noise: bool) -> (SystemModel<f64>, GmmSpec<f64>) {
        let gmm = if zero_noise {
            GmmSpec::gaussian(vec![0.0, 0.0], vec![0.0; 4]).unwrap()
        } else {
            GmmSpec::new(
                vec![0.3, 0.7],
                vec![vec![-3.0, -3.0], vec![3.0, 3.0]],
                vec![vec![0.5, 0.0, 0.0, 0.5]; 2],
            )
            .unwrap()
        };
        (build_with_default_lqr(SystemKind::Pendulum, &gmm).unwrap(), gmm)
    }

    #[test]
    fn always_transmit_costs_lambda_each_step() {
        let (model, gmm) = setup(false);
        let cost = CostSpec::identity(1.0, 0.5, 2);
        let lin = LinearEstimator::plain(2);
        let mut r = rng::seeded(3);
        let rec = simulate(&model, &gmm, &SchedulePolicy::<f64>::Always, Estimator::Linear(&lin), &cost, 3, None, &mut r).unwrap();
        assert_eq!(rec.costs, vec![1.0, 1.0, 1.0]);
        assert_eq!(rec.discounted_cost, 1.75);
        assert!(rec.errors.iter().all(|e| e.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn matched_start_without_noise_is_free() {
        let (model, gmm) = setup(true);
        let cost = CostSpec::identity(5.0, 0.99, 2);
        let lin = LinearEstimator::plain(2);
        let mut r = rng::seeded(3);
        let rec = simulate(&model, &gmm, &SchedulePolicy::<f64>::Never, Estimator::Linear(&lin), &cost, 20, Some(&[0.0, 0.0]), &mut r).unwrap();
        assert!(rec.costs.iter().all(|&c| c == 0.0));
        assert_eq!(rec.transmissions, 0);
    }

    #[test]
    fn record_matches_estimator_update_chain() {
        let (model, gmm) = setup(false);
        let net = EstimatorNet::new(2, &[8], 4).unwrap();
        let policy = crate::scheduler::PolicyNet::new(2, &[8], 5).unwrap();
        let cost = CostSpec::identity(45.0, 0.99, 2);
        let mut r = rng::seeded(11);
        let rec = simulate(&model, &gmm, &policy, Estimator::Learned(&net), &cost, 40, None, &mut r).unwrap();
        let mut s = crate::estimator::EstimatorState::new(vec![0.0, 0.0]);
        if rec.actions[0] {
            s.estimate = rec.states[0].clone();
        }
        for t in 1..rec.len() {
            s = crate::estimator::estimator_update(&s, &net, &model, rec.actions[t], Some(&rec.states[t])).unwrap();
            assert_eq!(s.estimate, rec.estimates[t], "step {t}");
            assert_eq!(s.aoi(), rec.aoi[t]);
        }
    }
}
