//! Remote estimator: copy on transmission, learned residual on silence.
//!
//! On a silent step the estimate advances as `x̂' = f(x̂, 0) + ξ(x̂, aoi)`,
//! where `ξ` is a small network and `aoi` is the number of steps since the
//! last received state. The piecewise-linear baseline drops `ξ` and
//! optionally adds a constant noise offset instead.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Gradients, Mlp, OptimizerState, Trace};
use crate::rng::{self, Purpose};
use crate::rollout::{simulate, CostSpec, Scheduler};
use crate::scalar::Scalar;
use crate::systems::{GmmSpec, SystemModel};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState<T> {
    pub estimate: Vec<T>,
    pub last_transmit: u64,
    pub time: u64,
}

impl<T: Scalar> EstimatorState<T> {
    /// Initial state at `t = 0` with the prior mean as estimate.
    pub fn new(prior_mean: Vec<T>) -> Self {
        EstimatorState { estimate: prior_mean, last_transmit: 0, time: 0 }
    }

    pub fn aoi(&self) -> u64 {
        self.time - self.last_transmit
    }
}

/// Residual network `ξ(x̂, aoi)`: input `n + 1`, output `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorNet<T> {
    pub net: Mlp<T>,
}

impl<T: Scalar> EstimatorNet<T> {
    pub fn new(state_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![state_dim + 1];
        sizes.extend_from_slice(hidden);
        sizes.push(state_dim);
        let mut net = Mlp::new(&sizes, seed)?;
        net.scale_output_layer(T::of(0.01));
        Ok(EstimatorNet { net })
    }

    pub fn zeros(state_dim: usize, hidden: &[usize]) -> Result<Self> {
        let mut sizes = vec![state_dim + 1];
        sizes.extend_from_slice(hidden);
        sizes.push(state_dim);
        Ok(EstimatorNet { net: Mlp::zeros(&sizes)? })
    }

    pub fn from_mlp(net: Mlp<T>) -> Result<Self> {
        if net.input_dim() != net.output_dim() + 1 {
            return Err(Error::invalid("estimator network must map n + 1 inputs to n outputs"));
        }
        Ok(EstimatorNet { net })
    }

    pub fn state_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub(crate) fn features_into(estimate: &[T], aoi: u64, buf: &mut Vec<T>) {
        buf.clear();
        buf.extend_from_slice(estimate);
        buf.push(T::of(aoi as f64));
    }

    pub fn residual(&self, estimate: &[T], aoi: u64) -> Result<Vec<T>> {
        let mut feats = Vec::new();
        Self::features_into(estimate, aoi, &mut feats);
        self.net.forward(&feats)
    }
}

/// Piecewise-linear baseline: `x̂' = f(x̂, w̄)` on silence.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEstimator<T> {
    pub noise_offset: Vec<T>,
}

impl<T: Scalar> LinearEstimator<T> {
    /// Pure noise-free propagation `f(x̂, 0)`.
    pub fn plain(state_dim: usize) -> Self {
        LinearEstimator { noise_offset: vec![T::zero(); state_dim] }
    }

    /// Propagation with the mixture mean, the best the baseline can do
    /// without reading anything into silence.
    pub fn mean_aware(gmm: &GmmSpec<T>) -> Self {
        LinearEstimator { noise_offset: gmm.mean() }
    }
}

/// Estimator used on silent steps.
#[derive(Debug, Clone, Copy)]
pub enum Estimator<'a, T> {
    Learned(&'a EstimatorNet<T>),
    Linear(&'a LinearEstimator<T>),
}

impl<T: Scalar> Estimator<'_, T> {
    /// Silent-step prediction written into `out`.
    pub(crate) fn predict_into(
        &self,
        model: &SystemModel<T>,
        estimate: &[T],
        aoi: u64,
        out: &mut [T],
        feats: &mut Vec<T>,
        trace: &mut Trace<T>,
    ) {
        match self {
            Estimator::Learned(net) => {
                model.predict_into(estimate, out);
                EstimatorNet::features_into(estimate, aoi, feats);
                net.net.forward_into(feats, trace);
                for (o, &r) in out.iter_mut().zip(trace.output()) {
                    *o = *o + r;
                }
            }
            Estimator::Linear(lin) => model.step_into(estimate, &lin.noise_offset, out),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Estimator::Learned(net) => net.state_dim(),
            Estimator::Linear(lin) => lin.noise_offset.len(),
        }
    }
}

fn advance<T: Scalar>(
    state: &EstimatorState<T>,
    estimator: Estimator<'_, T>,
    model: &SystemModel<T>,
    transmit: bool,
    received: Option<&[T]>,
) -> Result<EstimatorState<T>> {
    let n = model.state_dim();
    if state.estimate.len() != n || estimator.state_dim() != n {
        return Err(Error::invalid("estimator dimension does not match the system"));
    }
    let time = state.time + 1;
    if transmit {
        let x = received.ok_or_else(|| Error::invalid("transmission without a received state"))?;
        if x.len() != n {
            return Err(Error::invalid("received state has the wrong dimension"));
        }
        return Ok(EstimatorState { estimate: x.to_vec(), last_transmit: time, time });
    }
    let mut out = vec![T::zero(); n];
    estimator.predict_into(model, &state.estimate, state.aoi(), &mut out, &mut Vec::new(), &mut Trace::default());
    Ok(EstimatorState { estimate: out, last_transmit: state.last_transmit, time })
}

/// One estimator step from time `t` to `t + 1` given the transmission decision at `t + 1`.
pub fn estimator_update<T: Scalar>(
    state: &EstimatorState<T>,
    net: &EstimatorNet<T>,
    model: &SystemModel<T>,
    transmit: bool,
    received: Option<&[T]>,
) -> Result<EstimatorState<T>> {
    advance(state, Estimator::Learned(net), model, transmit, received)
}

/// Baseline step: copy on transmission, `f(x̂, w̄)` on silence.
pub fn linear_baseline_update<T: Scalar>(
    state: &EstimatorState<T>,
    baseline: &LinearEstimator<T>,
    model: &SystemModel<T>,
    transmit: bool,
    received: Option<&[T]>,
) -> Result<EstimatorState<T>> {
    advance(state, Estimator::Linear(baseline), model, transmit, received)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorTrainConfig {
    pub epochs: usize,
    /// Trajectories averaged into each gradient step.
    pub rollouts: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub lambda: f64,
    /// Row-major `Γ`.
    pub cost_weight: Vec<f64>,
    pub adam: AdamConfig,
    /// Weight step `t` by `γ^(T−1−t)` (the `L ← γL + c` recursion) instead of `γ^t`.
    pub reverse_discount: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorEpochStats {
    /// Mean weighted loss over the epoch's trajectories (cost including λ terms).
    pub loss: f64,
    pub tx_rate: f64,
}

/// Per-step loss weights for a horizon.
pub(crate) fn loss_weights<T: Scalar>(horizon: usize, gamma: T, reverse: bool) -> Vec<T> {
    let mut w = Vec::with_capacity(horizon);
    let mut g = T::one();
    for _ in 0..horizon {
        w.push(g);
        g = g * gamma;
    }
    if reverse {
        w.reverse();
    }
    w
}

/// Loss and ψ-gradient of one trajectory.
///
/// Each silent step's network input is treated as a constant, so gradients
/// flow into `ξ` only through the error it produces at the next step.
pub fn trajectory_loss_gradient<T: Scalar>(
    net: &EstimatorNet<T>,
    record: &crate::rollout::TrajectoryRecord<T>,
    weights: &[T],
    cost_weight: &[T],
) -> (T, Gradients<T>) {
    let n = net.state_dim();
    let mut grads = Gradients::zeros_like(&net.net);
    let mut trace = Trace::default();
    let mut feats = Vec::with_capacity(n + 1);
    let mut loss = T::zero();
    let steps = record.len();
    let mut upstream = vec![T::zero(); n];
    for t in 0..steps {
        loss = loss + weights[t] * record.costs[t];
    }
    for t in 0..steps.saturating_sub(1) {
        if record.actions[t + 1] {
            continue;
        }
        // error at t + 1 is x − (f(x̂_t, 0) + ξ(x̂_t, aoi_t)); d‖e‖²_Γ/dξ = −(Γ + Γᵀ) e
        let e = &record.errors[t + 1];
        for i in 0..n {
            let mut acc = T::zero();
            for j in 0..n {
                acc = acc + (cost_weight[i * n + j] + cost_weight[j * n + i]) * e[j];
            }
            upstream[i] = -weights[t + 1] * acc;
        }
        EstimatorNet::features_into(&record.estimates[t], record.aoi[t], &mut feats);
        net.net.forward_into(&feats, &mut trace);
        net.net.backward_accumulate(&trace, &upstream, &mut grads, false);
    }
    (loss, grads)
}

/// Trains `ξ` against a frozen scheduler for `config.epochs` Adam steps.
/// `stream_base` separates the random streams of successive calls.
#[allow(clippy::too_many_arguments)]
pub fn train_estimator_with<T: Scalar, S: Scheduler<T> + Sync>(
    net: &mut EstimatorNet<T>,
    opt: &mut OptimizerState<T>,
    scheduler: &S,
    model: &SystemModel<T>,
    gmm: &GmmSpec<T>,
    config: &EstimatorTrainConfig,
    stream_base: u64,
) -> Result<Vec<EstimatorEpochStats>> {
    let n = model.state_dim();
    if net.state_dim() != n {
        return Err(Error::invalid("estimator network does not match the system dimension"));
    }
    let cost = CostSpec::new(T::of(config.lambda), T::of(config.gamma), config.cost_weight.iter().map(|&v| T::of(v)).collect(), n)?;
    let weights = loss_weights(config.horizon, cost.gamma, config.reverse_discount);
    let mut stats = Vec::with_capacity(config.epochs);
    let per_epoch = config.rollouts.max(1);
    for epoch in 0..config.epochs {
        let snapshot = &*net;
        let results: Vec<Result<(T, Gradients<T>, usize)>> = (0..per_epoch)
            .into_par_iter()
            .map(|k| {
                let index = stream_base + (epoch * per_epoch + k) as u64;
                let mut r = rng::stream(config.seed, Purpose::EstimatorRollout, index);
                let rec = simulate(model, gmm, scheduler, Estimator::Learned(snapshot), &cost, config.horizon, None, &mut r)?;
                let (loss, g) = trajectory_loss_gradient(snapshot, &rec, &weights, &cost.weight);
                Ok((loss, g, rec.transmissions))
            })
            .collect();
        let mut total = Gradients::zeros_like(&net.net);
        let mut loss = T::zero();
        let mut tx = 0usize;
        for r in results {
            let (l, g, c) = r.map_err(|e| e.context(format!("estimator epoch {epoch}")))?;
            loss = loss + l;
            total.add_assign(&g);
            tx += c;
        }
        let scale = T::one() / T::of(per_epoch as f64);
        loss = loss * scale;
        total.scale(scale);
        if !loss.is_finite() || !total.is_finite() {
            return Err(Error::numeric(format!(
                "estimator epoch {epoch}: non-finite loss {} (gradient norm {})",
                loss.f64(),
                total.l2_norm().f64()
            )));
        }
        opt.apply(&mut net.net, &total)
            .map_err(|e| e.context(format!("estimator epoch {epoch}")))?;
        stats.push(EstimatorEpochStats {
            loss: loss.f64(),
            tx_rate: tx as f64 / (per_epoch * config.horizon) as f64,
        });
    }
    Ok(stats)
}

/// Value-returning wrapper with a fresh optimizer.
pub fn train_estimator<T: Scalar, S: Scheduler<T> + Sync>(
    net: &EstimatorNet<T>,
    scheduler: &S,
    model: &SystemModel<T>,
    gmm: &GmmSpec<T>,
    config: &EstimatorTrainConfig,
) -> Result<(EstimatorNet<T>, Vec<EstimatorEpochStats>)> {
    let mut out = net.clone();
    let mut opt = OptimizerState::new(&out.net, config.adam);
    let stats = train_estimator_with(&mut out, &mut opt, scheduler, model, gmm, config, 0)?;
    Ok((out, stats))
}
