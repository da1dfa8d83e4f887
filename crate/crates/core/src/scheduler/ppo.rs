//! Clipped-surrogate PPO update for the binary policy and its value baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Gradients, OptimizerState, Trace};
use crate::scalar::Scalar;

use super::buffer::RolloutBuffer;
use super::nets::{PolicyNet, ValueNet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub clip: f64,
    pub entropy_coef: f64,
    /// Full-batch gradient steps per update.
    pub update_iters: usize,
    pub normalize_advantages: bool,
    pub policy_adam: AdamConfig,
    pub value_adam: AdamConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            entropy_coef: 0.01,
            update_iters: 10,
            normalize_advantages: true,
            policy_adam: AdamConfig::default(),
            value_adam: AdamConfig::default(),
        }
    }
}

/// `min(z·A, clip(z, 1−ε, 1+ε)·A)`.
#[inline]
pub fn clipped_term<T: Scalar>(ratio: T, advantage: T, eps: T) -> T {
    let clipped = ratio.max(T::one() - eps).min(T::one() + eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Flattened samples entering the surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateBatch<T> {
    pub errors: Vec<Vec<T>>,
    pub actions: Vec<bool>,
    pub old_log_probs: Vec<T>,
    pub advantages: Vec<T>,
}

impl<T: Scalar> SurrogateBatch<T> {
    pub fn from_buffers(buffers: &[RolloutBuffer<T>], normalize: bool) -> Result<Self> {
        let mut batch = SurrogateBatch {
            errors: Vec::new(),
            actions: Vec::new(),
            old_log_probs: Vec::new(),
            advantages: Vec::new(),
        };
        for b in buffers {
            b.check()?;
            batch.errors.extend(b.errors.iter().cloned());
            batch.actions.extend_from_slice(&b.actions);
            batch.old_log_probs.extend_from_slice(&b.log_probs);
            batch.advantages.extend_from_slice(&b.advantages);
        }
        if batch.actions.is_empty() {
            return Err(Error::invalid("PPO update needs at least one sample"));
        }
        if normalize {
            let n = T::of(batch.advantages.len() as f64);
            let mean = batch.advantages.iter().copied().sum::<T>() / n;
            let var = batch.advantages.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>() / n;
            let std = var.sqrt();
            let denom = if std > T::of(1e-12) { std + T::of(1e-8) } else { T::one() };
            for a in &mut batch.advantages {
                *a = (*a - mean) / denom;
            }
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Mean clipped surrogate plus `entropy_coef` times mean entropy.
    pub fn objective(&self, policy: &PolicyNet<T>, clip: T, entropy_coef: T) -> T {
        let mut trace = Trace::default();
        let mut acc = T::zero();
        for i in 0..self.len() {
            let lp = policy.log_probs_traced(&self.errors[i], &mut trace);
            let ratio = (lp[self.actions[i] as usize] - self.old_log_probs[i]).exp();
            let entropy = -(lp[0].exp() * lp[0] + lp[1].exp() * lp[1]);
            acc = acc + clipped_term(ratio, self.advantages[i], clip) + entropy_coef * entropy;
        }
        acc / T::of(self.len() as f64)
    }

    /// Objective value, mean entropy, and the gradient of the objective
    /// (ascent direction) with respect to the policy parameters.
    pub fn gradient(&self, policy: &PolicyNet<T>, clip: T, entropy_coef: T) -> (T, T, Gradients<T>) {
        let n = T::of(self.len() as f64);
        let mut grads = Gradients::zeros_like(&policy.net);
        let mut trace = Trace::default();
        let (mut obj, mut ent) = (T::zero(), T::zero());
        let one = T::one();
        for i in 0..self.len() {
            let lp = policy.log_probs_traced(&self.errors[i], &mut trace);
            let p = [lp[0].exp(), lp[1].exp()];
            let a = self.actions[i] as usize;
            let adv = self.advantages[i];
            let ratio = (lp[a] - self.old_log_probs[i]).exp();
            let term = clipped_term(ratio, adv, clip);
            let entropy = -(p[0] * lp[0] + p[1] * lp[1]);
            obj = obj + term + entropy_coef * entropy;
            ent = ent + entropy;

            // d term / d log π(a): the unclipped branch is the active one
            // unless the ratio left the trust region in the advantage's direction.
            let clipped_out = (adv > T::zero() && ratio > one + clip) || (adv < T::zero() && ratio < one - clip);
            let d_logp = if clipped_out { T::zero() } else { ratio * adv };
            let mut upstream = [T::zero(); 2];
            for (j, u) in upstream.iter_mut().enumerate() {
                let onehot = if j == a { one } else { T::zero() };
                // ∂H/∂l_j = −p_j (log p_j + H)
                let d_ent = -p[j] * (lp[j] + entropy);
                *u = (d_logp * (onehot - p[j]) + entropy_coef * d_ent) / n;
            }
            policy.net.backward_accumulate(&trace, &upstream, &mut grads, false);
        }
        (obj / n, ent / n, grads)
    }
}

/// Mean squared error of the value net against `targets`.
pub fn value_loss<T: Scalar>(value: &ValueNet<T>, errors: &[Vec<T>], targets: &[T]) -> T {
    let mut trace = Trace::default();
    let mut acc = T::zero();
    for (e, &r) in errors.iter().zip(targets) {
        value.net.forward_into(e, &mut trace);
        let d = value.scale * trace.output()[0] - r;
        acc = acc + d * d;
    }
    acc / T::of(errors.len() as f64)
}

fn value_gradient<T: Scalar>(value: &ValueNet<T>, errors: &[Vec<T>], targets: &[T]) -> (T, Gradients<T>) {
    let n = T::of(errors.len() as f64);
    let mut grads = Gradients::zeros_like(&value.net);
    let mut trace = Trace::default();
    let mut loss = T::zero();
    for (e, &r) in errors.iter().zip(targets) {
        value.net.forward_into(e, &mut trace);
        let d = value.scale * trace.output()[0] - r;
        loss = loss + d * d;
        let up = [T::of(2.0) * d * value.scale / n];
        value.net.backward_accumulate(&trace, &up, &mut grads, false);
    }
    (loss / n, grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoStats {
    /// Clipped surrogate at the start of the update (ratio ≡ 1).
    pub surrogate: f64,
    pub entropy: f64,
    pub value_loss_first: f64,
    pub value_loss_last: f64,
    pub samples: usize,
}

/// Runs `config.update_iters` full-batch Adam steps on the policy (ascent on
/// the clipped surrogate) and on the value net (descent on the return MSE).
pub fn ppo_update<T: Scalar>(
    policy: &mut PolicyNet<T>,
    value: &mut ValueNet<T>,
    policy_opt: &mut OptimizerState<T>,
    value_opt: &mut OptimizerState<T>,
    buffers: &[RolloutBuffer<T>],
    config: &PpoConfig,
) -> Result<PpoStats> {
    let batch = SurrogateBatch::from_buffers(buffers, config.normalize_advantages)?;
    let returns: Vec<T> = buffers.iter().flat_map(|b| b.returns.iter().copied()).collect();
    let clip = T::of(config.clip);
    let ent_coef = T::of(config.entropy_coef);
    let mut stats = PpoStats { samples: batch.len(), ..PpoStats::default() };

    for iter in 0..config.update_iters {
        let (obj, ent, mut g) = batch.gradient(policy, clip, ent_coef);
        if !obj.is_finite() || !g.is_finite() {
            let mean_adv = batch.advantages.iter().map(|a| a.f64()).sum::<f64>() / batch.len() as f64;
            return Err(Error::numeric(format!(
                "non-finite surrogate at update iteration {iter} (batch of {}, mean advantage {mean_adv:e})",
                batch.len()
            )));
        }
        if iter == 0 {
            stats.surrogate = obj.f64();
            stats.entropy = ent.f64();
        }
        g.scale(-T::one());
        policy_opt.apply(&mut policy.net, &g)?;

        let (loss, vg) = value_gradient(value, &batch.errors, &returns);
        if !loss.is_finite() {
            return Err(Error::numeric(format!("non-finite value loss at update iteration {iter}")));
        }
        if iter == 0 {
            stats.value_loss_first = loss.f64();
        }
        value_opt.apply(&mut value.net, &vg)?;
    }
    stats.value_loss_last = value_loss(value, &batch.errors, &returns).f64();
    Ok(stats)
}
