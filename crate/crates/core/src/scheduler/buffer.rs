use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::gae::compute_gae;

/// Per-step data of one rollout, in time order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBuffer<T> {
    /// Lookahead error observed by the policy.
    pub errors: Vec<Vec<T>>,
    pub actions: Vec<bool>,
    pub log_probs: Vec<T>,
    pub rewards: Vec<T>,
    pub values: Vec<T>,
    pub advantages: Vec<T>,
    pub returns: Vec<T>,
}

impl<T: Scalar> RolloutBuffer<T> {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.rewards.len();
        let ok = self.errors.len() == n
            && self.actions.len() == n
            && self.log_probs.len() == n
            && self.values.len() == n
            && self.advantages.len() == n
            && self.returns.len() == n;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("rollout buffer arrays have different lengths"))
        }
    }

    /// Fills advantages and returns; the episode ends at the horizon, so the
    /// bootstrap value is zero.
    pub fn finish(&mut self, gamma: T, gae_lambda: T) -> Result<()> {
        let (adv, ret) = compute_gae(&self.rewards, &self.values, T::zero(), gamma, gae_lambda)?;
        self.advantages = adv;
        self.returns = ret;
        Ok(())
    }

    pub fn transmissions(&self) -> usize {
        self.actions.iter().filter(|&&a| a).count()
    }

    pub fn discounted_return(&self, gamma: T) -> T {
        crate::rollout::discounted_sum(&self.rewards, gamma)
    }
}
