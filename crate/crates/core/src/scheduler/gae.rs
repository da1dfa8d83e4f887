use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Generalized advantage estimation by backward recursion.
///
/// `bootstrap` is the value of the state after the last step (zero when the
/// episode genuinely ends). Returns `(advantages, returns)` where
/// `returns = advantages + values`.
pub fn compute_gae<T: Scalar>(
    rewards: &[T],
    values: &[T],
    bootstrap: T,
    gamma: T,
    lambda: T,
) -> Result<(Vec<T>, Vec<T>)> {
    if rewards.len() != values.len() {
        return Err(Error::invalid(format!(
            "{} rewards but {} values",
            rewards.len(),
            values.len()
        )));
    }
    let n = rewards.len();
    let mut adv = vec![T::zero(); n];
    let mut running = T::zero();
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let td = rewards[t] + gamma * next_value - values[t];
        running = td + gamma * lambda * running;
        adv[t] = running;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(&a, &v)| a + v).collect();
    Ok((adv, ret))
}

/// Explicit `Âₜ = Σ_l (γλ)^l δ_{t+l}` evaluation, quadratic in length.
pub fn gae_double_sum(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let v = |i: usize| if i < n { values[i] } else { bootstrap };
    (0..n)
        .map(|t| {
            (t..n)
                .map(|k| (gamma * lambda).powi((k - t) as i32) * (rewards[k] + gamma * v(k + 1) - values[k]))
                .sum()
        })
        .collect()
}
