
use crate::error::{Error, Result};
use crate::nn::{Mlp, Trace};
use crate::scalar::{all_finite, Scalar};

/// Two-logit categorical policy over {silent, transmit} given the lookahead error.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<T> {
    pub net: Mlp<T>,
}

/// Numerically stable `log softmax` of two logits.
#[inline]
pub(crate) fn log_softmax2<T: Scalar>(l: &[T]) -> [T; 2] {
    let m = l[0].max(l[1]);
    let lse = m + ((l[0] - m).exp() + (l[1] - m).exp()).ln();
    [l[0] - lse, l[1] - lse]
}

impl<T: Scalar> PolicyNet<T> {
    /// Fresh policy; the output layer is shrunk so initial probabilities sit near 1/2.
    pub fn new(state_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2);
        let mut net = Mlp::new(&sizes, seed)?;
        net.scale_output_layer(T::of(0.01));
        Ok(PolicyNet { net })
    }

    pub fn from_mlp(net: Mlp<T>) -> Result<Self> {
        if net.output_dim() != 2 {
            return Err(Error::invalid("policy network must have two outputs"));
        }
        Ok(PolicyNet { net })
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn logits(&self, error: &[T]) -> Result<[T; 2]> {
        let out = self.net.forward(error)?;
        if !all_finite(&out) {
            return Err(Error::numeric("policy produced non-finite logits"));
        }
        Ok([out[0], out[1]])
    }

    /// `[P(δ=0), P(δ=1)]`.
    pub fn probabilities(&self, error: &[T]) -> Result<[T; 2]> {
        let lp = log_softmax2(&self.logits(error)?);
        Ok([lp[0].exp(), lp[1].exp()])
    }

    pub fn log_prob(&self, error: &[T], transmit: bool) -> Result<T> {
        Ok(log_softmax2(&self.logits(error)?)[transmit as usize])
    }

    pub(crate) fn log_probs_traced(&self, error: &[T], trace: &mut Trace<T>) -> [T; 2] {
        self.net.forward_into(error, trace);
        log_softmax2(trace.output())
    }
}

/// Samples `δ ~ π(·|e)` and returns it with its log-probability.
pub fn policy_sample<T: Scalar, R: rand::Rng + ?Sized>(
    policy: &PolicyNet<T>,
    error: &[T],
    rng: &mut R,
) -> Result<(bool, T)> {
    if !all_finite(error) {
        return Err(Error::numeric("policy input is not finite"));
    }
    let lp = log_softmax2(&policy.logits(error)?);
    let u: f64 = rng.gen();
    let transmit = u < lp[1].exp().f64();
    Ok((transmit, lp[transmit as usize]))
}

/// State-value network `V(e) = scale · net(e)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet<T> {
    pub net: Mlp<T>,
    /// Fixed output scale so the network works near unit magnitude.
    pub scale: T,
}

impl<T: Scalar> ValueNet<T> {
    pub fn new(state_dim: usize, hidden: &[usize], scale: T, seed: u64) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut net = Mlp::new(&sizes, seed)?;
        net.scale_output_layer(T::of(0.1));
        Ok(ValueNet { net, scale })
    }

    pub fn value(&self, error: &[T]) -> Result<T> {
        Ok(self.scale * self.net.forward(error)?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn fixed_logits(l0: f64, l1: f64) -> PolicyNet<f64> {
        let mut net = Mlp::zeros(&[2, 2]).unwrap();
        net.layers_mut()[0].bias = vec![l0, l1];
        PolicyNet::from_mlp(net).unwrap()
    }

    #[test]
    fn symmetric_logits() {
        let p = fixed_logits(0.0, 0.0);
        let probs = p.probabilities(&[0.3, 0.1]).unwrap();
        assert!((probs[1] - 0.5).abs() < 1e-15);
        let mut r = rng::seeded(0);
        for _ in 0..20 {
            let (_, lp) = policy_sample(&p, &[1.0, 2.0], &mut r).unwrap();
            assert!((lp - 0.5f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn skewed_logits() {
        let p = fixed_logits(0.0, 10.0);
        let probs = p.probabilities(&[0.0, 0.0]).unwrap();
        let expect = 1.0 / (1.0 + (-10.0f64).exp());
        assert!((probs[1] - expect).abs() < 1e-14);
        assert!((probs[0] + probs[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_frequency() {
        let p = fixed_logits(0.0, 0.0);
        let mut r = rng::seeded(5);
        let n = 100_000;
        let hits = (0..n).filter(|_| policy_sample(&p, &[0.0, 0.0], &mut r).unwrap().0).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.5).abs() < 3.0 * (0.25f64 / n as f64).sqrt(), "{freq}");
    }

    #[test]
    fn non_finite_logits_are_errors() {
        let p = fixed_logits(f64::NAN, 0.0);
        let mut r = rng::seeded(0);
        assert!(matches!(policy_sample(&p, &[0.0, 0.0], &mut r), Err(Error::Numeric(_))));
    }
}
