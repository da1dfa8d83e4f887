use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance used when factoring covariances that are only semi-definite.
const PSD_TOL: f64 = 1e-10;

/// Lower-triangular factor `L` (row-major, `n×n`) with `L Lᵀ = Σ`.
///
/// Zero pivots are allowed, so singular (even all-zero) covariances factor
/// without jitter leaking into samples. Fails on asymmetric or indefinite input.
pub fn psd_cholesky<T: Scalar>(cov: &[T], n: usize) -> Result<Vec<T>> {
    if cov.len() != n * n {
        return Err(Error::invalid(format!("covariance must have {} entries", n * n)));
    }
    let tol = T::of(PSD_TOL);
    let scale = cov.iter().fold(T::one(), |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            if (cov[i * n + j] - cov[j * n + i]).abs() > tol * scale {
                return Err(Error::invalid("covariance is not symmetric"));
            }
        }
    }
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let mut d = cov[j * n + j];
        for k in 0..j {
            d = d - l[j * n + k] * l[j * n + k];
        }
        if d < -tol * scale {
            return Err(Error::invalid("covariance is not positive semi-definite"));
        }
        if d <= tol * scale {
            for i in j + 1..n {
                let mut s = cov[i * n + j];
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                if s.abs() > (tol * scale).sqrt() {
                    return Err(Error::invalid("covariance is not positive semi-definite"));
                }
            }
            continue;
        }
        let pivot = d.sqrt();
        l[j * n + j] = pivot;
        for i in j + 1..n {
            let mut s = cov[i * n + j];
            for k in 0..j {
                s = s - l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / pivot;
        }
    }
    Ok(l)
}

/// Serialized form of a mixture: means and row-major covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
}

/// K-component Gaussian mixture over `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSpec<T> {
    dim: usize,
    weights: Vec<T>,
    cumulative: Vec<f64>,
    means: Vec<Vec<T>>,
    covariances: Vec<Vec<T>>,
    factors: Vec<Vec<T>>,
}

impl<T: Scalar> GmmSpec<T> {
    /// Validates and factors the mixture. `covariances[k]` is row-major `m×m`.
    pub fn new(weights: Vec<T>, means: Vec<Vec<T>>, covariances: Vec<Vec<T>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if means.len() != k || covariances.len() != k {
            return Err(Error::invalid("weights, means and covariances must have equal counts"));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::invalid("noise dimension must be positive"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::invalid("mixture weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().map(|w| w.f64()).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, expected 1")));
        }
        let mut factors = Vec::with_capacity(k);
        for (i, (mu, cov)) in means.iter().zip(&covariances).enumerate() {
            if mu.len() != dim || cov.len() != dim * dim {
                return Err(Error::invalid(format!("component {i} has mismatched dimension")));
            }
            if mu.iter().chain(cov).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("component {i} has non-finite entries")));
            }
            factors.push(psd_cholesky(cov, dim).map_err(|e| e.context(format!("component {i}")))?);
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w.f64();
                acc
            })
            .collect();
        Ok(GmmSpec { dim, weights, cumulative, means, covariances, factors })
    }

    /// Single Gaussian component.
    pub fn gaussian(mean: Vec<T>, covariance: Vec<T>) -> Result<Self> {
        GmmSpec::new(vec![T::one()], vec![mean], vec![covariance])
    }

    pub fn from_params(p: &GmmParams) -> Result<Self> {
        let covs = p
            .covariances
            .iter()
            .map(|c| c.iter().flatten().map(|&v| T::of(v)).collect())
            .collect();
        GmmSpec::new(
            p.weights.iter().map(|&w| T::of(w)).collect(),
            p.means.iter().map(|m| m.iter().map(|&v| T::of(v)).collect()).collect(),
            covs,
        )
    }

    pub fn to_params(&self) -> GmmParams {
        let m = self.dim;
        GmmParams {
            weights: self.weights.iter().map(|w| w.f64()).collect(),
            means: self.means.iter().map(|mu| mu.iter().map(|v| v.f64()).collect()).collect(),
            covariances: self
                .covariances
                .iter()
                .map(|c| c.chunks(m).map(|r| r.iter().map(|v| v.f64()).collect()).collect())
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<T>] {
        &self.means
    }

    pub fn covariances(&self) -> &[Vec<T>] {
        &self.covariances
    }

    /// Mixture mean `Σ wₖ μₖ`.
    pub fn mean(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            for (o, &v) in out.iter_mut().zip(mu) {
                *o = *o + *w * v;
            }
        }
        out
    }

    /// Same components with new weights.
    pub fn with_weights(&self, weights: Vec<T>) -> Result<Self> {
        GmmSpec::new(weights, self.means.clone(), self.covariances.clone())
    }

    /// Draws a noise vector together with the index of the generating component.
    pub fn sample_labeled<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (Vec<T>, usize) {
        let mut out = vec![T::zero(); self.dim];
        let k = self.sample_into(rng, &mut out);
        (out, k)
    }

    /// Allocation-free variant of [`sample_labeled`](Self::sample_labeled).
    pub fn sample_into<R: rand::Rng + ?Sized>(&self, rng: &mut R, out: &mut [T]) -> usize {
        let u: f64 = rng.gen();
        let k = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.weights.len() - 1);
        let m = self.dim;
        let mut z = [T::zero(); 8];
        let mut z_heap;
        let z: &mut [T] = if m <= 8 {
            &mut z[..m]
        } else {
            z_heap = vec![T::zero(); m];
            &mut z_heap
        };
        for zi in z.iter_mut() {
            let s: f64 = rng.sample(StandardNormal);
            *zi = T::of(s);
        }
        let l = &self.factors[k];
        for i in 0..m {
            let mut acc = self.means[k][i];
            for j in 0..=i {
                acc = acc + l[i * m + j] * z[j];
            }
            out[i] = acc;
        }
        k
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        self.sample_labeled(rng).0
    }
}
