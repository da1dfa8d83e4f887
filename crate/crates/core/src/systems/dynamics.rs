use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::gmm::GmmSpec;
use super::lqr::{solve_dare, LqrSolution, LQR_DISCOUNT};
use crate::error::{Error, Result};
use crate::scalar::{all_finite, LinalgScalar, Scalar};

/// Discretisation interval in seconds.
pub const DT: f64 = 0.05;

const GRAVITY: f64 = 9.81;
const PEND_MASS: f64 = 0.15;
const PEND_FRICTION: f64 = 0.1;
const PEND_LENGTH: f64 = 0.5;
const VDP_MU: f64 = 0.025;

/// Longitudinal Boeing 747 model at 40 000 ft / 774 ft/s, one-second step
/// (state: body-axis velocity, normal velocity, pitch angle, pitch rate).
const BOEING_A: [f64; 16] = [
    0.99, 0.03, -0.02, -0.32, //
    0.01, 0.47, 4.7, 0.0, //
    0.02, -0.06, 0.40, 0.0, //
    0.01, -0.04, 0.72, 0.99,
];
/// Inputs: elevator angle and engine thrust deviations.
const BOEING_B: [f64; 8] = [
    0.01, 0.99, //
    -3.44, 1.66, //
    -0.83, 0.44, //
    -0.47, 0.25,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Pendulum,
    Vdp,
    Tracking,
    Boeing747,
}

impl SystemKind {
    pub const ALL: [SystemKind; 4] =
        [SystemKind::Pendulum, SystemKind::Vdp, SystemKind::Tracking, SystemKind::Boeing747];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Pendulum => "pendulum",
            SystemKind::Vdp => "vdp",
            SystemKind::Tracking => "tracking",
            SystemKind::Boeing747 => "boeing747",
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            SystemKind::Boeing747 => 4,
            _ => 2,
        }
    }

    pub fn is_controlled(self) -> bool {
        self != SystemKind::Vdp
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown system `{s}` (expected pendulum, vdp, tracking or boeing747)")))
    }
}

/// Open-loop `(A, B)` of a controlled benchmark; `None` for the Van der Pol oscillator.
pub fn open_loop_matrices<T: LinalgScalar>(kind: SystemKind) -> Option<(DMatrix<T>, DMatrix<T>)> {
    let e = DT;
    let (n, m, a, b): (usize, usize, Vec<f64>, Vec<f64>) = match kind {
        SystemKind::Pendulum => {
            let ml2 = PEND_MASS * PEND_LENGTH * PEND_LENGTH;
            (
                2,
                1,
                vec![1.0, e, GRAVITY / PEND_LENGTH * e, 1.0 - PEND_FRICTION / ml2 * e],
                vec![0.0, e / ml2],
            )
        }
        SystemKind::Tracking => (2, 1, vec![1.0, 2.0, 0.0, 1.0 - 0.04 * e], vec![0.0, e]),
        SystemKind::Boeing747 => (4, 2, BOEING_A.to_vec(), BOEING_B.to_vec()),
        SystemKind::Vdp => return None,
    };
    Some((
        DMatrix::from_row_slice(n, n, &a.iter().map(|&v| T::of(v)).collect::<Vec<_>>()),
        DMatrix::from_row_slice(n, m, &b.iter().map(|&v| T::of(v)).collect::<Vec<_>>()),
    ))
}

/// Jacobian `(A, B)` at the origin for every benchmark. The Van der Pol
/// oscillator has no input, so its `B` is a single zero column.
pub fn linearized_matrices<T: LinalgScalar>(kind: SystemKind) -> (DMatrix<T>, DMatrix<T>) {
    match open_loop_matrices(kind) {
        Some(ab) => ab,
        None => {
            let a = [1.0, DT, 0.0, 1.0 + DT * (VDP_MU - 1.0)];
            (
                DMatrix::from_row_slice(2, 2, &a.map(T::of)),
                DMatrix::zeros(2, 1),
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Map<T> {
    /// `x' = M x + w`, `M = A + BK` row-major.
    Linear { closed_loop: Vec<T> },
    Vdp { eps: T, mu: T },
}

/// Closed-loop stochastic map `x' = f(x, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel<T> {
    kind: SystemKind,
    n: usize,
    map: Map<T>,
}

/// Builds the closed-loop model. Controlled systems need an LQR gain.
pub fn build_system<T: LinalgScalar>(
    kind: SystemKind,
    gmm: &GmmSpec<T>,
    lqr: Option<&LqrSolution<T>>,
) -> Result<SystemModel<T>> {
    let n = kind.state_dim();
    if gmm.dim() != n {
        return Err(Error::invalid(format!(
            "{kind} has state dimension {n} but the noise mixture has dimension {}",
            gmm.dim()
        )));
    }
    let map = match open_loop_matrices::<T>(kind) {
        None => Map::Vdp { eps: T::of(DT), mu: T::of(VDP_MU) },
        Some((a, b)) => {
            let lqr = lqr.ok_or_else(|| Error::invalid(format!("{kind} is controlled and needs an LQR gain")))?;
            if lqr.k.shape() != (b.ncols(), n) {
                return Err(Error::invalid(format!(
                    "LQR gain has shape {:?}, expected ({}, {n})",
                    lqr.k.shape(),
                    b.ncols()
                )));
            }
            let m = a + b * &lqr.k;
            let mut closed_loop = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    closed_loop.push(m[(i, j)]);
                }
            }
            Map::Linear { closed_loop }
        }
    };
    Ok(SystemModel { kind, n, map })
}

/// Builds the model with the benchmark controller (`Q = I`, `R = I`, `γ = 0.9999`).
pub fn build_with_default_lqr<T: LinalgScalar>(kind: SystemKind, gmm: &GmmSpec<T>) -> Result<SystemModel<T>> {
    let lqr = match open_loop_matrices::<T>(kind) {
        Some((a, b)) => {
            let q = DMatrix::identity(a.nrows(), a.nrows());
            let r = DMatrix::identity(b.ncols(), b.ncols());
            Some(solve_dare(&a, &b, &q, &r, T::of(LQR_DISCOUNT))?)
        }
        None => None,
    };
    build_system(kind, gmm, lqr.as_ref())
}

impl<T: Scalar> SystemModel<T> {
    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn noise_dim(&self) -> usize {
        self.n
    }

    /// `A + BK` for linear models.
    pub fn closed_loop_matrix(&self) -> Option<&[T]> {
        match &self.map {
            Map::Linear { closed_loop } => Some(closed_loop),
            Map::Vdp { .. } => None,
        }
    }

    /// One application of `f`, with dimension and finiteness checks.
    pub fn step(&self, x: &[T], w: &[T]) -> Result<Vec<T>> {
        if x.len() != self.n || w.len() != self.n {
            return Err(Error::invalid(format!(
                "{} expects state and noise of length {}, got {} and {}",
                self.kind,
                self.n,
                x.len(),
                w.len()
            )));
        }
        let mut out = vec![T::zero(); self.n];
        self.step_into(x, w, &mut out);
        if !all_finite(&out) {
            return Err(Error::numeric(format!("{} produced a non-finite state", self.kind)));
        }
        Ok(out)
    }

    /// Unchecked `f(x, w)` written into `out`.
    pub fn step_into(&self, x: &[T], w: &[T], out: &mut [T]) {
        match &self.map {
            Map::Linear { closed_loop } => {
                let n = self.n;
                for i in 0..n {
                    let mut acc = w[i];
                    for j in 0..n {
                        acc = acc + closed_loop[i * n + j] * x[j];
                    }
                    out[i] = acc;
                }
            }
            Map::Vdp { eps, mu } => {
                let (x1, x2) = (x[0], x[1]);
                out[0] = x1 + *eps * (x2 + w[0]);
                out[1] = x2 + *eps * (*mu * (T::one() - x1 * x1) * x2 - x2 + w[1]);
            }
        }
    }

    /// Noise-free prediction `f(x, 0)`.
    pub fn predict_into(&self, x: &[T], out: &mut [T]) {
        match &self.map {
            Map::Linear { closed_loop } => {
                let n = self.n;
                for i in 0..n {
                    let mut acc = T::zero();
                    for j in 0..n {
                        acc = acc + closed_loop[i * n + j] * x[j];
                    }
                    out[i] = acc;
                }
            }
            Map::Vdp { .. } => {
                let zero = [T::zero(); 2];
                self.step_into(x, &zero, out);
            }
        }
    }
}
