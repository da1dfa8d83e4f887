//! Discounted discrete-time LQR.
//!
//! Solves `P = Q + γAᵀPA − γ²AᵀPB (R + γBᵀPB)⁻¹ BᵀPA` and returns the gain
//! `K = −γ (R + γBᵀPB)⁻¹ BᵀPA`, to be applied as `u = Kx`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::LinalgScalar;

/// Discount used for every benchmark controller.
pub const LQR_DISCOUNT: f64 = 0.9999;

const MAX_DOUBLINGS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution<T: LinalgScalar> {
    pub p: DMatrix<T>,
    pub k: DMatrix<T>,
    /// Frobenius norm of the Riccati defect at `p`.
    pub residual: T,
    pub iterations: usize,
}

impl<T: LinalgScalar> LqrSolution<T> {
    pub fn min_eigenvalue(&self) -> T {
        self.p
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(T::infinity(), |a: T, b: T| num_traits::Float::min(a, b))
    }
}

fn riccati_map<T: LinalgScalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    gamma: T,
    p: &DMatrix<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let pa = p * a;
    let bt_pa = b.transpose() * &pa;
    let s = r + (b.transpose() * p * b) * gamma;
    let s_inv_bt_pa = s
        .lu()
        .solve(&bt_pa)
        .ok_or_else(|| Error::numeric("R + γBᵀPB is singular"))?;
    let next = q + (a.transpose() * &pa) * gamma - (pa.transpose() * b * &s_inv_bt_pa) * (gamma * gamma);
    let next = (&next + next.transpose()) * T::of(0.5);
    let k = -s_inv_bt_pa * gamma;
    Ok((next, k))
}

/// Frobenius norm of `P − (Q + γAᵀPA − γ²AᵀPB(R + γBᵀPB)⁻¹BᵀPA)`.
pub fn riccati_residual<T: LinalgScalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    gamma: T,
    p: &DMatrix<T>,
) -> Result<T> {
    let (next, _) = riccati_map(a, b, q, r, gamma, p)?;
    Ok((p - next).norm())
}

/// Structure-preserving doubling on `(√γA, √γB)`, followed by two
/// fixed-point sweeps to polish the last bits.
///
/// Converges quadratically, including the input-free case (`B = 0`) where
/// the equation reduces to a discounted Lyapunov equation.
pub fn solve_dare<T: LinalgScalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    gamma: T,
) -> Result<LqrSolution<T>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) {
        return Err(Error::invalid("A must be n×n, B n×m, Q n×n"));
    }
    let m = b.ncols();
    if r.shape() != (m, m) {
        return Err(Error::invalid("R must be m×m"));
    }
    if !(gamma > T::zero() && gamma <= T::one()) {
        return Err(Error::invalid("discount must lie in (0, 1]"));
    }
    let r_inv_bt = r
        .clone()
        .lu()
        .solve(&b.transpose())
        .ok_or_else(|| Error::invalid("R is singular"))?;
    let eps = <T as num_traits::Float>::epsilon();
    let eye = DMatrix::<T>::identity(n, n);
    let mut ak = a * num_traits::Float::sqrt(gamma);
    let mut gk = (b * r_inv_bt) * gamma;
    let mut hk = q.clone();
    for it in 1..=MAX_DOUBLINGS {
        let w = (&eye + &gk * &hk).lu();
        let w_a = w.solve(&ak).ok_or_else(|| Error::numeric("I + GH is singular"))?;
        let w_g = w.solve(&gk).ok_or_else(|| Error::numeric("I + GH is singular"))?;
        let h_next = &hk + ak.transpose() * &hk * &w_a;
        let g_next = &gk + &ak * w_g * ak.transpose();
        ak = &ak * w_a;
        let change = (&h_next - &hk).norm();
        hk = (&h_next + h_next.transpose()) * T::of(0.5);
        gk = (&g_next + g_next.transpose()) * T::of(0.5);
        if !num_traits::Float::is_finite(change) || !hk.iter().all(|v| num_traits::Float::is_finite(*v)) {
            return Err(Error::numeric(format!("Riccati doubling diverged at step {it}")));
        }
        let scale = num_traits::Float::max(T::one(), hk.norm());
        if change <= eps * T::of(4.0) * scale {
            let mut p = hk;
            let mut k = DMatrix::zeros(m, n);
            for _ in 0..2 {
                let (next, gain) = riccati_map(a, b, q, r, gamma, &p)?;
                p = next;
                k = gain;
            }
            let residual = riccati_residual(a, b, q, r, gamma, &p)?;
            return Ok(LqrSolution { p, k, residual, iterations: it });
        }
    }
    let residual = riccati_residual(a, b, q, r, gamma, &hk)?;
    Err(Error::NotConverged { iterations: MAX_DOUBLINGS, residual: residual.f64() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_without_input() {
        let a = DMatrix::from_element(1, 1, 0.5);
        let b = DMatrix::from_element(1, 1, 0.0);
        let one = DMatrix::from_element(1, 1, 1.0);
        let sol = solve_dare(&a, &b, &one, &one, 1.0).unwrap();
        assert!((sol.p[(0, 0)] - 4.0_f64 / 3.0).abs() < 1e-11);
        assert_eq!(sol.k[(0, 0)], 0.0);
    }

    #[test]
    fn zero_dynamics_give_q() {
        let a = DMatrix::<f64>::zeros(2, 2);
        let b = DMatrix::from_row_slice(2, 1, &[0.3, -1.0]);
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = DMatrix::from_element(1, 1, 0.7);
        let sol = solve_dare(&a, &b, &q, &r, 0.9).unwrap();
        assert!((sol.p - q).norm() < 1e-15);
    }

    #[test]
    fn scalar_closed_form() {
        // p = q + γa²p − γ²a²b²p²/(r + γb²p), a positive root of a quadratic.
        let (a, b, q, r, g): (f64, f64, f64, f64, f64) = (1.2, 0.5, 1.0, 2.0, 0.95);
        let sol = solve_dare(
            &DMatrix::from_element(1, 1, a),
            &DMatrix::from_element(1, 1, b),
            &DMatrix::from_element(1, 1, q),
            &DMatrix::from_element(1, 1, r),
            g,
        )
        .unwrap();
        // Multiply through by (r + γb²p): γb²p² + (r − γa²r − qγb²)p − qr = 0.
        let qa = g * b * b;
        let qb = r - g * a * a * r - q * g * b * b;
        let qc = -q * r;
        let root = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        assert!((sol.p[(0, 0)] - root).abs() < 1e-9, "{} vs {root}", sol.p[(0, 0)]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let a = DMatrix::<f64>::identity(2, 2);
        let b = DMatrix::<f64>::zeros(3, 1);
        let q = DMatrix::<f64>::identity(2, 2);
        let r = DMatrix::<f64>::identity(1, 1);
        assert!(solve_dare(&a, &b, &q, &r, 0.9).is_err());
        let b = DMatrix::<f64>::zeros(2, 1);
        assert!(solve_dare(&a, &b, &q, &r, 1.5).is_err());
    }

    #[test]
    fn unstabilizable_reports_not_converged() {
        let a = DMatrix::from_element(1, 1, 2.0);
        let b = DMatrix::from_element(1, 1, 0.0);
        let one = DMatrix::from_element(1, 1, 1.0);
        match solve_dare(&a, &b, &one, &one, 1.0) {
            Err(Error::Numeric(_)) | Err(Error::NotConverged { .. }) => {}
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
