//! Benchmark dynamics, Gaussian-mixture process noise and LQR synthesis.

mod dynamics;
mod gmm;
mod lqr;
pub mod presets;

pub use dynamics::{build_system, build_with_default_lqr, linearized_matrices, open_loop_matrices, SystemKind, SystemModel, DT};
pub use gmm::{psd_cholesky, GmmParams, GmmSpec};
pub use lqr::{riccati_residual, solve_dare, LqrSolution, LQR_DISCOUNT};
