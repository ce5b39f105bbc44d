//! Classical reference solvers: active-set NNLS, projected proximal gradient
//! for non-negative basis pursuit denoising, and projected gradient for the
//! box-constrained QP.

mod boxpg;
mod nnbpdn;
mod nnls;

pub use boxpg::box_projected_gradient;
pub use nnbpdn::{nnbpdn_objective, nnbpdn_path, nnbpdn_prox, nnbpdn_prox_from, NnbpdnPath, ProxResult};
pub use nnls::nnls_active_set;

/// Stopping rule shared by the first-order iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterOptions {
    /// Stop once the ∞-norm of the iterate change (proximal gradient) or of
    /// the projected gradient (box QP) drops to this value.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IterOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200_000,
        }
    }
}
