use std::time::Instant;

use log::warn;

use super::IterOptions;
use crate::boxdyn::BoxSystem;
use crate::dynsys::SolveResult;
use crate::error::Result;
use crate::kkt;
use crate::numerics::{self, RealVector};

/// Projected gradient `x ← clip(x − s(Qx − q), lo, hi)` with `s = 1/L`, `L`
/// the Gershgorin bound on `Q`, started from the projection of zero.
/// Converged when `‖x − clip(x − ∇f(x))‖∞ ≤ opts.tol`.
pub fn box_projected_gradient(sys: &BoxSystem, opts: &IterOptions) -> Result<SolveResult> {
    let start = Instant::now();
    let n = sys.dim();
    let (lo, hi) = (sys.lower(), sys.upper());
    let step = 1.0 / numerics::gershgorin_upper(sys.quad());
    let mut x: Vec<f64> = (0..n).map(|i| 0.0_f64.clamp(lo[i], hi[i])).collect();
    let mut iterations = 0;
    let mut converged = false;
    let mut grad = sys.gradient(&x)?;
    loop {
        let pg = (0..n)
            .map(|i| (x[i] - (x[i] - grad[i]).clamp(lo[i], hi[i])).abs())
            .fold(0.0, f64::max);
        if pg <= opts.tol {
            converged = true;
            break;
        }
        if iterations == opts.max_iter {
            warn!("box_projected_gradient: no convergence after {iterations} iterations");
            break;
        }
        for i in 0..n {
            x[i] = (x[i] - step * grad[i]).clamp(lo[i], hi[i]);
        }
        grad = sys.gradient(&x)?;
        iterations += 1;
    }
    let residual = kkt::box_kkt(sys, &x)?.total;
    Ok(SolveResult {
        x_eq: RealVector::from_vec_unchecked(x),
        lambda_eq: grad,
        kkt_residual: residual,
        switches: 0,
        steps: iterations,
        converged,
        wall_time: start.elapsed().as_secs_f64(),
        t_final: 0.0,
    })
}
