//! KKT residuals for NNLS and the box-constrained QP.
//!
//! The multipliers are always derived from the primal point (`λ = AᵀAx − Aᵀy`
//! for NNLS, the gradient `Qx − q` for the box QP), so a report is a pure
//! function of `x`. All components are ∞-norms.

use crate::boxdyn::BoxSystem;
use crate::dynsys::DEFAULT_ZERO_TOL;
use crate::error::{Error, Result};
use crate::numerics::{self, RealMatrix, RealVector};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal_violation: f64,
    pub dual_violation: f64,
    pub comp_slack: f64,
    pub total: f64,
}

impl KktReport {
    fn new(stationarity: f64, primal_violation: f64, dual_violation: f64, comp_slack: f64) -> Self {
        Self {
            stationarity,
            primal_violation,
            dual_violation,
            comp_slack,
            total: stationarity.max(primal_violation).max(dual_violation).max(comp_slack),
        }
    }

    /// NNLS report from `x` and `λ`, with stationarity taken as exact.
    pub fn from_multipliers(x: &[f64], lambda: &[f64]) -> Self {
        let mut primal = 0.0_f64;
        let mut dual = 0.0_f64;
        let mut comp = 0.0_f64;
        for (&xi, &li) in x.iter().zip(lambda) {
            primal = primal.max(-xi);
            dual = dual.max(-li);
            comp = comp.max((li * xi).abs());
        }
        Self::new(0.0, primal, dual, comp)
    }

    /// NNLS report from a network state, using `λ = −x̃`.
    pub fn from_state(x: &[f64], xtilde: &[f64]) -> Self {
        let lambda: Vec<f64> = xtilde.iter().map(|v| -v).collect();
        Self::from_multipliers(x, &lambda)
    }
}

/// `λ = Aᵀ(Ax − y)`.
pub fn nnls_multipliers(a: &RealMatrix, y: &[f64], x: &[f64]) -> Result<RealVector> {
    if a.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            op: "nnls_kkt",
            expected: a.rows(),
            found: y.len(),
        });
    }
    let mut r = numerics::matvec(a, x)?;
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri -= yi;
    }
    numerics::matvec_transpose(a, &r)
}

/// KKT report of `min ½‖Ax − y‖² s.t. x ≥ 0` at `x`.
pub fn nnls_kkt(a: &RealMatrix, y: &[f64], x: &[f64]) -> Result<KktReport> {
    let lambda = nnls_multipliers(a, y, x)?;
    Ok(KktReport::from_multipliers(x, &lambda))
}

/// KKT report of `min ½‖Ax − y‖² + α·Σx s.t. x ≥ 0` at `x`; the multiplier
/// is `Aᵀ(Ax − y) + α`.
pub fn nnbpdn_kkt(a: &RealMatrix, y: &[f64], alpha: f64, x: &[f64]) -> Result<KktReport> {
    let mut lambda = nnls_multipliers(a, y, x)?;
    lambda.iter_mut().for_each(|l| *l += alpha);
    Ok(KktReport::from_multipliers(x, &lambda))
}

/// KKT report of `min ½xᵀQx − qᵀx s.t. lo ≤ x ≤ hi` at `x`.
///
/// Coordinates within the zero band of a bound count as active there and
/// must have a gradient pointing out of the box; interior coordinates must
/// have zero gradient; bound violations are primal violations.
pub fn box_kkt(sys: &BoxSystem, x: &[f64]) -> Result<KktReport> {
    box_kkt_tol(sys, x, DEFAULT_ZERO_TOL)
}

pub fn box_kkt_tol(sys: &BoxSystem, x: &[f64], bound_tol: f64) -> Result<KktReport> {
    let grad = sys.gradient(x)?;
    let (lo, hi) = (sys.lower(), sys.upper());
    let mut stat = 0.0_f64;
    let mut primal = 0.0_f64;
    let mut dual = 0.0_f64;
    let mut comp = 0.0_f64;
    for i in 0..x.len() {
        let g = grad[i];
        primal = primal.max(lo[i] - x[i]).max(x[i] - hi[i]);
        let dist_lo = (x[i] - lo[i]).abs();
        let dist_hi = (hi[i] - x[i]).abs();
        if dist_lo <= bound_tol || x[i] < lo[i] {
            // multiplier of the lower bound is g ≥ 0
            dual = dual.max(-g);
            comp = comp.max(g.max(0.0) * dist_lo);
        } else if dist_hi <= bound_tol || x[i] > hi[i] {
            dual = dual.max(g);
            comp = comp.max((-g).max(0.0) * dist_hi);
        } else {
            stat = stat.max(g.abs());
        }
    }
    Ok(KktReport::new(stat, primal, dual, comp))
}
