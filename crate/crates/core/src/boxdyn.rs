//! Integrators limited to a box `[lo, hi]`, solving
//! `min ½xᵀQx − qᵀx  s.t. lo ≤ x ≤ hi` for symmetric positive definite `Q`.
//!
//! With `x̂ = q − Qx` the five integrator cases are: above the upper bound
//! return at rate `ξ`, at the upper bound integrate only the negative part of
//! `x̂`, strictly inside integrate `x̂`, at the lower bound integrate only the
//! positive part, below the lower bound recover at rate `ξ`.

use std::time::Instant;

use crate::dynsys::{SolveResult, SolverOptions, DEFAULT_ZERO_TOL};
use crate::error::{Error, Result};
use crate::kkt;
use crate::numerics::{self, Cholesky, RealMatrix, RealVector};

#[derive(Debug, Clone)]
pub struct BoxSystem {
    q_mat: RealMatrix,
    q: RealVector,
    lo: RealVector,
    hi: RealVector,
    xi: f64,
}

impl BoxSystem {
    pub fn new(
        q_mat: RealMatrix,
        q: RealVector,
        lo: RealVector,
        hi: RealVector,
        xi: f64,
    ) -> Result<Self> {
        let n = q_mat.rows();
        if q_mat.cols() != n {
            return Err(Error::DimensionMismatch {
                op: "BoxSystem::new (Q square)",
                expected: n,
                found: q_mat.cols(),
            });
        }
        for (v, op) in [(&q, "BoxSystem::new (q)"), (&lo, "BoxSystem::new (lo)"), (&hi, "BoxSystem::new (hi)")] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    op,
                    expected: n,
                    found: v.len(),
                });
            }
        }
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::InvalidArgument(format!("xi must be positive, got {xi}")));
        }
        if let Some(i) = (0..n).find(|&i| lo[i] >= hi[i]) {
            return Err(Error::InvalidArgument(format!(
                "empty box at coordinate {i}: lo = {} ≥ hi = {}",
                lo[i], hi[i]
            )));
        }
        let scale = numerics::norm_inf(q_mat.as_slice()).max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (q_mat[(i, j)] - q_mat[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument("Q is not symmetric".into()));
                }
            }
        }
        let mut q_mat = q_mat;
        for i in 0..n {
            for j in 0..i {
                let avg = 0.5 * (q_mat[(i, j)] + q_mat[(j, i)]);
                q_mat[(i, j)] = avg;
                q_mat[(j, i)] = avg;
            }
        }
        Cholesky::new(&q_mat)?;
        Ok(Self {
            q_mat,
            q,
            lo,
            hi,
            xi,
        })
    }

    /// Bounded least squares: `Q = AᵀA`, `q = Aᵀy`.
    pub fn from_least_squares(
        a: &RealMatrix,
        y: &[f64],
        lo: RealVector,
        hi: RealVector,
        xi: f64,
    ) -> Result<Self> {
        let q = numerics::matvec_transpose(a, y)?;
        Self::new(numerics::gram(a), q, lo, hi, xi)
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn quad(&self) -> &RealMatrix {
        &self.q_mat
    }

    pub fn linear(&self) -> &RealVector {
        &self.q
    }

    pub fn lower(&self) -> &RealVector {
        &self.lo
    }

    pub fn upper(&self) -> &RealVector {
        &self.hi
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// `Qx − q`.
    pub fn gradient(&self, x: &[f64]) -> Result<RealVector> {
        let mut g = numerics::matvec(&self.q_mat, x)?;
        for (gi, qi) in g.iter_mut().zip(self.q.iter()) {
            *gi -= qi;
        }
        Ok(g)
    }

    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        let qx = numerics::matvec(&self.q_mat, x)?;
        Ok(0.5 * numerics::dot(x, &qx) - numerics::dot(&self.q, x))
    }

    /// Euler step size `1 / (2·λ̄)`, `λ̄` the Gershgorin bound on `Q`.
    pub fn default_dt(&self) -> f64 {
        0.5 / numerics::gershgorin_upper(&self.q_mat)
    }

    fn region(&self, i: usize, x: f64, tol: f64) -> Region {
        let (lo, hi) = (self.lo[i], self.hi[i]);
        if x > hi + tol {
            Region::Above
        } else if x >= hi - tol {
            Region::AtUpper
        } else if x > lo + tol {
            Region::Interior
        } else if x >= lo - tol {
            Region::AtLower
        } else {
            Region::Below
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Region {
    Above,
    AtUpper,
    Interior,
    AtLower,
    Below,
}

fn rhs_component(region: Region, xhat: f64, xi: f64) -> f64 {
    match region {
        Region::Above => -xi,
        Region::AtUpper => xhat.min(0.0),
        Region::Interior => xhat,
        Region::AtLower => xhat.max(0.0),
        Region::Below => xi,
    }
}

/// Right-hand side of the box-limited network at `x`.
pub fn box_rhs(sys: &BoxSystem, x: &[f64]) -> Result<RealVector> {
    let grad = sys.gradient(x)?;
    Ok(RealVector::from_vec_unchecked(
        (0..x.len())
            .map(|i| rhs_component(sys.region(i, x[i], DEFAULT_ZERO_TOL), -grad[i], sys.xi))
            .collect(),
    ))
}

/// One projected Euler step. Coordinates crossing a bound are written as the
/// exact bound value, so a feasible point stays feasible.
pub fn box_step(sys: &BoxSystem, x: &[f64], dt: f64) -> Result<RealVector> {
    let grad = sys.gradient(x)?;
    let mut out = x.to_vec();
    step_in_place(sys, &mut out, &grad, dt, DEFAULT_ZERO_TOL);
    Ok(RealVector::from_vec_unchecked(out))
}

fn step_in_place(sys: &BoxSystem, x: &mut [f64], grad: &[f64], dt: f64, tol: f64) {
    for i in 0..x.len() {
        let (lo, hi) = (sys.lo[i], sys.hi[i]);
        let region = sys.region(i, x[i], tol);
        let xn = x[i] + dt * rhs_component(region, -grad[i], sys.xi);
        x[i] = match region {
            Region::Above => xn.max(hi),
            Region::Below => xn.min(lo),
            Region::AtUpper if xn >= hi - tol => hi,
            Region::AtLower if xn <= lo + tol => lo,
            _ => {
                if xn >= hi - tol {
                    hi
                } else if xn <= lo + tol {
                    lo
                } else {
                    xn
                }
            }
        };
    }
}

/// Projected Euler integration of the box-limited network until the box KKT
/// residual drops below `opts.kkt_tol` or `opts.max_time` is reached.
pub fn box_solve(sys: &BoxSystem, x0: &RealVector, opts: &SolverOptions) -> Result<SolveResult> {
    let start = Instant::now();
    if x0.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            op: "box_solve",
            expected: sys.dim(),
            found: x0.len(),
        });
    }
    let dt = match opts.integrator {
        crate::dynsys::Integrator::ProjectedEuler { dt: Some(dt) } => dt,
        _ => sys.default_dt(),
    };
    let n = sys.dim();
    let tol = opts.zero_tol;
    let mut x = x0.to_vec();
    let mut regions: Vec<Region> = (0..n).map(|i| sys.region(i, x[i], tol)).collect();
    let mut switches = 0;
    let max_steps = (opts.max_time / dt).ceil() as usize;
    let mut steps = 0;
    let mut grad = sys.gradient(&x)?;
    let mut residual;
    loop {
        residual = kkt::box_kkt_tol(sys, &x, tol)?.total;
        if residual <= opts.kkt_tol || steps >= max_steps {
            break;
        }
        step_in_place(sys, &mut x, &grad, dt, tol);
        steps += 1;
        grad = sys.gradient(&x)?;
        if x.iter().chain(grad.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Diverged { t: steps as f64 * dt });
        }
        for (i, r) in regions.iter_mut().enumerate() {
            let nr = sys.region(i, x[i], tol);
            if nr != *r {
                switches += 1;
                *r = nr;
            }
        }
    }
    Ok(SolveResult {
        x_eq: RealVector::from_vec_unchecked(x),
        lambda_eq: grad,
        kkt_residual: residual,
        switches,
        steps,
        converged: residual <= opts.kkt_tol,
        wall_time: start.elapsed().as_secs_f64(),
        t_final: steps as f64 * dt,
    })
}
