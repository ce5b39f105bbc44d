use log::warn;

use super::IterOptions;
use crate::error::{Error, Result};
use crate::numerics::{self, Cholesky, RealMatrix, RealVector};

/// Iterations between attempts to jump to the exact minimizer on the
/// current support.
const POLISH_EVERY: usize = 25;

/// KKT tolerance for accepting a polished point, relative to `‖Aᵀy‖∞ + α`.
const POLISH_KKT_REL: f64 = 1e-12;

/// Iterations after which a stalled proximal-gradient run hands over to an
/// active-set solve of the same problem.
const FALLBACK_AFTER: usize = 2_000;

#[derive(Debug, Clone)]
pub struct ProxResult {
    pub x: RealVector,
    pub iterations: usize,
    /// False when `max_iter` was hit; `x` is then the last iterate.
    pub converged: bool,
}

/// Regularization path, `alphas` strictly descending.
#[derive(Debug, Clone)]
pub struct NnbpdnPath {
    pub alphas: Vec<f64>,
    pub solutions: Vec<RealVector>,
    /// Per-solve convergence flags and iteration counts.
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
}

/// `½‖Ax − y‖² + α·Σx`.
pub fn nnbpdn_objective(a: &RealMatrix, y: &[f64], alpha: f64, x: &[f64]) -> Result<f64> {
    let mut r = numerics::matvec(a, x)?;
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri -= yi;
    }
    Ok(0.5 * numerics::dot(&r, &r) + alpha * x.iter().sum::<f64>())
}

struct Problem {
    gram: RealMatrix,
    aty: RealVector,
    step: f64,
}

impl Problem {
    fn new(a: &RealMatrix, y: &[f64]) -> Result<Self> {
        if a.rows() != y.len() {
            return Err(Error::DimensionMismatch {
                op: "nnbpdn",
                expected: a.rows(),
                found: y.len(),
            });
        }
        let gram = numerics::gram(a);
        let step = 1.0 / numerics::gershgorin_upper(&gram);
        Ok(Self {
            aty: numerics::matvec_transpose(a, y)?,
            gram,
            step,
        })
    }

    fn solve(&self, alpha: f64, x0: &[f64], opts: &IterOptions) -> ProxResult {
        let n = x0.len();
        let mut x: Vec<f64> = x0.iter().map(|v| v.max(0.0)).collect();
        let mut gx = vec![0.0; n];
        let mut tried: Option<Vec<usize>> = None;
        for it in 1..=opts.max_iter {
            // x is non-negative and usually sparse
            numerics::sym_matvec_sparse(&self.gram, &x, &mut gx);
            let mut change = 0.0_f64;
            for j in 0..n {
                let xn = (x[j] - self.step * (gx[j] - self.aty[j] + alpha)).max(0.0);
                change = change.max((xn - x[j]).abs());
                x[j] = xn;
            }
            if change <= opts.tol {
                return ProxResult {
                    x: RealVector::from_vec_unchecked(x),
                    iterations: it,
                    converged: true,
                };
            }
            if it % POLISH_EVERY == 0 {
                let support: Vec<usize> = (0..n).filter(|&j| x[j] > 0.0).collect();
                if tried.as_ref() != Some(&support) {
                    if let Some(z) = self.polish(alpha, &support) {
                        return ProxResult {
                            x: RealVector::from_vec_unchecked(z),
                            iterations: it,
                            converged: true,
                        };
                    }
                    tried = Some(support);
                }
            }
            if it == FALLBACK_AFTER.min(opts.max_iter) {
                if let Some(z) = self.active_set(alpha) {
                    return ProxResult {
                        x: RealVector::from_vec_unchecked(z),
                        iterations: it,
                        converged: true,
                    };
                }
            }
        }
        warn!("nnbpdn_prox: no convergence after {} iterations (alpha = {alpha})", opts.max_iter);
        ProxResult {
            x: RealVector::from_vec_unchecked(x),
            iterations: opts.max_iter,
            converged: false,
        }
    }

    /// Exact minimizer on `support`, if it is positive there and no
    /// coordinate off the support has a descent direction. Such a point is
    /// the solution, hence a fixed point of the proximal-gradient map.
    fn polish(&self, alpha: f64, support: &[usize]) -> Option<Vec<f64>> {
        let n = self.aty.len();
        let mut z = vec![0.0; n];
        if !support.is_empty() {
            let chol = Cholesky::new(&self.gram.submatrix(support, support)).ok()?;
            let rhs: Vec<f64> = support.iter().map(|&j| self.aty[j] - alpha).collect();
            let zp = chol.solve(&rhs);
            if zp.iter().any(|&v| !(v > 0.0)) {
                return None;
            }
            for (&j, v) in support.iter().zip(zp) {
                z[j] = v;
            }
        }
        self.verify(alpha, z)
    }

    /// Lawson–Hanson on `min ½xᵀGx − (Aᵀy − α)ᵀx, x ≥ 0`; slow ISTA runs are
    /// almost always on nearly rank-deficient supports where this is cheap.
    fn active_set(&self, alpha: f64) -> Option<Vec<f64>> {
        let c: Vec<f64> = self.aty.iter().map(|v| v - alpha).collect();
        let tol = POLISH_KKT_REL * (self.aty.norm_inf() + alpha);
        let (z, _, _) = super::nnls::active_set_qp(&self.gram, &c, tol).ok()?;
        self.verify(alpha, z)
    }

    fn verify(&self, alpha: f64, z: Vec<f64>) -> Option<Vec<f64>> {
        let n = z.len();
        let gz = numerics::matvec(&self.gram, &z).ok()?;
        let tol = POLISH_KKT_REL * (self.aty.norm_inf() + alpha);
        let on: Vec<bool> = (0..n).map(|j| z[j] > 0.0).collect();
        let ok = (0..n).all(|j| {
            let g = gz[j] - self.aty[j] + alpha;
            if on[j] {
                g.abs() <= tol
            } else {
                g >= -tol
            }
        });
        ok.then_some(z)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")))
    }
}

/// Projected proximal gradient for `min ½‖Ax − y‖² + α‖x‖₁ s.t. x ≥ 0`,
/// started from zero, with step `1/L` where `L` is the Gershgorin bound on
/// `AᵀA`. Stops when the iterate change in ∞-norm is at most `opts.tol`.
pub fn nnbpdn_prox(a: &RealMatrix, y: &[f64], alpha: f64, opts: &IterOptions) -> Result<ProxResult> {
    nnbpdn_prox_from(a, y, alpha, &RealVector::zeros(a.cols()), opts)
}

/// As [`nnbpdn_prox`], warm-started at `x0` (negative entries are projected).
pub fn nnbpdn_prox_from(
    a: &RealMatrix,
    y: &[f64],
    alpha: f64,
    x0: &RealVector,
    opts: &IterOptions,
) -> Result<ProxResult> {
    check_alpha(alpha)?;
    if x0.len() != a.cols() {
        return Err(Error::DimensionMismatch {
            op: "nnbpdn_prox_from",
            expected: a.cols(),
            found: x0.len(),
        });
    }
    Ok(Problem::new(a, y)?.solve(alpha, x0, opts))
}

/// Log-spaced grid of `n_alphas` values from `‖Aᵀy‖∞` down to `‖Aᵀy‖∞·10⁻⁴`,
/// each solve warm-started from the previous solution.
pub fn nnbpdn_path(a: &RealMatrix, y: &[f64], n_alphas: usize, opts: &IterOptions) -> Result<NnbpdnPath> {
    if n_alphas < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 alphas, got {n_alphas}")));
    }
    let problem = Problem::new(a, y)?;
    let alpha_max = problem.aty.norm_inf();
    check_alpha(alpha_max)?;
    let alphas: Vec<f64> = (0..n_alphas)
        .map(|k| alpha_max * 10f64.powf(-4.0 * k as f64 / (n_alphas - 1) as f64))
        .collect();
    let mut solutions = Vec::with_capacity(n_alphas);
    let mut converged = Vec::with_capacity(n_alphas);
    let mut iterations = Vec::with_capacity(n_alphas);
    let mut x = RealVector::zeros(a.cols());
    for &alpha in &alphas {
        let r = problem.solve(alpha, &x, opts);
        x = r.x;
        solutions.push(x.clone());
        converged.push(r.converged);
        iterations.push(r.iterations);
    }
    Ok(NnbpdnPath {
        alphas,
        solutions,
        converged,
        iterations,
    })
}
