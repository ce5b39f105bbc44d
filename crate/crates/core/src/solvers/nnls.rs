use std::time::Instant;

use crate::dynsys::SolveResult;
use crate::error::{Error, Result};
use crate::kkt::KktReport;
use crate::numerics::{self, Cholesky, RealMatrix, RealVector};

/// Lawson–Hanson active-set NNLS.
///
/// Subproblems are solved by Cholesky on the passive-set block of `AᵀA`.
/// Returned multipliers are exactly zero on the passive set and `x` is
/// exactly zero off it, so `λ_i·x_i = 0` holds bit-for-bit. `tol` bounds the
/// largest remaining dual-infeasible multiplier at termination; the reported
/// residual also includes the stationarity error on the passive set.
pub fn nnls_active_set(a: &RealMatrix, y: &[f64], tol: f64) -> Result<SolveResult> {
    let start = Instant::now();
    if a.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            op: "nnls_active_set",
            expected: a.rows(),
            found: y.len(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let g = numerics::gram(a);
    let b = numerics::matvec_transpose(a, y)?;
    let (x, passive, iterations) = active_set_qp(&g, &b, tol)?;
    let n = x.len();
    let gx = numerics::matvec(&g, &x)?;
    let mut lambda = vec![0.0; n];
    let mut stationarity = 0.0_f64;
    for j in 0..n {
        let l = gx[j] - b[j];
        if passive[j] {
            stationarity = stationarity.max(l.abs());
        } else {
            lambda[j] = l;
        }
    }
    let report = KktReport::from_multipliers(&x, &lambda);
    let residual = report.total.max(stationarity);
    Ok(SolveResult {
        x_eq: RealVector::from_vec_unchecked(x),
        lambda_eq: RealVector::from_vec_unchecked(lambda),
        kkt_residual: residual,
        switches: 0,
        steps: iterations,
        converged: residual <= tol,
        wall_time: start.elapsed().as_secs_f64(),
        t_final: 0.0,
    })
}

/// Lawson–Hanson iteration for `min ½xᵀGx − bᵀx  s.t. x ≥ 0` with `G`
/// positive definite on every passive set it visits. Returns the solution,
/// the final passive set and the number of outer iterations.
pub(crate) fn active_set_qp(g: &RealMatrix, b: &[f64], tol: f64) -> Result<(Vec<f64>, Vec<bool>, usize)> {
    let n = b.len();
    let max_iter = 5 * n + 50;

    let mut passive = vec![false; n];
    // indices whose entry into the passive set immediately failed; cleared
    // whenever the iterate changes
    let mut blocked = vec![false; n];
    let mut x = vec![0.0; n];
    let mut w = b.to_vec();
    let mut iterations = 0;

    loop {
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !blocked[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = candidate else { break };
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::IterationLimit(max_iter));
        }
        passive[t] = true;
        let mut first = true;
        loop {
            let p: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let z = match solve_passive(g, b, &p) {
                Ok(z) => z,
                Err(Error::NotPositiveDefinite) if first => {
                    // The entering column is dependent on the passive ones, so
                    // the objective is linear along the null direction that
                    // brings it in; walk that direction until a passive
                    // variable hits zero and swap the two.
                    passive[t] = false;
                    let old: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
                    match null_swap(g, &old, t, &x)? {
                        Some((step, d, leaving)) => {
                            for (&j, &dj) in old.iter().zip(&d) {
                                x[j] += step * dj;
                            }
                            x[leaving] = 0.0;
                            passive[leaving] = false;
                            x[t] = step;
                            passive[t] = true;
                            first = false;
                            continue;
                        }
                        None => {
                            blocked[t] = true;
                            break;
                        }
                    }
                }
                Err(e) => return Err(e),
            };
            if first && z[p.iter().position(|&j| j == t).unwrap()] <= 0.0 {
                // round-off made the entering variable useless; do not retry it
                passive[t] = false;
                blocked[t] = true;
                break;
            }
            first = false;
            if z.iter().all(|&v| v > 0.0) {
                for (&j, &v) in p.iter().zip(&z) {
                    x[j] = v;
                }
                blocked.iter_mut().for_each(|b| *b = false);
                break;
            }
            let mut alpha = f64::INFINITY;
            let mut leaving = p[0];
            for (&j, &v) in p.iter().zip(&z) {
                if v <= 0.0 {
                    let step = x[j] / (x[j] - v);
                    if step < alpha {
                        alpha = step;
                        leaving = j;
                    }
                }
            }
            for (&j, &v) in p.iter().zip(&z) {
                x[j] += alpha * (v - x[j]);
                if j == leaving || x[j] <= 0.0 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            blocked.iter_mut().for_each(|b| *b = false);
            if !p.iter().any(|&j| passive[j]) {
                break;
            }
        }
        let gx = numerics::matvec(g, &x)?;
        for j in 0..n {
            w[j] = b[j] - gx[j];
        }
    }

    Ok((x, passive, iterations))
}

/// Null direction `d` (with unit weight on `t`) of the Gram block on
/// `p ∪ {t}` and the largest step along it that keeps `x` feasible, together
/// with the index that reaches zero first.
fn null_swap(g: &RealMatrix, p: &[usize], t: usize, x: &[f64]) -> Result<Option<(f64, Vec<f64>, usize)>> {
    if p.is_empty() {
        return Ok(None);
    }
    let gpt: Vec<f64> = p.iter().map(|&j| g[(j, t)]).collect();
    let d: Vec<f64> = Cholesky::new(&g.submatrix(p, p))?.solve(&gpt).iter().map(|v| -v).collect();
    let mut best: Option<(f64, usize)> = None;
    for (&j, &dj) in p.iter().zip(&d) {
        if dj < 0.0 {
            let step = x[j] / -dj;
            if best.is_none_or(|(s, _)| step < s) {
                best = Some((step, j));
            }
        }
    }
    Ok(best.map(|(step, j)| (step, d, j)))
}

fn solve_passive(g: &RealMatrix, b: &[f64], p: &[usize]) -> Result<Vec<f64>> {
    let gp = g.submatrix(p, p);
    let bp: Vec<f64> = p.iter().map(|&j| b[j]).collect();
    Ok(Cholesky::new(&gp)?.solve(&bp))
}
