//! Exact integration between switching events.
//!
//! While the switching sets are constant the network splits into independent
//! linear pieces: the integrating block obeys
//! `ẋ⁺ = A⁺ᵀ(u − A⁻x⁻(τ)) − A⁺ᵀA⁺ x⁺`, held coordinates stay at zero and
//! recovering coordinates grow at rate `ξ`. The integrating block is solved in
//! the eigenbasis of `A⁺ᵀA⁺`, where every mode obeys
//! `ċ = −λc + β + γτ` and has the closed form
//! `c(τ) = c₀e^{−λτ} + βφ₁(λ,τ) + γφ₂(λ,τ)`.
//!
//! Events are the first roots of scalar functions of the form
//! `f(τ) = a₀ + a₁τ + wᵀc(τ)`. Because `c̈_k(τ) = c̈_k(τ₀)e^{−λ(τ−τ₀)}`, the bound
//! `|f''| ≤ Σ|w_k||c̈_k(τ₀)|` holds on `[τ₀, ∞)`, so the quadratic lower model
//! `f(τ₀) + f'(τ₀)h − ½Kh²` gives a step that can never jump over a root.

use super::{
    kkt_from_state, DiscSystem, IndexPartition, SetKind, SolverOptions, SwitchEvent,
    SystemState, Trajectory, DEFAULT_ZERO_TOL,
};
use crate::error::{Error, Result};
use crate::numerics::{RealMatrix, RealVector, SymmetricEigen};

/// Eigenvalues below this fraction of the largest are treated as exact null
/// modes of the integrating block.
const NULL_MODE_REL: f64 = 1e-13;

/// Absolute trigger level for event functions, relative to their scale.
const EVENT_REL_TOL: f64 = 1e-14;

/// A derivative below this fraction of its term magnitudes counts as zero.
const DERIV_REL_TOL: f64 = 1e-12;

const MAX_ROOT_ITERS: usize = 400;

/// Advances the exact piecewise solution from `state` to `t_end`.
///
/// Returns the state at `t_end` and every switching event on the way. Rank
/// deficient integrating blocks are allowed: their null modes receive no
/// forcing and stay constant.
pub fn step_exact_subsystem(
    sys: &DiscSystem,
    state: &SystemState,
    t_end: f64,
) -> Result<(SystemState, Vec<SwitchEvent>)> {
    sys.check_len(state.x.len(), "step_exact_subsystem")?;
    if !(t_end >= state.t) {
        return Err(Error::InvalidArgument(format!(
            "t_end = {t_end} precedes state time {}",
            state.t
        )));
    }
    let mut core = ExactCore::new(state);
    let mut traj = Trajectory::default();
    core.advance_to(sys, t_end, DEFAULT_ZERO_TOL, &mut traj, false)?;
    Ok((core.state(), traj.switch_events))
}

pub(super) fn run(
    sys: &DiscSystem,
    state: SystemState,
    opts: &SolverOptions,
    stop_on_kkt: bool,
) -> Result<(SystemState, Trajectory, usize)> {
    let mut traj = Trajectory::default();
    traj.push_sample(&state);
    let mut core = ExactCore::new(&state);
    let mut intervals = 0;
    if !stop_on_kkt {
        intervals += core.advance_to(sys, opts.max_time, opts.zero_tol, &mut traj, true)?;
    } else {
        while core.t < opts.max_time && kkt_from_state(&core.x, &core.xt) > opts.kkt_tol {
            let target = if core.t < 0.5 { 1.0 } else { 2.0 * core.t };
            let target = target.min(opts.max_time);
            intervals += core.advance_to(sys, target, opts.zero_tol, &mut traj, true)?;
        }
    }
    let last = core.state();
    traj.push_sample(&last);
    Ok((last, traj, intervals))
}

struct ExactCore {
    t: f64,
    x: Vec<f64>,
    xt: Vec<f64>,
    kinds: Vec<SetKind>,
    stalled: usize,
}

impl ExactCore {
    fn new(state: &SystemState) -> Self {
        Self {
            t: state.t,
            x: state.x.to_vec(),
            xt: state.xtilde.to_vec(),
            kinds: state.partition.kinds(),
            stalled: 0,
        }
    }

    fn state(&self) -> SystemState {
        SystemState {
            t: self.t,
            x: RealVector::from_vec_unchecked(self.x.clone()),
            xtilde: RealVector::from_vec_unchecked(self.xt.clone()),
            partition: IndexPartition::from_kinds(&self.kinds),
        }
    }

    /// Returns the number of constant-partition intervals processed.
    fn advance_to(
        &mut self,
        sys: &DiscSystem,
        t_end: f64,
        zero_tol: f64,
        traj: &mut Trajectory,
        record: bool,
    ) -> Result<usize> {
        let n = self.x.len();
        let stall_limit = 4 * n + 16;
        let mut intervals = 0;
        while self.t < t_end {
            let model = IntervalModel::build(sys, &self.x, &self.kinds);
            let horizon = t_end - self.t;
            let (tau, trigger) = model.next_event(sys, &self.x, &self.xt, horizon);
            model.advance(tau, &mut self.x);
            self.t = if tau >= horizon { t_end } else { self.t + tau };
            intervals += 1;

            if let Some((i, _)) = trigger {
                self.x[i] = 0.0;
            }
            for v in self.x.iter_mut() {
                if v.abs() <= zero_tol {
                    *v = 0.0;
                }
            }
            sys.integrator_input_into(&self.x, &mut self.xt);
            if self.x.iter().chain(&self.xt).any(|v| !v.is_finite()) {
                return Err(Error::Diverged { t: self.t });
            }
            for i in 0..n {
                let from = self.kinds[i];
                let to = match trigger {
                    Some((j, forced)) if j == i => {
                        forced.unwrap_or_else(|| SetKind::classify(0.0, self.xt[i], zero_tol))
                    }
                    _ => SetKind::classify(self.x[i], self.xt[i], zero_tol),
                };
                if to != from {
                    self.kinds[i] = to;
                    traj.switch_events.push(SwitchEvent {
                        t: self.t,
                        index: i,
                        from,
                        to,
                    });
                }
            }

            if trigger.is_some() && tau <= f64::EPSILON * self.t.max(1.0) {
                self.stalled += 1;
                if self.stalled > stall_limit {
                    return Err(Error::EventStall {
                        t: self.t,
                        events: traj.switch_events.len(),
                    });
                }
            } else {
                self.stalled = 0;
            }
            if record {
                traj.push_sample(&self.state());
            }
        }
        Ok(intervals)
    }
}

/// Closed-form solution of one constant-partition interval.
struct IntervalModel {
    plus: Vec<usize>,
    zero: Vec<usize>,
    neg: Vec<usize>,
    lambda: Vec<f64>,
    vectors: RealMatrix,
    c0: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
    xi: f64,
}

/// `f(τ) = a₀ + a₁τ + wᵀc(τ)`; an event fires when `f` reaches zero from above.
struct Monitor {
    index: usize,
    target: Option<SetKind>,
    a0: f64,
    a1: f64,
    w: Vec<f64>,
    tol: f64,
}

/// Monitor value and derivatives at one point, plus bounds on the second
/// and third derivative magnitudes valid from that point onward.
#[derive(Default)]
struct Probe {
    f: f64,
    fd: f64,
    fdd: f64,
    /// Magnitude of the terms summed into `fd`, for judging cancellation.
    fd_scale: f64,
    k2: f64,
    k3: f64,
}

enum RootSearch {
    Root(f64),
    None,
    /// Gave up after too many iterations; `f` is still positive up to here.
    Truncated(f64),
}

impl IntervalModel {
    fn build(sys: &DiscSystem, x: &[f64], kinds: &[SetKind]) -> Self {
        let part = IndexPartition::from_kinds(kinds);
        let g = sys.gram();
        let k = part.plus.len();
        let (lambda, vectors) = if k > 0 {
            let eig = SymmetricEigen::new(&g.submatrix(&part.plus, &part.plus));
            (eig.values, eig.vectors)
        } else {
            (Vec::new(), RealMatrix::zeros(1, 1))
        };
        let lam_max = lambda.iter().copied().fold(0.0_f64, f64::max);
        let null = |l: f64| l <= NULL_MODE_REL * lam_max;

        let aty = sys.at_input();
        let mut b0 = vec![0.0; k];
        let mut gsum = vec![0.0; k];
        for (p, &i) in part.plus.iter().enumerate() {
            let row = g.row(i);
            b0[p] = aty[i] - part.neg.iter().map(|&j| row[j] * x[j]).sum::<f64>();
            gsum[p] = part.neg.iter().map(|&j| row[j]).sum();
        }
        let mut c0 = vec![0.0; k];
        let mut beta = vec![0.0; k];
        let mut gamma = vec![0.0; k];
        for m in 0..k {
            for (p, &i) in part.plus.iter().enumerate() {
                let v = vectors[(p, m)];
                c0[m] += v * x[i];
                beta[m] += v * b0[p];
                gamma[m] -= sys.xi() * v * gsum[p];
            }
        }
        let lambda: Vec<f64> = lambda
            .into_iter()
            .enumerate()
            .map(|(m, l)| {
                if null(l) {
                    beta[m] = 0.0;
                    gamma[m] = 0.0;
                    0.0
                } else {
                    l
                }
            })
            .collect();
        Self {
            plus: part.plus,
            zero: part.zero,
            neg: part.neg,
            lambda,
            vectors,
            c0,
            beta,
            gamma,
            xi: sys.xi(),
        }
    }

    fn mode(&self, m: usize, tau: f64) -> (f64, f64, f64) {
        let l = self.lambda[m];
        let (e, phi1, phi2) = phi(l, tau);
        let c = self.c0[m] * e + self.beta[m] * phi1 + self.gamma[m] * phi2;
        let cd = -l * c + self.beta[m] + self.gamma[m] * tau;
        let cdd = -l * cd + self.gamma[m];
        (c, cd, cdd)
    }

    fn eval(&self, mon: &Monitor, tau: f64) -> Probe {
        let mut p = Probe {
            f: mon.a0 + mon.a1 * tau,
            fd: mon.a1,
            fd_scale: mon.a1.abs(),
            ..Probe::default()
        };
        for (m, &w) in mon.w.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (c, cd, cdd) = self.mode(m, tau);
            p.f += w * c;
            p.fd += w * cd;
            p.fdd += w * cdd;
            p.fd_scale += (w * self.beta[m]).abs() + (w * self.lambda[m] * c).abs() + (w * self.gamma[m] * tau).abs();
            p.k2 += w.abs() * cdd.abs();
            p.k3 += w.abs() * self.lambda[m] * cdd.abs();
        }
        p
    }

    fn first_root(&self, mon: &Monitor, tau_max: f64) -> RootSearch {
        let mut tau = 0.0;
        for _ in 0..MAX_ROOT_ITERS {
            let p = self.eval(mon, tau);
            let flat = p.fd.abs() <= DERIV_REL_TOL * p.fd_scale;
            if p.f <= mon.tol && (!flat && p.fd < 0.0 || flat && p.fdd <= 0.0) {
                return RootSearch::Root(tau);
            }
            if tau >= tau_max {
                return RootSearch::None;
            }
            let h = if p.f <= mon.tol && flat {
                // touching zero and curving away: f ≥ ½f''h² − ⅙K₃h³ stays
                // positive up to 3f''/K₃
                if p.k3 > 0.0 {
                    p.fdd / p.k3
                } else {
                    f64::INFINITY
                }
            } else if p.k2 > 0.0 {
                let fpos = p.f.max(0.0);
                (p.fd + (p.fd * p.fd + 2.0 * p.k2 * fpos).sqrt()) / p.k2
            } else if p.fd < 0.0 {
                p.f.max(0.0) / -p.fd
            } else {
                f64::INFINITY
            };
            if !(h > 0.0) {
                return RootSearch::Root(tau);
            }
            let next = (tau + h).min(tau_max);
            if next <= tau {
                return RootSearch::Root(tau);
            }
            tau = next;
        }
        RootSearch::Truncated(tau)
    }

    /// Earliest event within `horizon`: `(τ, Some((index, forced target)))`,
    /// or `(horizon, None)` when nothing switches. A truncated root search
    /// yields a shorter eventless interval.
    fn next_event(
        &self,
        sys: &DiscSystem,
        x: &[f64],
        xt: &[f64],
        horizon: f64,
    ) -> (f64, Option<(usize, Option<SetKind>)>) {
        let mut best = horizon;
        let mut trigger = None;
        for &i in &self.neg {
            let tau = -x[i] / self.xi;
            if tau <= best {
                best = tau;
                trigger = Some((i, None));
            }
        }

        let g = sys.gram();
        let k = self.plus.len();
        let x_scale = self.plus.iter().map(|&i| x[i].abs()).fold(1.0_f64, f64::max);
        let xt_scale = xt.iter().map(|v| v.abs()).fold(1.0_f64, f64::max);
        let mut monitors: Vec<Monitor> = Vec::with_capacity(self.plus.len() + self.zero.len());
        for (p, &i) in self.plus.iter().enumerate() {
            monitors.push(Monitor {
                index: i,
                target: Some(SetKind::Zero),
                a0: 0.0,
                a1: 0.0,
                w: (0..k).map(|m| self.vectors[(p, m)]).collect(),
                tol: EVENT_REL_TOL * x_scale,
            });
        }
        let aty = sys.at_input();
        for &i in &self.zero {
            let row = g.row(i);
            let mut w = vec![0.0; k];
            for (p, &j) in self.plus.iter().enumerate() {
                let gij = row[j];
                if gij != 0.0 {
                    for (m, wm) in w.iter_mut().enumerate() {
                        *wm += gij * self.vectors[(p, m)];
                    }
                }
            }
            monitors.push(Monitor {
                index: i,
                target: Some(SetKind::Plus),
                a0: -aty[i] + self.neg.iter().map(|&j| row[j] * x[j]).sum::<f64>(),
                a1: self.xi * self.neg.iter().map(|&j| row[j]).sum::<f64>(),
                w,
                tol: EVENT_REL_TOL * xt_scale,
            });
        }

        for mon in &monitors {
            match self.first_root(mon, best) {
                RootSearch::Root(tau) if tau < best || trigger.is_none() => {
                    best = tau;
                    trigger = Some((mon.index, mon.target));
                }
                RootSearch::Truncated(tau) if tau < best => {
                    best = tau;
                    trigger = None;
                }
                _ => {}
            }
        }
        (best, trigger)
    }

    fn advance(&self, tau: f64, x: &mut [f64]) {
        let k = self.plus.len();
        let c: Vec<f64> = (0..k).map(|m| self.mode(m, tau).0).collect();
        for (p, &i) in self.plus.iter().enumerate() {
            x[i] = (0..k).map(|m| self.vectors[(p, m)] * c[m]).sum();
        }
        for &i in &self.zero {
            x[i] = 0.0;
        }
        for &i in &self.neg {
            x[i] += self.xi * tau;
        }
    }
}

/// `(e^{−λτ}, φ₁, φ₂)` with `φ₁ = ∫₀^τ e^{−λs} ds` and `φ₂ = ∫₀^τ e^{−λ(τ−s)} s ds`,
/// evaluated without cancellation for small `λτ`.
fn phi(lambda: f64, tau: f64) -> (f64, f64, f64) {
    if lambda == 0.0 {
        return (1.0, tau, 0.5 * tau * tau);
    }
    let z = lambda * tau;
    let e = (-z).exp();
    let phi1 = -(-z).exp_m1() / lambda;
    let phi2 = if z < 0.1 {
        // τ² Σ (−z)ⁿ/(n+2)!
        let mut term = 0.5;
        let mut sum = 0.5;
        for n in 1..12 {
            term *= -z / (n as f64 + 2.0);
            sum += term;
        }
        tau * tau * sum
    } else {
        (tau - phi1) / lambda
    };
    (e, phi1, phi2)
}
