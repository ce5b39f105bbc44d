//! The discontinuous network: non-negatively limited integrators fed by
//! `x̃ = Aᵀu − AᵀA x`.
//!
//! Each state coordinate integrates its input while positive, holds at zero
//! while the input points outward, and recovers from negative values at the
//! constant rate `ξ`. With constant input `u = y` the equilibria are exactly
//! the KKT points of `min ½‖Ax − y‖²  s.t. x ≥ 0`.
//!
//! Two time integrators are provided: a projected explicit Euler scheme
//! ([`step_projected_euler`]) and an exact piecewise-linear integrator that
//! advances the closed-form subsystem solution between switching events
//! ([`step_exact_subsystem`]).

mod euler;
mod exact;
mod export;

use std::fmt;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::kkt::KktReport;
use crate::numerics::{self, RealMatrix, RealVector};

pub use euler::step_projected_euler;
pub use exact::step_exact_subsystem;

/// Band used to decide membership of the zero set. Clamping writes exact
/// zeros, so values only enter the band from outside.
pub const DEFAULT_ZERO_TOL: f64 = 1e-12;

pub const DEFAULT_XI: f64 = 1.0;

pub const DEFAULT_KKT_TOL: f64 = 1e-8;

pub const DEFAULT_MAX_TIME: f64 = 1e5;

/// Fixed matrix, recovery rate and constant input of the network.
#[derive(Debug, Clone)]
pub struct DiscSystem {
    a: RealMatrix,
    gram: RealMatrix,
    xi: f64,
    input: RealVector,
    at_input: RealVector,
}

impl DiscSystem {
    pub fn new(a: RealMatrix, input: RealVector, xi: f64) -> Result<Self> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::InvalidArgument(format!("xi must be positive, got {xi}")));
        }
        if input.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                op: "DiscSystem::new",
                expected: a.rows(),
                found: input.len(),
            });
        }
        let gram = numerics::gram(&a);
        let at_input = numerics::matvec_transpose(&a, &input)?;
        Ok(Self {
            a,
            gram,
            xi,
            input,
            at_input,
        })
    }

    pub fn with_default_xi(a: RealMatrix, input: RealVector) -> Result<Self> {
        Self::new(a, input, DEFAULT_XI)
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.a
    }

    pub fn gram(&self) -> &RealMatrix {
        &self.gram
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn input(&self) -> &RealVector {
        &self.input
    }

    /// Replaces the constant input `u`. The matrix and its Gram stay cached.
    pub fn set_input(&mut self, input: RealVector) -> Result<()> {
        if input.len() != self.a.rows() {
            return Err(Error::DimensionMismatch {
                op: "DiscSystem::set_input",
                expected: self.a.rows(),
                found: input.len(),
            });
        }
        self.at_input = numerics::matvec_transpose(&self.a, &input)?;
        self.input = input;
        Ok(())
    }

    /// `Aᵀu`.
    pub fn at_input(&self) -> &RealVector {
        &self.at_input
    }

    /// Number of state coordinates `N`.
    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    /// Integrator input `x̃ = Aᵀu − AᵀA x`.
    pub fn integrator_input(&self, x: &[f64]) -> Result<RealVector> {
        self.check_len(x.len(), "DiscSystem::integrator_input")?;
        let mut out = vec![0.0; x.len()];
        self.integrator_input_into(x, &mut out);
        Ok(RealVector::from_vec_unchecked(out))
    }

    pub(crate) fn integrator_input_into(&self, x: &[f64], out: &mut [f64]) {
        numerics::sym_matvec_sparse(&self.gram, x, out);
        for (o, b) in out.iter_mut().zip(self.at_input.iter()) {
            *o = b - *o;
        }
    }

    /// Euler step size `1 / (2·λ̄)` with `λ̄` the Gershgorin bound on `AᵀA`.
    pub fn default_dt(&self) -> f64 {
        0.5 / numerics::gershgorin_upper(&self.gram)
    }

    fn check_len(&self, len: usize, op: &'static str) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                op,
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }
}

/// Which of the three switching sets a coordinate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SetKind {
    /// Integrating: `x_i > 0`, or `x_i = 0` with `x̃_i ≥ 0`.
    Plus,
    /// Held at zero: `x_i = 0` with `x̃_i < 0`.
    Zero,
    /// Recovering: `x_i < 0`.
    Neg,
}

impl SetKind {
    pub fn classify(x: f64, xtilde: f64, zero_tol: f64) -> Self {
        if x > zero_tol {
            SetKind::Plus
        } else if x < -zero_tol {
            SetKind::Neg
        } else if xtilde >= 0.0 {
            SetKind::Plus
        } else {
            SetKind::Zero
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SetKind::Plus => "plus",
            SetKind::Zero => "zero",
            SetKind::Neg => "neg",
        }
    }
}

impl fmt::Display for SetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Partition of `{0, …, N−1}` into the integrating, held and recovering sets.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexPartition {
    pub plus: Vec<usize>,
    pub zero: Vec<usize>,
    pub neg: Vec<usize>,
}

impl IndexPartition {
    pub fn classify(x: &[f64], xtilde: &[f64], zero_tol: f64) -> Self {
        let kinds: Vec<SetKind> = x
            .iter()
            .zip(xtilde)
            .map(|(&xi, &xt)| SetKind::classify(xi, xt, zero_tol))
            .collect();
        Self::from_kinds(&kinds)
    }

    pub fn from_kinds(kinds: &[SetKind]) -> Self {
        let mut p = Self::default();
        for (i, k) in kinds.iter().enumerate() {
            match k {
                SetKind::Plus => p.plus.push(i),
                SetKind::Zero => p.zero.push(i),
                SetKind::Neg => p.neg.push(i),
            }
        }
        p
    }

    pub fn len(&self) -> usize {
        self.plus.len() + self.zero.len() + self.neg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kinds(&self) -> Vec<SetKind> {
        let mut k = vec![SetKind::Plus; self.len()];
        for &i in &self.zero {
            k[i] = SetKind::Zero;
        }
        for &i in &self.neg {
            k[i] = SetKind::Neg;
        }
        k
    }

    pub fn kind_of(&self, i: usize) -> Option<SetKind> {
        if self.plus.binary_search(&i).is_ok() {
            Some(SetKind::Plus)
        } else if self.zero.binary_search(&i).is_ok() {
            Some(SetKind::Zero)
        } else if self.neg.binary_search(&i).is_ok() {
            Some(SetKind::Neg)
        } else {
            None
        }
    }

    /// Disjoint, sorted, and covering `0..n`.
    pub fn is_valid(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for set in [&self.plus, &self.zero, &self.neg] {
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return false;
            }
            for &i in set {
                if i >= n || seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// State, integrator input and switching sets at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub x: RealVector,
    pub xtilde: RealVector,
    pub partition: IndexPartition,
}

impl SystemState {
    /// Builds a consistent state at time `t`. Entries within `zero_tol` of
    /// zero are snapped to exactly zero.
    pub fn new(sys: &DiscSystem, t: f64, x: RealVector, zero_tol: f64) -> Result<Self> {
        sys.check_len(x.len(), "SystemState::new")?;
        if !x.is_finite() {
            return Err(Error::NonFinite("initial state"));
        }
        let mut x = x;
        for v in x.iter_mut() {
            if v.abs() <= zero_tol {
                *v = 0.0;
            }
        }
        let xtilde = sys.integrator_input(&x)?;
        let partition = IndexPartition::classify(&x, &xtilde, zero_tol);
        Ok(Self {
            t,
            x,
            xtilde,
            partition,
        })
    }
}

/// One coordinate moving between switching sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub t: f64,
    pub index: usize,
    pub from: SetKind,
    pub to: SetKind,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub samples: Vec<SystemState>,
    pub switch_events: Vec<SwitchEvent>,
    /// `(t, V(x(t) − x_eq))`, filled by [`Trajectory::attach_lyapunov`].
    pub lyapunov: Option<Vec<(f64, f64)>>,
}

impl Trajectory {
    pub(crate) fn push_sample(&mut self, state: &SystemState) {
        if self.samples.last().is_none_or(|s| state.t > s.t) {
            self.samples.push(state.clone());
        }
    }

    /// Evaluates the Lyapunov function against `x_eq` at every sample.
    pub fn attach_lyapunov(&mut self, x_eq: &[f64]) {
        self.lyapunov = Some(
            self.samples
                .iter()
                .map(|s| (s.t, lyapunov_value(&s.x, x_eq)))
                .collect(),
        );
    }

    pub fn final_state(&self) -> Option<&SystemState> {
        self.samples.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integrator {
    /// Explicit Euler with clamping at zero. `dt = None` selects
    /// [`DiscSystem::default_dt`].
    ProjectedEuler { dt: Option<f64> },
    /// Closed-form subsystem solution between located switching events.
    ExactSubsystem,
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::ProjectedEuler { dt: None }
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub integrator: Integrator,
    pub kkt_tol: f64,
    pub max_time: f64,
    pub zero_tol: f64,
    /// Record a trajectory sample every this many Euler steps; 0 keeps only
    /// the endpoints. The exact integrator samples at every event.
    pub sample_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            integrator: Integrator::default(),
            kkt_tol: DEFAULT_KKT_TOL,
            max_time: DEFAULT_MAX_TIME,
            zero_tol: DEFAULT_ZERO_TOL,
            sample_every: 0,
        }
    }
}

impl SolverOptions {
    pub fn exact() -> Self {
        Self {
            integrator: Integrator::ExactSubsystem,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x_eq: RealVector,
    /// `AᵀA x_eq − Aᵀy` (or the solver's own multiplier estimate).
    pub lambda_eq: RealVector,
    pub kkt_residual: f64,
    pub switches: usize,
    pub steps: usize,
    pub converged: bool,
    /// Seconds.
    pub wall_time: f64,
    /// Simulated time at termination (0 for iterative solvers).
    pub t_final: f64,
}

/// Right-hand side of the network and the switching sets at `x`.
pub fn integrator_rhs(sys: &DiscSystem, x: &[f64]) -> Result<(RealVector, IndexPartition)> {
    integrator_rhs_tol(sys, x, DEFAULT_ZERO_TOL)
}

pub fn integrator_rhs_tol(
    sys: &DiscSystem,
    x: &[f64],
    zero_tol: f64,
) -> Result<(RealVector, IndexPartition)> {
    let xt = sys.integrator_input(x)?;
    let mut kinds = Vec::with_capacity(x.len());
    let dx: Vec<f64> = x
        .iter()
        .zip(xt.iter())
        .map(|(&xi, &xti)| {
            let k = SetKind::classify(xi, xti, zero_tol);
            kinds.push(k);
            rhs_component(k, xti, sys.xi)
        })
        .collect();
    Ok((
        RealVector::from_vec_unchecked(dx),
        IndexPartition::from_kinds(&kinds),
    ))
}

#[inline]
pub(crate) fn rhs_component(kind: SetKind, xtilde: f64, xi: f64) -> f64 {
    match kind {
        SetKind::Plus => xtilde,
        SetKind::Zero => 0.0,
        SetKind::Neg => xi,
    }
}

/// `V(z) = ½‖x − x_eq‖²`.
pub fn lyapunov_value(x: &[f64], x_eq: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), x_eq.len());
    0.5 * x
        .iter()
        .zip(x_eq)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
}

pub fn count_switches(traj: &Trajectory) -> usize {
    traj.switch_events.len()
}

/// KKT violation of the NNLS problem computed from `x` and `x̃ = −λ`.
///
/// Stationarity holds by construction; the remaining terms are primal
/// (`x ≥ 0`), dual (`λ ≥ 0`) and complementary slackness.
pub(crate) fn kkt_from_state(x: &[f64], xtilde: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for (&xi, &xt) in x.iter().zip(xtilde) {
        worst = worst.max(-xi).max(xt).max((xi * xt).abs());
    }
    worst
}

/// Integrates from `x0` until the KKT residual drops below `opts.kkt_tol` or
/// `opts.max_time` is reached.
///
/// Non-convergence is reported through `converged = false`; errors are
/// reserved for invalid input, numerical divergence or stalled event
/// localisation.
pub fn solve(
    sys: &DiscSystem,
    x0: &RealVector,
    opts: &SolverOptions,
) -> Result<(SolveResult, Trajectory)> {
    let start = Instant::now();
    let state = SystemState::new(sys, 0.0, x0.clone(), opts.zero_tol)?;
    let (state, traj, steps) = match opts.integrator {
        Integrator::ProjectedEuler { dt } => {
            let dt = dt.unwrap_or_else(|| sys.default_dt());
            euler::run(sys, state, dt, opts, true)?
        }
        Integrator::ExactSubsystem => exact::run(sys, state, opts, true)?,
    };
    let report = KktReport::from_state(&state.x, &state.xtilde);
    let lambda_eq = RealVector::from_vec_unchecked(state.xtilde.iter().map(|v| -v).collect());
    let result = SolveResult {
        kkt_residual: report.total,
        converged: report.total <= opts.kkt_tol,
        switches: traj.switch_events.len(),
        steps,
        wall_time: start.elapsed().as_secs_f64(),
        t_final: state.t,
        x_eq: state.x,
        lambda_eq,
    };
    Ok((result, traj))
}

/// Advances `state` to `t_end` with the configured integrator, ignoring the
/// convergence test. Returns the final state and the switching events.
pub fn integrate(
    sys: &DiscSystem,
    state: SystemState,
    t_end: f64,
    opts: &SolverOptions,
) -> Result<(SystemState, Trajectory)> {
    let opts = SolverOptions {
        max_time: t_end,
        kkt_tol: -1.0,
        ..opts.clone()
    };
    let (state, traj, _) = match opts.integrator {
        Integrator::ProjectedEuler { dt } => {
            let dt = dt.unwrap_or_else(|| sys.default_dt());
            euler::run(sys, state, dt, &opts, false)?
        }
        Integrator::ExactSubsystem => exact::run(sys, state, &opts, false)?,
    };
    Ok((state, traj))
}
