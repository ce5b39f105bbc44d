use super::{
    kkt_from_state, rhs_component, DiscSystem, IndexPartition, SetKind, SolverOptions,
    SwitchEvent, SystemState, Trajectory, DEFAULT_ZERO_TOL,
};
use crate::error::{Error, Result};
use crate::numerics::RealVector;

/// One explicit Euler step of length `dt` with clamping at zero.
///
/// Coordinates in the integrating set that would cross zero are written as
/// exactly `0.0`; held coordinates stay at zero; recovering coordinates
/// advance by `dt·ξ` and are clamped at zero on crossing. Crossing times
/// of the returned events are linearly interpolated inside the step.
pub fn step_projected_euler(
    sys: &DiscSystem,
    state: &SystemState,
    dt: f64,
) -> Result<(SystemState, Vec<SwitchEvent>)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    sys.check_len(state.x.len(), "step_projected_euler")?;
    let mut core = EulerCore::new(state);
    let mut events = Vec::new();
    core.step(sys, dt, DEFAULT_ZERO_TOL, &mut events)?;
    Ok((core.state(), events))
}

/// Integrates with a fixed step until `opts.max_time` (or until the KKT
/// residual drops below `opts.kkt_tol` when `stop_on_kkt`).
pub(super) fn run(
    sys: &DiscSystem,
    state: SystemState,
    dt: f64,
    opts: &SolverOptions,
    stop_on_kkt: bool,
) -> Result<(SystemState, Trajectory, usize)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mut traj = Trajectory::default();
    traj.push_sample(&state);
    let mut core = EulerCore::new(&state);
    let t0 = state.t;
    let span = (opts.max_time - t0).max(0.0);
    let n_steps = (span / dt).ceil() as usize;
    let mut steps = 0;
    while steps < n_steps {
        if stop_on_kkt && kkt_from_state(&core.x, &core.xt) <= opts.kkt_tol {
            break;
        }
        let t_next = (t0 + (steps + 1) as f64 * dt).min(opts.max_time);
        let h = t_next - core.t;
        if h > 0.0 {
            core.step(sys, h, opts.zero_tol, &mut traj.switch_events)?;
        }
        core.t = t_next;
        steps += 1;
        if opts.sample_every > 0 && steps % opts.sample_every == 0 {
            traj.push_sample(&core.state());
        }
    }
    let last = core.state();
    traj.push_sample(&last);
    Ok((last, traj, steps))
}

struct EulerCore {
    t: f64,
    x: Vec<f64>,
    xt: Vec<f64>,
    kinds: Vec<SetKind>,
    x_prev: Vec<f64>,
    xt_prev: Vec<f64>,
    kinds_prev: Vec<SetKind>,
    raw: Vec<f64>,
}

impl EulerCore {
    fn new(state: &SystemState) -> Self {
        let n = state.x.len();
        Self {
            t: state.t,
            x: state.x.to_vec(),
            xt: state.xtilde.to_vec(),
            kinds: state.partition.kinds(),
            x_prev: vec![0.0; n],
            xt_prev: vec![0.0; n],
            kinds_prev: vec![SetKind::Plus; n],
            raw: vec![0.0; n],
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

    fn step(
        &mut self,
        sys: &DiscSystem,
        dt: f64,
        zero_tol: f64,
        events: &mut Vec<SwitchEvent>,
    ) -> Result<()> {
        std::mem::swap(&mut self.x, &mut self.x_prev);
        std::mem::swap(&mut self.xt, &mut self.xt_prev);
        std::mem::swap(&mut self.kinds, &mut self.kinds_prev);
        let xi = sys.xi();
        for i in 0..self.x.len() {
            let kind = self.kinds_prev[i];
            let xn = self.x_prev[i] + dt * rhs_component(kind, self.xt_prev[i], xi);
            self.raw[i] = xn;
            self.x[i] = match kind {
                SetKind::Plus if xn <= zero_tol => 0.0,
                SetKind::Zero => 0.0,
                SetKind::Neg if xn >= -zero_tol => 0.0,
                _ => xn,
            };
        }
        let t_prev = self.t;
        self.t += dt;
        sys.integrator_input_into(&self.x, &mut self.xt);
        if self.xt.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { t: self.t });
        }
        for i in 0..self.x.len() {
            let to = SetKind::classify(self.x[i], self.xt[i], zero_tol);
            self.kinds[i] = to;
            let from = self.kinds_prev[i];
            if to == from {
                continue;
            }
            let frac = match from {
                SetKind::Neg => -self.x_prev[i] / (xi * dt),
                SetKind::Plus if self.x_prev[i] > 0.0 && self.raw[i] < self.x_prev[i] => {
                    self.x_prev[i] / (self.x_prev[i] - self.raw[i])
                }
                _ => {
                    let (a, b) = (self.xt_prev[i], self.xt[i]);
                    if a != b {
                        -a / (b - a)
                    } else {
                        1.0
                    }
                }
            };
            events.push(SwitchEvent {
                t: t_prev + dt * frac.clamp(0.0, 1.0),
                index: i,
                from,
                to,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{integrate, SolverOptions};
    use crate::numerics::RealMatrix;

    fn scalar(u: f64) -> DiscSystem {
        DiscSystem::new(
            RealMatrix::new(1, 1, vec![1.0]).unwrap(),
            RealVector::new(vec![u]).unwrap(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn clamps_crossing_to_exact_zero() {
        // x̃ = u − x = −10 at x = 1
        let sys = scalar(-9.0);
        let s0 = SystemState::new(&sys, 0.0, RealVector::new(vec![1.0]).unwrap(), 1e-12).unwrap();
        let (s1, ev) = step_projected_euler(&sys, &s0, 0.2).unwrap();
        assert_eq!(s1.x[0], 0.0);
        assert_eq!(s1.partition.zero, vec![0]);
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].from, ev[0].to), (SetKind::Plus, SetKind::Zero));
        // crossing interpolated at x/|ẋ| = 0.1
        assert!((ev[0].t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn negative_state_recovers_at_constant_rate() {
        let sys = scalar(1.0);
        let s0 = SystemState::new(&sys, 0.0, RealVector::new(vec![-1.0]).unwrap(), 1e-12).unwrap();
        let (s1, ev) = step_projected_euler(&sys, &s0, 0.25).unwrap();
        assert_eq!(s1.x[0], -0.75);
        assert!(ev.is_empty());
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let a = RealMatrix::from_rows(&[vec![1.0, 0.5], vec![0.2, 1.0], vec![0.3, 0.1]]).unwrap();
        let x_e = RealVector::new(vec![1.0, 0.0]).unwrap();
        // y with residual pushing the second coordinate against its bound
        let mut y = crate::numerics::matvec(&a, &x_e).unwrap();
        y[1] -= 0.5;
        let sys = DiscSystem::new(a, y, 1.0).unwrap();
        let nn = crate::solvers::nnls_active_set(sys.matrix(), sys.input(), 1e-12).unwrap();
        let s0 = SystemState::new(&sys, 0.0, nn.x_eq.clone(), 1e-12).unwrap();
        let (s1, ev) = step_projected_euler(&sys, &s0, sys.default_dt()).unwrap();
        assert!(ev.is_empty());
        for (a, b) in s1.x.iter().zip(nn.x_eq.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn integrate_lands_on_horizon() {
        let sys = scalar(1.0);
        let s0 = SystemState::new(&sys, 0.0, RealVector::new(vec![-1.0]).unwrap(), 1e-12).unwrap();
        let opts = SolverOptions {
            integrator: crate::dynsys::Integrator::ProjectedEuler { dt: Some(0.3) },
            ..SolverOptions::default()
        };
        let (s, traj) = integrate(&sys, s0, 1.0, &opts).unwrap();
        assert_eq!(s.t, 1.0);
        assert_eq!(traj.switch_events.len(), 1);
        assert!((traj.switch_events[0].t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_dt() {
        let sys = scalar(1.0);
        let s0 = SystemState::new(&sys, 0.0, RealVector::zeros(1), 1e-12).unwrap();
        assert!(step_projected_euler(&sys, &s0, 0.0).is_err());
        assert!(step_projected_euler(&sys, &s0, f64::NAN).is_err());
    }
}
