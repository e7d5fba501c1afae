//! Backward integration of state and adjoint from an endpoint under the
//! Hamiltonian-minimising control.
//!
//! With `s = t_bar - t` the system integrated forward in `s` is
//!
//! ```text
//! dx/ds      = -f(x, u*)
//! dlambda/ds =  f_x^T lambda + sum_i mu_i g_{i,x}^T
//! ```
//!
//! where `(u*, mu)` come from [`minimize_hamiltonian`] at every stage. Changes
//! of the active sets, sign changes of the switching function
//! `f_u^T lambda`, reentry into `{g~ = 0}` and loss of admissible controls
//! are localised by bisection on the step length.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{minimize_hamiltonian, HamiltonianOptions, HamiltonianSolution};
use crate::minmax::{g_tilde, MinMaxOptions};
use crate::model::{regularity_of, SystemDefinition, DEFAULT_RANK_TOL};
use crate::tangency::TangencyPoint;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub initial_step: f64,
    /// Width to which event times are localised.
    pub event_tol: f64,
    /// Largest change of `lambda^T f` accepted over one step.
    pub h_drift_tol: f64,
    pub reentry_tol: f64,
    pub lambda_tol: f64,
    pub max_steps: usize,
    /// Abort when `|x|` exceeds the growth bound for this constant.
    pub growth_constant: Option<f64>,
    /// Events per unit time above which chattering is reported.
    pub chattering_density: f64,
    pub stall_step: f64,
    pub stall_count: usize,
    pub hamiltonian: HamiltonianOptions,
    pub minmax: MinMaxOptions,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: 0.05,
            min_step: 1e-12,
            initial_step: 1e-3,
            event_tol: 1e-10,
            h_drift_tol: 1e-8,
            reentry_tol: 1e-6,
            lambda_tol: 1e-10,
            max_steps: 200_000,
            growth_constant: None,
            chattering_density: 200.0,
            stall_step: 1e-8,
            stall_count: 500,
            hamiltonian: HamiltonianOptions::default(),
            minmax: MinMaxOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ActiveSetChange,
    AdjointSignChange,
    LeftG,
    ReenteredG0,
    Horizon,
    RegularityViolation,
    /// Accepted steps stayed below `stall_step` for `stall_count` steps in a
    /// row, typically a control chattering across a tolerance band.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryEvent {
    /// Backward time elapsed from the endpoint.
    pub elapsed: f64,
    pub kind: EventKind,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierTrajectory {
    /// Ascending; the endpoint sits at the last time, which equals the total
    /// backward duration.
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub adjoints: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub mu: Vec<DVector<f64>>,
    pub nu: Vec<DVector<f64>>,
    pub h_residuals: Vec<f64>,
    pub active_g: Vec<Vec<usize>>,
    pub active_gamma: Vec<Vec<usize>>,
    /// In order of increasing elapsed time.
    pub events: Vec<TrajectoryEvent>,
    pub endpoint: TangencyPoint,
    pub stop: EventKind,
    pub max_multiplier_jump: f64,
    pub singular_points: usize,
    pub stationarity_warnings: usize,
    pub chattering_suspected: bool,
}

impl BarrierTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Total backward duration.
    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Backward time from the endpoint to grid point `k`.
    pub fn elapsed(&self, k: usize) -> f64 {
        self.duration() - self.times[k]
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &TrajectoryEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}

/// Pointwise solution of the adjoint system at `(x, lambda)`.
#[derive(Debug, Clone)]
struct Pointwise {
    dy: DVector<f64>,
    ham: HamiltonianSolution,
    sigma: DVector<f64>,
    regular: bool,
}

impl Pointwise {
    fn signature(&self) -> (Vec<usize>, Vec<usize>, Vec<i8>) {
        let signs = self.sigma.iter().map(|&v| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 }).collect();
        (self.ham.active_g.clone(), self.ham.active_gamma.clone(), signs)
    }
}

fn pointwise(sys: &SystemDefinition, y: &DVector<f64>, hint: &[f64], opts: &IntegratorOptions) -> Result<Pointwise> {
    let n = sys.n();
    let x = y.rows(0, n).into_owned();
    let lam = y.rows(n, n).into_owned();
    if lam.norm() <= opts.lambda_tol {
        return Err(Error::DegenerateAdjoint);
    }
    let ham = minimize_hamiltonian(sys, x.as_slice(), lam.as_slice(), Some(hint), &opts.hamiltonian)?;
    let d = sys.eval_dynamics(x.as_slice(), ham.u_star.as_slice())?;
    let ce = sys.eval_constraints(x.as_slice(), ham.u_star.as_slice(), opts.hamiltonian.active_tol)?;
    let mut dy = DVector::zeros(2 * n);
    dy.rows_mut(0, n).copy_from(&(-&d.f));
    let dl = d.fx.transpose() * &lam + ce.g_x.transpose() * &ham.mu;
    dy.rows_mut(n, n).copy_from(&dl);
    let sigma = d.fu.transpose() * &lam;
    let regular = regularity_of(&ce, DEFAULT_RANK_TOL).regular;
    Ok(Pointwise { dy, ham, sigma, regular })
}

// the system is autonomous, so stage times are not needed
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Step {
    y: DVector<f64>,
    err: f64,
}

/// One Dormand-Prince step of length `h`.
fn dp_step(
    sys: &SystemDefinition,
    y: &DVector<f64>,
    k1: &DVector<f64>,
    hint: &[f64],
    h: f64,
    opts: &IntegratorOptions,
) -> Result<Step> {
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
    k.push(k1.clone());
    for stage in 1..7 {
        let mut yi = y.clone();
        for (j, kj) in k.iter().enumerate() {
            if A[stage][j] != 0.0 {
                yi += kj * (h * A[stage][j]);
            }
        }
        k.push(pointwise(sys, &yi, hint, opts)?.dy);
    }
    let mut y5 = y.clone();
    let mut y4 = y.clone();
    for i in 0..7 {
        if B5[i] != 0.0 {
            y5 += &k[i] * (h * B5[i]);
        }
        if B4[i] != 0.0 {
            y4 += &k[i] * (h * B4[i]);
        }
    }
    let err = (0..y.len())
        .map(|i| (y5[i] - y4[i]).abs() / (opts.atol + opts.rtol * y[i].abs().max(y5[i].abs())))
        .fold(0.0, f64::max);
    Ok(Step { y: y5, err })
}

struct Recorder {
    elapsed: Vec<f64>,
    states: Vec<DVector<f64>>,
    adjoints: Vec<DVector<f64>>,
    controls: Vec<DVector<f64>>,
    mu: Vec<DVector<f64>>,
    nu: Vec<DVector<f64>>,
    h: Vec<f64>,
    active_g: Vec<Vec<usize>>,
    active_gamma: Vec<Vec<usize>>,
    events: Vec<TrajectoryEvent>,
    singular: usize,
    warnings: usize,
    max_jump: f64,
}

impl Recorder {
    fn push(&mut self, n: usize, s: f64, y: &DVector<f64>, pw: &Pointwise, across_event: bool) {
        if let (Some(prev_mu), false) = (self.mu.last(), across_event) {
            let jump = (prev_mu - &pw.ham.mu).amax().max((self.nu.last().unwrap() - &pw.ham.nu).amax());
            self.max_jump = self.max_jump.max(jump);
        }
        self.elapsed.push(s);
        self.states.push(y.rows(0, n).into_owned());
        self.adjoints.push(y.rows(n, n).into_owned());
        self.controls.push(pw.ham.u_star.clone());
        self.mu.push(pw.ham.mu.clone());
        self.nu.push(pw.ham.nu.clone());
        self.h.push(pw.ham.h_value);
        self.active_g.push(pw.ham.active_g.clone());
        self.active_gamma.push(pw.ham.active_gamma.clone());
        self.singular += usize::from(pw.ham.singular);
        self.warnings += usize::from(pw.ham.residual_warning);
    }

    fn event(&mut self, s: f64, kind: EventKind, y: &DVector<f64>, n: usize) {
        self.events.push(TrajectoryEvent { elapsed: s, kind, state: y.rows(0, n).iter().copied().collect() });
    }
}

/// Growth bound `K = sqrt((1 + |x0|^2) e^{2 C elapsed} - 1)`.
pub fn growth_bound(x0_norm: f64, c: f64, elapsed: f64) -> f64 {
    ((1.0 + x0_norm * x0_norm) * (2.0 * c * elapsed.abs()).exp() - 1.0).max(0.0).sqrt()
}

/// Integrates backward from `tp` for at most `horizon` time units.
pub fn integrate_barrier(
    sys: &SystemDefinition,
    tp: &TangencyPoint,
    horizon: f64,
    opts: &IntegratorOptions,
) -> Result<BarrierTrajectory> {
    let n = sys.n();
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be finite and non-negative, got {horizon}")));
    }
    if tp.z.len() != n || tp.lambda_t.len() != n {
        return Err(Error::Dimension("endpoint does not match the system".into()));
    }
    let mut y = DVector::zeros(2 * n);
    y.rows_mut(0, n).copy_from(&tp.z);
    y.rows_mut(n, n).copy_from(&tp.lambda_t);
    let mut cur = pointwise(sys, &y, tp.u_bar.as_slice(), opts)?;
    let mut rec = Recorder {
        elapsed: Vec::new(),
        states: Vec::new(),
        adjoints: Vec::new(),
        controls: Vec::new(),
        mu: Vec::new(),
        nu: Vec::new(),
        h: Vec::new(),
        active_g: Vec::new(),
        active_gamma: Vec::new(),
        events: Vec::new(),
        singular: 0,
        warnings: 0,
        max_jump: 0.0,
    };
    rec.push(n, 0.0, &y, &cur, false);
    if !cur.regular {
        rec.event(0.0, EventKind::RegularityViolation, &y, n);
    }
    let z_norm = tp.z.norm();
    let mut s = 0.0;
    let mut h = opts.initial_step.min(opts.max_step);
    let mut was_interior = false;
    let mut monitor_h = false;
    let mut small_steps = 0usize;
    let mut stop = EventKind::Horizon;
    let mut steps = 0usize;

    // regime at the end of a step of length `len`: None when some stage had no admissible control
    let try_step = |y: &DVector<f64>, cur: &Pointwise, len: f64| -> Result<Option<(Step, Pointwise)>> {
        let hint = cur.ham.u_star.as_slice();
        let step = match dp_step(sys, y, &cur.dy, hint, len, opts) {
            Ok(st) => st,
            Err(Error::EmptyControlSet) => return Ok(None),
            Err(e) => return Err(e),
        };
        match pointwise(sys, &step.y, hint, opts) {
            Ok(pw) => Ok(Some((step, pw))),
            Err(Error::EmptyControlSet) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let reentered = |y: &DVector<f64>| -> Result<bool> {
        let v = g_tilde(sys, &y.as_slice()[..n], &opts.minmax)?.value;
        Ok(v >= -opts.reentry_tol)
    };

    while s < horizon {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::NoConvergence(format!("more than {} integration steps", opts.max_steps)));
        }
        let len = h.min(horizon - s);
        let trial = try_step(&y, &cur, len)?;
        let Some((step, pw)) = trial else {
            // some stage left G: localise the last length with admissible controls
            let (mut lo, mut hi) = (0.0, len);
            let mut best: Option<(Step, Pointwise)> = None;
            while hi - lo > opts.event_tol {
                let mid = 0.5 * (lo + hi);
                match try_step(&y, &cur, mid)? {
                    Some(ok) => {
                        lo = mid;
                        best = Some(ok);
                    }
                    None => hi = mid,
                }
            }
            if let Some((st, pw)) = best {
                s += lo;
                y = st.y;
                rec.push(n, s, &y, &pw, true);
            }
            // running out of controls exactly on {g~ = 0} is a reentry
            let kind = if was_interior && reentered(&y)? { EventKind::ReenteredG0 } else { EventKind::LeftG };
            rec.event(s, kind, &y, n);
            stop = kind;
            break;
        };
        let sig0 = cur.signature();
        let changed = |pw: &Pointwise, y: &DVector<f64>| -> Result<bool> {
            Ok(pw.signature() != sig0 || (was_interior && reentered(y)?))
        };
        let crosses = changed(&pw, &step.y)?;
        // the control may jump at the endpoint, where U(z) can be larger than
        // nearby, and across regime changes; H drift is monitored within one
        // regime only, from the first regular step on
        let drift = if monitor_h && !crosses { (pw.ham.h_value - cur.ham.h_value).abs() } else { 0.0 };
        let reject = |err: f64, drift: f64, len: f64, h: &mut f64| -> Result<bool> {
            if err <= 1.0 && drift <= opts.h_drift_tol {
                return Ok(false);
            }
            let factor = if err > 1.0 { (0.9 * err.powf(-0.2)).clamp(0.1, 0.5) } else { 0.5 };
            *h = len * factor;
            if *h < opts.min_step {
                return Err(Error::StepSizeUnderflow {
                    at: s,
                    reason: format!("error estimate {err:.3e}, H drift {drift:.3e}"),
                });
            }
            Ok(true)
        };
        if reject(if crosses { 0.0 } else { step.err }, drift, len, &mut h)? {
            continue;
        }
        let (step, pw, len, at_event) = if crosses {
            let (mut lo, mut hi) = (0.0, len);
            let mut hi_state = (step, pw);
            while hi - lo > opts.event_tol {
                let mid = 0.5 * (lo + hi);
                match try_step(&y, &cur, mid)? {
                    Some((st, p)) if changed(&p, &st.y)? => {
                        hi = mid;
                        hi_state = (st, p);
                    }
                    Some(_) => lo = mid,
                    None => hi = mid,
                }
            }
            if reject(hi_state.0.err, 0.0, hi, &mut h)? {
                continue;
            }
            (hi_state.0, hi_state.1, hi, true)
        } else {
            (step, pw, len, false)
        };
        s += len;
        y = step.y;
        let x_now = y.rows(0, n).into_owned();
        if let Some(c) = opts.growth_constant {
            let bound = growth_bound(z_norm, c, s);
            if x_now.norm() > bound {
                return Err(Error::GrowthBoundExceeded { elapsed: s, norm: x_now.norm(), bound });
            }
        }
        rec.push(n, s, &y, &pw, at_event);
        if at_event {
            let (g0, c0, s0) = &sig0;
            let (g1, c1, s1) = pw.signature();
            if *g0 != g1 || *c0 != c1 {
                rec.event(s, EventKind::ActiveSetChange, &y, n);
            }
            if *s0 != s1 {
                rec.event(s, EventKind::AdjointSignChange, &y, n);
            }
        }
        if cur.regular && !pw.regular {
            rec.event(s, EventKind::RegularityViolation, &y, n);
        }
        let gt = g_tilde(sys, x_now.as_slice(), &opts.minmax)?.value;
        if was_interior && gt >= -opts.reentry_tol {
            rec.event(s, EventKind::ReenteredG0, &y, n);
            stop = EventKind::ReenteredG0;
            break;
        }
        if gt < -opts.reentry_tol {
            was_interior = true;
        }
        cur = pw;
        monitor_h = !at_event;
        small_steps = if len < opts.stall_step { small_steps + 1 } else { 0 };
        if small_steps >= opts.stall_count {
            rec.event(s, EventKind::Stalled, &y, n);
            stop = EventKind::Stalled;
            break;
        }
        let grow = if step.err > 0.0 { (0.9 * step.err.powf(-0.2)).clamp(0.2, 5.0) } else { 5.0 };
        h = (len * grow).clamp(opts.min_step, opts.max_step);
        if at_event {
            h = h.max(opts.initial_step.min(opts.max_step));
        }
    }
    if stop == EventKind::Horizon {
        rec.event(s, EventKind::Horizon, &y, n);
    }
    let total = s;
    let switching = rec
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::ActiveSetChange | EventKind::AdjointSignChange))
        .count();
    let chattering_suspected = total > 0.0 && switching > 4 && switching as f64 / total > opts.chattering_density;
    let rev = |mut v: Vec<DVector<f64>>| {
        v.reverse();
        v
    };
    let mut times: Vec<f64> = rec.elapsed.iter().map(|e| total - e).collect();
    times.reverse();
    let mut h_residuals = rec.h;
    h_residuals.reverse();
    let mut active_g = rec.active_g;
    active_g.reverse();
    let mut active_gamma = rec.active_gamma;
    active_gamma.reverse();
    Ok(BarrierTrajectory {
        times,
        states: rev(rec.states),
        adjoints: rev(rec.adjoints),
        controls: rev(rec.controls),
        mu: rev(rec.mu),
        nu: rev(rec.nu),
        h_residuals,
        active_g,
        active_gamma,
        events: rec.events,
        endpoint: tp.clone(),
        stop,
        max_multiplier_jump: rec.max_jump,
        singular_points: rec.singular,
        stationarity_warnings: rec.warnings,
        chattering_suspected,
    })
}

/// `max_k |lambda_k^T f(x_k, u_k)|`, recomputed from the stored states.
pub fn hamiltonian_residual(sys: &SystemDefinition, traj: &BarrierTrajectory) -> Result<f64> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let mut worst: f64 = 0.0;
    for k in 0..traj.len() {
        let f = sys.eval_f(traj.states[k].as_slice(), traj.controls[k].as_slice())?;
        worst = worst.max(traj.adjoints[k].dot(&f).abs());
    }
    Ok(worst)
}

/// Points spaced `ds` apart in arc length along the state polyline, both
/// ends included.
pub fn resample_polyline(traj: &BarrierTrajectory, ds: f64) -> Result<Vec<DVector<f64>>> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if !(ds > 0.0) {
        return Err(Error::InvalidArgument(format!("arc-length step must be positive, got {ds}")));
    }
    let pts = &traj.states;
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        cum.push(cum.last().unwrap() + (&w[1] - &w[0]).norm());
    }
    let total = *cum.last().unwrap();
    if total == 0.0 {
        return Ok(vec![pts[0].clone(), pts[pts.len() - 1].clone()]);
    }
    let count = (total / ds).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(count + 1);
    let mut seg = 0;
    for k in 0..=count {
        let target = if k == count { total } else { (k as f64 * ds).min(total) };
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let w = if len > 0.0 { (target - cum[seg]) / len } else { 0.0 };
        out.push(&pts[seg] * (1.0 - w) + &pts[seg + 1] * w);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spring1;
    use crate::tangency::{solve_tangency_smooth, TangencyOptions};
    use nalgebra::dvector;

    fn spring1_endpoint() -> TangencyPoint {
        solve_tangency_smooth(&spring1(), &[0.0, 0.9], &TangencyOptions::default()).unwrap()
    }

    #[test]
    fn horizon_zero_is_the_endpoint() {
        let s = spring1();
        let tr = integrate_barrier(&s, &spring1_endpoint(), 0.0, &IntegratorOptions::default()).unwrap();
        assert_eq!(tr.len(), 1);
        assert!(hamiltonian_residual(&s, &tr).unwrap() <= 1e-10);
        assert_eq!(resample_polyline(&tr, 0.1).unwrap().len(), 2);
    }

    #[test]
    fn spring1_switching_structure() {
        let s = spring1();
        let tr = integrate_barrier(&s, &spring1_endpoint(), 4.0, &IntegratorOptions::default()).unwrap();
        let sw: Vec<_> = tr.events_of(EventKind::AdjointSignChange).collect();
        assert_eq!(sw.len(), 1, "{:?}", tr.events);
        assert!(sw[0].state[1].abs() <= 1e-4, "{:?}", sw[0]);
        assert!(hamiltonian_residual(&s, &tr).unwrap() <= 1e-6);
        let t_switch = tr.duration() - sw[0].elapsed;
        for k in 0..tr.len() {
            if tr.times[k] > t_switch + 1e-9 {
                assert!((tr.controls[k][0] - tr.states[k][1]).abs() <= 1e-6);
                assert!((tr.mu[k][0] - tr.adjoints[k][1]).abs() <= 1e-6);
            } else if tr.times[k] < t_switch - 1e-9 {
                assert_eq!(tr.controls[k][0], 1.0);
            }
        }
        assert_eq!(tr.stop, EventKind::Horizon);
    }

    #[test]
    fn spring1_long_run_switches_back_before_reentry() {
        // after half a turn of the u = 1 spiral lambda2 vanishes again (with x2 = 0)
        // and the run climbs back to x2 = 1 on the constraint
        let s = spring1();
        let tr = integrate_barrier(&s, &spring1_endpoint(), 10.0, &IntegratorOptions::default()).unwrap();
        let sw: Vec<_> = tr.events_of(EventKind::AdjointSignChange).collect();
        assert_eq!(sw.len(), 2);
        assert!(sw[1].state[1].abs() <= 1e-4 && sw[1].state[0] > 30.0);
        assert_eq!(tr.stop, EventKind::ReenteredG0);
        assert!((tr.states[0][1] - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn perturbed_terminal_adjoint_breaks_the_hamiltonian() {
        let s = spring1();
        let mut tp = spring1_endpoint();
        tp.lambda_t = dvector![0.1, 1.0];
        let tr = integrate_barrier(&s, &tp, 2.0, &IntegratorOptions::default()).unwrap();
        assert!(hamiltonian_residual(&s, &tr).unwrap() > 1e-3);
    }

    #[test]
    fn resampling() {
        let s = spring1();
        let tr = integrate_barrier(&s, &spring1_endpoint(), 10.0, &IntegratorOptions::default()).unwrap();
        let pts = resample_polyline(&tr, 0.01).unwrap();
        for w in pts.windows(2).take(pts.len() - 2) {
            assert!(((&w[1] - &w[0]).norm() - 0.01).abs() <= 1e-3);
        }
        assert!(resample_polyline(&tr, 1e6).unwrap().len() == 2);
        let empty = BarrierTrajectory { times: vec![], states: vec![], ..tr };
        assert_eq!(resample_polyline(&empty, 0.1).unwrap_err(), Error::EmptyTrajectory);
    }

    #[test]
    fn growth_bound_formula() {
        assert_eq!(growth_bound(0.0, 4.0, 0.0), 0.0);
        let k = growth_bound(1.0, 0.5, 1.0);
        assert!((k - (2.0 * 1f64.exp() - 1.0).sqrt()).abs() < 1e-15);
    }
}
