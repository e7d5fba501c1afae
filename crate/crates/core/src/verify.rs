//! Independent numerical checks of a computed barrier.
//!
//! The admissibility oracle searches a family of controls for one that keeps
//! the mixed constraints satisfied over a finite horizon. Family members are
//! piecewise-constant nominal values `v(t)` applied through the projection
//! `u(t) = argmin_{w in U(x(t))} |w - v(t)|`, plus the greedy feedback
//! `u(t) in argmin_u max_i g_i(x(t), u)`. Whenever `U(x)` is empty the control
//! falls back to the minimiser of `g~` and the recorded value is `g~(x) > 0`.
//! A violation certificate therefore only says that no member of this family
//! was found admissible.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{EvalError, KinkMode};
use crate::integrator::{growth_bound, BarrierTrajectory};
use crate::minmax::{classify_value, g_tilde, MinMaxOptions, PointClass, DEFAULT_CLASSIFY_TOL};
use crate::model::{AffineSlice, SystemDefinition};
use crate::optim::{barrier_minimize, nelder_mead, BarrierOptions, Nlp};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub oracle_tol: f64,
    /// RK4 step of the simulations.
    pub dt: f64,
    /// Segments of the uniform piecewise-constant stage.
    pub segments: usize,
    /// Random starts per search stage.
    pub starts: usize,
    pub evals_per_start: usize,
    /// Grid cells of the single-switch scan.
    pub switch_grid: usize,
    /// Golden-section steps after the scan.
    pub switch_refine: usize,
    pub feas_tol: f64,
    pub rng_seed: u64,
    pub minmax: MinMaxOptions,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            oracle_tol: 1e-6,
            dt: 0.01,
            segments: 16,
            starts: 2,
            evals_per_start: 40,
            switch_grid: 32,
            switch_refine: 24,
            feas_tol: 1e-10,
            rng_seed: 0x0a11ce,
            minmax: MinMaxOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    AdmissibleWitness,
    /// Relative to the searched family, never a proof.
    ViolationCertificate,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlLaw {
    ProjectedPiecewiseConstant,
    GreedyFeedback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessControl {
    pub law: ControlLaw,
    /// Interior switch times, ascending; `values` has one more entry.
    pub switch_times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Budget {
    pub simulations: usize,
    pub limit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityVerdict {
    pub point: Vec<f64>,
    pub horizon: f64,
    pub status: VerdictStatus,
    pub witness_control: Option<WitnessControl>,
    /// Smallest `sup_t max_i g_i` found.
    pub worst_value: f64,
    /// Time of the first violation along the best control, if any.
    pub violation_time: Option<f64>,
    pub budget_used: Budget,
    pub family_relative: bool,
}

struct Simulation {
    worst: f64,
    first_violation: Option<f64>,
}

struct Oracle<'a> {
    sys: &'a SystemDefinition,
    opts: &'a OracleOptions,
    hull: Vec<(f64, f64)>,
}

/// Projection of a nominal control onto `U(x)` for systems that are not
/// control-affine.
struct ProjectionNlp<'a> {
    sys: &'a SystemDefinition,
    x: &'a [f64],
    target: &'a [f64],
}

impl Nlp for ProjectionNlp<'_> {
    fn dim(&self) -> usize {
        self.sys.m()
    }
    fn n_constraints(&self) -> usize {
        self.sys.p() + self.sys.r()
    }
    fn objective(&self, v: &[f64], grad: &mut [f64]) -> std::result::Result<f64, EvalError> {
        let mut val = 0.0;
        for k in 0..v.len() {
            grad[k] = v[k] - self.target[k];
            val += 0.5 * grad[k] * grad[k];
        }
        Ok(val)
    }
    fn constraint(&self, k: usize, v: &[f64], grad: &mut [f64]) -> std::result::Result<f64, EvalError> {
        let n = self.sys.n();
        let mut point = self.x.to_vec();
        point.extend_from_slice(v);
        let expr = if k < self.sys.p() { &self.sys.g_exprs()[k] } else { &self.sys.gamma_exprs()[k - self.sys.p()] };
        let d = expr.eval_with_gradient(&point, KinkMode::OneSided)?;
        grad.copy_from_slice(&d.partials[n..]);
        Ok(d.value)
    }
}

/// Single-input affine case in closed form: clamp onto the interval `U(x)`,
/// or, when it is empty, minimise the piecewise-linear `max_i g_i` over the
/// input interval.
fn scalar_law(slice: &AffineSlice, v: f64, tol: f64) -> (f64, f64) {
    let bounds = |a: &DMatrix<f64>, c: &DVector<f64>| {
        let (mut lo, mut hi, mut empty) = (f64::NEG_INFINITY, f64::INFINITY, false);
        for i in 0..c.len() {
            let (ai, bi) = (a[(i, 0)], -c[i]);
            if ai.abs() <= 1e-14 {
                empty |= bi < -tol;
            } else if ai > 0.0 {
                hi = hi.min(bi / ai);
            } else {
                lo = lo.max(bi / ai);
            }
        }
        (lo, hi, empty)
    };
    let worst = |u: f64| (0..slice.g0.len()).map(|i| slice.g0[i] + slice.g_u[(i, 0)] * u).fold(f64::NEG_INFINITY, f64::max);
    let (clo, chi, _) = bounds(&slice.gamma_u, &slice.gamma0);
    let (glo, ghi, gempty) = bounds(&slice.g_u, &slice.g0);
    let (lo, hi) = (clo.max(glo), chi.min(ghi));
    if !gempty && lo <= hi + tol * (1.0 + lo.abs()) {
        let u = if lo <= hi { v.clamp(lo, hi) } else { 0.5 * (lo + hi) };
        return (worst(u), u);
    }
    let mut cands = vec![clo, chi];
    for i in 0..slice.g0.len() {
        for j in i + 1..slice.g0.len() {
            let da = slice.g_u[(i, 0)] - slice.g_u[(j, 0)];
            if da.abs() > 1e-14 {
                cands.push(((slice.g0[j] - slice.g0[i]) / da).clamp(clo, chi));
            }
        }
    }
    cands
        .into_iter()
        .map(|u| (worst(u), u))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap_or((f64::INFINITY, v))
}

impl<'a> Oracle<'a> {
    fn new(sys: &'a SystemDefinition, opts: &'a OracleOptions) -> Self {
        Oracle { sys, opts, hull: sys.control_hull().to_vec() }
    }

    /// Control, constraint value and vector field at `x`.
    fn law(&self, x: &[f64], nominal: Option<&[f64]>) -> Result<(f64, DVector<f64>)> {
        let sys = self.sys;
        if let Some(v) = nominal {
            if sys.is_control_affine() && sys.m() == 1 {
                let slice = sys.affine_slice(x)?;
                let (value, u) = scalar_law(&slice, v[0], self.opts.feas_tol);
                return Ok((value, &slice.f0 + &slice.fu * u));
            }
            if sys.is_control_affine() {
                let slice = sys.affine_slice(x)?;
                match slice.admissible_controls().project(&DVector::from_column_slice(v), self.opts.feas_tol) {
                    Ok(u) => {
                        let g = &slice.g0 + &slice.g_u * &u;
                        let value = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        return Ok((value, &slice.f0 + &slice.fu * &u));
                    }
                    Err(Error::EmptyControlSet) => {}
                    Err(e) => return Err(e),
                }
            } else {
                let prob = ProjectionNlp { sys, x, target: v };
                let start: Vec<f64> = v.iter().zip(&self.hull).map(|(&vi, &(lo, hi))| vi.clamp(lo, hi)).collect();
                match barrier_minimize(&prob, &start, &BarrierOptions::default()) {
                    Ok(sol) => {
                        let g = sys.eval_g(x, sol.v.as_slice())?;
                        let value = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        return Ok((value, sys.eval_f(x, sol.v.as_slice())?));
                    }
                    Err(Error::EmptyControlSet) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        let mm = g_tilde(sys, x, &self.opts.minmax)?;
        let u = &mm.minimizers[0];
        Ok((mm.value, sys.eval_f(x, u.as_slice())?))
    }

    /// RK4 simulation of the closed loop; `control = None` is the greedy
    /// feedback.
    fn simulate(&self, x0: &[f64], horizon: f64, control: Option<&WitnessControl>, dt: f64) -> Result<Simulation> {
        let steps = ((horizon / dt).ceil() as usize).max(1);
        let h = horizon / steps as f64;
        let nominal = |t: f64| -> Option<&[f64]> {
            control.map(|c| {
                let k = c.switch_times.partition_point(|&s| s <= t);
                c.values[k].as_slice()
            })
        };
        let mut x = DVector::from_column_slice(x0);
        let mut worst = f64::NEG_INFINITY;
        let mut first_violation = None;
        for step in 0..=steps {
            let t = step as f64 * h;
            let (value, k1) = match self.law(x.as_slice(), nominal(t)) {
                Ok(r) => r,
                Err(Error::Eval { .. }) => (f64::INFINITY, DVector::zeros(x.len())),
                Err(e) => return Err(e),
            };
            worst = worst.max(value);
            if value > self.opts.oracle_tol && first_violation.is_none() {
                first_violation = Some(t);
            }
            if step == steps || !worst.is_finite() || !x.iter().all(|v| v.is_finite()) {
                if !x.iter().all(|v| v.is_finite()) {
                    worst = f64::INFINITY;
                }
                break;
            }
            let stage = |y: DVector<f64>, s: f64| -> Result<DVector<f64>> { Ok(self.law(y.as_slice(), nominal(s))?.1) };
            let k2 = stage(&x + &k1 * (0.5 * h), t + 0.5 * h)?;
            let k3 = stage(&x + &k2 * (0.5 * h), t + 0.5 * h)?;
            let k4 = stage(&x + &k3 * h, t + h)?;
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        Ok(Simulation { worst, first_violation })
    }

    fn clamp_value(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.hull).map(|(&vi, &(lo, hi))| vi.clamp(lo, hi)).collect()
    }

    /// Decodes `[v_1 .. v_K, tau_1 .. tau_{K-1}]`; with `free_times` false
    /// the switch times are uniform.
    fn decode(&self, params: &[f64], k: usize, free_times: bool, horizon: f64) -> WitnessControl {
        let m = self.sys.m();
        let values = (0..k).map(|j| self.clamp_value(&params[j * m..(j + 1) * m])).collect();
        let mut switch_times: Vec<f64> = if free_times {
            params[k * m..].iter().map(|&t| t.clamp(0.0, horizon)).collect()
        } else {
            (1..k).map(|j| horizon * j as f64 / k as f64).collect()
        };
        switch_times.sort_by(f64::total_cmp);
        WitnessControl { law: ControlLaw::ProjectedPiecewiseConstant, switch_times, values }
    }

    fn corners(&self) -> Vec<Vec<f64>> {
        let m = self.sys.m();
        let count = if m < 4 { 1usize << m } else { 16 };
        (0..count)
            .map(|c| (0..m).map(|k| if (c >> (k % 64)) & 1 == 1 { self.hull[k].1 } else { self.hull[k].0 }).collect())
            .collect()
    }
}

struct Search<'a, 'b> {
    oracle: &'b Oracle<'a>,
    x0: &'b [f64],
    horizon: f64,
    budget: usize,
    used: usize,
    best: f64,
    best_violation: Option<f64>,
    witness: Option<WitnessControl>,
}

impl Search<'_, '_> {
    fn exhausted(&self) -> bool {
        self.witness.is_some() || self.used >= self.budget
    }

    /// Objective of one candidate; records witnesses after an independent
    /// re-simulation at half the step.
    fn evaluate(&mut self, control: Option<WitnessControl>) -> Result<f64> {
        if self.used >= self.budget {
            return Ok(f64::INFINITY);
        }
        self.used += 1;
        let opts = self.oracle.opts;
        let sim = self.oracle.simulate(self.x0, self.horizon, control.as_ref(), opts.dt)?;
        if sim.worst < self.best {
            self.best = sim.worst;
            self.best_violation = sim.first_violation;
        }
        if sim.worst <= opts.oracle_tol && self.witness.is_none() && self.used < self.budget {
            self.used += 1;
            let check = self.oracle.simulate(self.x0, self.horizon, control.as_ref(), 0.5 * opts.dt)?;
            if check.worst <= opts.oracle_tol {
                self.witness = Some(control.unwrap_or(WitnessControl {
                    law: ControlLaw::GreedyFeedback,
                    switch_times: Vec::new(),
                    values: Vec::new(),
                }));
                self.best = self.best.min(check.worst.max(sim.worst));
            }
        }
        Ok(sim.worst)
    }

    /// Best switch time from `a` to `b` over a uniform grid, refined by
    /// golden section inside the neighbouring grid cells.
    fn scan_switch(&mut self, a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
        let horizon = self.horizon;
        let opts = self.oracle.opts;
        let control = |tau: f64| WitnessControl {
            law: ControlLaw::ProjectedPiecewiseConstant,
            switch_times: vec![tau],
            values: vec![a.to_vec(), b.to_vec()],
        };
        let grid = opts.switch_grid.max(2);
        let cell = horizon / grid as f64;
        let mut best = (f64::INFINITY, 0.0);
        for i in 1..grid {
            if self.exhausted() {
                return Ok(best);
            }
            let tau = cell * i as f64;
            let v = self.evaluate(Some(control(tau)))?;
            if v < best.0 {
                best = (v, tau);
            }
        }
        let (mut lo, mut hi) = ((best.1 - cell).max(0.0), (best.1 + cell).min(horizon));
        const INV_PHI: f64 = 0.618_033_988_749_895;
        let mut x1 = hi - INV_PHI * (hi - lo);
        let mut x2 = lo + INV_PHI * (hi - lo);
        let mut f1 = self.evaluate(Some(control(x1)))?;
        let mut f2 = self.evaluate(Some(control(x2)))?;
        for _ in 0..opts.switch_refine {
            if self.exhausted() {
                break;
            }
            if f1 <= f2 {
                hi = x2;
                (x2, f2) = (x1, f1);
                x1 = hi - INV_PHI * (hi - lo);
                f1 = self.evaluate(Some(control(x1)))?;
            } else {
                lo = x1;
                (x1, f1) = (x2, f2);
                x2 = lo + INV_PHI * (hi - lo);
                f2 = self.evaluate(Some(control(x2)))?;
            }
        }
        for (v, tau) in [(f1, x1), (f2, x2)] {
            if v < best.0 {
                best = (v, tau);
            }
        }
        Ok(best)
    }

    fn descend(&mut self, start: Vec<f64>, k: usize, free_times: bool, step: Vec<f64>) -> Result<()> {
        if self.exhausted() {
            return Ok(());
        }
        let oracle = self.oracle;
        let horizon = self.horizon;
        let tol = oracle.opts.oracle_tol;
        let max_evals = oracle.opts.evals_per_start.min(self.budget.saturating_sub(self.used));
        let mut failure = None;
        nelder_mead(
            |p| {
                if failure.is_some() || self.exhausted() {
                    return f64::NEG_INFINITY;
                }
                match self.evaluate(Some(oracle.decode(p, k, free_times, horizon))) {
                    Ok(v) => v,
                    Err(e) => {
                        failure = Some(e);
                        f64::NEG_INFINITY
                    }
                }
            },
            &start,
            &step,
            max_evals,
            1e-9,
            tol,
        );
        failure.map_or(Ok(()), Err)
    }
}

/// Searches for a control keeping `x0` admissible on `[0, horizon]`, using
/// at most `budget` simulations.
pub fn admissible_oracle(
    sys: &SystemDefinition,
    x0: &[f64],
    horizon: f64,
    budget: usize,
    opts: &OracleOptions,
) -> Result<AdmissibilityVerdict> {
    if x0.len() != sys.n() {
        return Err(Error::Dimension(format!("expected state of length {}, got {}", sys.n(), x0.len())));
    }
    if !horizon.is_finite() || horizon < 0.0 {
        return Err(Error::InvalidArgument(format!("horizon must be finite and non-negative, got {horizon}")));
    }
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least one simulation".into()));
    }
    let verdict = |status, witness, worst, violation_time, used| AdmissibilityVerdict {
        point: x0.to_vec(),
        horizon,
        status,
        witness_control: witness,
        worst_value: worst,
        violation_time,
        budget_used: Budget { simulations: used, limit: budget },
        family_relative: status == VerdictStatus::ViolationCertificate,
    };
    let gt0 = g_tilde(sys, x0, &opts.minmax)?.value;
    if gt0 > opts.oracle_tol {
        return Ok(verdict(VerdictStatus::ViolationCertificate, None, gt0, Some(0.0), 0));
    }

    let oracle = Oracle::new(sys, opts);
    let m = sys.m();
    let mut search = Search {
        oracle: &oracle,
        x0,
        horizon,
        budget,
        used: 0,
        best: f64::INFINITY,
        best_violation: None,
        witness: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let span: Vec<f64> = oracle.hull.iter().map(|&(lo, hi)| (hi - lo).max(1e-3)).collect();
    let corners = oracle.corners();
    let center: Vec<f64> = oracle.hull.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();

    search.evaluate(None)?;
    for c in corners.iter().chain(std::iter::once(&center)) {
        if search.exhausted() {
            break;
        }
        search.evaluate(Some(WitnessControl {
            law: ControlLaw::ProjectedPiecewiseConstant,
            switch_times: Vec::new(),
            values: vec![c.clone()],
        }))?;
    }

    // a single switch between two input corners: scan the switch time, then
    // refine the best bracket by golden section
    let mut ranked: Vec<(f64, Vec<f64>)> = Vec::new();
    for (a, ca) in corners.iter().enumerate() {
        for (b, cb) in corners.iter().enumerate() {
            if a == b || search.exhausted() {
                continue;
            }
            let (value, tau) = search.scan_switch(ca, cb)?;
            let mut p = ca.clone();
            p.extend(cb);
            p.push(tau);
            ranked.push((value, p));
        }
    }
    ranked.sort_by(|x, y| x.0.total_cmp(&y.0));

    let random_values = |rng: &mut ChaCha8Rng, count: usize| -> Vec<f64> {
        (0..count)
            .map(|i| {
                let (lo, hi) = oracle.hull[i % m];
                if hi > lo {
                    rng.gen_range(lo..=hi)
                } else {
                    lo
                }
            })
            .collect()
    };
    let value_step = |count: usize| -> Vec<f64> { (0..count).map(|i| 0.5 * span[i % m]).collect() };

    // two and three segments with free switch times
    for k in 2..=3usize {
        let mut starts: Vec<Vec<f64>> = Vec::new();
        for (_, p) in ranked.iter().take(opts.starts) {
            let (ca, cb, tau) = (&p[..m], &p[m..2 * m], p[2 * m]);
            let mut q = Vec::with_capacity(k * m + k - 1);
            for j in 0..k {
                q.extend(if j % 2 == 0 { ca } else { cb });
            }
            q.push(tau);
            if k == 3 {
                q.push(tau + 0.5 * (horizon - tau));
            }
            starts.push(q);
        }
        for _ in 0..opts.starts {
            let mut q = random_values(&mut rng, k * m);
            q.extend((1..k).map(|_| rng.gen_range(0.0..=horizon.max(1e-12))));
            starts.push(q);
        }
        let mut step = value_step(k * m);
        step.extend((1..k).map(|_| 0.05 * horizon.max(1e-3)));
        for q in starts {
            if search.exhausted() {
                break;
            }
            search.descend(q, k, true, step.clone())?;
        }
    }

    // uniform grid of segments
    let k = opts.segments.max(1);
    let mut starts: Vec<Vec<f64>> = corners.iter().map(|c| c.repeat(k)).collect();
    for _ in 0..opts.starts {
        starts.push(random_values(&mut rng, k * m));
    }
    for q in starts {
        if search.exhausted() {
            break;
        }
        search.descend(q, k, false, value_step(k * m))?;
    }

    let (status, worst) = match (&search.witness, search.best) {
        (Some(_), best) => (VerdictStatus::AdmissibleWitness, best),
        (None, best) if best > opts.oracle_tol => (VerdictStatus::ViolationCertificate, best),
        (None, best) => (VerdictStatus::Inconclusive, best),
    };
    let violation_time = if status == VerdictStatus::AdmissibleWitness { None } else { search.best_violation };
    Ok(verdict(status, search.witness.clone(), worst, violation_time, search.used))
}

/// Re-simulates a control from `x0` with RK4 step `dt` and returns
/// `sup_t max_i g_i` together with the first time it exceeds the oracle
/// tolerance.
pub fn replay_control(
    sys: &SystemDefinition,
    x0: &[f64],
    horizon: f64,
    control: &WitnessControl,
    dt: f64,
    opts: &OracleOptions,
) -> Result<(f64, Option<f64>)> {
    let oracle = Oracle::new(sys, opts);
    let law = (control.law == ControlLaw::ProjectedPiecewiseConstant).then_some(control);
    let sim = oracle.simulate(x0, horizon, law, dt)?;
    Ok((sim.worst, sim.first_violation))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeSide {
    InteriorSide,
    ExteriorSide,
    /// Zero offset: the probe sits on the trajectory.
    OnTrajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOptions {
    pub samples: usize,
    pub oracle: OracleOptions,
    /// Minimum interior/exterior admissibility-rate gap for a barrier.
    pub asymmetry_threshold: f64,
    pub classify_tol: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            samples: 20,
            oracle: OracleOptions::default(),
            asymmetry_threshold: 0.8,
            classify_tol: DEFAULT_CLASSIFY_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRecord {
    pub sample: usize,
    /// Trajectory time of the sample.
    pub time: f64,
    pub offset: f64,
    pub point: Vec<f64>,
    pub side: ProbeSide,
    pub verdict: VerdictStatus,
    pub worst_value: f64,
    pub simulations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ProbeSummary {
    pub interior_total: usize,
    pub interior_admissible: usize,
    pub interior_violating: usize,
    pub exterior_total: usize,
    pub exterior_admissible: usize,
    pub exterior_violating: usize,
    pub on_trajectory: usize,
    pub inconclusive: usize,
    /// Offset points outside `G_-`, not probed.
    pub skipped: usize,
    pub interior_admissible_rate: f64,
    pub exterior_violating_rate: f64,
    pub exterior_admissible_rate: f64,
    /// Interior minus exterior admissibility rate.
    pub asymmetry: f64,
    pub degenerate_offsets: bool,
    pub is_barrier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub horizon: f64,
    pub offsets: Vec<f64>,
    pub records: Vec<ProbeRecord>,
    pub summary: ProbeSummary,
}

/// Stored grid point nearest to trajectory time `t`. Chords between grid
/// points can sit well inside the curve on fast arcs, so probes start from
/// stored points only.
fn nearest_index(traj: &BarrierTrajectory, t: f64) -> usize {
    let k = traj.times.partition_point(|&s| s < t).min(traj.len() - 1);
    if k > 0 && (t - traj.times[k - 1]) < (traj.times[k] - t) {
        k - 1
    } else {
        k
    }
}

/// Offsets samples of `traj` along `lambda / |lambda|` (positive offsets are
/// on the exterior side) and runs the admissibility oracle on each.
pub fn semipermeability_probe(
    sys: &SystemDefinition,
    traj: &BarrierTrajectory,
    offsets: &[f64],
    horizon: f64,
    budget: usize,
    opts: &ProbeOptions,
) -> Result<ProbeReport> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let t0 = traj.times[0];
    let dur = traj.duration() - t0;
    let mut jobs = Vec::new();
    let mut skipped = 0usize;
    for s in 0..opts.samples {
        let k = nearest_index(traj, t0 + dur * (s as f64 + 0.5) / opts.samples as f64);
        let (time, x) = (traj.times[k], &traj.states[k]);
        let normal = traj.adjoints[k].normalize();
        for &d in offsets {
            let point = x + &normal * d;
            let class = classify_value(g_tilde(sys, point.as_slice(), &opts.oracle.minmax)?.value, opts.classify_tol);
            if class != PointClass::GMinus {
                skipped += 1;
                continue;
            }
            let side = if d > 0.0 {
                ProbeSide::ExteriorSide
            } else if d < 0.0 {
                ProbeSide::InteriorSide
            } else {
                ProbeSide::OnTrajectory
            };
            jobs.push((s, time, d, point, side));
        }
    }
    let records: Vec<ProbeRecord> = jobs
        .into_par_iter()
        .enumerate()
        .map(|(j, (sample, time, offset, point, side))| {
            let mut oracle = opts.oracle;
            oracle.rng_seed = opts.oracle.rng_seed.wrapping_add(j as u64);
            let v = admissible_oracle(sys, point.as_slice(), horizon, budget, &oracle)?;
            Ok(ProbeRecord {
                sample,
                time,
                offset,
                point: point.iter().copied().collect(),
                side,
                verdict: v.status,
                worst_value: v.worst_value,
                simulations: v.budget_used.simulations,
            })
        })
        .collect::<Result<_>>()?;

    let mut sm = ProbeSummary { skipped, degenerate_offsets: offsets.contains(&0.0), ..Default::default() };
    for r in &records {
        let admissible = r.verdict == VerdictStatus::AdmissibleWitness;
        let violating = r.verdict == VerdictStatus::ViolationCertificate;
        sm.inconclusive += usize::from(r.verdict == VerdictStatus::Inconclusive);
        match r.side {
            ProbeSide::InteriorSide => {
                sm.interior_total += 1;
                sm.interior_admissible += usize::from(admissible);
                sm.interior_violating += usize::from(violating);
            }
            ProbeSide::ExteriorSide => {
                sm.exterior_total += 1;
                sm.exterior_admissible += usize::from(admissible);
                sm.exterior_violating += usize::from(violating);
            }
            ProbeSide::OnTrajectory => sm.on_trajectory += 1,
        }
    }
    let rate = |a: usize, total: usize| if total == 0 { 0.0 } else { a as f64 / total as f64 };
    sm.interior_admissible_rate = rate(sm.interior_admissible, sm.interior_total);
    sm.exterior_violating_rate = rate(sm.exterior_violating, sm.exterior_total);
    sm.exterior_admissible_rate = rate(sm.exterior_admissible, sm.exterior_total);
    sm.asymmetry = sm.interior_admissible_rate - sm.exterior_admissible_rate;
    sm.is_barrier = sm.interior_total > 0 && sm.exterior_total > 0 && sm.asymmetry >= opts.asymmetry_threshold;
    Ok(ProbeReport { horizon, offsets: offsets.to_vec(), records, summary: sm })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationalCheck {
    /// `max_t |dx^T eta - dx0^T eta0| / max(1, |dx0^T eta0|)`.
    pub max_drift: f64,
    /// Grid points whose active control gradients are rank deficient.
    pub rank_deficient: Vec<usize>,
}

/// Closed-loop state matrix `f_x + f_u M` where `M` maps `dx` to the control
/// variation that keeps the active constraints active, together with the
/// full row rank flag.
fn closed_loop_matrix(sys: &SystemDefinition, traj: &BarrierTrajectory, k: usize) -> Result<(DMatrix<f64>, bool)> {
    let (n, m) = (sys.n(), sys.m());
    let x = traj.states[k].as_slice();
    let u = traj.controls[k].as_slice();
    let d = sys.eval_dynamics(x, u)?;
    let ce = sys.eval_constraints(x, u, 0.0)?;
    let (ag, ac) = (&traj.active_g[k], &traj.active_gamma[k]);
    let q = ag.len() + ac.len();
    if q == 0 {
        return Ok((d.fx, true));
    }
    let mut c = DMatrix::zeros(q, m);
    let mut rhs = DMatrix::zeros(q, n);
    for (row, &i) in ag.iter().enumerate() {
        c.row_mut(row).copy_from(&ce.g_u.row(i));
        rhs.row_mut(row).copy_from(&(-ce.g_x.row(i)));
    }
    for (row, &j) in ac.iter().enumerate() {
        c.row_mut(ag.len() + row).copy_from(&ce.gamma_u.row(j));
    }
    let svd = c.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax.max(1.0)).count();
    let pinv = svd.pseudo_inverse(1e-10 * smax.max(1.0)).map_err(|e| Error::InvalidSystem(e.to_string()))?;
    Ok((d.fx + d.fu * (pinv * rhs), rank == q))
}

/// Transports `deltax0` and `eta0` forward along `traj` through the
/// variational equation and its adjoint and reports the drift of their inner
/// product. With `drop_mu_term` the adjoint omits the multiplier term,
/// which must break the invariant on active arcs.
pub fn variational_adjoint_check(
    sys: &SystemDefinition,
    traj: &BarrierTrajectory,
    eta0: &[f64],
    deltax0: &[f64],
    drop_mu_term: bool,
) -> Result<VariationalCheck> {
    let n = sys.n();
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if eta0.len() != n || deltax0.len() != n {
        return Err(Error::Dimension("eta0 and deltax0 must have the state dimension".into()));
    }
    if eta0.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument("eta0 must be non-zero".into()));
    }
    let mut a = Vec::with_capacity(traj.len());
    let mut b = Vec::with_capacity(traj.len());
    let mut rank_deficient = Vec::new();
    for k in 0..traj.len() {
        let (ak, full) = closed_loop_matrix(sys, traj, k)?;
        if !full {
            rank_deficient.push(k);
        }
        let bk = if drop_mu_term {
            sys.eval_dynamics(traj.states[k].as_slice(), traj.controls[k].as_slice())?.fx
        } else {
            ak.clone()
        };
        a.push(ak);
        b.push(bk);
    }
    let mut dx = DVector::from_column_slice(deltax0);
    let mut eta = DVector::from_column_slice(eta0);
    let c0 = dx.dot(&eta);
    let scale = c0.abs().max(1.0);
    let mut drift: f64 = 0.0;
    for k in 0..traj.len() - 1 {
        let len = traj.times[k + 1] - traj.times[k];
        if len <= 0.0 {
            continue;
        }
        let sub = ((len / 2e-3).ceil() as usize).max(1);
        let h = len / sub as f64;
        let at = |mats: &[DMatrix<f64>], w: f64| &mats[k] * (1.0 - w) + &mats[k + 1] * w;
        for j in 0..sub {
            let w0 = j as f64 / sub as f64;
            let wm = (j as f64 + 0.5) / sub as f64;
            let w1 = (j + 1) as f64 / sub as f64;
            let (a0, am, a1) = (at(&a, w0), at(&a, wm), at(&a, w1));
            let (b0, bm, b1) = (at(&b, w0), at(&b, wm), at(&b, w1));
            let k1 = &a0 * &dx;
            let k2 = &am * (&dx + &k1 * (0.5 * h));
            let k3 = &am * (&dx + &k2 * (0.5 * h));
            let k4 = &a1 * (&dx + &k3 * h);
            let e1 = -(b0.transpose() * &eta);
            let e2 = -(bm.transpose() * (&eta + &e1 * (0.5 * h)));
            let e3 = -(bm.transpose() * (&eta + &e2 * (0.5 * h)));
            let e4 = -(b1.transpose() * (&eta + &e3 * h));
            dx += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            eta += (e1 + e2 * 2.0 + e3 * 2.0 + e4) * (h / 6.0);
            drift = drift.max((dx.dot(&eta) - c0).abs() / scale);
        }
    }
    Ok(VariationalCheck { max_drift: drift, rank_deficient })
}

/// True iff every stored state satisfies the growth bound measured from the
/// endpoint, with the backward elapsed time.
pub fn growth_bound_check(traj: &BarrierTrajectory, c: f64) -> bool {
    let Some(end) = traj.states.last() else { return true };
    let z = end.norm();
    (0..traj.len()).all(|k| {
        let bound = growth_bound(z, c, traj.elapsed(k));
        traj.states[k].norm() <= bound * (1.0 + 1e-12) + 1e-12
    })
}
