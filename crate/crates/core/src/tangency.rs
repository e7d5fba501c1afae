//! Barrier endpoints: points `z` with `g~(z) = 0` where the best achievable
//! (generalised) Lie derivative of `g~` along `f` vanishes.
//!
//! Both solvers alternate a Newton projection onto `{g~ = 0}` with a damped
//! Newton step on the tangency function along directions tangent to that set.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{EvalError, KinkMode};
use crate::hamiltonian::{minimize_hamiltonian, HamiltonianOptions};
use crate::minmax::{classify_value, g_tilde, MinMaxOptions, MinMaxResult, PointClass};
use crate::model::SystemDefinition;
use crate::optim::{barrier_minimize, BarrierOptions, Nlp, Polyhedron};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangencyOptions {
    pub tangency_tol: f64,
    pub tie_tol: f64,
    pub classify_tol: f64,
    pub feas_tol: f64,
    pub max_iters: usize,
    pub fd_step: f64,
    /// Largest state step of a single Newton update.
    pub max_step: f64,
    pub dedupe_tol: f64,
    pub minmax: MinMaxOptions,
    pub hamiltonian: HamiltonianOptions,
}

impl Default for TangencyOptions {
    fn default() -> Self {
        TangencyOptions {
            tangency_tol: 1e-8,
            tie_tol: 1e-9,
            classify_tol: 1e-6,
            feas_tol: 1e-9,
            max_iters: 60,
            fd_step: 1e-6,
            max_step: 0.5,
            dedupe_tol: 1e-5,
            minmax: MinMaxOptions::default(),
            hamiltonian: HamiltonianOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TangencyMode {
    Smooth,
    Nonsmooth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangencyPoint {
    pub z: DVector<f64>,
    pub u_bar: DVector<f64>,
    pub lambda_t: DVector<f64>,
    /// All maximisers of `xi^T f(z, u_bar)` over the generators, `lambda_t` first.
    pub tied_adjoints: Vec<DVector<f64>>,
    pub mode: TangencyMode,
    pub g_tilde_residual: f64,
    pub tangency_residual: f64,
}

impl TangencyPoint {
    /// One endpoint per tied terminal adjoint.
    pub fn branches(&self) -> Vec<TangencyPoint> {
        self.tied_adjoints
            .iter()
            .map(|l| TangencyPoint { lambda_t: l.clone(), tied_adjoints: vec![l.clone()], ..self.clone() })
            .collect()
    }
}

/// `min_{u in U(z)} xi^T f(z, u)` and its minimiser.
pub fn lie_min_smooth(
    sys: &SystemDefinition,
    z: &[f64],
    xi: &DVector<f64>,
    opts: &TangencyOptions,
) -> Result<(f64, DVector<f64>)> {
    let h = minimize_hamiltonian(sys, z, xi.as_slice(), None, &opts.hamiltonian)?;
    Ok((h.h_value, h.u_star))
}

struct LieMinMax<'a> {
    sys: &'a SystemDefinition,
    z: &'a [f64],
    vertices: &'a [DVector<f64>],
}

impl Nlp for LieMinMax<'_> {
    fn dim(&self) -> usize {
        self.sys.m() + 1
    }
    fn n_constraints(&self) -> usize {
        self.vertices.len() + self.sys.p() + self.sys.r()
    }
    fn objective(&self, v: &[f64], grad: &mut [f64]) -> std::result::Result<f64, EvalError> {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let m = self.sys.m();
        grad[m] = 1.0;
        Ok(v[m])
    }
    fn constraint(&self, k: usize, v: &[f64], grad: &mut [f64]) -> std::result::Result<f64, EvalError> {
        let (n, m, p) = (self.sys.n(), self.sys.m(), self.sys.p());
        let nv = self.vertices.len();
        let mut point = self.z.to_vec();
        point.extend_from_slice(&v[..m]);
        grad.iter_mut().for_each(|g| *g = 0.0);
        if k < nv {
            let xi = &self.vertices[k];
            let mut val = 0.0;
            for (i, e) in self.sys.f_exprs().iter().enumerate() {
                let d = e.eval_with_gradient(&point, KinkMode::OneSided)?;
                val += xi[i] * d.value;
                for c in 0..m {
                    grad[c] += xi[i] * d.partials[n + c];
                }
            }
            grad[m] = -1.0;
            return Ok(val - v[m]);
        }
        let k = k - nv;
        let expr = if k < p { &self.sys.g_exprs()[k] } else { &self.sys.gamma_exprs()[k - p] };
        let d = expr.eval_with_gradient(&point, KinkMode::OneSided)?;
        grad[..m].copy_from_slice(&d.partials[n..]);
        Ok(d.value)
    }
}

/// `min_{v in U(z)} max_{xi in vertices} xi^T f(z, v)` and its minimiser.
pub fn lie_min_nonsmooth(
    sys: &SystemDefinition,
    z: &[f64],
    vertices: &[DVector<f64>],
    opts: &TangencyOptions,
) -> Result<(f64, DVector<f64>)> {
    if vertices.is_empty() {
        return Err(Error::EmptyVertexSet);
    }
    let m = sys.m();
    if sys.is_control_affine() && !opts.hamiltonian.force_nlp {
        let slice = sys.affine_slice(z)?;
        let nv = vertices.len();
        let rows = nv + sys.p() + sys.r();
        let mut a = DMatrix::zeros(rows, m + 1);
        let mut b = DVector::zeros(rows);
        for (k, xi) in vertices.iter().enumerate() {
            let c = slice.fu.transpose() * xi;
            for j in 0..m {
                a[(k, j)] = c[j];
            }
            a[(k, m)] = -1.0;
            b[k] = -xi.dot(&slice.f0);
        }
        let ua = DMatrix::from_fn(sys.p() + sys.r(), m, |i, j| {
            if i < sys.p() {
                slice.g_u[(i, j)]
            } else {
                slice.gamma_u[(i - sys.p(), j)]
            }
        });
        for i in 0..sys.p() + sys.r() {
            for j in 0..m {
                a[(nv + i, j)] = ua[(i, j)];
            }
            b[nv + i] = if i < sys.p() { -slice.g0[i] } else { -slice.gamma0[i - sys.p()] };
        }
        let mut c = DVector::zeros(m + 1);
        c[m] = 1.0;
        let lp = Polyhedron::new(a, b).minimize_linear(&c, opts.feas_tol, opts.tie_tol)?;
        let u = lp.optimal[0].point.rows(0, m).into_owned();
        return Ok((lp.value, u));
    }
    let prob = LieMinMax { sys, z, vertices };
    let hull = sys.control_hull();
    let mut start: Vec<f64> = hull.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
    let f = sys.eval_f(z, &start)?;
    start.push(vertices.iter().map(|xi| xi.dot(&f)).fold(f64::NEG_INFINITY, f64::max) + 1.0);
    let sol = barrier_minimize(&prob, &start, &BarrierOptions::default())?;
    let u = sol.v.rows(0, m).into_owned();
    let f = sys.eval_f(z, u.as_slice())?;
    let val = vertices.iter().map(|xi| xi.dot(&f)).fold(f64::NEG_INFINITY, f64::max);
    Ok((val, u))
}

/// Maximisers of `xi^T f(z, u_bar)` over the generators of the generalised
/// gradient at `z`, within `tie_tol`.
pub fn terminal_adjoint(
    sys: &SystemDefinition,
    z: &[f64],
    u_bar: &[f64],
    opts: &TangencyOptions,
) -> Result<Vec<DVector<f64>>> {
    let mm = g_tilde(sys, z, &opts.minmax)?;
    adjoints_from(sys, z, u_bar, &mm.subdiff_vertices, opts.tie_tol)
}

fn adjoints_from(
    sys: &SystemDefinition,
    z: &[f64],
    u_bar: &[f64],
    vertices: &[DVector<f64>],
    tie_tol: f64,
) -> Result<Vec<DVector<f64>>> {
    if vertices.is_empty() {
        return Err(Error::EmptyVertexSet);
    }
    let f = sys.eval_f(z, u_bar)?;
    let scores: Vec<f64> = vertices.iter().map(|xi| xi.dot(&f)).collect();
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(vertices.iter().zip(&scores).filter(|(_, &s)| s >= best - tie_tol).map(|(v, _)| v.clone()).collect())
}

/// Orthonormal basis of the complement of `span(rows)`.
fn tangent_basis(rows: &[DVector<f64>], n: usize) -> DMatrix<f64> {
    if rows.is_empty() {
        return DMatrix::identity(n, n);
    }
    // pad to a square-or-taller matrix so V^T is complete
    let a = DMatrix::from_fn(n.max(rows.len()), n, |i, j| if i < rows.len() { rows[i][j] } else { 0.0 });
    let svd = a.svd(false, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax.max(1e-300)).count();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let full = svd.v_t.expect("requested");
    let full = DMatrix::from_fn(n, n, |i, j| full[(order[i], j)]);
    DMatrix::from_fn(n, n - rank, |i, k| full[(rank + k, i)])
}

/// Direction used to push `g~` to zero.
fn descent_direction(mm: &MinMaxResult) -> Option<DVector<f64>> {
    if mm.subdiff_vertices.is_empty() {
        return None;
    }
    let mean = mm.subdiff_vertices.iter().fold(DVector::zeros(mm.subdiff_vertices[0].len()), |a, v| a + v)
        / mm.subdiff_vertices.len() as f64;
    if mean.norm() > 1e-12 {
        return Some(mean);
    }
    mm.subdiff_vertices.iter().find(|v| v.norm() > 1e-12).cloned()
}

/// Newton projection onto `{g~ = 0}`.
fn project_to_zero_set(
    sys: &SystemDefinition,
    seed: &DVector<f64>,
    require_smooth: bool,
    opts: &TangencyOptions,
) -> Result<(DVector<f64>, MinMaxResult)> {
    let mut z = seed.clone();
    let tol = 0.1 * opts.tangency_tol;
    for _ in 0..opts.max_iters {
        let mm = g_tilde(sys, z.as_slice(), &opts.minmax)?;
        if mm.value.abs() <= tol {
            if require_smooth && !mm.differentiable {
                return Err(Error::NonDifferentiable);
            }
            return Ok(polish(sys, z, mm, require_smooth, opts));
        }
        if require_smooth && !mm.differentiable {
            return Err(Error::NonDifferentiable);
        }
        let d = descent_direction(&mm).ok_or_else(|| Error::NoConvergence("zero gradient of g~".into()))?;
        let mut step = &d * (-mm.value / d.norm_squared());
        if step.norm() > opts.max_step {
            step *= opts.max_step / step.norm();
        }
        z += step;
    }
    Err(Error::NoConvergence("projection onto the zero set of g~".into()))
}

/// Extra Newton steps on `g~` kept only while they reduce `|g~|`.
fn polish(
    sys: &SystemDefinition,
    mut z: DVector<f64>,
    mut mm: MinMaxResult,
    require_smooth: bool,
    opts: &TangencyOptions,
) -> (DVector<f64>, MinMaxResult) {
    for _ in 0..3 {
        if mm.value == 0.0 {
            break;
        }
        let Some(d) = descent_direction(&mm) else { break };
        let trial = &z - &d * (mm.value / d.norm_squared());
        match g_tilde(sys, trial.as_slice(), &opts.minmax) {
            Ok(next) if next.value.abs() < mm.value.abs() && (next.differentiable || !require_smooth) => {
                z = trial;
                mm = next;
            }
            _ => break,
        }
    }
    (z, mm)
}

struct Evaluated {
    z: DVector<f64>,
    mm: MinMaxResult,
    phi: f64,
    u: DVector<f64>,
}

fn evaluate(sys: &SystemDefinition, seed: &DVector<f64>, mode: TangencyMode, opts: &TangencyOptions) -> Result<Evaluated> {
    let (z, mm) = project_to_zero_set(sys, seed, mode == TangencyMode::Smooth, opts)?;
    let (phi, u) = match mode {
        TangencyMode::Smooth => lie_min_smooth(sys, z.as_slice(), &mm.subdiff_vertices[0], opts)?,
        TangencyMode::Nonsmooth => lie_min_nonsmooth(sys, z.as_slice(), &mm.subdiff_vertices, opts)?,
    };
    Ok(Evaluated { z, mm, phi, u })
}

fn solve(sys: &SystemDefinition, seed: &[f64], mode: TangencyMode, opts: &TangencyOptions) -> Result<TangencyPoint> {
    if seed.len() != sys.n() {
        return Err(Error::Dimension(format!("seed of length {} for n = {}", seed.len(), sys.n())));
    }
    let n = sys.n();
    let mut cur = evaluate(sys, &DVector::from_column_slice(seed), mode, opts)?;
    for _ in 0..opts.max_iters {
        if cur.phi.abs() <= opts.tangency_tol {
            return finalize(sys, cur, mode, opts);
        }
        let basis = match mode {
            TangencyMode::Smooth => tangent_basis(&cur.mm.subdiff_vertices[..1], n),
            TangencyMode::Nonsmooth => tangent_basis(&cur.mm.subdiff_vertices, n),
        };
        if basis.ncols() == 0 {
            return Err(Error::NoConvergence("no tangent directions along the zero set".into()));
        }
        // finite-difference slope of phi along each tangent direction
        let h = opts.fd_step * cur.z.amax().max(1.0);
        let mut grad = DVector::zeros(basis.ncols());
        for k in 0..basis.ncols() {
            let t = basis.column(k).into_owned();
            let fp = evaluate(sys, &(&cur.z + &t * h), mode, opts)?.phi;
            let fm = evaluate(sys, &(&cur.z - &t * h), mode, opts)?.phi;
            grad[k] = (fp - fm) / (2.0 * h);
        }
        if grad.norm() <= 1e-14 {
            return Err(Error::NoConvergence("tangency function is flat along the zero set".into()));
        }
        let mut step = &basis * (&grad * (-cur.phi / grad.norm_squared()));
        if step.norm() > opts.max_step {
            step *= opts.max_step / step.norm();
        }
        let mut accepted = None;
        for _ in 0..30 {
            if let Ok(next) = evaluate(sys, &(&cur.z + &step), mode, opts) {
                if next.phi.abs() < cur.phi.abs() {
                    accepted = Some(next);
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some(next) => cur = next,
            None => return Err(Error::NoConvergence("line search on the tangency function failed".into())),
        }
    }
    Err(Error::NoConvergence(format!("tangency not reached in {} iterations", opts.max_iters)))
}

fn finalize(sys: &SystemDefinition, cur: Evaluated, mode: TangencyMode, opts: &TangencyOptions) -> Result<TangencyPoint> {
    if classify_value(cur.mm.value, opts.classify_tol) != PointClass::GZero {
        return Err(Error::NoConvergence("endpoint is not on the zero set of g~".into()));
    }
    if !sys.control_feasible(cur.z.as_slice(), cur.u.as_slice(), 10.0 * opts.feas_tol)? {
        return Err(Error::EmptyControlSet);
    }
    let tied = adjoints_from(sys, cur.z.as_slice(), cur.u.as_slice(), &cur.mm.subdiff_vertices, opts.tie_tol)?;
    Ok(TangencyPoint {
        lambda_t: tied[0].clone(),
        tied_adjoints: tied,
        z: cur.z,
        u_bar: cur.u,
        mode,
        g_tilde_residual: cur.mm.value,
        tangency_residual: cur.phi,
    })
}

pub fn solve_tangency_smooth(sys: &SystemDefinition, seed: &[f64], opts: &TangencyOptions) -> Result<TangencyPoint> {
    solve(sys, seed, TangencyMode::Smooth, opts)
}

pub fn solve_tangency_nonsmooth(sys: &SystemDefinition, seed: &[f64], opts: &TangencyOptions) -> Result<TangencyPoint> {
    solve(sys, seed, TangencyMode::Nonsmooth, opts)
}

/// Smooth solve, falling back to the nonsmooth conditions when `g~` is not
/// differentiable along the way.
pub fn solve_tangency(sys: &SystemDefinition, seed: &[f64], opts: &TangencyOptions) -> Result<TangencyPoint> {
    match solve_tangency_smooth(sys, seed, opts) {
        Err(Error::NonDifferentiable) => solve_tangency_nonsmooth(sys, seed, opts),
        other => other,
    }
}

#[derive(Debug, Clone)]
pub struct EndpointSearch {
    /// Distinct endpoints in seed order.
    pub points: Vec<TangencyPoint>,
    pub converged: usize,
    pub failures: Vec<(Vec<f64>, Error)>,
}

/// Solves from every seed in parallel and deduplicates the results.
pub fn find_endpoints(sys: &SystemDefinition, seeds: &[Vec<f64>], opts: &TangencyOptions) -> EndpointSearch {
    let results: Vec<Result<TangencyPoint>> = seeds.par_iter().map(|s| solve_tangency(sys, s, opts)).collect();
    let mut points: Vec<TangencyPoint> = Vec::new();
    let mut failures = Vec::new();
    let mut converged = 0;
    for (seed, r) in seeds.iter().zip(results) {
        match r {
            Ok(tp) => {
                converged += 1;
                if !points.iter().any(|p| (&p.z - &tp.z).amax() <= opts.dedupe_tol) {
                    points.push(tp);
                }
            }
            Err(e) => failures.push((seed.clone(), e)),
        }
    }
    EndpointSearch { points, converged, failures }
}

/// Tensor grid of seeds over a box, `counts[k]` points per axis (cell centres
/// when a count is 1).
pub fn seed_grid(lower: &[f64], upper: &[f64], counts: &[usize]) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = lower
        .iter()
        .zip(upper)
        .zip(counts)
        .map(|((&lo, &hi), &c)| {
            if c <= 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..c).map(|i| lo + (hi - lo) * i as f64 / (c - 1) as f64).collect()
            }
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}
