//! Small dense solvers used by the pointwise problems.
//!
//! * [`Polyhedron`]: exact vertex enumeration for `A v <= b` in a handful of
//!   dimensions, linear minimisation over it and Euclidean projection onto it.
//! * [`barrier_minimize`]: log-barrier Newton method for smooth problems with
//!   convex inequality constraints, Hessians by central differences of exact
//!   gradients.
//! * [`nnls`]: Lawson-Hanson non-negative least squares.
//! * [`nelder_mead`]: derivative-free simplex search.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::EvalError;

const MAX_COMBINATIONS: usize = 200_000;

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Calls `f` on every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        if idx[i] == i + n - k {
            return;
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub point: DVector<f64>,
    /// Rows of the polyhedron that are tight at the vertex.
    pub active: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    /// Vertices of the optimal face, in lexicographic order.
    pub optimal: Vec<Vertex>,
}

/// `{v : A v <= b}`.
#[derive(Debug, Clone)]
pub struct Polyhedron {
    a: DMatrix<f64>,
    b: DVector<f64>,
    row_norms: Vec<f64>,
}

impl Polyhedron {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        assert_eq!(a.nrows(), b.len());
        let row_norms = (0..a.nrows()).map(|i| a.row(i).norm()).collect();
        Polyhedron { a, b, row_norms }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    fn slack_tol(&self, row: usize, tol: f64) -> f64 {
        tol * self.row_norms[row].max(1.0)
    }

    /// Largest scaled violation `max_k (a_k v - b_k) / max(1, |a_k|)`.
    pub fn max_violation(&self, v: &DVector<f64>) -> f64 {
        (0..self.rows())
            .map(|k| (self.a.row(k).dot(&v.transpose()) - self.b[k]) / self.row_norms[k].max(1.0))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        (0..self.rows()).all(|k| self.a.row(k).dot(&v.transpose()) - self.b[k] <= self.slack_tol(k, tol))
    }

    fn active_rows(&self, v: &DVector<f64>, tol: f64) -> Vec<usize> {
        (0..self.rows())
            .filter(|&k| (self.a.row(k).dot(&v.transpose()) - self.b[k]).abs() <= self.slack_tol(k, tol))
            .collect()
    }

    /// Rows with a non-zero normal. A zero row is either always satisfied or
    /// makes the set empty.
    fn proper_rows(&self, tol: f64) -> Result<Vec<usize>> {
        let mut rows = Vec::new();
        for k in 0..self.rows() {
            if self.row_norms[k] <= 1e-14 {
                if self.b[k] < -tol {
                    return Err(Error::EmptyControlSet);
                }
            } else {
                rows.push(k);
            }
        }
        Ok(rows)
    }

    /// All vertices, feasibility checked to `tol`. Empty result means the set
    /// is empty or has no vertex.
    pub fn vertices(&self, tol: f64) -> Result<Vec<Vertex>> {
        let d = self.dim();
        let rows = self.proper_rows(tol)?;
        if d == 0 {
            return Ok(vec![Vertex { point: DVector::zeros(0), active: Vec::new() }]);
        }
        let combos = binomial(rows.len(), d);
        if combos > MAX_COMBINATIONS {
            return Err(Error::TooLarge(format!("{combos} vertex candidates")));
        }
        let mut out: Vec<Vertex> = Vec::new();
        for_each_subset(rows.len(), d, |subset| {
            let sel: Vec<usize> = subset.iter().map(|&i| rows[i]).collect();
            let a_s = self.a.select_rows(&sel);
            let b_s = self.b.select_rows(&sel);
            let lu = a_s.clone().full_piv_lu();
            let Some(v) = lu.solve(&b_s) else { return };
            // reject ill-conditioned bases
            if (&a_s * &v - &b_s).amax() > 1e-9 * (1.0 + b_s.amax()) || !v.iter().all(|x| x.is_finite()) {
                return;
            }
            let svd = a_s.svd(false, false);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smin <= 1e-12 * smax.max(1.0) {
                return;
            }
            if !self.contains(&v, tol) {
                return;
            }
            if let Some(existing) = out
                .iter_mut()
                .find(|w| (&w.point - &v).amax() <= 1e-11 * (1.0 + v.amax()))
            {
                let _ = existing;
                return;
            }
            out.push(Vertex { active: Vec::new(), point: v });
        });
        for v in &mut out {
            v.active = self.active_rows(&v.point, tol);
        }
        Ok(out)
    }

    /// Minimise `c^T v`. `face_tol` decides which vertices count as optimal.
    pub fn minimize_linear(&self, c: &DVector<f64>, tol: f64, face_tol: f64) -> Result<LpSolution> {
        let verts = self.vertices(tol)?;
        if verts.is_empty() {
            return Err(Error::EmptyControlSet);
        }
        let value = verts.iter().map(|v| c.dot(&v.point)).fold(f64::INFINITY, f64::min);
        let cut = value + face_tol * value.abs().max(1.0);
        let mut optimal: Vec<Vertex> = verts.into_iter().filter(|v| c.dot(&v.point) <= cut).collect();
        optimal.sort_by(|x, y| {
            x.point
                .iter()
                .zip(y.point.iter())
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Ok(LpSolution { value, optimal })
    }

    /// Euclidean projection of `v` onto the polyhedron.
    pub fn project(&self, v: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
        if self.contains(v, tol) {
            return Ok(v.clone());
        }
        let d = self.dim();
        let rows = self.proper_rows(tol)?;
        if d == 1 {
            let (lo, hi) = self.interval(&rows)?;
            return Ok(DVector::from_element(1, v[0].clamp(lo, hi)));
        }
        let mut best: Option<(f64, DVector<f64>)> = None;
        let max_k = d.min(rows.len());
        let total: usize = (1..=max_k).map(|k| binomial(rows.len(), k)).sum();
        if total > MAX_COMBINATIONS {
            return Err(Error::TooLarge(format!("{total} active-set candidates")));
        }
        for k in 1..=max_k {
            for_each_subset(rows.len(), k, |subset| {
                let sel: Vec<usize> = subset.iter().map(|&i| rows[i]).collect();
                let a_s = self.a.select_rows(&sel);
                let b_s = self.b.select_rows(&sel);
                let gram = &a_s * a_s.transpose();
                let Some(chol) = gram.clone().cholesky() else { return };
                let w = chol.solve(&(&a_s * v - &b_s));
                if w.iter().any(|&wi| wi < -1e-12) {
                    return;
                }
                let u = v - a_s.transpose() * w;
                if !self.contains(&u, tol) {
                    return;
                }
                let dist = (&u - v).norm();
                if best.as_ref().is_none_or(|(bd, _)| dist < *bd) {
                    best = Some((dist, u));
                }
            });
        }
        match best {
            Some((_, u)) => Ok(u),
            None => {
                // degenerate geometry: nearest vertex
                let verts = self.vertices(tol)?;
                verts
                    .into_iter()
                    .map(|w| ((&w.point - v).norm(), w.point))
                    .min_by(|a, b| a.0.total_cmp(&b.0))
                    .map(|(_, p)| p)
                    .ok_or(Error::EmptyControlSet)
            }
        }
    }

    /// Bounds of a one-dimensional polyhedron.
    pub fn interval(&self, rows: &[usize]) -> Result<(f64, f64)> {
        debug_assert_eq!(self.dim(), 1);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for &k in rows {
            let a = self.a[(k, 0)];
            let bound = self.b[k] / a;
            if a > 0.0 {
                hi = hi.min(bound);
            } else {
                lo = lo.max(bound);
            }
        }
        if lo > hi {
            // tolerate rounding-level inversions
            if lo - hi <= 1e-9 * (1.0 + lo.abs()) {
                let mid = 0.5 * (lo + hi);
                return Ok((mid, mid));
            }
            return Err(Error::EmptyControlSet);
        }
        Ok((lo, hi))
    }
}

/// A smooth problem `min c(v) s.t. h_k(v) <= 0`.
pub trait Nlp {
    fn dim(&self) -> usize;
    fn n_constraints(&self) -> usize;
    fn objective(&self, v: &[f64], grad: &mut [f64]) -> std::result::Result<f64, EvalError>;
    fn constraint(&self, k: usize, v: &[f64], grad: &mut [f64]) -> std::result::Result<f64, EvalError>;
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierOptions {
    /// Target duality gap `K / t`.
    pub gap_tol: f64,
    pub max_newton: usize,
    pub max_outer: usize,
    /// Finite-difference step for Hessians (relative).
    pub fd_step: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions { gap_tol: 1e-11, max_newton: 60, max_outer: 40, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct NlpPoint {
    pub v: DVector<f64>,
    pub objective: f64,
    /// `max_k h_k(v)`.
    pub max_constraint: f64,
    /// Amount by which the constraints had to be relaxed because the
    /// feasible set has no interior; zero otherwise.
    pub relaxation: f64,
}

/// Objective plus shifted constraints `h_k(v) - shift <= 0`, optionally with
/// an extra slack variable appended (phase one).
struct Shifted<'a, P: Nlp> {
    inner: &'a P,
    shift: f64,
    phase_one: bool,
}

impl<P: Nlp> Shifted<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim() + usize::from(self.phase_one)
    }

    fn n_cons(&self) -> usize {
        // phase one bounds the slack from below
        self.inner.n_constraints() + usize::from(self.phase_one)
    }

    fn objective(&self, v: &[f64], grad: &mut [f64]) -> std::result::Result<f64, EvalError> {
        if self.phase_one {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let n = self.inner.dim();
            grad[n] = 1.0;
            Ok(v[n])
        } else {
            self.inner.objective(v, grad)
        }
    }

    fn constraint(&self, k: usize, v: &[f64], grad: &mut [f64]) -> std::result::Result<f64, EvalError> {
        let n = self.inner.dim();
        if self.phase_one {
            if k == self.inner.n_constraints() {
                grad.iter_mut().for_each(|g| *g = 0.0);
                grad[n] = -1.0;
                return Ok(-v[n] - 1.0);
            }
            let h = self.inner.constraint(k, &v[..n], &mut grad[..n])?;
            grad[n] = -1.0;
            Ok(h - v[n])
        } else {
            Ok(self.inner.constraint(k, v, grad)? - self.shift)
        }
    }
}

fn eval_err(e: EvalError) -> Error {
    Error::eval("barrier subproblem", e)
}

/// Central-difference Hessian of a function whose gradient is exact.
fn fd_hessian(
    dim: usize,
    v: &[f64],
    step: f64,
    mut grad_at: impl FnMut(&[f64], &mut [f64]) -> std::result::Result<(), EvalError>,
) -> std::result::Result<DMatrix<f64>, EvalError> {
    let mut h = DMatrix::zeros(dim, dim);
    let mut p = v.to_vec();
    let mut gp = vec![0.0; dim];
    let mut gm = vec![0.0; dim];
    for j in 0..dim {
        let e = step * v[j].abs().max(1.0);
        p[j] = v[j] + e;
        grad_at(&p, &mut gp)?;
        p[j] = v[j] - e;
        grad_at(&p, &mut gm)?;
        p[j] = v[j];
        for i in 0..dim {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * e);
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Newton centering for `t c(v) - sum log(-h_k(v))` from a strictly feasible `v`.
fn center<P: Nlp>(prob: &Shifted<'_, P>, v: &mut DVector<f64>, t: f64, opts: &BarrierOptions) -> Result<()> {
    let dim = prob.dim();
    let ncons = prob.n_cons();
    let mut gc = vec![0.0; dim];
    let mut gh = vec![0.0; dim];
    let phi = |x: &[f64]| -> std::result::Result<Option<f64>, EvalError> {
        let mut scratch = vec![0.0; dim];
        let mut acc = t * prob.objective(x, &mut scratch)?;
        for k in 0..ncons {
            let h = prob.constraint(k, x, &mut scratch)?;
            if h >= 0.0 {
                return Ok(None);
            }
            acc -= (-h).ln();
        }
        Ok(Some(acc))
    };
    for _ in 0..opts.max_newton {
        let x = v.as_slice().to_vec();
        let mut grad = DVector::zeros(dim);
        prob.objective(&x, &mut gc).map_err(eval_err)?;
        for i in 0..dim {
            grad[i] = t * gc[i];
        }
        let mut hess = fd_hessian(dim, &x, opts.fd_step, |p, g| prob.objective(p, g).map(|_| ()))
            .map_err(eval_err)?
            * t;
        for k in 0..ncons {
            let h = prob.constraint(k, &x, &mut gh).map_err(eval_err)?;
            let ghv = DVector::from_column_slice(&gh);
            grad += &ghv / (-h);
            hess += &ghv * ghv.transpose() / (h * h);
            let hk = fd_hessian(dim, &x, opts.fd_step, |p, g| prob.constraint(k, p, g).map(|_| ()))
                .map_err(eval_err)?;
            if hk.amax() > 0.0 {
                hess += hk / (-h);
            }
        }
        let scale = hess.amax().max(1e-300);
        let mut delta = 0.0;
        let dir = loop {
            let mut m = hess.clone();
            for i in 0..dim {
                m[(i, i)] += delta;
            }
            if let Some(ch) = m.cholesky() {
                break ch.solve(&(-&grad));
            }
            delta = if delta == 0.0 { 1e-12 * scale } else { delta * 10.0 };
            if delta > 1e12 * scale {
                return Err(Error::NoConvergence("barrier Hessian regularisation failed".into()));
            }
        };
        let slope = grad.dot(&dir);
        if -slope / 2.0 <= 1e-14 {
            return Ok(());
        }
        let f0 = phi(&x).map_err(eval_err)?.unwrap_or(f64::INFINITY);
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial = &*v + &dir * alpha;
            if let Some(f1) = phi(trial.as_slice()).map_err(eval_err)? {
                if f1 <= f0 + 0.25 * alpha * slope + 1e-13 * f0.abs() {
                    *v = trial;
                    moved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !moved {
            // no representable decrease left at this t
            return Ok(());
        }
    }
    Ok(())
}

fn barrier_path<P: Nlp>(
    prob: &Shifted<'_, P>,
    mut v: DVector<f64>,
    opts: &BarrierOptions,
    stop_below: Option<f64>,
) -> Result<DVector<f64>> {
    let ncons = prob.n_cons().max(1) as f64;
    let mut t = 1.0;
    for _ in 0..opts.max_outer {
        center(prob, &mut v, t, opts)?;
        if let Some(level) = stop_below {
            let mut g = vec![0.0; prob.dim()];
            if prob.objective(v.as_slice(), &mut g).map_err(eval_err)? < level {
                return Ok(v);
            }
        }
        if ncons / t <= opts.gap_tol {
            break;
        }
        t *= 10.0;
    }
    Ok(v)
}

/// Minimise an [`Nlp`] with convex constraints from an arbitrary start.
pub fn barrier_minimize<P: Nlp>(prob: &P, start: &[f64], opts: &BarrierOptions) -> Result<NlpPoint> {
    let n = prob.dim();
    let mut scratch = vec![0.0; n];
    let max_h = |v: &[f64], scratch: &mut [f64]| -> Result<f64> {
        let mut m = f64::NEG_INFINITY;
        for k in 0..prob.n_constraints() {
            m = m.max(prob.constraint(k, v, scratch).map_err(eval_err)?);
        }
        Ok(m)
    };
    let interior_margin = 1e-9;
    let mut v = DVector::from_column_slice(start);
    let mut relaxation = 0.0;
    if prob.n_constraints() > 0 && max_h(v.as_slice(), &mut scratch)? >= -interior_margin {
        let s0 = max_h(v.as_slice(), &mut scratch)? + 1.0;
        let mut aug = v.as_slice().to_vec();
        aug.push(s0);
        let p1 = Shifted { inner: prob, shift: 0.0, phase_one: true };
        let sol = barrier_path(&p1, DVector::from_vec(aug), opts, Some(-1e-3))?;
        v = DVector::from_column_slice(&sol.as_slice()[..n]);
        let smax = max_h(v.as_slice(), &mut scratch)?;
        if smax >= -interior_margin {
            if smax > 1e-7 {
                return Err(Error::EmptyControlSet);
            }
            // no interior: relax just enough to create one
            relaxation = smax.max(0.0) + 1e-9;
        }
    }
    let p2 = Shifted { inner: prob, shift: relaxation, phase_one: false };
    let v = barrier_path(&p2, v, opts, None)?;
    let objective = prob.objective(v.as_slice(), &mut scratch).map_err(eval_err)?;
    let max_constraint =
        if prob.n_constraints() == 0 { f64::NEG_INFINITY } else { max_h(v.as_slice(), &mut scratch)? };
    Ok(NlpPoint { v, objective, max_constraint, relaxation })
}

/// Lawson-Hanson NNLS: `min |A x - b|` subject to `x >= 0`. Returns the
/// solution and the residual norm.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let (m, n) = a.shape();
    assert_eq!(m, b.len());
    let mut x = DVector::zeros(n);
    if n == 0 {
        return (x, b.norm());
    }
    let tol = 1e-12 * a.amax().max(1.0) * b.amax().max(1.0) * (m.max(n) as f64);
    let mut passive = vec![false; n];
    let lstsq = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let mut z = DVector::zeros(n);
        if idx.is_empty() {
            return z;
        }
        let a_p = a.select_columns(&idx);
        let svd = a_p.svd(true, true);
        let eps = 1e-13 * svd.singular_values.max().max(1e-300);
        if let Ok(sol) = svd.solve(b, eps) {
            for (k, &j) in idx.iter().enumerate() {
                z[j] = sol[k];
            }
        }
        z
    };
    for _ in 0..3 * n + 10 {
        let w = a.transpose() * (b - a * &x);
        let cand = (0..n).filter(|&j| !passive[j]).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        match cand {
            Some(j) if w[j] > tol => passive[j] = true,
            _ => break,
        }
        for _ in 0..3 * n + 10 {
            let z = lstsq(&passive);
            if (0..n).filter(|&j| passive[j]).all(|j| z[j] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for j in 0..n {
                if passive[j] && z[j] <= 0.0 {
                    alpha = alpha.min(x[j] / (x[j] - z[j]));
                }
            }
            x += (z - &x) * alpha;
            for j in 0..n {
                if passive[j] && x[j].abs() <= tol {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
        }
    }
    x.iter_mut().for_each(|xi| *xi = xi.max(0.0));
    let res = (a * &x - b).norm();
    (x, res)
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Nelder-Mead with standard coefficients. Stops after `max_evals`
/// evaluations, when the simplex collapses below `x_tol`, or as soon as a
/// value `<= target` is seen.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    max_evals: usize,
    x_tol: f64,
    target: f64,
) -> NelderMeadResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    if v0 <= target || n == 0 {
        return NelderMeadResult { x: x0.to_vec(), value: v0, evaluations: evals };
    }
    for i in 0..n {
        if evals >= max_evals {
            break;
        }
        let mut x = x0.to_vec();
        x[i] += step[i];
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
        if v <= target {
            let (x, value) = simplex.pop().unwrap();
            return NelderMeadResult { x, value, evaluations: evals };
        }
    }
    if simplex.len() < n + 1 {
        let best = simplex.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        return NelderMeadResult { x: best.0, value: best.1, evaluations: evals };
    }
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 <= target {
            break;
        }
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if size < x_tol {
            break;
        }
        let centroid: Vec<f64> =
            (0..n).map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].clone();
        let point = |coef: f64| -> Vec<f64> {
            centroid.iter().zip(&worst.0).map(|(c, w)| c + coef * (w - c)).collect()
        };
        let xr = point(-1.0);
        let vr = eval(&xr, &mut evals);
        if vr < simplex[0].1 {
            let xe = point(-2.0);
            let ve = eval(&xe, &mut evals);
            simplex[n] = if ve < vr { (xe, ve) } else { (xr, vr) };
        } else if vr < simplex[n - 1].1 {
            simplex[n] = (xr, vr);
        } else {
            let (xc, vc) = if vr < worst.1 {
                let xc = point(-0.5);
                let vc = eval(&xc, &mut evals);
                (xc, vc)
            } else {
                let xc = point(0.5);
                let vc = eval(&xc, &mut evals);
                (xc, vc)
            };
            if vc < worst.1.min(vr) {
                simplex[n] = (xc, vc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    if evals >= max_evals {
                        break;
                    }
                    let x: Vec<f64> = best.iter().zip(&item.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    let v = eval(&x, &mut evals);
                    *item = (x, v);
                }
            }
        }
    }
    let best = simplex.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    NelderMeadResult { x: best.0, value: best.1, evaluations: evals }
}
