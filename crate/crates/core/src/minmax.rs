//! `g~(x) = min_{u in U} max_i g_i(x, u)`, its minimisers and a finite
//! generator set of its generalised gradient.
//!
//! Control-affine systems go through an exact epigraph LP in `(u, t)`; the
//! optimal face is enumerated by its vertices, so a whole interval of
//! minimisers is reported through its endpoints. Other systems use a
//! multistart barrier NLP followed by a search for the extreme points of the
//! minimiser set.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{EvalError, KinkMode};
use crate::model::SystemDefinition;
use crate::optim::{barrier_minimize, BarrierOptions, Nlp, Polyhedron};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMaxOptions {
    pub solver_tol: f64,
    pub feas_tol: f64,
    pub cluster_tol: f64,
    pub vertex_tol: f64,
    pub starts: usize,
    pub rng_seed: u64,
    /// Use the NLP path even when the LP path applies.
    pub force_nlp: bool,
}

impl Default for MinMaxOptions {
    fn default() -> Self {
        MinMaxOptions {
            solver_tol: 1e-9,
            feas_tol: 1e-9,
            cluster_tol: 1e-6,
            vertex_tol: 1e-8,
            starts: 8,
            rng_seed: 0x5eed,
            force_nlp: false,
        }
    }
}

pub const DEFAULT_CLASSIFY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxResult {
    pub value: f64,
    pub minimizers: Vec<DVector<f64>>,
    /// `argmax_i g_i(x, u*)` for each minimiser, same order.
    pub active_branches: Vec<Vec<usize>>,
    pub subdiff_vertices: Vec<DVector<f64>>,
    pub differentiable: bool,
    /// A constraint hit an abs/min/max kink at some minimiser.
    pub kink_hit: bool,
    /// The NLP path found a minimiser only after the multistart phase, so the
    /// generator set may be incomplete.
    pub late_minimizer: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointClass {
    GMinus,
    GZero,
    OutsideG,
}

fn push_unique(list: &mut Vec<DVector<f64>>, v: DVector<f64>, tol: f64) -> bool {
    if list.iter().any(|w| (w - &v).amax() <= tol) {
        return false;
    }
    list.push(v);
    true
}

/// Builds branches and generators from a set of minimisers.
fn finish(
    sys: &SystemDefinition,
    x: &[f64],
    value: f64,
    minimizers: Vec<DVector<f64>>,
    branch_tol: f64,
    opts: &MinMaxOptions,
    late_minimizer: bool,
) -> Result<MinMaxResult> {
    let mut active_branches = Vec::with_capacity(minimizers.len());
    let mut subdiff_vertices = Vec::new();
    let mut kink_hit = false;
    for u in &minimizers {
        let ce = sys.eval_constraints(x, u.as_slice(), opts.feas_tol)?;
        kink_hit |= ce.kink_hit;
        let gmax = ce.g_values.max();
        let branches: Vec<usize> =
            (0..sys.p()).filter(|&i| ce.g_values[i] >= gmax - branch_tol.max(1e-12 * gmax.abs())).collect();
        for &i in &branches {
            push_unique(&mut subdiff_vertices, ce.g_x.row(i).transpose(), opts.vertex_tol);
        }
        active_branches.push(branches);
    }
    let differentiable = subdiff_vertices.len() == 1 && !kink_hit;
    Ok(MinMaxResult { value, minimizers, active_branches, subdiff_vertices, differentiable, kink_hit, late_minimizer })
}

fn g_tilde_lp(sys: &SystemDefinition, x: &[f64], opts: &MinMaxOptions) -> Result<MinMaxResult> {
    let slice = sys.affine_slice(x)?;
    let (p, r, m) = (sys.p(), sys.r(), sys.m());
    // rows: g0_i + g_u,i u - t <= 0 ; gamma0_j + gamma_u,j u <= 0
    let mut a = DMatrix::zeros(p + r, m + 1);
    let mut b = DVector::zeros(p + r);
    for i in 0..p {
        for k in 0..m {
            a[(i, k)] = slice.g_u[(i, k)];
        }
        a[(i, m)] = -1.0;
        b[i] = -slice.g0[i];
    }
    for j in 0..r {
        for k in 0..m {
            a[(p + j, k)] = slice.gamma_u[(j, k)];
        }
        b[p + j] = -slice.gamma0[j];
    }
    let mut c = DVector::zeros(m + 1);
    c[m] = 1.0;
    let lp = match Polyhedron::new(a, b).minimize_linear(&c, opts.feas_tol, opts.solver_tol) {
        Err(Error::EmptyControlSet) => return Err(Error::EmptyInputSet),
        other => other?,
    };
    let mut minimizers = Vec::new();
    for v in &lp.optimal {
        push_unique(&mut minimizers, v.point.rows(0, m).into_owned(), opts.cluster_tol);
    }
    // the LP optimum equals max_i g_i at the minimiser
    let value = lp.value;
    finish(sys, x, value, minimizers, opts.solver_tol, opts, false)
}

/// Epigraph problem over `(u, t)`, or a face search `min s u_k` subject to
/// `g_i <= level` when `face` is set.
struct Epigraph<'a> {
    sys: &'a SystemDefinition,
    x: &'a [f64],
    face: Option<(usize, f64, f64)>,
}

impl Epigraph<'_> {
    fn eval_point(&self, u: &[f64]) -> Vec<f64> {
        let mut p = self.x.to_vec();
        p.extend_from_slice(u);
        p
    }
}

impl Nlp for Epigraph<'_> {
    fn dim(&self) -> usize {
        self.sys.m() + usize::from(self.face.is_none())
    }
    fn n_constraints(&self) -> usize {
        self.sys.p() + self.sys.r()
    }
    fn objective(&self, v: &[f64], grad: &mut [f64]) -> std::result::Result<f64, EvalError> {
        grad.iter_mut().for_each(|g| *g = 0.0);
        match self.face {
            None => {
                let m = self.sys.m();
                grad[m] = 1.0;
                Ok(v[m])
            }
            Some((k, sign, _)) => {
                grad[k] = sign;
                Ok(sign * v[k])
            }
        }
    }
    fn constraint(&self, k: usize, v: &[f64], grad: &mut [f64]) -> std::result::Result<f64, EvalError> {
        let (n, m, p) = (self.sys.n(), self.sys.m(), self.sys.p());
        let point = self.eval_point(&v[..m]);
        let expr = if k < p { &self.sys.g_exprs()[k] } else { &self.sys.gamma_exprs()[k - p] };
        let d = expr.eval_with_gradient(&point, KinkMode::OneSided)?;
        grad[..m].copy_from_slice(&d.partials[n..]);
        if k >= p {
            if self.face.is_none() {
                grad[m] = 0.0;
            }
            return Ok(d.value);
        }
        match self.face {
            None => {
                grad[m] = -1.0;
                Ok(d.value - v[m])
            }
            Some((_, _, level)) => Ok(d.value - level),
        }
    }
}

/// Start points: hull centre, hull corners, then uniform samples.
pub(crate) fn control_starts(sys: &SystemDefinition, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let hull = sys.control_hull();
    let m = sys.m();
    let mut starts = vec![hull.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect::<Vec<_>>()];
    let corners = if m < 16 { 1usize << m } else { usize::MAX };
    let mut c = 0usize;
    while starts.len() < count && c < corners {
        // pull corners slightly inside so the barrier starts near them
        starts.push(
            (0..m)
                .map(|k| {
                    let (lo, hi) = hull[k];
                    let mid = 0.5 * (lo + hi);
                    let end = if (c >> k) & 1 == 1 { hi } else { lo };
                    mid + 0.95 * (end - mid)
                })
                .collect(),
        );
        c += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while starts.len() < count {
        starts.push(hull.iter().map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo }).collect());
    }
    starts
}

fn g_tilde_nlp(sys: &SystemDefinition, x: &[f64], opts: &MinMaxOptions) -> Result<MinMaxResult> {
    let m = sys.m();
    let bopts = BarrierOptions::default();
    let prob = Epigraph { sys, x, face: None };
    let mut sols: Vec<(f64, DVector<f64>, usize)> = Vec::new();
    let starts = control_starts(sys, opts.starts.max(1), opts.rng_seed);
    for (idx, s) in starts.iter().enumerate() {
        let gmax = sys.eval_g(x, s)?.max();
        let mut start = s.clone();
        start.push(gmax + 1.0);
        match barrier_minimize(&prob, &start, &bopts) {
            Ok(sol) => {
                let u = sol.v.rows(0, m).into_owned();
                let val = sys.eval_g(x, u.as_slice())?.max();
                sols.push((val, u, idx));
            }
            Err(Error::EmptyControlSet) => return Err(Error::EmptyInputSet),
            Err(Error::NoConvergence(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if sols.is_empty() {
        return Err(Error::NoConvergence(format!("all {} epigraph starts failed", starts.len())));
    }
    let value = sols.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let band = 1e-7 * value.abs().max(1.0);
    let mut minimizers: Vec<DVector<f64>> = Vec::new();
    let mut last_new = 0;
    for (val, u, idx) in &sols {
        if *val <= value + band && push_unique(&mut minimizers, u.clone(), opts.cluster_tol) {
            last_new = *idx;
        }
    }
    let mut late = starts.len() > 1 && last_new == starts.len() - 1 && minimizers.len() > 1;
    // extreme points of the minimiser set
    let level = value + band;
    let centre = minimizers[0].as_slice().to_vec();
    for k in 0..m {
        for sign in [1.0, -1.0] {
            let face = Epigraph { sys, x, face: Some((k, sign, level)) };
            if let Ok(sol) = barrier_minimize(&face, &centre, &bopts) {
                let val = sys.eval_g(x, sol.v.as_slice())?.max();
                if val <= value + 2.0 * band && push_unique(&mut minimizers, sol.v.clone(), opts.cluster_tol) {
                    late = true;
                }
            }
        }
    }
    finish(sys, x, value, minimizers, 10.0 * band, opts, late)
}

pub fn g_tilde(sys: &SystemDefinition, x: &[f64], opts: &MinMaxOptions) -> Result<MinMaxResult> {
    if x.len() != sys.n() {
        return Err(Error::Dimension(format!("expected state of length {}, got {}", sys.n(), x.len())));
    }
    if sys.is_control_affine() && !opts.force_nlp {
        g_tilde_lp(sys, x, opts)
    } else {
        g_tilde_nlp(sys, x, opts)
    }
}

/// Generators of the generalised gradient and the differentiability flag.
pub fn g_tilde_gradient(
    sys: &SystemDefinition,
    x: &[f64],
    opts: &MinMaxOptions,
) -> Result<(Vec<DVector<f64>>, bool)> {
    let r = g_tilde(sys, x, opts)?;
    Ok((r.subdiff_vertices, r.differentiable))
}

pub fn classify_value(value: f64, tol: f64) -> PointClass {
    if value < -tol {
        PointClass::GMinus
    } else if value <= tol {
        PointClass::GZero
    } else {
        PointClass::OutsideG
    }
}

pub fn classify_point(sys: &SystemDefinition, x: &[f64], tol: f64) -> Result<PointClass> {
    Ok(classify_value(g_tilde(sys, x, &MinMaxOptions::default())?.value, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{spring1, spring2};
    use nalgebra::dvector;

    #[test]
    fn spring1_values() {
        let s = spring1();
        let r = g_tilde(&s, &[0.3, 0.4], &MinMaxOptions::default()).unwrap();
        assert!((r.value + 0.6).abs() < 1e-12);
        assert_eq!(r.minimizers, vec![dvector![1.0]]);
        assert_eq!(r.subdiff_vertices, vec![dvector![0.0, 1.0]]);
        assert!(r.differentiable);
        assert_eq!(classify_point(&s, &[0.0, 0.9], 1e-6).unwrap(), PointClass::GMinus);
        assert_eq!(classify_point(&s, &[-0.5, 1.0], 1e-6).unwrap(), PointClass::GZero);
        assert_eq!(classify_point(&s, &[0.0, 1.2], 1e-6).unwrap(), PointClass::OutsideG);
    }

    #[test]
    fn spring2_values_and_kinks() {
        let s = spring2();
        let o = MinMaxOptions::default();
        let r = g_tilde(&s, &[0.0, 0.5], &o).unwrap();
        assert!((r.value + 0.25).abs() < 1e-12);
        assert!(r.differentiable);
        assert!(r.subdiff_vertices[0].amax() < 1e-12);
        let r = g_tilde(&s, &[0.7, 0.0], &o).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.minimizers.len(), 2);
        assert!(!r.differentiable);
        let (verts, diff) = g_tilde_gradient(&s, &[0.2, 0.0], &o).unwrap();
        assert!(!diff);
        assert_eq!(verts.len(), 2);
        assert!(verts.contains(&dvector![0.0, 1.0]) && verts.contains(&dvector![0.0, -1.0]));
    }

    #[test]
    fn nlp_path_agrees_with_lp() {
        let o = MinMaxOptions { force_nlp: true, ..Default::default() };
        for s in [spring1(), spring2()] {
            for x in [[0.3, 0.4], [0.0, -0.7], [-0.2, 0.95]] {
                let lp = g_tilde(&s, &x, &MinMaxOptions::default()).unwrap();
                let nlp = g_tilde(&s, &x, &o).unwrap();
                assert!((lp.value - nlp.value).abs() < 1e-8, "{x:?}: {} vs {}", lp.value, nlp.value);
                assert_eq!(lp.differentiable, nlp.differentiable);
            }
        }
        let s = spring2();
        let nlp = g_tilde(&s, &[0.2, 0.0], &o).unwrap();
        assert!(nlp.value.abs() < 1e-8);
        assert!(!nlp.differentiable);
        // interior minimisers contribute non-extreme generators
        for e in [dvector![0.0, 1.0], dvector![0.0, -1.0]] {
            assert!(nlp.subdiff_vertices.iter().any(|v| (v - &e).amax() < 1e-6));
        }
    }

    #[test]
    fn genuinely_nonlinear_constraint() {
        // g = x - u^2 on u in [-1, 1]: minimisers u = +-1, value x - 1
        let s = crate::model::SystemDefinition::from_strings(
            "quad",
            1,
            1,
            &["u"],
            &["x - u^2"],
            &[],
            Some(&[(-1.0, 1.0)]),
        )
        .unwrap();
        assert!(!s.is_control_affine());
        let r = g_tilde(&s, &[0.25], &MinMaxOptions::default()).unwrap();
        assert!((r.value + 0.75).abs() < 1e-7);
        assert_eq!(r.minimizers.len(), 2);
        assert_eq!(r.subdiff_vertices.len(), 1);
        assert!(r.differentiable);
    }

    #[test]
    fn classification_thresholds() {
        assert_eq!(classify_value(-2e-6, 1e-6), PointClass::GMinus);
        assert_eq!(classify_value(1e-6, 1e-6), PointClass::GZero);
        assert_eq!(classify_value(2e-6, 1e-6), PointClass::OutsideG);
    }
}
