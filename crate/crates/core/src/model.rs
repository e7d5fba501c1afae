//! Constrained control systems `x' = f(x, u)` with mixed constraints
//! `g(x, u) <= 0` and input constraints `gamma(u) <= 0`.
//!
//! Expressions are evaluated on the concatenated point `[x1..xn, u1..um]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{parse_expression, ExpressionAst, KinkMode, Node, Symbols};
use crate::optim::{barrier_minimize, BarrierOptions, Nlp, Polyhedron};

pub const DEFAULT_ACTIVE_TOL: f64 = 1e-8;
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Symbol table `x1..xn, u1..um`, with aliases `x` and `u` when a dimension is one.
pub fn standard_symbols(n: usize, m: usize) -> Symbols {
    let names: Vec<String> =
        (1..=n).map(|i| format!("x{i}")).chain((1..=m).map(|j| format!("u{j}"))).collect();
    let mut s = Symbols::new(&names).expect("generated names are valid");
    if n == 1 {
        s = s.with_alias("x", 0);
    }
    if m == 1 {
        s = s.with_alias("u", n);
    }
    s
}

#[derive(Debug, Clone)]
pub struct SystemDefinition {
    name: String,
    n: usize,
    m: usize,
    symbols: Symbols,
    f: Vec<ExpressionAst>,
    g: Vec<ExpressionAst>,
    gamma: Vec<ExpressionAst>,
    control_affine: bool,
    /// Bounding box of `U`, used to seed searches.
    control_hull: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    pub f: DVector<f64>,
    pub fx: DMatrix<f64>,
    pub fu: DMatrix<f64>,
    pub kink_hit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintEvaluation {
    pub g_values: DVector<f64>,
    pub g_x: DMatrix<f64>,
    pub g_u: DMatrix<f64>,
    pub gamma_values: DVector<f64>,
    pub gamma_u: DMatrix<f64>,
    pub active_g: Vec<usize>,
    pub active_gamma: Vec<usize>,
    pub kink_hit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Regularity {
    pub regular: bool,
    pub rank: usize,
    pub rows: usize,
}

/// Data of a system affine in `u` at a fixed state:
/// `f = f0 + fu u`, `g = g0 + g_u u`, `gamma = gamma0 + gamma_u u`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSlice {
    pub f0: DVector<f64>,
    pub fu: DMatrix<f64>,
    pub g0: DVector<f64>,
    pub g_u: DMatrix<f64>,
    pub gamma0: DVector<f64>,
    pub gamma_u: DMatrix<f64>,
}

impl AffineSlice {
    /// `U(x)` as a polyhedron `[g_u; gamma_u] u <= -[g0; gamma0]`.
    pub fn admissible_controls(&self) -> Polyhedron {
        let (p, r, m) = (self.g_u.nrows(), self.gamma_u.nrows(), self.g_u.ncols());
        let mut a = DMatrix::zeros(p + r, m);
        a.rows_mut(0, p).copy_from(&self.g_u);
        a.rows_mut(p, r).copy_from(&self.gamma_u);
        let mut b = DVector::zeros(p + r);
        b.rows_mut(0, p).copy_from(&(-&self.g0));
        b.rows_mut(p, r).copy_from(&(-&self.gamma0));
        Polyhedron::new(a, b)
    }

    pub fn input_set(&self) -> Polyhedron {
        Polyhedron::new(self.gamma_u.clone(), -&self.gamma0)
    }
}

fn parse_all(sources: &[&str], symbols: &Symbols) -> Result<Vec<ExpressionAst>> {
    sources.iter().map(|s| parse_expression(s, symbols).map_err(Error::from)).collect()
}

/// Input-constraint feasibility problem used for the load-time check on
/// non-affine `gamma`.
struct InputFeasibility<'a> {
    sys: &'a SystemDefinition,
    objective_coord: Option<(usize, f64)>,
}

impl Nlp for InputFeasibility<'_> {
    fn dim(&self) -> usize {
        self.sys.m
    }
    fn n_constraints(&self) -> usize {
        self.sys.gamma.len()
    }
    fn objective(&self, v: &[f64], grad: &mut [f64]) -> std::result::Result<f64, crate::expr::EvalError> {
        grad.iter_mut().for_each(|g| *g = 0.0);
        match self.objective_coord {
            Some((k, sign)) => {
                grad[k] = sign;
                Ok(sign * v[k])
            }
            None => Ok(0.0),
        }
    }
    fn constraint(&self, k: usize, v: &[f64], grad: &mut [f64]) -> std::result::Result<f64, crate::expr::EvalError> {
        let mut point = vec![0.0; self.sys.n];
        point.extend_from_slice(v);
        let d = self.sys.gamma[k].eval_with_gradient(&point, KinkMode::OneSided)?;
        grad.copy_from_slice(&d.partials[self.sys.n..]);
        Ok(d.value)
    }
}

impl SystemDefinition {
    /// Parses a system from expression strings. `control_box` appends the
    /// rows `u_k - hi_k` and `lo_k - u_k` to `gamma`.
    pub fn from_strings(
        name: &str,
        n: usize,
        m: usize,
        f: &[&str],
        g: &[&str],
        gamma: &[&str],
        control_box: Option<&[(f64, f64)]>,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidSystem("state and control dimensions must be at least 1".into()));
        }
        let symbols = standard_symbols(n, m);
        let f = parse_all(f, &symbols)?;
        let g = parse_all(g, &symbols)?;
        let gamma = parse_all(gamma, &symbols)?;
        Self::assemble(name, n, m, symbols, f, g, gamma, control_box)
    }

    /// Builds a system from expression trees over [`standard_symbols`].
    pub fn from_nodes(
        name: &str,
        n: usize,
        m: usize,
        f: Vec<Node>,
        g: Vec<Node>,
        gamma: Vec<Node>,
        control_box: Option<&[(f64, f64)]>,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidSystem("state and control dimensions must be at least 1".into()));
        }
        let symbols = standard_symbols(n, m);
        let wrap = |v: Vec<Node>| v.into_iter().map(|e| ExpressionAst::new(e, symbols.clone())).collect();
        let (f, g, gamma) = (wrap(f), wrap(g), wrap(gamma));
        Self::assemble(name, n, m, symbols, f, g, gamma, control_box)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        name: &str,
        n: usize,
        m: usize,
        symbols: Symbols,
        f: Vec<ExpressionAst>,
        g: Vec<ExpressionAst>,
        mut gamma: Vec<ExpressionAst>,
        control_box: Option<&[(f64, f64)]>,
    ) -> Result<Self> {
        if f.len() != n {
            return Err(Error::InvalidSystem(format!("expected {n} dynamics components, got {}", f.len())));
        }
        if g.is_empty() {
            return Err(Error::InvalidSystem("at least one mixed constraint is required".into()));
        }
        if let Some(bounds) = control_box {
            if bounds.len() != m {
                return Err(Error::InvalidSystem(format!("control box has {} entries, expected {m}", bounds.len())));
            }
            for (k, &(lo, hi)) in bounds.iter().enumerate() {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::InvalidSystem(format!("control box entry {} is not an interval", k + 1)));
                }
                let u = Node::var(n + k);
                gamma.push(ExpressionAst::new(u.clone() - hi, symbols.clone()));
                gamma.push(ExpressionAst::new(lo - u, symbols.clone()));
            }
        }
        if gamma.is_empty() {
            return Err(Error::InvalidSystem("at least one input constraint is required".into()));
        }
        for (j, e) in gamma.iter().enumerate() {
            if let Some(i) = (0..n).find(|&i| e.depends_on(i)) {
                return Err(Error::InvalidSystem(format!(
                    "input constraint {} depends on state {}",
                    j + 1,
                    symbols.name(i)
                )));
            }
        }
        let is_control = |i: usize| i >= n;
        let control_affine = f.iter().chain(&g).chain(&gamma).all(|e| e.is_affine_in(is_control));
        let mut sys = SystemDefinition {
            name: name.to_string(),
            n,
            m,
            symbols,
            f,
            g,
            gamma,
            control_affine,
            control_hull: Vec::new(),
        };
        sys.control_hull = sys.compute_control_hull()?;
        Ok(sys)
    }

    /// Verifies `U` is non-empty and returns its bounding box.
    fn compute_control_hull(&self) -> Result<Vec<(f64, f64)>> {
        if self.gamma.iter().all(|e| e.is_affine_in(|i| i >= self.n)) {
            let slice = self.affine_slice(&vec![0.0; self.n])?;
            let verts = match slice.input_set().vertices(1e-9) {
                Ok(v) => v,
                Err(Error::EmptyControlSet) => return Err(Error::EmptyInputSet),
                Err(e) => return Err(e),
            };
            if verts.is_empty() {
                let probe = InputFeasibility { sys: self, objective_coord: None };
                return match barrier_minimize(&probe, &vec![0.0; self.m], &BarrierOptions::default()) {
                    Err(Error::EmptyControlSet) => Err(Error::EmptyInputSet),
                    _ => Err(Error::InvalidSystem("input set U has no vertex (unbounded)".into())),
                };
            }
            return Ok((0..self.m)
                .map(|k| {
                    let lo = verts.iter().map(|v| v.point[k]).fold(f64::INFINITY, f64::min);
                    let hi = verts.iter().map(|v| v.point[k]).fold(f64::NEG_INFINITY, f64::max);
                    (lo, hi)
                })
                .collect());
        }
        let opts = BarrierOptions::default();
        let start = vec![0.0; self.m];
        match barrier_minimize(&InputFeasibility { sys: self, objective_coord: None }, &start, &opts) {
            Err(Error::EmptyControlSet) => return Err(Error::EmptyInputSet),
            Err(e) => return Err(e),
            Ok(_) => {}
        }
        (0..self.m)
            .map(|k| {
                let lo = barrier_minimize(
                    &InputFeasibility { sys: self, objective_coord: Some((k, 1.0)) },
                    &start,
                    &opts,
                )?;
                let hi = barrier_minimize(
                    &InputFeasibility { sys: self, objective_coord: Some((k, -1.0)) },
                    &start,
                    &opts,
                )?;
                Ok((lo.v[k], hi.v[k]))
            })
            .collect()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.g.len()
    }

    pub fn r(&self) -> usize {
        self.gamma.len()
    }

    pub fn symbols(&self) -> &Symbols {
        &self.symbols
    }

    pub fn f_exprs(&self) -> &[ExpressionAst] {
        &self.f
    }

    pub fn g_exprs(&self) -> &[ExpressionAst] {
        &self.g
    }

    pub fn gamma_exprs(&self) -> &[ExpressionAst] {
        &self.gamma
    }

    /// `f`, `g` and `gamma` are all affine in the control.
    pub fn is_control_affine(&self) -> bool {
        self.control_affine
    }

    /// Some constraint uses abs/min/max/division.
    pub fn has_nonsmooth_constraints(&self) -> bool {
        self.g.iter().chain(&self.gamma).any(|e| e.is_potentially_nonsmooth())
    }

    /// Bounding box of the input set `U`.
    pub fn control_hull(&self) -> &[(f64, f64)] {
        &self.control_hull
    }

    fn point(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n || u.len() != self.m {
            return Err(Error::Dimension(format!(
                "expected state of length {} and control of length {}, got {} and {}",
                self.n,
                self.m,
                x.len(),
                u.len()
            )));
        }
        let mut p = Vec::with_capacity(self.n + self.m);
        p.extend_from_slice(x);
        p.extend_from_slice(u);
        Ok(p)
    }

    /// Values and Jacobian rows of a family of expressions at `point`.
    fn jacobian(
        &self,
        exprs: &[ExpressionAst],
        point: &[f64],
        label: &str,
    ) -> Result<(DVector<f64>, DMatrix<f64>, bool)> {
        let k = exprs.len();
        let mut values = DVector::zeros(k);
        let mut jac = DMatrix::zeros(k, self.n + self.m);
        let mut kink = false;
        for (i, e) in exprs.iter().enumerate() {
            let d = e
                .eval_with_gradient(point, KinkMode::OneSided)
                .map_err(|err| Error::eval(format!("{label}[{}]", i + 1), err))?;
            values[i] = d.value;
            for (c, v) in d.partials.iter().enumerate() {
                jac[(i, c)] = *v;
            }
            kink |= d.nonsmooth_hit;
        }
        Ok((values, jac, kink))
    }

    pub fn eval_dynamics(&self, x: &[f64], u: &[f64]) -> Result<Dynamics> {
        let point = self.point(x, u)?;
        let (f, jac, kink_hit) = self.jacobian(&self.f, &point, "f")?;
        Ok(Dynamics {
            f,
            fx: jac.columns(0, self.n).into_owned(),
            fu: jac.columns(self.n, self.m).into_owned(),
            kink_hit,
        })
    }

    /// `f(x, u)` only.
    pub fn eval_f(&self, x: &[f64], u: &[f64]) -> Result<DVector<f64>> {
        let point = self.point(x, u)?;
        let mut out = DVector::zeros(self.n);
        for (i, e) in self.f.iter().enumerate() {
            out[i] = e.eval(&point).map_err(|err| Error::eval(format!("f[{}]", i + 1), err))?;
        }
        Ok(out)
    }

    /// `g(x, u)` only.
    pub fn eval_g(&self, x: &[f64], u: &[f64]) -> Result<DVector<f64>> {
        let point = self.point(x, u)?;
        let mut out = DVector::zeros(self.p());
        for (i, e) in self.g.iter().enumerate() {
            out[i] = e.eval(&point).map_err(|err| Error::eval(format!("g[{}]", i + 1), err))?;
        }
        Ok(out)
    }

    /// `gamma(u)` only.
    pub fn eval_gamma(&self, u: &[f64]) -> Result<DVector<f64>> {
        let x = vec![0.0; self.n];
        let point = self.point(&x, u)?;
        let mut out = DVector::zeros(self.r());
        for (j, e) in self.gamma.iter().enumerate() {
            out[j] = e.eval(&point).map_err(|err| Error::eval(format!("gamma[{}]", j + 1), err))?;
        }
        Ok(out)
    }

    pub fn eval_constraints(&self, x: &[f64], u: &[f64], active_tol: f64) -> Result<ConstraintEvaluation> {
        let point = self.point(x, u)?;
        let (g_values, gj, k1) = self.jacobian(&self.g, &point, "g")?;
        let (gamma_values, cj, k2) = self.jacobian(&self.gamma, &point, "gamma")?;
        let active = |v: &DVector<f64>| (0..v.len()).filter(|&i| v[i].abs() <= active_tol).collect();
        Ok(ConstraintEvaluation {
            active_g: active(&g_values),
            active_gamma: active(&gamma_values),
            g_x: gj.columns(0, self.n).into_owned(),
            g_u: gj.columns(self.n, self.m).into_owned(),
            gamma_u: cj.columns(self.n, self.m).into_owned(),
            g_values,
            gamma_values,
            kink_hit: k1 || k2,
        })
    }

    /// `u` lies in `U(x)` up to `tol`.
    pub fn control_feasible(&self, x: &[f64], u: &[f64], tol: f64) -> Result<bool> {
        let g = self.eval_g(x, u)?;
        let gamma = self.eval_gamma(u)?;
        Ok(g.iter().chain(gamma.iter()).all(|&v| v <= tol))
    }

    /// Rank of the stacked control gradients of the active constraints.
    pub fn regularity_check(&self, x: &[f64], u: &[f64], active_tol: f64, rank_tol: f64) -> Result<Regularity> {
        let ce = self.eval_constraints(x, u, active_tol)?;
        Ok(regularity_of(&ce, rank_tol))
    }

    /// Affine decomposition in `u` at state `x`. Only meaningful when
    /// [`is_control_affine`](Self::is_control_affine) holds (or, for the
    /// `gamma` part, when `gamma` is affine).
    pub fn affine_slice(&self, x: &[f64]) -> Result<AffineSlice> {
        let u0 = vec![0.0; self.m];
        let point = self.point(x, &u0)?;
        let (f0, fj, _) = self.jacobian(&self.f, &point, "f")?;
        let (g0, gj, _) = self.jacobian(&self.g, &point, "g")?;
        let (gamma0, cj, _) = self.jacobian(&self.gamma, &point, "gamma")?;
        Ok(AffineSlice {
            f0,
            fu: fj.columns(self.n, self.m).into_owned(),
            g0,
            g_u: gj.columns(self.n, self.m).into_owned(),
            gamma0,
            gamma_u: cj.columns(self.n, self.m).into_owned(),
        })
    }
}

/// Rank test on an already evaluated constraint set.
pub fn regularity_of(ce: &ConstraintEvaluation, rank_tol: f64) -> Regularity {
    let rows = ce.active_g.len() + ce.active_gamma.len();
    if rows == 0 {
        return Regularity { regular: true, rank: 0, rows: 0 };
    }
    let m = ce.g_u.ncols();
    let mut stack = DMatrix::zeros(rows, m);
    for (k, &i) in ce.active_g.iter().enumerate() {
        stack.row_mut(k).copy_from(&ce.g_u.row(i));
    }
    for (k, &j) in ce.active_gamma.iter().enumerate() {
        stack.row_mut(ce.active_g.len() + k).copy_from(&ce.gamma_u.row(j));
    }
    let sv = stack.svd(false, false).singular_values;
    let smax = sv.max();
    let rank = if smax <= 0.0 { 0 } else { sv.iter().filter(|&&s| s > rank_tol * smax).count() };
    Regularity { regular: rank == rows, rank, rows }
}

/// Mass-spring with velocity-bounded input: `x1' = x2`,
/// `x2' = -2 x1 - 2 x2 + u`, `x2 - u <= 0`, `|u| <= 1`.
pub fn spring1() -> SystemDefinition {
    let (x1, x2, u) = (Node::var(0), Node::var(1), Node::var(2));
    SystemDefinition::from_nodes(
        "spring1",
        2,
        1,
        vec![x2.clone(), -2.0 * x1 - 2.0 * x2.clone() + u.clone()],
        vec![x2 - u],
        vec![],
        Some(&[(-1.0, 1.0)]),
    )
    .expect("built-in system is valid")
}

/// Same dynamics with the product constraint `x2 (x2 - u) <= 0`.
pub fn spring2() -> SystemDefinition {
    let (x1, x2, u) = (Node::var(0), Node::var(1), Node::var(2));
    SystemDefinition::from_nodes(
        "spring2",
        2,
        1,
        vec![x2.clone(), -2.0 * x1 - 2.0 * x2.clone() + u.clone()],
        vec![x2.clone() * (x2 - u)],
        vec![],
        Some(&[(-1.0, 1.0)]),
    )
    .expect("built-in system is valid")
}

/// Looks up a built-in system by name.
pub fn builtin(name: &str) -> Option<SystemDefinition> {
    match name {
        "spring1" => Some(spring1()),
        "spring2" => Some(spring2()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn spring1_dynamics() {
        let s = spring1();
        let d = s.eval_dynamics(&[0.0, 1.0], &[1.0]).unwrap();
        assert_eq!(d.f, dvector![1.0, -1.0]);
        assert_eq!(d.fx, dmatrix![0.0, 1.0; -2.0, -2.0]);
        assert_eq!(d.fu, dmatrix![0.0; 1.0]);
        let eq = s.eval_dynamics(&[0.5, 0.0], &[1.0]).unwrap();
        assert_eq!(eq.f, dvector![0.0, 0.0]);
        assert!(s.is_control_affine());
        assert_eq!((s.n(), s.m(), s.p(), s.r()), (2, 1, 1, 2));
        assert_eq!(s.control_hull(), &[(-1.0, 1.0)]);
    }

    #[test]
    fn spring_constraints_and_active_sets() {
        let s = spring1();
        let ce = s.eval_constraints(&[-0.5, 1.0], &[1.0], 1e-8).unwrap();
        assert_eq!(ce.g_values, dvector![0.0]);
        assert_eq!(ce.active_g, vec![0]);
        assert_eq!(ce.gamma_values, dvector![0.0, -2.0]);
        assert_eq!(ce.active_gamma, vec![0]);
        let ce = s.eval_constraints(&[0.0, 0.0], &[0.5], 1e-8).unwrap();
        assert_eq!(ce.g_values, dvector![-0.5]);
        assert!(ce.active_g.is_empty());
        let s2 = spring2();
        let ce = s2.eval_constraints(&[0.0, -1.0], &[-1.0], 1e-8).unwrap();
        assert_eq!(ce.g_values, dvector![0.0]);
        assert_eq!(ce.active_g, vec![0]);
        assert!(!s2.is_control_affine() || s2.g_exprs()[0].is_affine_in(|i| i >= 2));
    }

    #[test]
    fn admissible_controls() {
        let s = spring1();
        assert!(s.control_feasible(&[0.0, 0.5], &[0.7], 1e-9).unwrap());
        assert!(!s.control_feasible(&[0.0, 0.5], &[0.3], 1e-9).unwrap());
        for k in 0..=20 {
            let u = -1.0 + 0.1 * k as f64;
            assert!(!s.control_feasible(&[0.0, 1.5], &[u], 1e-9).unwrap());
        }
    }

    #[test]
    fn regularity() {
        let s = spring1();
        let r = s.regularity_check(&[0.0, 0.5], &[0.5], 1e-8, 1e-10).unwrap();
        assert_eq!(r, Regularity { regular: true, rank: 1, rows: 1 });
        let r = s.regularity_check(&[-0.5, 1.0], &[1.0], 1e-8, 1e-10).unwrap();
        assert_eq!(r, Regularity { regular: false, rank: 1, rows: 2 });
        let r = s.regularity_check(&[0.0, 0.0], &[0.5], 1e-8, 1e-10).unwrap();
        assert_eq!(r, Regularity { regular: true, rank: 0, rows: 0 });
    }

    #[test]
    fn affine_slice_describes_admissible_controls() {
        let s = spring1();
        let a = s.affine_slice(&[0.0, 0.5]).unwrap();
        let (lo, hi) = a.admissible_controls().interval(&[0, 1, 2]).unwrap();
        assert_eq!((lo, hi), (0.5, 1.0));
    }

    #[test]
    fn parsed_system_matches_builtin() {
        let s = SystemDefinition::from_strings(
            "spring1",
            2,
            1,
            &["x2", "-2*x1 - 2*x2 + u"],
            &["x2 - u"],
            &[],
            Some(&[(-1.0, 1.0)]),
        )
        .unwrap();
        let b = spring1();
        for (x, u) in [([0.3, -0.2], [0.1]), ([-1.0, 2.0], [-0.7])] {
            assert_eq!(s.eval_dynamics(&x, &u).unwrap(), b.eval_dynamics(&x, &u).unwrap());
            assert_eq!(s.eval_constraints(&x, &u, 1e-8).unwrap(), b.eval_constraints(&x, &u, 1e-8).unwrap());
        }
    }

    #[test]
    fn invalid_definitions() {
        let err = SystemDefinition::from_strings("bad", 2, 1, &["x2"], &["x2 - u"], &["u - 1"], None);
        assert!(matches!(err, Err(Error::InvalidSystem(_))));
        let err = SystemDefinition::from_strings("bad", 1, 1, &["u"], &["x - u"], &["x - 1"], None);
        assert!(matches!(err, Err(Error::InvalidSystem(_))));
        let err = SystemDefinition::from_strings("bad", 1, 1, &["u"], &[], &["u - 1"], None);
        assert!(matches!(err, Err(Error::InvalidSystem(_))));
        let err = SystemDefinition::from_strings("bad", 1, 1, &["u"], &["x"], &["u - 1", "2 - u"], None);
        assert_eq!(err.unwrap_err(), Error::EmptyInputSet);
        let err = SystemDefinition::from_strings("bad", 1, 1, &["u"], &["x"], &["u^2 + 1"], None);
        assert_eq!(err.unwrap_err(), Error::EmptyInputSet);
        let err = SystemDefinition::from_strings("bad", 1, 1, &["u + y"], &["x"], &["u"], None);
        assert!(matches!(err, Err(Error::Parse(_))));
    }

    #[test]
    fn nonlinear_input_set_hull() {
        let s = SystemDefinition::from_strings("disc", 1, 2, &["u1"], &["x - u2"], &["u1^2 + u2^2 - 4"], None)
            .unwrap();
        assert!(!s.is_control_affine());
        for &(lo, hi) in s.control_hull() {
            assert!((lo + 2.0).abs() < 1e-6 && (hi - 2.0).abs() < 1e-6, "{lo} {hi}");
        }
    }
}
