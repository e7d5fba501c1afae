//! Pointwise minimisation of `H = lambda^T f(x, u)` over `U(x)` and recovery
//! of the multipliers `mu` (mixed constraints) and `nu` (input constraints)
//! from `lambda^T f_u + mu^T g_u + nu^T gamma_u = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{EvalError, KinkMode};
use crate::minmax::control_starts;
use crate::model::SystemDefinition;
use crate::optim::{barrier_minimize, nnls, BarrierOptions, Nlp};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianOptions {
    pub feas_tol: f64,
    pub active_tol: f64,
    pub mult_tol: f64,
    pub stat_tol: f64,
    /// Relative width of the optimal face below which vertices are tied.
    pub tie_tol: f64,
    pub lambda_tol: f64,
    pub starts: usize,
    pub rng_seed: u64,
    pub force_nlp: bool,
}

impl Default for HamiltonianOptions {
    fn default() -> Self {
        HamiltonianOptions {
            feas_tol: 1e-9,
            active_tol: 1e-8,
            mult_tol: 1e-8,
            stat_tol: 1e-6,
            tie_tol: 1e-12,
            lambda_tol: 1e-12,
            starts: 8,
            rng_seed: 0x5eed,
            force_nlp: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSolution {
    pub u_star: DVector<f64>,
    pub h_value: f64,
    pub mu: DVector<f64>,
    pub nu: DVector<f64>,
    pub stationarity_residual: f64,
    pub active_g: Vec<usize>,
    pub active_gamma: Vec<usize>,
    /// The minimiser was not unique; `u_star` was picked by the hint.
    pub singular: bool,
    /// Stationarity residual above `stat_tol`.
    pub residual_warning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub mu: DVector<f64>,
    pub nu: DVector<f64>,
    pub residual: f64,
}

/// Non-negative least-squares solve of the stationarity condition restricted
/// to the given active rows. Inactive multipliers are zero.
pub fn recover_multipliers(
    sys: &SystemDefinition,
    x: &[f64],
    lambda: &[f64],
    u_star: &[f64],
    active_g: &[usize],
    active_gamma: &[usize],
) -> Result<Multipliers> {
    let dyn_ = sys.eval_dynamics(x, u_star)?;
    let ce = sys.eval_constraints(x, u_star, f64::INFINITY)?;
    let lam = DVector::from_column_slice(lambda);
    let rhs = -(dyn_.fu.transpose() * &lam);
    let k = active_g.len() + active_gamma.len();
    let mut a = DMatrix::zeros(sys.m(), k);
    for (c, &i) in active_g.iter().enumerate() {
        a.column_mut(c).copy_from(&ce.g_u.row(i).transpose());
    }
    for (c, &j) in active_gamma.iter().enumerate() {
        a.column_mut(active_g.len() + c).copy_from(&ce.gamma_u.row(j).transpose());
    }
    let (w, residual) = nnls(&a, &rhs);
    let mut mu = DVector::zeros(sys.p());
    let mut nu = DVector::zeros(sys.r());
    for (c, &i) in active_g.iter().enumerate() {
        mu[i] = w[c];
    }
    for (c, &j) in active_gamma.iter().enumerate() {
        nu[j] = w[active_g.len() + c];
    }
    Ok(Multipliers { mu, nu, residual })
}

struct HamiltonianNlp<'a> {
    sys: &'a SystemDefinition,
    x: &'a [f64],
    lambda: &'a [f64],
}

impl HamiltonianNlp<'_> {
    fn point(&self, u: &[f64]) -> Vec<f64> {
        let mut p = self.x.to_vec();
        p.extend_from_slice(u);
        p
    }
}

impl Nlp for HamiltonianNlp<'_> {
    fn dim(&self) -> usize {
        self.sys.m()
    }
    fn n_constraints(&self) -> usize {
        self.sys.p() + self.sys.r()
    }
    fn objective(&self, v: &[f64], grad: &mut [f64]) -> std::result::Result<f64, EvalError> {
        let n = self.sys.n();
        let p = self.point(v);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut h = 0.0;
        for (i, e) in self.sys.f_exprs().iter().enumerate() {
            if self.lambda[i] == 0.0 {
                continue;
            }
            let d = e.eval_with_gradient(&p, KinkMode::OneSided)?;
            h += self.lambda[i] * d.value;
            for (g, dp) in grad.iter_mut().zip(&d.partials[n..]) {
                *g += self.lambda[i] * dp;
            }
        }
        Ok(h)
    }
    fn constraint(&self, k: usize, v: &[f64], grad: &mut [f64]) -> std::result::Result<f64, EvalError> {
        let (n, p) = (self.sys.n(), self.sys.p());
        let expr = if k < p { &self.sys.g_exprs()[k] } else { &self.sys.gamma_exprs()[k - p] };
        let d = expr.eval_with_gradient(&self.point(v), KinkMode::OneSided)?;
        grad.copy_from_slice(&d.partials[n..]);
        Ok(d.value)
    }
}

fn nearest<'a>(cands: impl Iterator<Item = &'a DVector<f64>>, hint: &DVector<f64>) -> Option<DVector<f64>> {
    cands.min_by(|a, b| (*a - hint).norm().total_cmp(&(*b - hint).norm())).cloned()
}

/// Returns the minimiser and whether it was tied with other candidates.
fn argmin_lp(
    sys: &SystemDefinition,
    x: &[f64],
    lambda: &DVector<f64>,
    hint: Option<&[f64]>,
    opts: &HamiltonianOptions,
) -> Result<(DVector<f64>, bool)> {
    let slice = sys.affine_slice(x)?;
    let c = slice.fu.transpose() * lambda;
    let poly = slice.admissible_controls();
    let lp = poly.minimize_linear(&c, opts.feas_tol, opts.tie_tol)?;
    if lp.optimal.len() == 1 {
        return Ok((lp.optimal[0].point.clone(), false));
    }
    // tied: the whole optimal face minimises H
    match hint {
        Some(h) => {
            let h = DVector::from_column_slice(h);
            let face_value = c.dot(&lp.optimal[0].point);
            let hint_ok = poly.contains(&h, opts.feas_tol)
                && c.dot(&h) <= face_value + opts.tie_tol * face_value.abs().max(1.0);
            if hint_ok {
                Ok((h, true))
            } else {
                Ok((nearest(lp.optimal.iter().map(|v| &v.point), &h).unwrap(), true))
            }
        }
        None => Ok((lp.optimal[0].point.clone(), true)),
    }
}

fn argmin_nlp(
    sys: &SystemDefinition,
    x: &[f64],
    lambda: &[f64],
    hint: Option<&[f64]>,
    opts: &HamiltonianOptions,
) -> Result<(DVector<f64>, bool)> {
    let prob = HamiltonianNlp { sys, x, lambda };
    let bopts = BarrierOptions::default();
    let mut starts = control_starts(sys, opts.starts.max(1), opts.rng_seed);
    if let Some(h) = hint {
        starts.insert(0, h.to_vec());
    }
    let mut sols: Vec<(f64, DVector<f64>)> = Vec::new();
    let mut grad = vec![0.0; sys.m()];
    for s in &starts {
        match barrier_minimize(&prob, s, &bopts) {
            Ok(sol) => {
                let h = prob.objective(sol.v.as_slice(), &mut grad).map_err(|e| Error::eval("hamiltonian", e))?;
                sols.push((h, sol.v));
            }
            Err(Error::NoConvergence(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let best = sols.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::NoConvergence("hamiltonian minimisation failed from every start".into()));
    }
    let band = 1e-8 * best.abs().max(1.0);
    let optimal: Vec<&DVector<f64>> = sols.iter().filter(|s| s.0 <= best + band).map(|s| &s.1).collect();
    let spread = optimal.iter().map(|v| (*v - optimal[0]).amax()).fold(0.0, f64::max);
    let tied = spread > 1e-6;
    let u = match hint {
        Some(h) if tied => nearest(optimal.into_iter(), &DVector::from_column_slice(h)).unwrap(),
        _ => optimal[0].clone(),
    };
    Ok((u, tied))
}

/// Minimises `lambda^T f(x, .)` over `U(x)`. `hint` is the control held when
/// the minimiser is not unique.
pub fn minimize_hamiltonian(
    sys: &SystemDefinition,
    x: &[f64],
    lambda: &[f64],
    hint: Option<&[f64]>,
    opts: &HamiltonianOptions,
) -> Result<HamiltonianSolution> {
    if lambda.len() != sys.n() {
        return Err(Error::Dimension(format!("adjoint of length {} for n = {}", lambda.len(), sys.n())));
    }
    let lam = DVector::from_column_slice(lambda);
    if lam.amax() <= opts.lambda_tol {
        return Err(Error::DegenerateAdjoint);
    }
    let (u_star, singular) = if sys.is_control_affine() && !opts.force_nlp {
        argmin_lp(sys, x, &lam, hint, opts)?
    } else {
        argmin_nlp(sys, x, lambda, hint, opts)?
    };
    let ce = sys.eval_constraints(x, u_star.as_slice(), opts.active_tol)?;
    if ce.g_values.iter().chain(ce.gamma_values.iter()).any(|&v| v > 10.0 * opts.feas_tol.max(opts.active_tol)) {
        return Err(Error::EmptyControlSet);
    }
    let f = sys.eval_f(x, u_star.as_slice())?;
    let m = recover_multipliers(sys, x, lambda, u_star.as_slice(), &ce.active_g, &ce.active_gamma)?;
    Ok(HamiltonianSolution {
        h_value: lam.dot(&f),
        residual_warning: m.residual > opts.stat_tol,
        stationarity_residual: m.residual,
        mu: m.mu,
        nu: m.nu,
        u_star,
        active_g: ce.active_g,
        active_gamma: ce.active_gamma,
        singular,
    })
}
