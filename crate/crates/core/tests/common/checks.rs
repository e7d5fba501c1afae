//! Randomised checks shared by the property suites and the acceptance run.

use barrier_core::expr::{ExpressionAst, KinkMode, Node, Symbols};
use proptest::prelude::*;
use proptest::test_runner::TestRunner;
use std::cell::Cell;

pub const NV: usize = 3;

pub fn symbols() -> Symbols {
    Symbols::new(&["x1", "x2", "u"]).unwrap()
}

/// Smooth trees: every operator is differentiable everywhere on its domain
/// and division is only by `1 + b^2`.
pub fn smooth_node() -> impl Strategy<Value = Node> {
    let leaf = prop_oneof![(0.0..3.0f64).prop_map(Node::constant), (0..NV).prop_map(Node::var)];
    leaf.prop_recursive(5, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            inner.clone().prop_map(|a| -a),
            (inner.clone(), 0..3i32).prop_map(|(a, k)| a.powi(k)),
            inner.clone().prop_map(Node::sin),
            inner.clone().prop_map(Node::cos),
            inner.clone().prop_map(|a| (0.3 * a).exp()),
            (inner.clone(), inner).prop_map(|(a, b)| a / (Node::constant(1.0) + b.powi(2))),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, NV)
}

/// Forward-mode partials agree with central differences at step 1e-6.
pub fn check_ad_against_fd(cases: u32) -> Result<(u32, f64), String> {
    let mut runner = TestRunner::new(super::config(cases, 0xad_fd));
    let worst_ref = Cell::new(0.0f64);
    let checked_ref = Cell::new(0u32);
    runner
        .run(&(smooth_node(), point()), |(root, x)| {
            let ast = ExpressionAst::new(root, symbols());
            let Ok(d) = ast.eval_with_gradient(&x, KinkMode::Strict) else { return Ok(()) };
            prop_assume!(d.value.abs() <= 1e3);
            let h = 1e-6;
            for i in 0..NV {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += h;
                xm[i] -= h;
                let fd = (ast.eval(&xp).unwrap() - ast.eval(&xm).unwrap()) / (2.0 * h);
                let scale = 1.0f64.max(d.partials[i].abs()).max(d.value.abs());
                let rel = (fd - d.partials[i]).abs() / scale;
                worst_ref.set(worst_ref.get().max(rel));
                prop_assert!(rel <= 1e-6, "partial {i}: ad {} fd {fd} at {x:?} in {ast}", d.partials[i]);
            }
            prop_assert!(!d.nonsmooth_hit);
            checked_ref.set(checked_ref.get() + 1);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok((checked_ref.get(), worst_ref.get()))
}


/// `|g~(x) - g~(y)| <= C |x - y|` on `[-2, 2]^2`, with `C` taken as 1.1 times
/// the largest generator norm seen on a 41 x 41 grid. Returns the number of
/// cases and the largest observed ratio `|dg| / (C |dx|)`.
pub fn check_g_tilde_lipschitz(cases: u32) -> Result<(u32, f64), String> {
    use barrier_core::minmax::{g_tilde, g_tilde_gradient, MinMaxOptions};
    let opts = MinMaxOptions::default();
    let systems = [barrier_core::model::spring1(), barrier_core::model::spring2(), super::planar2()];
    let constants: Vec<f64> = systems
        .iter()
        .map(|sys| {
            let mut c = 0.0f64;
            for i in 0..41 {
                for j in 0..41 {
                    let x = [-2.0 + 0.1 * i as f64, -2.0 + 0.1 * j as f64];
                    let (gens, _) = g_tilde_gradient(sys, &x, &opts).unwrap();
                    c = gens.iter().map(|v| v.norm()).fold(c, f64::max);
                }
            }
            1.1 * c
        })
        .collect();
    let worst = Cell::new(0.0f64);
    let mut runner = TestRunner::new(super::config(cases, 0x11b5));
    let pt = || prop::collection::vec(-2.0..2.0f64, 2);
    runner
        .run(&(0..systems.len(), pt(), pt()), |(k, x, y)| {
            let gx = g_tilde(&systems[k], &x, &opts).unwrap().value;
            let gy = g_tilde(&systems[k], &y, &opts).unwrap().value;
            let dist = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
            let ratio = (gx - gy).abs() / (constants[k] * dist).max(1e-300);
            worst.set(worst.get().max(ratio));
            prop_assert!(ratio <= 1.0, "{}: |{gx} - {gy}| > {} * {dist}", systems[k].name(), constants[k]);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok((cases, worst.get()))
}
