mod common;

use barrier_core::hamiltonian::{minimize_hamiltonian, HamiltonianOptions};
use barrier_core::model::{spring1, spring2, SystemDefinition};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn systems() -> Vec<SystemDefinition> {
    vec![spring1(), spring2(), common::planar2()]
}

fn vec2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 2)
}

proptest! {
    #![proptest_config(common::config(300, 0x4a11))]

    #[test]
    fn minimiser_beats_sampled_controls(k in 0usize..3, x in vec2(), lam in vec2(), rs in any::<u64>()) {
        let sys = &systems()[k];
        prop_assume!(lam.iter().any(|v| v.abs() > 1e-3));
        let Ok(sol) = minimize_hamiltonian(sys, &x, &lam, None, &HamiltonianOptions::default()) else {
            // only an empty U(x) may fail
            prop_assert!(common::brute_g_tilde(sys, &x) > 0.0);
            return Ok(());
        };
        let u = sol.u_star.as_slice();
        prop_assert!(sys.control_feasible(&x, u, 1e-9).unwrap());
        let f = sys.eval_f(&x, u).unwrap();
        prop_assert!((f.dot(&nalgebra::DVector::from_column_slice(&lam)) - sol.h_value).abs() <= 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(rs);
        let hull = sys.control_hull().to_vec();
        for _ in 0..500 {
            let v: Vec<f64> = hull.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect();
            if sys.control_feasible(&x, &v, 0.0).unwrap() {
                let fv = sys.eval_f(&x, &v).unwrap();
                let h: f64 = fv.iter().zip(&lam).map(|(a, b)| a * b).sum();
                prop_assert!(h >= sol.h_value - 1e-9, "sample {v:?} gives {h} < {}", sol.h_value);
            }
        }
    }

    #[test]
    fn multipliers_satisfy_kkt(k in 0usize..3, x in vec2(), lam in vec2()) {
        let sys = &systems()[k];
        prop_assume!(lam.iter().any(|v| v.abs() > 1e-3));
        let Ok(sol) = minimize_hamiltonian(sys, &x, &lam, None, &HamiltonianOptions::default()) else { return Ok(()) };
        let u = sol.u_star.as_slice();
        let c = sys.eval_constraints(&x, u, 1e-8).unwrap();
        let d = sys.eval_dynamics(&x, u).unwrap();
        prop_assert!(sol.mu.iter().chain(sol.nu.iter()).all(|&m| m >= 0.0));
        for i in 0..sys.p() {
            prop_assert!((sol.mu[i] * c.g_values[i]).abs() <= 1e-10, "mu_{i} g_{i} = {}", sol.mu[i] * c.g_values[i]);
        }
        for j in 0..sys.r() {
            prop_assert!((sol.nu[j] * c.gamma_values[j]).abs() <= 1e-10);
        }
        let lam = nalgebra::DVector::from_column_slice(&lam);
        let grad = d.fu.transpose() * &lam + c.g_u.transpose() * &sol.mu + c.gamma_u.transpose() * &sol.nu;
        let scale = 1.0 + lam.norm() * d.fu.norm();
        prop_assert!((grad.norm() - sol.stationarity_residual).abs() <= 1e-9 * scale);
        if !sol.residual_warning {
            prop_assert!(grad.norm() <= 1e-6 * scale, "stationarity {}", grad.norm());
        }
        for &i in &sol.active_g {
            prop_assert!(c.g_values[i].abs() <= 1e-8);
        }
    }

    #[test]
    fn linear_and_nonlinear_paths_agree(k in 0usize..3, x in vec2(), lam in vec2()) {
        let sys = &systems()[k];
        prop_assume!(lam.iter().any(|v| v.abs() > 1e-3));
        let lp = minimize_hamiltonian(sys, &x, &lam, None, &HamiltonianOptions::default());
        let nlp = minimize_hamiltonian(sys, &x, &lam, None, &HamiltonianOptions { force_nlp: true, ..HamiltonianOptions::default() });
        if let (Ok(a), Ok(b)) = (lp, nlp) {
            prop_assert!((a.h_value - b.h_value).abs() <= 1e-9, "lp {} nlp {}", a.h_value, b.h_value);
        }
    }
}

#[test]
fn spring1_switching_law() {
    // lambda_2 < 0 pushes u up to 1; lambda_2 > 0 pushes it down to x2
    let opts = HamiltonianOptions::default();
    let up = minimize_hamiltonian(&spring1(), &[0.0, 0.3], &[0.4, -1.0], None, &opts).unwrap();
    assert!((up.u_star[0] - 1.0).abs() <= 1e-12);
    let down = minimize_hamiltonian(&spring1(), &[0.0, 0.3], &[0.4, 1.0], None, &opts).unwrap();
    assert!((down.u_star[0] - 0.3).abs() <= 1e-12);
    assert!(down.mu[0] > 0.0);
}
