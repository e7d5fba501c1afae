mod common;

use barrier_core::minmax::{g_tilde, MinMaxOptions};
use barrier_core::model::{spring1, spring2, SystemDefinition};
use barrier_core::tangency::{
    find_endpoints, lie_min_nonsmooth, lie_min_smooth, seed_grid, solve_tangency, solve_tangency_nonsmooth,
    TangencyMode, TangencyOptions, TangencyPoint,
};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn systems() -> Vec<SystemDefinition> {
    vec![spring1(), spring2()]
}

/// Up to 200 controls drawn uniformly from the box and kept when in `U(z)`.
fn feasible_samples(sys: &SystemDefinition, z: &[f64], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let hull = sys.control_hull().to_vec();
    (0..200)
        .map(|_| hull.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect::<Vec<f64>>())
        .filter(|u| sys.control_feasible(z, u, 0.0).unwrap())
        .collect()
}

fn worst_score(vertices: &[DVector<f64>], f: &DVector<f64>) -> f64 {
    vertices.iter().map(|v| v.dot(f)).fold(f64::NEG_INFINITY, f64::max)
}

fn check_point(sys: &SystemDefinition, tp: &TangencyPoint, rng: &mut ChaCha8Rng) -> Result<(), TestCaseError> {
    let opts = TangencyOptions::default();
    let z = tp.z.as_slice();
    let mm = g_tilde(sys, z, &MinMaxOptions::default()).unwrap();
    prop_assert!(mm.value.abs() <= 1e-6, "g~(z) = {}", mm.value);
    prop_assert!(sys.control_feasible(z, tp.u_bar.as_slice(), 1e-9).unwrap());
    prop_assert!(tp.tangency_residual <= 1e-8);
    prop_assert_eq!(&tp.tied_adjoints[0], &tp.lambda_t);
    for l in &tp.tied_adjoints {
        prop_assert!(mm.subdiff_vertices.iter().any(|v| (v - l).amax() <= 1e-6), "adjoint {l} is not a generator");
    }
    let f_bar = sys.eval_f(z, tp.u_bar.as_slice()).unwrap();
    match tp.mode {
        TangencyMode::Smooth => {
            let (value, _) = lie_min_smooth(sys, z, &tp.lambda_t, &opts).unwrap();
            prop_assert!(value.abs() <= 1e-8);
            prop_assert!((tp.lambda_t.dot(&f_bar) - value).abs() <= 1e-8);
            for u in feasible_samples(sys, z, rng) {
                let f = sys.eval_f(z, &u).unwrap();
                prop_assert!(tp.lambda_t.dot(&f) >= value - 1e-9, "u = {u:?} beats u_bar");
            }
        }
        TangencyMode::Nonsmooth => {
            let v = &mm.subdiff_vertices;
            let (value, _) = lie_min_nonsmooth(sys, z, v, &opts).unwrap();
            prop_assert!(value.abs() <= 1e-8);
            prop_assert!((worst_score(v, &f_bar) - value).abs() <= 1e-8);
            for u in feasible_samples(sys, z, rng) {
                let f = sys.eval_f(z, &u).unwrap();
                prop_assert!(worst_score(v, &f) >= value - 1e-9, "u = {u:?} beats u_bar");
            }
            // min over u of the max over the hull equals the max over the hull
            // of the min over u
            let mut best = f64::NEG_INFINITY;
            for k in 0..=200 {
                let w: Vec<f64> = if v.len() == 2 {
                    let t = k as f64 / 200.0;
                    vec![t, 1.0 - t]
                } else {
                    let raw: Vec<f64> = v.iter().map(|_| -rng.gen_range(1e-12..1.0f64).ln()).collect();
                    let s: f64 = raw.iter().sum();
                    raw.iter().map(|r| r / s).collect()
                };
                let xi = v.iter().zip(&w).fold(DVector::zeros(sys.n()), |acc, (g, wk)| acc + g * *wk);
                let inner = if xi.amax() <= 1e-12 { 0.0 } else { lie_min_smooth(sys, z, &xi, &opts).unwrap().0 };
                prop_assert!(inner <= value + 1e-9);
                best = best.max(inner);
            }
            prop_assert!((best - value).abs() <= 1e-6, "hull max-min {best} vs min-max {value}");
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(common::config(200, 0x7a9))]

    #[test]
    fn converged_points_satisfy_the_tangency_conditions(k in 0usize..2, seed in prop::collection::vec(-2.0..2.0f64, 2), rs in any::<u64>()) {
        let sys = &systems()[k];
        let Ok(tp) = solve_tangency(sys, &seed, &TangencyOptions::default()) else { return Ok(()) };
        let mut rng = ChaCha8Rng::seed_from_u64(rs);
        for b in tp.branches() {
            check_point(sys, &b, &mut rng)?;
        }
    }

    #[test]
    fn axis_candidates_pick_twice_the_abscissa(z1 in -0.5..0.5f64) {
        let tp = solve_tangency_nonsmooth(&spring2(), &[z1, 0.0], &TangencyOptions::default()).unwrap();
        prop_assert!((tp.z[0] - z1).abs() <= 1e-9 && tp.z[1].abs() <= 1e-12);
        prop_assert!((tp.u_bar[0] - 2.0 * z1).abs() <= 1e-9);
        prop_assert_eq!(tp.tied_adjoints.len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(z1.to_bits());
        check_point(&spring2(), &tp, &mut rng)?;
    }
}

#[test]
fn grid_search_finds_the_known_endpoints() {
    let seeds = seed_grid(&[-2.0, -2.0], &[2.0, 2.0], &[9, 9]);
    let opts = TangencyOptions::default();
    let close = |p: &TangencyPoint, z: [f64; 2]| (p.z[0] - z[0]).abs() <= 1e-6 && (p.z[1] - z[1]).abs() <= 1e-6;

    let s1 = find_endpoints(&spring1(), &seeds, &opts);
    assert_eq!(s1.points.len(), 1);
    assert!(close(&s1.points[0], [-0.5, 1.0]));
    assert!((s1.points[0].u_bar[0] - 1.0).abs() <= 1e-9);

    let s2 = find_endpoints(&spring2(), &seeds, &opts);
    for z in [[-0.5, 1.0], [0.5, -1.0]] {
        let p = s2.points.iter().find(|p| close(p, z)).expect("smooth spring-2 endpoint");
        assert_eq!(p.mode, TangencyMode::Smooth);
        assert!((p.u_bar[0] - z[1]).abs() <= 1e-9);
    }
    for (i, p) in s2.points.iter().enumerate() {
        for q in &s2.points[i + 1..] {
            assert!((&p.z - &q.z).amax() > opts.dedupe_tol);
        }
    }
}
