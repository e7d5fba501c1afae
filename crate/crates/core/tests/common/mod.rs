#![allow(dead_code)]

pub mod checks;

use barrier_core::integrator::{integrate_barrier, BarrierTrajectory, IntegratorOptions};
use barrier_core::model::{spring1, spring2, SystemDefinition};
use barrier_core::tangency::{solve_tangency_smooth, TangencyOptions, TangencyPoint};
use proptest::test_runner::{Config, RngSeed};

/// Deterministic proptest configuration.
pub fn config(cases: u32, seed: u64) -> Config {
    Config { cases, rng_seed: RngSeed::Fixed(seed), failure_persistence: None, ..Config::default() }
}

/// Two-input system used where `m = 2` coverage is needed.
pub fn planar2() -> SystemDefinition {
    SystemDefinition::from_strings(
        "planar2",
        2,
        2,
        &["x2 + u1", "-x1 + u2"],
        &["x1 - u1 - 1", "x2 - u2 - 0.5", "u1 + u2 - x1 * x2"],
        &[],
        Some(&[(-1.0, 1.0), (-1.0, 1.0)]),
    )
    .unwrap()
}

pub fn max_g(sys: &SystemDefinition, x: &[f64], u: &[f64]) -> f64 {
    sys.eval_g(x, u).unwrap().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `min_u max_i g_i` over a uniform grid of the control box: 2001 points for
/// one input, 201 x 201 for two.
pub fn brute_g_tilde(sys: &SystemDefinition, x: &[f64]) -> f64 {
    let hull = sys.control_hull();
    let grid = |k: usize, count: usize, i: usize| hull[k].0 + (hull[k].1 - hull[k].0) * i as f64 / (count - 1) as f64;
    let mut best = f64::INFINITY;
    match sys.m() {
        1 => {
            for i in 0..2001 {
                let u = [grid(0, 2001, i)];
                if sys.eval_gamma(&u).unwrap().iter().all(|&v| v <= 1e-12) {
                    best = best.min(max_g(sys, x, &u));
                }
            }
        }
        2 => {
            for i in 0..201 {
                for j in 0..201 {
                    let u = [grid(0, 201, i), grid(1, 201, j)];
                    if sys.eval_gamma(&u).unwrap().iter().all(|&v| v <= 1e-12) {
                        best = best.min(max_g(sys, x, &u));
                    }
                }
            }
        }
        m => panic!("no brute-force grid for m = {m}"),
    }
    best
}

pub fn spring1_endpoint() -> TangencyPoint {
    solve_tangency_smooth(&spring1(), &[0.0, 0.9], &TangencyOptions::default()).unwrap()
}

pub fn spring2_endpoints() -> Vec<TangencyPoint> {
    let sys = spring2();
    let opts = TangencyOptions::default();
    vec![
        solve_tangency_smooth(&sys, &[0.0, 0.9], &opts).unwrap(),
        solve_tangency_smooth(&sys, &[0.0, -0.9], &opts).unwrap(),
    ]
}

/// Golden spring-1 barrier, integrated for 4 time units.
pub fn spring1_golden() -> BarrierTrajectory {
    integrate_barrier(&spring1(), &spring1_endpoint(), 4.0, &IntegratorOptions::default()).unwrap()
}

pub const SPRING2_HORIZON: f64 = 10.0;

pub fn spring2_golden() -> Vec<BarrierTrajectory> {
    spring2_endpoints()
        .iter()
        .map(|tp| integrate_barrier(&spring2(), tp, SPRING2_HORIZON, &IntegratorOptions::default()).unwrap())
        .collect()
}

/// Backward spring-1 extremal from `z = (-0.5, 1)`, `lambda = (0, 1)`,
/// integrated with fixed-step RK4 in `s = T - t`. While `lambda_2 > 0` the
/// mixed constraint is active (`u = x2`, `mu = lambda_2`); afterwards
/// `u = 1`. Returns the state and adjoint at `horizon` and the first switch
/// as `(s, x)`.
pub fn spring1_oracle(horizon: f64) -> ([f64; 2], [f64; 2], Option<(f64, [f64; 2])>) {
    // forward-time right-hand sides for y = (x1, x2, l1, l2)
    fn rhs(y: [f64; 4], constrained: bool) -> [f64; 4] {
        let [x1, x2, l1, l2] = y;
        if constrained {
            [x2, -2.0 * x1 - x2, 2.0 * l2, -l1 + l2]
        } else {
            [x2, -2.0 * x1 - 2.0 * x2 + 1.0, 2.0 * l2, -l1 + 2.0 * l2]
        }
    }
    fn step(y: [f64; 4], h: f64, constrained: bool) -> [f64; 4] {
        // backward in time: dy/ds = -rhs
        let f = |y: [f64; 4]| rhs(y, constrained).map(|v| -v);
        let add = |a: [f64; 4], b: [f64; 4], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2], a[3] + c * b[3]];
        let k1 = f(y);
        let k2 = f(add(y, k1, h / 2.0));
        let k3 = f(add(y, k2, h / 2.0));
        let k4 = f(add(y, k3, h));
        let mut out = y;
        for i in 0..4 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }
    let h: f64 = 1e-4;
    let mut y = [-0.5, 1.0, 0.0, 1.0];
    let mut s = 0.0;
    let mut switch = None;
    while s < horizon - 1e-15 {
        let dt = h.min(horizon - s);
        let constrained = switch.is_none();
        let next = step(y, dt, constrained);
        if constrained && s > 0.0 && next[3] <= 0.0 {
            // bisect the sign change of lambda_2
            let (mut lo, mut hi) = (0.0, dt);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if step(y, mid, true)[3] > 0.0 { lo = mid } else { hi = mid }
            }
            y = step(y, hi, true);
            s += hi;
            switch = Some((s, [y[0], y[1]]));
            continue;
        }
        y = next;
        s += dt;
    }
    ([y[0], y[1]], [y[2], y[3]], switch)
}
