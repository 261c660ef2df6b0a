use pingpong_core::collision_map::{
    flight_time, jacobian_fd, simulate_orbit, step, StopConditions, Termination,
};
use pingpong_core::limit_map::{approximation_fit, limit_step};
use pingpong_core::{CollisionState, Error, Mat2, WallMotion};
use proptest::prelude::*;

/// Closed-form heights of the canonical walls, independent of the
/// piecewise-polynomial machinery.
fn q_height(k: f64) -> impl Fn(f64) -> f64 {
    move |t: f64| {
        let x = t - t.floor();
        0.5 * k * (x * x - x)
    }
}

fn n_height(c: f64) -> impl Fn(f64) -> f64 {
    move |t: f64| {
        let x = t - t.floor();
        0.5 * c * (x - x * x)
    }
}

/// First sign change of the height gap on a uniform grid of step `ds`,
/// refined by plain bisection.
fn oracle_flight_time(f: &dyn Fn(f64) -> f64, t: f64, v: f64, g: f64, ds: f64) -> f64 {
    let x = t - t.floor();
    let h0 = f(x);
    let r = |s: f64| h0 + v * s - 0.5 * g * s * s - f(x + s);
    let mut a = ds;
    assert!(r(a) > 0.0, "oracle start inside the wall");
    loop {
        let b = a + ds;
        if r(b) <= 0.0 {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..200 {
                let m = 0.5 * (lo + hi);
                if r(m) > 0.0 {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            return 0.5 * (lo + hi);
        }
        a = b;
    }
}

#[test]
fn flight_time_examples_match_closed_form() {
    let q = WallMotion::quadratic(1.0, 2.0);
    // gap 1.3 s - 1.5 s² on the first period
    let s = flight_time(&CollisionState::new(0.1, 0.9, &q), &q).unwrap();
    assert!((s - 13.0 / 15.0).abs() < 1e-14);
    let s_oracle = oracle_flight_time(&q_height(1.0), 0.1, 0.9, 2.0, 1e-4);
    assert!((s - s_oracle).abs() < 1e-12);

    // gap 0.125 - 1.9 u + 0.5 u² after two corners, u = s - 1.7
    let n = WallMotion::concave(2.0, 1.0);
    let s = flight_time(&CollisionState::new(0.3, 0.8, &n), &n).unwrap();
    assert!((s - (3.6 - 3.36f64.sqrt())).abs() < 1e-13);
    let s_oracle = oracle_flight_time(&n_height(2.0), 0.3, 0.8, 1.0, 1e-4);
    assert!((s - s_oracle).abs() < 1e-12);
}

#[test]
fn next_state_from_flight_time() {
    let q = WallMotion::quadratic(1.0, 2.0);
    let out = step(&CollisionState::new(0.1, 0.9, &q), &q).unwrap();
    let s = 13.0 / 15.0;
    let t1 = 0.1 + s;
    let v1 = -0.9 + 2.0 * s + 2.0 * (t1 - 0.5);
    assert!((out.next.t - t1).abs() < 1e-14);
    assert!((out.next.v - v1).abs() < 1e-14);
    assert!((out.next.w - (v1 - (t1 - 0.5))).abs() < 1e-14);
}

#[test]
fn hand_checked_step() {
    let q = WallMotion::quadratic(1.0, 2.0);
    let out = step(&CollisionState::new(0.25, 0.5, &q), &q).unwrap();
    assert_eq!(
        (out.next.t, out.next.v, out.next.w, out.s),
        (0.75, 1.0, 0.75, 0.5)
    );
    let want = Mat2::new(1.0 / 3.0, 2.0 / 3.0, -2.0 / 3.0, 5.0 / 3.0);
    assert!(out.jac.max_abs_diff(&want) < 1e-12);
    assert!((out.jac.det() - 1.0).abs() < 1e-12);

    let fd = jacobian_fd(&CollisionState::new(0.25, 0.5, &q), &q, 1e-6).unwrap();
    assert!(fd.max_abs_diff(&out.jac) < 1e-4);
}

#[test]
fn finite_differences_converge_at_second_order() {
    // on Q(1) the map is affine near this state, so use a cubic wall
    let w = WallMotion::skewed(0.2, 2.0);
    let st = CollisionState::new(0.1, 0.9, &w);
    let exact = step(&st, &w).unwrap().jac;
    let e1 = jacobian_fd(&st, &w, 1e-2).unwrap().max_abs_diff(&exact);
    let e2 = jacobian_fd(&st, &w, 1e-3).unwrap().max_abs_diff(&exact);
    assert!(e1 > 1e-8, "truncation error {e1} too small to measure");
    let ratio = e1 / e2;
    assert!((50.0..200.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn one_step_orbit_and_high_energy_run() {
    let q = WallMotion::quadratic(1.0, 2.0);
    let rec = simulate_orbit(
        CollisionState::new(0.25, 0.5, &q),
        &q,
        1,
        StopConditions::default(),
    );
    let pts: Vec<(f64, f64)> = rec.states.iter().map(|s| (s.t, s.v)).collect();
    assert_eq!(pts, vec![(0.25, 0.5), (0.75, 1.0)]);

    let rec = simulate_orbit(
        CollisionState::new(0.37, 50.0, &q),
        &q,
        10_000,
        StopConditions::default(),
    );
    assert_eq!(rec.termination, Termination::Completed);
    assert_eq!(rec.states.len(), 10_001);
    assert!(rec.states.iter().all(|s| s.w > 0.0));
    assert!(rec.states.windows(2).all(|p| p[1].t > p[0].t));
}

#[test]
fn escape_stop_condition() {
    let q = WallMotion::quadratic(1.0, 2.0);
    let stop = StopConditions {
        escape_velocity: Some(21.0),
    };
    let rec = simulate_orbit(CollisionState::new(0.1, 20.5, &q), &q, 100_000, stop);
    if rec.termination == Termination::Escaped {
        assert!(rec.states.last().unwrap().v > 21.0);
    } else {
        assert_eq!(rec.states.len(), 100_001);
    }
}

#[test]
fn limit_map_is_a_first_order_approximation() {
    for w in [
        WallMotion::quadratic(1.0, 2.0),
        WallMotion::concave(2.0, 1.0),
        WallMotion::skewed(0.2, 2.0),
    ] {
        let fit = approximation_fit(&w, 1e2, 1e5, 7, 400, 11);
        assert!((fit.slope + 1.0).abs() < 0.15, "{fit:?}");
    }
}

#[test]
fn limit_map_agrees_at_symmetric_point() {
    let q = WallMotion::quadratic(1.0, 2.0);
    let out = step(&CollisionState::new(0.25, 0.5, &q), &q).unwrap();
    assert_eq!(limit_step(0.25, 0.5, &q).unwrap(), (out.next.t, out.next.v));
}

#[test]
fn corner_landing_and_bad_states_are_rejected() {
    let q = WallMotion::quadratic(1.0, 2.0);
    // gap 1.125 s - 1.5 s² lands at t = 1
    let r = step(&CollisionState::new(0.25, 0.875, &q), &q);
    assert!(matches!(r, Err(Error::SingularCollision { .. })), "{r:?}");
    let st = CollisionState {
        t: 0.2,
        v: -0.3,
        w: 0.0,
        n: 0,
    };
    assert!(matches!(
        flight_time(&st, &q),
        Err(Error::NonPositiveRelativeVelocity { .. })
    ));
}

fn walls() -> impl Strategy<Value = WallMotion> {
    prop_oneof![
        Just(WallMotion::quadratic(1.0, 2.0)),
        Just(WallMotion::concave(2.0, 1.0)),
        Just(WallMotion::skewed(0.2, 2.0)),
        (0.2f64..3.0).prop_map(|k| WallMotion::quadratic(k, 2.0)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn flight_time_matches_grid_oracle(t in 0.0f64..1.0, dv in 0.05f64..6.0, k in 0.2f64..3.0) {
        let q = WallMotion::quadratic(k, 2.0);
        let v = 0.5 * k + dv;
        let st = CollisionState::new(t, v, &q);
        if let Ok(s) = flight_time(&st, &q) {
            let o = oracle_flight_time(&q_height(k), t, v, 2.0, 1e-4);
            prop_assert!((s - o).abs() < 1e-9 * s.max(1.0), "s={s} oracle={o}");
        }
    }

    #[test]
    fn concave_flight_time_matches_grid_oracle(t in 0.0f64..1.0, dv in 0.05f64..6.0) {
        let n = WallMotion::concave(2.0, 1.0);
        let v = 1.0 + dv;
        let st = CollisionState::new(t, v, &n);
        if let Ok(s) = flight_time(&st, &n) {
            let o = oracle_flight_time(&n_height(2.0), t, v, 1.0, 1e-4);
            prop_assert!((s - o).abs() < 1e-9 * s.max(1.0), "s={s} oracle={o}");
        }
    }

    #[test]
    fn determinant_is_velocity_ratio(w in walls(), t in 0.0f64..1.0, v in 5.0f64..500.0) {
        let st = CollisionState::new(t, v, &w);
        if let Ok(out) = step(&st, &w) {
            let ratio = st.w / out.next.w;
            prop_assert!((out.jac.det() - ratio).abs() < 1e-6);
            if let Ok(fd) = jacobian_fd(&st, &w, 1e-6) {
                prop_assert!((fd.det() - ratio).abs() < 1e-4, "fd det {} ratio {}", fd.det(), ratio);
            }
        }
    }

    #[test]
    fn reflection_is_an_involution(w in walls(), t in 0.0f64..1.0, v in 1.0f64..100.0) {
        let st = CollisionState::new(t, v, &w);
        if let Ok(out) = step(&st, &w) {
            // incoming velocity -v + g s, reflected about the wall velocity twice
            let u = out.next.t;
            let fv = w.eval(u - u.floor()).velocity;
            let incoming = st.v - w.g() * out.s;
            let reflected = -incoming + 2.0 * fv;
            prop_assert!((reflected - out.next.v).abs() < 1e-9 * v);
            prop_assert!(((-reflected + 2.0 * fv) - incoming).abs() < 1e-9 * v);
        }
    }

    #[test]
    fn ball_meets_wall_at_both_ends(w in walls(), t in 0.0f64..1.0, v in 1.0f64..100.0) {
        let st = CollisionState::new(t, v, &w);
        if let Ok(out) = step(&st, &w) {
            let x = t - t.floor();
            let h0 = w.eval(x).height;
            let s = out.s;
            let ball = h0 + v * s - 0.5 * w.g() * s * s;
            let wall = w.eval(x + s).height;
            prop_assert!((ball - wall).abs() < 1e-10 * v.max(1.0) * s.max(1.0));
        }
    }
}
