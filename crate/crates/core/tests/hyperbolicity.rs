use pingpong_core::curve::UnstableCurve;
use pingpong_core::hyperbolicity::{
    adapted_derivative, backward_distortion, check_cone_invariance, check_expansion, cone_at,
    curvature_along_orbit, curvature_bound, curvature_evolution, distortion_check,
    expansion_constants, least_expansion_sigma, n0_for, sigma_of, ConeFamily, ConeKind,
    CurvatureStep,
};
use pingpong_core::limit_map::{lifted_forward, torus_step};
use pingpong_core::sampling::{stream_rng, uniform_torus_point};
use pingpong_core::{Mat2, TorusPoint, Vec2, WallMotion};
use proptest::prelude::*;

fn q1() -> WallMotion {
    WallMotion::quadratic(1.0, 2.0)
}

fn n2() -> WallMotion {
    WallMotion::concave(2.0, 1.0)
}

#[test]
fn cones_are_invariant_in_both_regimes() {
    for w in [
        q1(),
        n2(),
        WallMotion::quadratic(0.3, 1.0),
        WallMotion::concave(3.0, 2.0),
    ] {
        let r = check_cone_invariance(&w, ConeFamily::Hyperbolic, 100_000, 9).unwrap();
        assert_eq!(r.pairs_checked, 600_000);
        assert_eq!(r.violations(), 0, "{r:?}");
    }
}

#[test]
fn quadrant_cones_are_invariant_for_a_cubic_wall() {
    let r = check_cone_invariance(
        &WallMotion::skewed(0.2, 2.0),
        ConeFamily::Quadrant,
        100_000,
        9,
    )
    .unwrap();
    assert_eq!(r.violations(), 0, "{r:?}");
    let r = check_cone_invariance(
        &WallMotion::skewed(0.2, 2.0),
        ConeFamily::Hyperbolic,
        100_000,
        9,
    )
    .unwrap();
    assert_eq!(r.unstable_violations, 0, "{r:?}");
}

#[test]
fn canonical_expansion_constants() {
    let r = expansion_constants(&q1()).unwrap();
    assert!((r.lambda - 2f64.sqrt()).abs() < 1e-12);
    assert!((r.lambda_1 - 5f64.sqrt()).abs() < 1e-12);
    assert!((r.lambda_2 - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(r.n0, 13);
    assert!(!r.empirical);
    // 6·12 / 2⁶ ≥ 1 and 6·13 / 2^6.5 < 1
    assert!(72.0 / 64.0 >= 1.0 && 78.0 / 2f64.powf(6.5) < 1.0);

    let v = Mat2::new(1.0, 1.0, 2.0, 3.0).apply(Vec2::new(1.0, 1.0));
    assert!((v.norm() / 2f64.sqrt() - (29.0f64 / 2.0).sqrt()).abs() < 1e-12);

    let r = expansion_constants(&n2()).unwrap();
    assert!(r.empirical && r.lambda > 1.0 && r.n0 >= 1);
    assert!(6.0 * r.n0 as f64 / r.lambda.powi(r.n0 as i32) < 1.0);
}

#[test]
fn sampled_expansion_meets_lambda() {
    for w in [q1(), n2(), WallMotion::skewed(0.2, 2.0)] {
        let lambda = expansion_constants(&w).unwrap().lambda;
        let c = check_expansion(&w, lambda, 200_000, 4).unwrap();
        assert_eq!(c.violations, 0, "{c:?}");
        assert_eq!(c.noncontraction_violations, 0);
        assert!(c.min_ratio >= lambda * (1.0 - 1e-12));
    }
}

#[test]
fn n0_is_minimal() {
    for lambda in [1.1, 1.5, 2f64.sqrt(), 3.0] {
        let n = n0_for(lambda).unwrap();
        assert!((6.0 * n as f64) < lambda.powi(n as i32));
        assert!(n == 1 || 6.0 * (n - 1) as f64 >= lambda.powi(n as i32 - 1));
    }
    assert!(n0_for(1.0).is_err());
}

#[test]
fn sigma_after_n0_steps_exceeds_three() {
    for w in [q1(), n2()] {
        let n0 = expansion_constants(&w).unwrap().n0 as usize;
        let mut rng = stream_rng(6, 0);
        let mut tested = 0;
        for _ in 0..2000 {
            let p = uniform_torus_point(&mut rng, w.g());
            if let Ok(s) = least_expansion_sigma(p, &w, n0) {
                assert!(s > 3.0, "{p:?}: {s}");
                tested += 1;
            }
        }
        assert!(tested > 1900);
    }
}

#[test]
fn sigma_one_step_canonical() {
    let s = least_expansion_sigma(TorusPoint { t: 0.2, v: 0.7 }, &q1(), 1).unwrap();
    assert!((s - (3f64.sqrt() + 2f64.sqrt())).abs() < 1e-12);
    let s = least_expansion_sigma(TorusPoint { t: 0.2, v: 0.7 }, &q1(), 2).unwrap();
    assert!(s >= (3f64.sqrt() + 2f64.sqrt()).powi(2) * (1.0 - 1e-12));
}

#[test]
fn curvature_example_bound() {
    // f''' = 0, θ = 1/27: one step from ψ'' = 27 with slope 2 gives exactly 1
    let c = curvature_evolution(
        27.0,
        &[CurvatureStep {
            slope: 2.0,
            jerk: 0.0,
        }],
        2.0,
    );
    assert!((c[1] - 1.0).abs() < 1e-12);
    assert!((curvature_bound(&q1(), 27.0, 1).unwrap() - 1.0).abs() < 1e-12);
    let steps = vec![
        CurvatureStep {
            slope: 2.5,
            jerk: 0.0
        };
        10
    ];
    assert!(curvature_evolution(0.0, &steps, 2.0)
        .iter()
        .all(|&c| c == 0.0));
}

/// Second derivative of the graph through three points.
fn graph_curvature(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    2.0 * ((c.1 - b.1) / (c.0 - b.0) - (b.1 - a.1) / (b.0 - a.0)) / (c.0 - a.0)
}

#[test]
fn curvature_recursion_matches_finite_differences() {
    let w = WallMotion::skewed(0.25, 2.0);
    let g = w.g();
    let mut rng = stream_rng(7, 0);
    let mut checked = 0;
    while checked < 200 {
        let p = uniform_torus_point(&mut rng, g);
        let k0 = w.acceleration(p.t);
        let slope = 2.0 * k0 + 0.25 * g;
        let psi2 = 3.0;
        let Ok(track) = curvature_along_orbit(p, slope, psi2, &w, 3) else {
            continue;
        };
        let h = 1e-4;
        let mut pts: Vec<(f64, f64)> = [-h, 0.0, h]
            .iter()
            .map(|&u| (p.t + u, p.v + u * (slope + 0.5 * psi2 * u)))
            .collect();
        let mut ok = true;
        for (step, &(_, want)) in track.iter().enumerate().skip(1) {
            let phi: Vec<f64> = pts.iter().map(|q| q.0 + 2.0 * q.1 / g).collect();
            let branch = phi[1].floor();
            if phi.iter().any(|x| x.floor() != branch) {
                ok = false;
                break;
            }
            pts = pts
                .iter()
                .map(|q| lifted_forward(q.0, q.1, branch, &w))
                .collect();
            let fd = graph_curvature(pts[0], pts[1], pts[2]);
            let scale = want.abs().max(1.0);
            assert!(
                (fd - want).abs() < 1e-3 * scale,
                "step {step}: fd {fd} recursion {want}"
            );
        }
        if ok {
            checked += 1;
        }
    }
}

#[test]
fn curvature_bound_holds_along_orbits() {
    let w = WallMotion::skewed(0.2, 2.0);
    let mut rng = stream_rng(8, 0);
    for _ in 0..200 {
        let p = uniform_torus_point(&mut rng, 2.0);
        let slope = 2.0 * w.acceleration(p.t) + 0.5;
        let psi2 = 10.0;
        let Ok(track) = curvature_along_orbit(p, slope, psi2, &w, 100) else {
            continue;
        };
        for (m, &(_, c)) in track.iter().enumerate() {
            assert!(
                c.abs() <= curvature_bound(&w, psi2, m).unwrap() * (1.0 + 1e-12),
                "m={m}"
            );
        }
    }
}

#[test]
fn distortion_of_straight_curves_on_constant_curvature_wall() {
    let c = UnstableCurve::with_length((0.2, 0.3), 2.5, 0.0, 1e-2);
    assert!(distortion_check(&c, &q1(), 64).unwrap() < 1e-9);
}

#[test]
fn distortion_is_stable_under_refinement() {
    for w in [q1(), WallMotion::skewed(0.2, 2.0)] {
        let c = UnstableCurve::with_length((0.2, 0.3), 2.5, 4.0, 2e-2);
        let coarse = distortion_check(&c, &w, 64).unwrap();
        let fine = distortion_check(&c, &w, 1024).unwrap();
        assert!(
            coarse > 0.0 && (coarse - fine).abs() < 0.05 * fine,
            "{coarse} {fine}"
        );
    }
}

#[test]
fn backward_distortion_is_bounded_by_length() {
    let w = WallMotion::skewed(0.2, 2.0);
    let mut rng = stream_rng(9, 0);
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    for _ in 0..400 {
        let p = uniform_torus_point(&mut rng, 2.0);
        let slope = 2.0 * w.acceleration(p.t) + 0.5;
        let c = UnstableCurve::with_length((p.t, p.v), slope, 0.0, 1e-3);
        if let Ok(d) = backward_distortion(&c, &w, 5, 32) {
            worst = worst.max(d);
            tested += 1;
        }
    }
    assert!(tested > 100);
    assert!(worst.is_finite() && worst < 100.0, "C' = {worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn sigma_is_supermultiplicative(t in 0.0f64..1.0, u in 0.0f64..1.0, n in 1usize..=4, m in 1usize..=4, which in 0usize..3) {
        let w = [q1(), n2(), WallMotion::quadratic(0.5, 1.0)][which].clone();
        let g = w.g();
        let p = TorusPoint { t, v: u * g };
        let first = adapted_derivative(p, &w, n);
        let mut q = p;
        let mut ok = first.is_ok();
        for _ in 0..n {
            match torus_step(q, &w) {
                Ok((r, _)) => q = r,
                Err(_) => ok = false,
            }
        }
        let second = adapted_derivative(q, &w, m);
        let whole = adapted_derivative(p, &w, n + m);
        if let (true, Ok(a), Ok(b), Ok(ab)) = (ok, first, second, whole) {
            prop_assert!(sigma_of(&ab) >= sigma_of(&a) * sigma_of(&b) * (1.0 - 1e-9));
        }
    }

    #[test]
    fn one_step_sigma_exceeds_one(k in 0.05f64..4.0, t in 0.0f64..1.0, u in 0.0f64..1.0) {
        let w = WallMotion::quadratic(k, 1.0);
        if let Ok(s) = least_expansion_sigma(TorusPoint { t, v: u }, &w, 1) {
            prop_assert!(s > 1.0);
        }
    }

    #[test]
    fn unstable_cone_image_is_inside(t in 0.0f64..1.0, u in 0.0f64..1.0, s in 0.0f64..1.0, which in 0usize..2) {
        let w = [q1(), n2()][which].clone();
        let p = TorusPoint { t, v: u * w.g() };
        if let (Ok((q, _)), Ok(c0)) = (torus_step(p, &w), cone_at(p, &w, ConeKind::Unstable)) {
            let t1 = p.t + 2.0 * p.v / w.g();
            let k1 = w.acceleration(t1);
            let d = Mat2::new(1.0, 2.0 / w.g(), 2.0 * k1, 4.0 * k1 / w.g() + 1.0);
            let c1 = cone_at(q, &w, ConeKind::Unstable).unwrap();
            prop_assert!(c1.contains_strictly(d.apply(c0.direction(s))));
        }
    }
}
