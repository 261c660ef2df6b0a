use pingpong_core::curve::UnstableCurve;
use pingpong_core::fragmentation::{
    complexity_count, component_transport, evolve_curve, growth_experiment, random_unstable_curve,
    separation_time, Direction, GrowthParams, SeparationTime,
};
use pingpong_core::hyperbolicity::{cone_at, curvature_bound, expansion_constants, ConeKind};
use pingpong_core::sampling::stream_rng;
use pingpong_core::{TorusPoint, WallMotion};
use proptest::prelude::*;

fn q1() -> WallMotion {
    WallMotion::quadratic(1.0, 2.0)
}

fn walls() -> Vec<WallMotion> {
    vec![
        q1(),
        WallMotion::concave(2.0, 1.0),
        WallMotion::skewed(0.2, 2.0),
    ]
}

#[test]
fn images_stay_in_unstable_cones_with_bounded_curvature() {
    for w in walls() {
        let lambda = expansion_constants(&w).unwrap().lambda;
        let mut rng = stream_rng(21, 0);
        for _ in 0..100 {
            let c = random_unstable_curve(&mut rng, &w, 1e-3).unwrap();
            for n in 1..=4 {
                let rec = evolve_curve(&c, &w, n);
                assert!(!rec.components.is_empty());
                let kbound = curvature_bound(&w, 0.0, n).unwrap();
                for comp in &rec.components {
                    assert!(comp.min_step_expansion >= lambda * (1.0 - 1e-9), "{comp:?}");
                    for s in [0.1, 0.5, 0.9] {
                        let u = comp.u_lo + s * (comp.u_hi - comp.u_lo);
                        let tr = component_transport(&rec, comp, u, &w);
                        let p = TorusPoint::reduce(tr.point.0, tr.point.1, w.g());
                        let cone = cone_at(p, &w, ConeKind::Unstable).unwrap();
                        assert!(
                            cone.margin(tr.tangent) > -1e-9,
                            "tangent {:?} outside {cone:?}",
                            tr.tangent
                        );
                        assert!(tr.curvature.abs() <= kbound * (1.0 + 1e-9) + 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn short_curves_satisfy_the_one_step_sum_after_n0() {
    for w in [q1(), WallMotion::concave(2.0, 1.0)] {
        let n0 = expansion_constants(&w).unwrap().n0 as usize;
        let mut rng = stream_rng(22, 0);
        for _ in 0..4 {
            let c = random_unstable_curve(&mut rng, &w, 1e-5).unwrap();
            let rec = evolve_curve(&c, &w, n0);
            let s = rec.sum_inv_expansion();
            assert!(s < 1.0, "sum {s} with {} components", rec.components.len());
        }
    }
}

#[test]
fn component_counts_respect_linear_bound() {
    for w in walls() {
        let r = complexity_count(&w, 1, 200, 23).unwrap();
        assert!(r.max_components <= 2, "{r:?}");
        let r = complexity_count(&w, 5, 200, 23).unwrap();
        assert!(
            r.max_components <= 30,
            "{:?}",
            (r.max_components, r.mean_components)
        );
        assert_eq!(r.counts.len(), 200);
    }
}

#[test]
fn one_step_components_are_stretched() {
    let w = q1();
    let mut rng = stream_rng(24, 0);
    for _ in 0..200 {
        let c = random_unstable_curve(&mut rng, &w, 1e-3).unwrap();
        let rec = evolve_curve(&c, &w, 1);
        if rec.components.len() == 1 {
            assert!(rec.components[0].length >= 2f64.sqrt() * 1e-3 * (1.0 - 1e-9));
        }
        let total: f64 = rec.components.iter().map(|c| c.length).sum();
        assert!(total >= 2f64.sqrt() * 1e-3 * (1.0 - 1e-6));
    }
}

#[test]
fn growth_fraction_is_monotone_and_saturates() {
    let grid = [1e-4, 1e-3, 1e-2, 1e-1, 10.0];
    for w in [q1(), WallMotion::concave(2.0, 1.0)] {
        let lambda = expansion_constants(&w).unwrap().lambda;
        let params = GrowthParams {
            n: 3,
            trials: 200,
            curve_length: 1e-2,
            eps_grid: &grid,
            delta2: 1e-2,
            lambda,
            seed: 25,
        };
        let r = growth_experiment(&w, &params).unwrap();
        assert_eq!(r.rows.len(), grid.len());
        assert!(
            r.rows
                .windows(2)
                .all(|p| p[0].fraction <= p[1].fraction + 1e-12),
            "{r:?}"
        );
        assert!((r.rows.last().unwrap().fraction - 1.0).abs() < 1e-12);
        assert!(r.c_fit.is_finite());
        assert!(r
            .short_fraction
            .windows(2)
            .all(|p| p[0].1 <= p[1].1 + 1e-12));
    }
}

#[test]
fn separation_is_symmetric_and_zero_across_a_cut() {
    let w = q1();
    // t + v = 1 separates these two points
    let x = TorusPoint { t: 0.4, v: 0.55 };
    let y = TorusPoint { t: 0.4, v: 0.65 };
    assert_eq!(
        separation_time(x, y, &w, Direction::Forward, 5),
        SeparationTime::Steps(0)
    );
    assert_eq!(
        separation_time(y, x, &w, Direction::Forward, 5),
        SeparationTime::Steps(0)
    );
    let near = TorusPoint { t: 0.4, v: 0.3001 };
    let far = TorusPoint { t: 0.4, v: 0.3 };
    match separation_time(near, far, &w, Direction::Forward, 20) {
        SeparationTime::Steps(n) => assert!(n >= 1),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn components_tile_the_curve(t in 0.0f64..1.0, u in 0.0f64..1.0, s in 0.0f64..1.0, n in 1usize..=5) {
        let w = q1();
        let p = (t, 2.0 * u);
        let c = UnstableCurve::with_length(p, 2.0 + 0.5 * s, 0.0, 1e-3);
        let rec = evolve_curve(&c, &w, n);
        let comps = &rec.components;
        prop_assert!(!comps.is_empty() && comps.len() <= 6 * n);
        prop_assert!(comps.windows(2).all(|p| p[0].u_hi == p[1].u_lo));
        let covered: f64 = comps.iter().map(|k| c.arclength(k.u_lo, k.u_hi)).sum();
        prop_assert!((covered - c.length()).abs() < 1e-9 * c.length());
        for k in comps {
            prop_assert!(k.expansion >= 2f64.sqrt().powi(n as i32) * (1.0 - 1e-9));
        }
    }
}
