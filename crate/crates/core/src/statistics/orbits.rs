use rand::Rng;
use serde::Serialize;

use super::estimators::{batch_of, wilson_interval, Batches, Proportion};
use super::CylinderObservable;
use crate::collision_map::{step, CollisionState, OrbitRecord, Termination};
use crate::error::{Error, Result};
use crate::sampling::{par_chunks, par_chunks_at};
use crate::wall_motion::WallMotion;

fn check_band(v_lo: f64, v_hi: f64, g: f64) -> Result<()> {
    if !(v_lo >= 10.0 * g && v_hi >= v_lo) {
        return Err(Error::InvalidArgument(format!(
            "start band [{v_lo}, {v_hi}] must satisfy 10 g <= v_lo <= v_hi"
        )));
    }
    Ok(())
}

fn random_start<R: Rng>(rng: &mut R, v_lo: f64, v_hi: f64, wall: &WallMotion) -> CollisionState {
    let t = rng.random::<f64>();
    let v = v_lo + (v_hi - v_lo) * rng.random::<f64>();
    CollisionState::new(t, v, wall)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecurrenceConfig {
    pub v_lo: f64,
    pub v_hi: f64,
    pub epsilon: f64,
    pub horizon: usize,
    pub n_orbits: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecurrenceReport {
    /// Returned orbits among those not aborted.
    pub returned: Proportion,
    pub aborted: u64,
    pub mean_return_steps: f64,
}

/// Fraction of orbits of the collision map that come back within `ε` of
/// their start (time taken mod 1) in at most `horizon` steps.
pub fn recurrence_stats(wall: &WallMotion, cfg: &RecurrenceConfig) -> Result<RecurrenceReport> {
    check_band(cfg.v_lo, cfg.v_hi, wall.g())?;
    let parts = par_chunks(cfg.n_orbits, cfg.seed, |rng, count| {
        let (mut returned, mut aborted, mut steps) = (0u64, 0u64, 0u64);
        for _ in 0..count {
            let start = random_start(rng, cfg.v_lo, cfg.v_hi, wall);
            let mut cur = start;
            for n in 1..=cfg.horizon {
                match step(&cur, wall) {
                    Ok(out) => cur = out.next,
                    Err(_) => {
                        aborted += 1;
                        break;
                    }
                }
                let dt = (cur.t - start.t).rem_euclid(1.0);
                if dt.min(1.0 - dt).hypot(cur.v - start.v) < cfg.epsilon {
                    returned += 1;
                    steps += n as u64;
                    break;
                }
            }
        }
        (returned, aborted, steps)
    });
    let returned: u64 = parts.iter().map(|p| p.0).sum();
    let aborted: u64 = parts.iter().map(|p| p.1).sum();
    let steps: u64 = parts.iter().map(|p| p.2).sum();
    Ok(RecurrenceReport {
        returned: wilson_interval(returned, cfg.n_orbits as u64 - aborted),
        aborted,
        mean_return_steps: steps as f64 / returned.max(1) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EscapeConfig {
    pub v_lo: f64,
    pub v_hi: f64,
    /// Threshold multiplier `M` on the starting velocity.
    pub multiplier: f64,
    pub horizon: usize,
    /// Half-width `Δ` of the bounded window `[v₀ − Δ, v₀ + Δ]`.
    pub window: f64,
    pub n_orbits: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EscapeReport {
    /// Orbits with `v >= M v₀` at some step up to the horizon.
    pub exceeded: Proportion,
    /// Orbits with `v >= M v₀` at the horizon itself.
    pub persistent: Proportion,
    /// Orbits that stayed in `[v₀ − Δ, v₀ + Δ]` throughout.
    pub bounded: Proportion,
    pub aborted: u64,
}

/// Energy growth statistics of the collision map over a finite horizon.
pub fn escape_fraction(wall: &WallMotion, cfg: &EscapeConfig) -> Result<EscapeReport> {
    check_band(cfg.v_lo, cfg.v_hi, wall.g())?;
    let parts = par_chunks(cfg.n_orbits, cfg.seed, |rng, count| {
        let mut c = [0u64; 4];
        'orbit: for _ in 0..count {
            let start = random_start(rng, cfg.v_lo, cfg.v_hi, wall);
            let (v0, threshold) = (start.v, cfg.multiplier * start.v);
            let mut exceeded = v0 >= threshold;
            let mut bounded = true;
            let mut cur = start;
            for _ in 0..cfg.horizon {
                match step(&cur, wall) {
                    Ok(out) => cur = out.next,
                    Err(_) => {
                        c[3] += 1;
                        continue 'orbit;
                    }
                }
                exceeded |= cur.v >= threshold;
                bounded &= (cur.v - v0).abs() <= cfg.window;
            }
            c[0] += exceeded as u64;
            c[1] += (cur.v >= threshold) as u64;
            c[2] += bounded as u64;
        }
        c
    });
    let sum = |j: usize| parts.iter().map(|p| p[j]).sum::<u64>();
    let aborted = sum(3);
    let n = cfg.n_orbits as u64 - aborted;
    Ok(EscapeReport {
        exceeded: wilson_interval(sum(0), n),
        persistent: wilson_interval(sum(1), n),
        bounded: wilson_interval(sum(2), n),
        aborted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingConfig {
    /// Boxes are `[0,1) x [v_center − h/2, v_center + h/2]`.
    pub v_center: f64,
    pub box_heights: Vec<f64>,
    pub steps: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingRow {
    pub box_height: f64,
    pub n: usize,
    pub estimate: f64,
    pub se: f64,
    /// `Φ̄₁ Φ̄₂` from the declared averages.
    pub product: f64,
    pub aborted: u64,
}

/// Box averages `(1/μ(V)) ∫_V Φ₁·(Φ₂∘Fⁿ) dμ` with `dμ = w dt dv`, estimated by
/// sampling `V` uniformly and weighting by `w`.
pub fn mixing_box_estimator(
    phi1: &CylinderObservable,
    phi2: &CylinderObservable,
    wall: &WallMotion,
    cfg: &MixingConfig,
) -> Result<Vec<MixingRow>> {
    let product = match (phi1.average, phi2.average) {
        (Some(a), Some(b)) => a * b,
        _ => f64::NAN,
    };
    let n_max = cfg.steps.iter().copied().max().unwrap_or(0);
    let dim = cfg.steps.len() + 1;
    let mut rows = Vec::new();
    for (hi, &h) in cfg.box_heights.iter().enumerate() {
        let v_lo = cfg.v_center - 0.5 * h;
        if !(v_lo > wall.bounds().slope_max) {
            return Err(Error::InvalidArgument(format!(
                "box of height {h} reaches non-positive w"
            )));
        }
        let seed = cfg.seed.wrapping_add(hi as u64);
        let parts = par_chunks_at(cfg.samples, seed, |rng, start, count| {
            let mut b = Batches::new(dim);
            let mut aborted = 0;
            let mut row = vec![0.0; dim];
            'sample: for i in 0..count {
                let st = random_start(rng, v_lo, v_lo + h, wall);
                let weighted = st.w * phi1.eval(st.t, st.v);
                let mut cur = st;
                for n in 0..=n_max {
                    if n > 0 {
                        match step(&cur, wall) {
                            Ok(out) => cur = out.next,
                            Err(_) => {
                                aborted += 1;
                                continue 'sample;
                            }
                        }
                    }
                    for (j, _) in cfg.steps.iter().enumerate().filter(|(_, &m)| m == n) {
                        row[j] = weighted * phi2.eval(cur.t, cur.v);
                    }
                }
                row[dim - 1] = st.w;
                b.add(batch_of(start + i, cfg.samples), &row);
            }
            (b, aborted)
        });
        let b = Batches::merge_all(dim, parts.iter().map(|p| &p.0));
        let aborted = parts.iter().map(|p| p.1).sum();
        for (j, &n) in cfg.steps.iter().enumerate() {
            let (estimate, se) = b.ratio(j, dim - 1);
            rows.push(MixingRow {
                box_height: h,
                n,
                estimate,
                se,
                product,
                aborted,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrbitLabel {
    EscapingLike,
    BoundedLike,
    OscillatoryLike,
    Aborted,
    /// None of the rules applied.
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifyThresholds {
    /// Escaping-like when the final velocity reaches this multiple of `v₀`.
    pub escape_factor: f64,
    /// Bounded-like when every velocity stays within `v₀ ± window`.
    pub window: f64,
    /// Oscillatory-like when `v_max / v_min` exceeds this ratio.
    pub oscillation_ratio: f64,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        Self {
            escape_factor: 2.0,
            window: 10.0,
            oscillation_ratio: 4.0,
        }
    }
}

/// Finite-horizon heuristic label of an orbit of the collision map.
pub fn classify_orbit(orbit: &OrbitRecord, th: &ClassifyThresholds) -> OrbitLabel {
    if !matches!(
        orbit.termination,
        Termination::Completed | Termination::Escaped
    ) || orbit.states.is_empty()
    {
        return OrbitLabel::Aborted;
    }
    let vs: Vec<f64> = orbit.states.iter().map(|s| s.v).collect();
    let v0 = vs[0];
    let last = vs[vs.len() - 1];
    let (v_min, v_max) = vs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if vs.iter().all(|v| (v - v0).abs() <= th.window) {
        return OrbitLabel::BoundedLike;
    }
    if last >= th.escape_factor * v0 && v_min >= v0 - th.window {
        return OrbitLabel::EscapingLike;
    }
    let i_max = vs.iter().position(|&v| v == v_max).unwrap_or(0);
    if v_max > th.oscillation_ratio * v_min && vs[i_max..].iter().any(|&v| v < v0) {
        return OrbitLabel::OscillatoryLike;
    }
    OrbitLabel::Indeterminate
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(vs: &[f64]) -> OrbitRecord {
        let states = vs
            .iter()
            .enumerate()
            .map(|(i, &v)| CollisionState {
                t: 0.1,
                v,
                w: v,
                n: i as u64,
            })
            .collect();
        OrbitRecord {
            states,
            flight_times: vec![1.0; vs.len() - 1],
            termination: Termination::Completed,
            v_min: vs.iter().copied().fold(f64::INFINITY, f64::min),
            v_max: vs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    #[test]
    fn classification_rules() {
        let th = ClassifyThresholds {
            escape_factor: 2.0,
            window: 5.0,
            oscillation_ratio: 4.0,
        };
        let up: Vec<f64> = (0..50).map(|i| 20.0 + i as f64).collect();
        assert_eq!(classify_orbit(&record(&up), &th), OrbitLabel::EscapingLike);
        assert_eq!(
            classify_orbit(&record(&[20.0, 22.0, 18.0, 24.0]), &th),
            OrbitLabel::BoundedLike
        );
        assert_eq!(
            classify_orbit(&record(&[20.0, 100.0, 10.0, 15.0]), &th),
            OrbitLabel::OscillatoryLike
        );
        assert_eq!(
            classify_orbit(&record(&[20.0, 30.0, 31.0]), &th),
            OrbitLabel::Indeterminate
        );
        let mut r = record(&[20.0, 21.0]);
        r.termination = Termination::Grazing;
        assert_eq!(classify_orbit(&r, &th), OrbitLabel::Aborted);
    }

    #[test]
    fn band_below_ten_g_is_rejected() {
        let w = WallMotion::quadratic(1.0, 2.0);
        let cfg = RecurrenceConfig {
            v_lo: 5.0,
            v_hi: 6.0,
            epsilon: 0.5,
            horizon: 10,
            n_orbits: 1,
            seed: 0,
        };
        assert!(recurrence_stats(&w, &cfg).is_err());
    }

    #[test]
    fn unit_multiplier_always_exceeds() {
        let w = WallMotion::quadratic(1.0, 2.0);
        let cfg = EscapeConfig {
            v_lo: 50.0,
            v_hi: 52.0,
            multiplier: 1.0,
            horizon: 20,
            window: 1e9,
            n_orbits: 50,
            seed: 4,
        };
        let r = escape_fraction(&w, &cfg).unwrap();
        assert_eq!(r.exceeded.fraction, 1.0);
        assert_eq!(r.bounded.fraction, 1.0);
    }

    #[test]
    fn constant_observables_give_one() {
        let w = WallMotion::quadratic(1.0, 2.0);
        let cfg = MixingConfig {
            v_center: 100.0,
            box_heights: vec![10.0],
            steps: vec![0, 3],
            samples: 500,
            seed: 2,
        };
        let one = CylinderObservable::one();
        let rows = mixing_box_estimator(&one, &one, &w, &cfg).unwrap();
        for r in rows {
            assert!((r.estimate - 1.0).abs() < 1e-12, "{r:?}");
        }
    }
}
