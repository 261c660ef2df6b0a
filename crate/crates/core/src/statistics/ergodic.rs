use serde::Serialize;

use super::estimators::{batch_of, batch_standard_error, ks_distance_normal, linear_fit, Batches};
use super::{torus_step_jittered, Observable, StatReport, Tolerance, JITTER};
use crate::error::{Error, Result};
use crate::limit_map::{reduce_mod, torus_step, TorusPoint};
use crate::sampling::{par_chunks, par_chunks_at, uniform_torus_point};
use crate::wall_motion::WallMotion;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BirkhoffResult {
    pub n: usize,
    pub average: f64,
    /// Corner hits that were nudged off by the jitter.
    pub jitters: u64,
}

/// Time average `(1/n) Σ_{i<n} obs(F̃∞ⁱ p)` along one torus orbit.
pub fn birkhoff_average(
    obs: &Observable,
    start: TorusPoint,
    wall: &WallMotion,
    n: usize,
) -> BirkhoffResult {
    let mut p = start;
    let mut jitters = 0;
    let mut sum = 0.0;
    for i in 0..n {
        sum += obs.eval(p);
        if i + 1 < n {
            torus_step_jittered(&mut p, wall, &mut jitters);
        }
    }
    BirkhoffResult {
        n,
        average: sum / n.max(1) as f64,
        jitters,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationConfig {
    pub max_lag: usize,
    /// Number of uniform starting points.
    pub ensemble: usize,
    pub seed: u64,
    /// Also estimate the independence control, pairing each start with the
    /// orbit of an unrelated point.
    pub control: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub lag: usize,
    pub c: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub observable: String,
    pub ensemble: usize,
    pub rows: Vec<CorrelationRow>,
    pub control: Option<Vec<CorrelationRow>>,
    /// Fitted `b` in `|C(n)| ≈ C e^{-bn}`.
    pub decay_rate: f64,
    /// Lags used by the fit; when only lag 0 is significant the rate is the
    /// lower bound `ln(C(0) / 2 SE(1))`.
    pub decay_fit_lags: usize,
    pub jitters: u64,
}

impl CorrelationReport {
    pub fn c0(&self) -> f64 {
        self.rows[0].c
    }

    /// Largest `|C(n)| / C(0)` over `lo <= n <= hi`.
    pub fn max_ratio(&self, lo: usize, hi: usize) -> f64 {
        let c0 = self.c0();
        self.rows[lo..=hi.min(self.rows.len() - 1)]
            .iter()
            .map(|r| r.c.abs() / c0)
            .fold(0.0, f64::max)
    }

    /// First lag `L >= 1` where `|C|` stays within 2 SE for three
    /// consecutive lags, if any.
    pub fn truncation_lag(&self) -> Option<usize> {
        let quiet = |r: &CorrelationRow| r.c.abs() <= 2.0 * r.se;
        (1..self.rows.len().saturating_sub(2)).find(|&l| self.rows[l..l + 3].iter().all(quiet))
    }
}

/// Per-batch covariance estimates from sums of `a_0 a_n` (first half) and
/// `a_n` (second half); raw moments are corrected by the sample means when
/// the observable's mean is not declared.
fn covariance_rows(b: &Batches, lags: usize, centered: bool) -> Vec<CorrelationRow> {
    let cov = |prod: f64, m0: f64, mn: f64| if centered { prod } else { prod - m0 * mn };
    (0..lags)
        .map(|n| {
            let c = cov(b.mean(n), b.mean(lags), b.mean(lags + n));
            let (p, m0, mn) = (
                b.batch_means(n),
                b.batch_means(lags),
                b.batch_means(lags + n),
            );
            let per: Vec<f64> = (0..p.len()).map(|k| cov(p[k], m0[k], mn[k])).collect();
            CorrelationRow {
                lag: n,
                c,
                se: batch_standard_error(&per),
            }
        })
        .collect()
}

/// Ensemble estimate of `C(n) = ∫ φ·(φ∘F̃∞ⁿ) dμ̃ − (∫φ)²` for `n <= max_lag`.
pub fn autocorrelation(
    obs: &Observable,
    wall: &WallMotion,
    cfg: &CorrelationConfig,
) -> CorrelationReport {
    let lags = cfg.max_lag + 1;
    let g = wall.g();
    let shift = obs.mean.unwrap_or(0.0);
    let orbit = |p: &mut TorusPoint, out: &mut [f64], jitters: &mut u64| {
        for (n, slot) in out.iter_mut().enumerate() {
            if n > 0 {
                torus_step_jittered(p, wall, jitters);
            }
            *slot = obs.eval(*p) - shift;
        }
    };
    let total = cfg.ensemble;
    let parts = par_chunks_at(total, cfg.seed, |rng, start, count| {
        let mut main = Batches::new(2 * lags);
        let mut ctrl = Batches::new(2 * lags);
        let mut a = vec![0.0; lags];
        let mut row = vec![0.0; 2 * lags];
        let mut jitters = 0;
        for i in 0..count {
            let batch = batch_of(start + i, total);
            let mut p = uniform_torus_point(rng, g);
            orbit(&mut p, &mut a, &mut jitters);
            let a0 = a[0];
            for n in 0..lags {
                row[n] = a0 * a[n];
                row[lags + n] = a[n];
            }
            main.add(batch, &row);
            if cfg.control {
                let mut q = uniform_torus_point(rng, g);
                orbit(&mut q, &mut a, &mut jitters);
                for n in 0..lags {
                    row[n] = a0 * a[n];
                    row[lags + n] = if n == 0 { a0 } else { a[n] };
                }
                ctrl.add(batch, &row);
            }
        }
        (main, ctrl, jitters)
    });
    let main = Batches::merge_all(2 * lags, parts.iter().map(|p| &p.0));
    let centered = obs.mean.is_some();
    let rows = covariance_rows(&main, lags, centered);
    let control = cfg.control.then(|| {
        let ctrl = Batches::merge_all(2 * lags, parts.iter().map(|p| &p.1));
        let mut r = covariance_rows(&ctrl, lags, centered);
        // lag 0 of the control pairs a point with itself
        r[0] = rows[0];
        r
    });
    let jitters = parts.iter().map(|p| p.2).sum();
    let (decay_rate, decay_fit_lags) = fit_decay(&rows);
    CorrelationReport {
        observable: obs.name.clone(),
        ensemble: total,
        rows,
        control,
        decay_rate,
        decay_fit_lags,
        jitters,
    }
}

fn fit_decay(rows: &[CorrelationRow]) -> (f64, usize) {
    let significant = 1 + rows[1..]
        .iter()
        .take_while(|r| r.c.abs() > 2.0 * r.se)
        .count();
    if significant >= 2 {
        let xs: Vec<f64> = (0..significant).map(|n| n as f64).collect();
        let ys: Vec<f64> = rows[..significant].iter().map(|r| r.c.abs().ln()).collect();
        (-linear_fit(&xs, &ys).1, significant)
    } else if rows.len() > 1 {
        ((rows[0].c / (2.0 * rows[1].se)).ln(), 1)
    } else {
        (f64::NAN, 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CltConfig {
    /// Terms per Birkhoff sum.
    pub n: usize,
    /// Number of independent sums.
    pub ensembles: usize,
    /// Ensemble and lag range for the correlation-sum variance.
    pub corr_ensemble: usize,
    pub corr_max_lag: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltReport {
    pub observable: String,
    pub n: usize,
    pub ensembles: usize,
    /// `C(0) + 2 Σ_{1<=k<L} C(k)`.
    pub sigma2_hat: f64,
    pub truncation_lag: usize,
    /// False when no quiet run of lags was found and the sum ran to the
    /// last estimated lag.
    pub truncation_found: bool,
    pub ensemble_variance: f64,
    pub relative_difference: f64,
    pub ks_distance: f64,
    pub jitters: u64,
    #[serde(skip)]
    pub normalized_sums: Vec<f64>,
}

impl CltReport {
    pub fn ks_report(&self, tol: f64) -> StatReport {
        StatReport::new(
            "clt_ks",
            self.ensembles as u64,
            self.ks_distance,
            0.0,
            0.0,
            Tolerance::AtMost(tol),
        )
    }

    pub fn variance_report(&self, rel_tol: f64) -> StatReport {
        StatReport::new(
            "clt_variance",
            self.ensembles as u64,
            self.relative_difference,
            0.0,
            0.0,
            Tolerance::AtMost(rel_tol),
        )
    }
}

/// Normalized Birkhoff sums `n^{-1/2} Σ_{i<n} (φ − ∫φ)∘F̃∞ⁱ` over a uniform
/// ensemble, compared with `N(0, σ̂²)`.
pub fn clt_experiment(obs: &Observable, wall: &WallMotion, cfg: &CltConfig) -> Result<CltReport> {
    let mean = obs.mean.ok_or_else(|| {
        Error::InvalidArgument(format!("observable {} has no declared mean", obs.name))
    })?;
    let corr = autocorrelation(
        obs,
        wall,
        &CorrelationConfig {
            max_lag: cfg.corr_max_lag,
            ensemble: cfg.corr_ensemble,
            seed: cfg.seed.wrapping_add(1),
            control: false,
        },
    );
    let (lag, found) = match corr.truncation_lag() {
        Some(l) => (l, true),
        None => (corr.rows.len(), false),
    };
    let sigma2_hat = corr.rows[0].c + 2.0 * corr.rows[1..lag].iter().map(|r| r.c).sum::<f64>();
    if !(sigma2_hat > 0.0) {
        return Err(Error::DegenerateVariance(sigma2_hat));
    }

    let g = wall.g();
    let scale = 1.0 / (cfg.n as f64).sqrt();
    let parts = par_chunks(cfg.ensembles, cfg.seed, |rng, count| {
        let mut jitters = 0;
        let sums: Vec<f64> = (0..count)
            .map(|_| {
                let mut p = uniform_torus_point(rng, g);
                let mut s = 0.0;
                for i in 0..cfg.n {
                    if i > 0 {
                        torus_step_jittered(&mut p, wall, &mut jitters);
                    }
                    s += obs.eval(p) - mean;
                }
                s * scale
            })
            .collect();
        (sums, jitters)
    });
    let mut sums: Vec<f64> = parts.iter().flat_map(|p| p.0.iter().copied()).collect();
    let jitters = corr.jitters + parts.iter().map(|p| p.1).sum::<u64>();
    let m = sums.len() as f64;
    let avg = sums.iter().sum::<f64>() / m;
    let ensemble_variance = sums.iter().map(|z| (z - avg).powi(2)).sum::<f64>() / (m - 1.0);
    let normalized_sums = sums.clone();
    let ks_distance = ks_distance_normal(&mut sums, sigma2_hat);
    Ok(CltReport {
        observable: obs.name.clone(),
        n: cfg.n,
        ensembles: cfg.ensembles,
        sigma2_hat,
        truncation_lag: lag,
        truncation_found: found,
        ensemble_variance,
        relative_difference: (sigma2_hat - ensemble_variance).abs() / ensemble_variance,
        ks_distance,
        jitters,
        normalized_sums,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaReport {
    pub n_samples: usize,
    pub mean: f64,
    pub se: f64,
    /// Mean of `(γ(p) + γ(M p)) / 2` with `M(t, v) = (-t mod 1, -v mod g)`.
    pub pair_mean: f64,
    /// Largest `|γ(p) + γ(M p)|` seen.
    pub pair_max_abs: f64,
    pub jitters: u64,
}

impl GammaReport {
    pub fn stat_report(&self, k_se: f64) -> StatReport {
        StatReport::new(
            "gamma_mean",
            self.n_samples as u64,
            self.mean,
            self.se,
            0.0,
            Tolerance::StandardErrors(k_se),
        )
    }
}

fn gamma_at(mut p: TorusPoint, wall: &WallMotion, jitters: &mut u64) -> f64 {
    loop {
        match torus_step(p, wall) {
            Ok((_, gamma)) => return gamma as f64,
            Err(_) => {
                *jitters += 1;
                p.t = reduce_mod(p.t + JITTER, 1.0);
            }
        }
    }
}

/// Monte Carlo mean of the winding increment over the uniform torus.
pub fn gamma_mean(wall: &WallMotion, n_samples: usize, seed: u64) -> GammaReport {
    let g = wall.g();
    let parts = par_chunks_at(n_samples, seed, |rng, start, count| {
        let mut b = Batches::new(2);
        let mut jitters = 0;
        let mut pair_max: f64 = 0.0;
        for i in 0..count {
            let p = uniform_torus_point(rng, g);
            let a = gamma_at(p, wall, &mut jitters);
            let mirrored = TorusPoint::reduce(-p.t, -p.v, g);
            let m = gamma_at(mirrored, wall, &mut jitters);
            pair_max = pair_max.max((a + m).abs());
            b.add(batch_of(start + i, n_samples), &[a, 0.5 * (a + m)]);
        }
        (b, jitters, pair_max)
    });
    let b = Batches::merge_all(2, parts.iter().map(|p| &p.0));
    let (mean, se) = b.estimate(0);
    GammaReport {
        n_samples,
        mean,
        se,
        pair_mean: b.mean(1),
        pair_max_abs: parts.iter().map(|p| p.2).fold(0.0, f64::max),
        jitters: parts.iter().map(|p| p.1).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_observable_averages_to_one() {
        let w = WallMotion::quadratic(1.0, 2.0);
        for n in [1, 7, 1000] {
            let r = birkhoff_average(&Observable::one(), TorusPoint { t: 0.1, v: 0.3 }, &w, n);
            assert_eq!(r.average, 1.0);
        }
    }

    #[test]
    fn corner_start_is_jittered() {
        let w = WallMotion::quadratic(1.0, 2.0);
        let r = birkhoff_average(&Observable::one(), TorusPoint { t: 0.5, v: 0.5 }, &w, 3);
        assert_eq!(r.jitters, 1);
    }

    #[test]
    fn lag_zero_is_the_variance() {
        let w = WallMotion::quadratic(1.0, 2.0);
        let cfg = CorrelationConfig {
            max_lag: 3,
            ensemble: 20_000,
            seed: 1,
            control: true,
        };
        let r = autocorrelation(&Observable::cos_2pi_t(), &w, &cfg);
        assert!((r.c0() - 0.5).abs() < 0.02);
        for row in &r.control.unwrap()[1..] {
            assert!(row.c.abs() <= 4.0 * row.se, "{row:?}");
        }
    }

    #[test]
    fn zero_observable_is_degenerate() {
        let w = WallMotion::quadratic(1.0, 2.0);
        let cfg = CltConfig {
            n: 10,
            ensembles: 100,
            corr_ensemble: 1000,
            corr_max_lag: 5,
            seed: 3,
        };
        assert!(
            matches!(clt_experiment(&Observable::zero(), &w, &cfg), Err(Error::DegenerateVariance(v)) if v == 0.0)
        );
    }

    #[test]
    fn mirrored_pairs_cancel_for_quadratic() {
        let r = gamma_mean(&WallMotion::quadratic(1.0, 2.0), 10_000, 5);
        assert_eq!(r.pair_max_abs, 0.0);
        assert_eq!(r.pair_mean, 0.0);
    }
}
