//! Small estimators shared by the experiments: batch means, Wilson
//! intervals, Kolmogorov-Smirnov distance and a least-squares line.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

/// Number of batches used for batch-means standard errors.
pub const N_BATCHES: usize = 32;

/// Batch that sample `i` of `n` belongs to.
#[inline]
pub fn batch_of(i: usize, n: usize) -> usize {
    ((i as u128 * N_BATCHES as u128) / n.max(1) as u128) as usize
}

/// Per-batch sums of a vector-valued statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct Batches {
    dim: usize,
    sums: Vec<f64>,
    counts: [u64; N_BATCHES],
}

impl Batches {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            sums: vec![0.0; dim * N_BATCHES],
            counts: [0; N_BATCHES],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add(&mut self, batch: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.dim);
        let row = &mut self.sums[batch * self.dim..(batch + 1) * self.dim];
        for (s, v) in row.iter_mut().zip(values) {
            *s += v;
        }
        self.counts[batch] += 1;
    }

    pub fn add_scalar(&mut self, batch: usize, value: f64) {
        self.add(batch, &[value]);
    }

    pub fn merge(&mut self, other: &Batches) {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// Folds chunk results in order, so the floating-point sum is fixed.
    pub fn merge_all<'a, I: IntoIterator<Item = &'a Batches>>(dim: usize, parts: I) -> Batches {
        let mut out = Batches::new(dim);
        for p in parts {
            out.merge(p);
        }
        out
    }

    pub fn count(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn mean(&self, j: usize) -> f64 {
        let total: f64 = (0..N_BATCHES).map(|b| self.sums[b * self.dim + j]).sum();
        total / self.count() as f64
    }

    /// Means of component `j` in each non-empty batch.
    pub fn batch_means(&self, j: usize) -> Vec<f64> {
        (0..N_BATCHES)
            .filter(|&b| self.counts[b] > 0)
            .map(|b| self.sums[b * self.dim + j] / self.counts[b] as f64)
            .collect()
    }

    /// Overall mean and batch-means standard error of component `j`.
    pub fn estimate(&self, j: usize) -> (f64, f64) {
        (self.mean(j), batch_standard_error(&self.batch_means(j)))
    }

    /// Ratio estimator `Σ x_a / Σ x_b` with a batch-means standard error.
    pub fn ratio(&self, a: usize, b: usize) -> (f64, f64) {
        let total = |j: usize| -> f64 { (0..N_BATCHES).map(|k| self.sums[k * self.dim + j]).sum() };
        let r = total(a) / total(b);
        let per: Vec<f64> = (0..N_BATCHES)
            .filter(|&k| self.counts[k] > 0 && self.sums[k * self.dim + b] != 0.0)
            .map(|k| self.sums[k * self.dim + a] / self.sums[k * self.dim + b])
            .collect();
        (r, batch_standard_error(&per))
    }
}

/// Standard error of the grand mean from batch means.
pub fn batch_standard_error(means: &[f64]) -> f64 {
    let b = means.len();
    if b < 2 {
        return f64::NAN;
    }
    let m = means.iter().sum::<f64>() / b as f64;
    let ss: f64 = means.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (b as f64 * (b as f64 - 1.0))).sqrt()
}

/// Binomial proportion with a 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub fraction: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn wilson_interval(successes: u64, trials: u64) -> Proportion {
    if trials == 0 {
        return Proportion {
            successes,
            trials,
            fraction: f64::NAN,
            lower: 0.0,
            upper: 1.0,
        };
    }
    let z = Normal::standard().inverse_cdf(0.975);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Proportion {
        successes,
        trials,
        fraction: p,
        lower: (center - half).clamp(0.0, p),
        upper: (center + half).clamp(p, 1.0),
    }
}

/// Kolmogorov-Smirnov distance between the empirical law of `xs` and
/// `N(0, variance)`. Sorts `xs` in place.
pub fn ks_distance_normal(xs: &mut [f64], variance: f64) -> f64 {
    let normal = Normal::new(0.0, variance.sqrt()).expect("positive variance");
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Least-squares line `y = a + b x`; returns `(a, b)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_cover_indices_evenly() {
        let n = 1000;
        let mut counts = [0; N_BATCHES];
        for i in 0..n {
            counts[batch_of(i, n)] += 1;
        }
        assert!(counts.iter().all(|&c| c == 31 || c == 32));
        assert_eq!(batch_of(n - 1, n), N_BATCHES - 1);
    }

    #[test]
    fn batch_mean_and_error() {
        let mut b = Batches::new(1);
        for i in 0..64 {
            b.add_scalar(i / 2, if i % 2 == 0 { 1.0 } else { 3.0 });
        }
        let (m, se) = b.estimate(0);
        assert_eq!(m, 2.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn wilson_known_value() {
        // 50 of 100: center 0.5, half-width 0.0961...
        let p = wilson_interval(50, 100);
        assert!((p.lower - 0.403_831).abs() < 1e-5 && (p.upper - 0.596_169).abs() < 1e-5);
        let p = wilson_interval(100, 100);
        assert_eq!(p.upper, 1.0);
        assert!(p.lower > 0.96);
    }

    #[test]
    fn ks_of_quantiles_is_small() {
        let normal = Normal::standard();
        let n = 1000;
        let mut xs: Vec<f64> = (0..n)
            .map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64))
            .collect();
        let d = ks_distance_normal(&mut xs, 1.0);
        assert!((d - 0.5 / n as f64).abs() < 1e-9);
    }

    #[test]
    fn line_fit_is_exact_on_a_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let (a, b) = linear_fit(&xs, &ys);
        assert!((a - 2.0).abs() < 1e-14 && (b + 0.5).abs() < 1e-14);
    }
}
