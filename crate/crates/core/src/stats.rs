//! Small statistics helpers for Monte Carlo checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Neumaier-compensated sum. The result does not depend on how the input was
/// produced, only on its order, so parallel map + ordered collect is
/// reproducible.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

impl MeanEstimate {
    /// Panics on fewer than two samples.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        assert!(n >= 2, "need at least two samples");
        let mean = compensated_sum(samples.iter().copied()) / n as f64;
        let ss = compensated_sum(samples.iter().map(|x| (x - mean) * (x - mean)));
        let var = ss / (n - 1) as f64;
        MeanEstimate {
            mean,
            std_error: (var / n as f64).sqrt(),
            count: n,
        }
    }

    /// Distance from `target` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.std_error == 0.0 {
            return if self.mean == target { 0.0 } else { f64::INFINITY };
        }
        (self.mean - target) / self.std_error
    }

    pub fn within(&self, target: f64, n_se: f64) -> bool {
        self.z_score(target).abs() <= n_se
    }
}

/// Outcome of a chi-square test.
#[derive(Debug, Clone, Copy)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub critical: f64,
}

impl ChiSquareTest {
    pub fn passes(&self) -> bool {
        self.statistic <= self.critical
    }
}

fn chi2_quantile(dof: usize, level: f64) -> f64 {
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(level)
}

/// Goodness of fit of observed counts against expected counts.
pub fn chi_square_gof(observed: &[u64], expected: &[f64], level: f64) -> ChiSquareTest {
    assert_eq!(observed.len(), expected.len());
    let statistic = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dof = observed.len() - 1;
    ChiSquareTest {
        statistic,
        dof,
        critical: chi2_quantile(dof, level),
    }
}

/// Two-sample chi-square homogeneity test on binned counts.
pub fn chi_square_two_sample(a: &[u64], b: &[u64], level: f64) -> ChiSquareTest {
    assert_eq!(a.len(), b.len());
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let ka = (nb as f64 / na as f64).sqrt();
    let kb = (na as f64 / nb as f64).sqrt();
    let mut statistic = 0.0;
    let mut bins = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        if x + y == 0 {
            continue;
        }
        bins += 1;
        let d = ka * x as f64 - kb * y as f64;
        statistic += d * d / (x + y) as f64;
    }
    let dof = bins.saturating_sub(1).max(1);
    ChiSquareTest {
        statistic,
        dof,
        critical: chi2_quantile(dof, level),
    }
}

/// Bin two samples on the equal-count bins of their pooled quantiles and run
/// [`chi_square_two_sample`].
pub fn two_sample_values(a: &[f64], b: &[f64], bins: usize, level: f64) -> ChiSquareTest {
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..bins)
        .map(|i| pooled[i * pooled.len() / bins])
        .collect();
    let count = |xs: &[f64]| {
        let mut c = vec![0u64; bins];
        for &x in xs {
            c[edges.partition_point(|&e| e <= x)] += 1;
        }
        c
    };
    chi_square_two_sample(&count(a), &count(b), level)
}

/// Histogram of `values` on `bins` equal-width bins over `[lo, hi)`.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<u64> {
    let mut c = vec![0u64; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let i = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        c[i] += 1;
    }
    c
}
