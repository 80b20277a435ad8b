//! Statistical helpers shared by the estimators and tests: compensated
//! accumulators with associative merge, two-sample Kolmogorov-Smirnov
//! and chi-square tests, Anderson-Darling normality, autocorrelations.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Kahan-compensated sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }

    pub fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.add(-other.c);
    }
}

/// Count/mean/variance accumulator over scalar observations.
///
/// Uses compensated sums of `x` and `x^2`, so merging replicate
/// accumulators in any order agrees to floating-point associativity.
#[derive(Debug, Default, Clone, Copy)]
pub struct RunningStats {
    n: u64,
    sum: KahanSum,
    sumsq: KahanSum,
    min: f64,
    max: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self {
            n: 0,
            sum: KahanSum::default(),
            sumsq: KahanSum::default(),
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum.add(x);
        self.sumsq.add(x * x);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        self.n += other.n;
        self.sum.merge(&other.sum);
        self.sumsq.merge(&other.sumsq);
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn sum(&self) -> f64 {
        self.sum.value()
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum.value() / self.n as f64
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let mean = self.mean();
        ((self.sumsq.value() - n * mean * mean) / (n - 1.0)).max(0.0)
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        self.sd() / (self.n as f64).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }
}

/// Empirical quantile of a sorted slice (linear interpolation).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Lag-`j` sample autocorrelation.
pub fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    if xs.len() <= lag + 1 {
        return f64::NAN;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = xs
        .windows(lag + 1)
        .map(|w| (w[0] - mean) * (w[lag] - mean))
        .sum::<f64>()
        / n;
    cov / var
}

#[derive(Debug, Clone, Copy)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

impl TestResult {
    pub fn rejected_at(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestResult {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.total_cmp(v));
    ys.sort_by(|u, v| u.total_cmp(v));
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = xs[i];
        let y = ys[j];
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        let diff = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        d = d.max(diff);
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    TestResult {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
    }
}

fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * (-2.0 * (j as f64 * lambda).powi(2)).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample chi-square homogeneity test over matched count vectors.
///
/// Cells are pooled greedily from the right until every pooled cell has
/// expected count at least `min_expected` in both samples.
pub fn chi_square_two_sample(obs1: &[u64], obs2: &[u64], min_expected: f64) -> TestResult {
    assert_eq!(obs1.len(), obs2.len());
    let n1: u64 = obs1.iter().sum();
    let n2: u64 = obs2.iter().sum();
    assert!(n1 > 0 && n2 > 0);
    let total = (n1 + n2) as f64;
    // Pool cells so expected counts stay reasonable.
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&a, &b) in obs1.iter().zip(obs2) {
        acc.0 += a as f64;
        acc.1 += b as f64;
        let pooled = (acc.0 + acc.1) / total;
        if pooled * n1 as f64 >= min_expected && pooled * n2 as f64 >= min_expected {
            cells.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 + acc.1 > 0.0 {
        if let Some(last) = cells.last_mut() {
            last.0 += acc.0;
            last.1 += acc.1;
        } else {
            cells.push(acc);
        }
    }
    if cells.len() < 2 {
        return TestResult { statistic: 0.0, p_value: 1.0 };
    }
    let mut stat = 0.0;
    for &(a, b) in &cells {
        let pooled = (a + b) / total;
        let e1 = pooled * n1 as f64;
        let e2 = pooled * n2 as f64;
        stat += (a - e1).powi(2) / e1 + (b - e2).powi(2) / e2;
    }
    let df = (cells.len() - 1) as f64;
    let dist = ChiSquared::new(df).expect("positive df");
    TestResult {
        statistic: stat,
        p_value: 1.0 - dist.cdf(stat),
    }
}

/// Anderson-Darling test for normality with estimated mean and variance.
///
/// Returns the size-adjusted statistic `A*^2 = A^2 (1 + 0.75/n + 2.25/n^2)`;
/// compare against [`AD_CRITICAL_01`] / [`AD_CRITICAL_05`].
pub fn anderson_darling_normal(xs: &[f64]) -> f64 {
    let n = xs.len();
    assert!(n >= 8, "need at least 8 observations");
    let mut zs = xs.to_vec();
    zs.sort_by(|a, b| a.total_cmp(b));
    let mean = zs.iter().sum::<f64>() / n as f64;
    let var = zs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut a2 = 0.0;
    for i in 0..n {
        let zi = (zs[i] - mean) / sd;
        let zrev = (zs[n - 1 - i] - mean) / sd;
        let cdf = normal.cdf(zi).clamp(1e-300, 1.0 - 1e-16);
        let sf = (1.0 - normal.cdf(zrev)).clamp(1e-300, 1.0);
        a2 += (2.0 * i as f64 + 1.0) * (cdf.ln() + sf.ln());
    }
    let a2 = -(n as f64) - a2 / n as f64;
    a2 * (1.0 + 0.75 / n as f64 + 2.25 / (n as f64).powi(2))
}

/// Critical value for the size-adjusted Anderson-Darling statistic at
/// significance 0.01 (normal family, both parameters estimated).
pub const AD_CRITICAL_01: f64 = 1.035;
/// Same at significance 0.05.
pub const AD_CRITICAL_05: f64 = 0.752;

/// Ordinary least squares line through `(x, y)` pairs.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Pearson correlation of matched samples.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
        sxy += (x - mx) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}
