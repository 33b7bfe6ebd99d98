//! Monte Carlo bookkeeping shared by the estimators and the test suites:
//! empirical quantiles, online moments, batch-means standard errors for
//! autocorrelated sequences, effective sample size, and a two-sample
//! Kolmogorov–Smirnov test.

/// Linear-interpolation empirical quantile (the common "type 7" rule) of an
/// ascending-sorted slice. `p` is clamped to [0, 1].
///
/// Panics on an empty slice — quantiles of nothing are a caller bug.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let p = p.clamp(0.0, 1.0);
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Quantiles at several levels from unsorted data (sorts a copy).
pub fn quantiles(data: &[f64], ps: &[f64]) -> Vec<f64> {
    let mut v = data.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    ps.iter().map(|&p| quantile_sorted(&v, p)).collect()
}

/// Sample mean and its i.i.d. standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let mut acc = OnlineStats::new();
    for &x in xs {
        acc.push(x);
    }
    (acc.mean(), acc.se())
}

/// Welford online mean/variance accumulator.
#[derive(Debug, Clone, Default)]
pub struct OnlineStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl OnlineStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (0 for fewer than two observations).
    pub fn var(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn sd(&self) -> f64 {
        self.var().sqrt()
    }

    /// Standard error of the mean under independence.
    pub fn se(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.var() / self.n as f64).sqrt()
        }
    }

    /// Merge two accumulators (parallel reduction is associative up to
    /// floating-point rounding).
    pub fn merge(&self, other: &Self) -> Self {
        if self.n == 0 {
            return other.clone();
        }
        if other.n == 0 {
            return self.clone();
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.n as f64 / n as f64;
        let m2 =
            self.m2 + other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64;
        Self { n, mean, m2 }
    }
}

/// Mean and a batch-means standard error that is honest about serial
/// correlation: the sequence is cut into `n_batches` contiguous batches and
/// the spread of batch averages estimates the variance of the overall mean.
pub fn batch_means_se(xs: &[f64], n_batches: usize) -> (f64, f64) {
    let n = xs.len();
    let (mean, naive_se) = mean_se(xs);
    if n_batches < 2 || n < 2 * n_batches {
        return (mean, naive_se);
    }
    let blen = n / n_batches;
    let used = blen * n_batches;
    let mut bm = OnlineStats::new();
    for b in 0..n_batches {
        let s: f64 = xs[b * blen..(b + 1) * blen].iter().sum();
        bm.push(s / blen as f64);
    }
    let _ = used;
    (mean, bm.se())
}

/// Effective sample size of an autocorrelated sequence via batch means:
/// n divided by the estimated integrated autocorrelation time, clamped to
/// [1, n].
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 8 {
        return n as f64;
    }
    let n_batches = (n as f64).sqrt().floor() as usize;
    let blen = n / n_batches;
    let mut overall = OnlineStats::new();
    for &x in &xs[..blen * n_batches] {
        overall.push(x);
    }
    let var = overall.var();
    if var == 0.0 {
        return n as f64;
    }
    let mut bm = OnlineStats::new();
    for b in 0..n_batches {
        let s: f64 = xs[b * blen..(b + 1) * blen].iter().sum();
        bm.push(s / blen as f64);
    }
    let iact = blen as f64 * bm.var() / var;
    (n as f64 / iact.max(1e-12)).clamp(1.0, n as f64)
}

/// Result of a two-sample Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample KS test with the usual asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsTest {
    assert!(!a.is_empty() && !b.is_empty(), "KS test needs data");
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    ys.sort_unstable_by(f64::total_cmp);
    let (n1, n2) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let x = xs[i];
        let y = ys[j];
        let t = x.min(y);
        while i < n1 && xs[i] <= t {
            i += 1;
        }
        while j < n2 && ys[j] <= t {
            j += 1;
        }
        let f1 = i as f64 / n1 as f64;
        let f2 = j as f64 / n2 as f64;
        d = d.max((f1 - f2).abs());
    }
    let ne = (n1 as f64 * n2 as f64) / (n1 + n2) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    KsTest {
        statistic: d,
        p_value: kolmogorov_tail(lambda),
    }
}

/// Asymptotic Kolmogorov distribution tail Q(λ) = 2 Σ (−1)^{j−1} e^{−2 j² λ²}.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// `m` stratified representatives of a sorted sample: the midpoint order
/// statistic of each of `m` equal-probability strata. Preserves means of
/// smooth functionals to within the stratum widths while shrinking the
/// sample `len/m`-fold.
pub fn stratified_midpoints(sorted: &[f64], m: usize) -> Vec<f64> {
    let n = sorted.len();
    if n <= m {
        return sorted.to_vec();
    }
    (0..m)
        .map(|i| sorted[((i as f64 + 0.5) * n as f64 / m as f64) as usize])
        .collect()
}
