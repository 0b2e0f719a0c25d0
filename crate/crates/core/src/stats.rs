//! Small statistical helpers shared by the sampler, the chain and the lab.

/// Arithmetic mean; `NaN` for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Linearly interpolated quantile (type 7) of unsorted data.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(hits: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub samples: usize,
}

impl MonteCarloEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let estimate = mean(xs);
        let standard_error = if n > 1 { (variance(xs) / n as f64).sqrt() } else { f64::NAN };
        Self { estimate, standard_error, samples: n }
    }

    /// A binomial proportion with its plug-in standard error.
    pub fn proportion(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        Self { estimate: p, standard_error: (p * (1.0 - p) / n as f64).sqrt(), samples: n }
    }
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    LinearFit { slope, intercept, r_squared }
}

/// Effective sample size via Geyer's initial monotone positive sequence.
pub fn effective_sample_size(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(chain);
    let c0: f64 = chain.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| -> f64 {
        chain[..n - lag]
            .iter()
            .zip(&chain[lag..])
            .map(|(a, b)| (a - m) * (b - m))
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = acf(lag) + acf(lag + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum += pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64 * (n as f64).log10().max(1.0))
}

/// Split-chain potential scale reduction for a single chain.
pub fn split_rhat(chain: &[f64]) -> f64 {
    let half = chain.len() / 2;
    if half < 2 {
        return f64::NAN;
    }
    let a = &chain[..half];
    let b = &chain[chain.len() - half..];
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (variance(a), variance(b));
    let n = half as f64;
    let w = 0.5 * (va + vb);
    if w <= 0.0 {
        return 1.0;
    }
    let grand = 0.5 * (ma + mb);
    let between = n * ((ma - grand).powi(2) + (mb - grand).powi(2));
    let var_plus = (n - 1.0) / n * w + between / n;
    (var_plus / w).sqrt()
}

/// Streaming estimate of a covariance matrix around a known mean, with
/// per-entry Monte Carlo standard errors.
#[derive(Clone, Debug)]
pub struct CovarianceAccumulator {
    dim: usize,
    centre: Vec<f64>,
    count: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl CovarianceAccumulator {
    pub fn new(centre: Vec<f64>) -> Self {
        let dim = centre.len();
        Self {
            dim,
            centre,
            count: 0,
            sum: vec![0.0; dim * dim],
            sum_sq: vec![0.0; dim * dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        let d = self.dim;
        let dev: Vec<f64> = x.iter().zip(&self.centre).map(|(a, m)| a - m).collect();
        for i in 0..d {
            for j in i..d {
                let p = dev[i] * dev[j];
                self.sum[i * d + j] += p;
                self.sum_sq[i * d + j] += p * p;
            }
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Entry `(i, j)` of the estimate.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.sum[i * self.dim + j] / self.count as f64
    }

    /// Monte Carlo standard error of entry `(i, j)`.
    pub fn standard_error(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let n = self.count as f64;
        let m = self.sum[i * self.dim + j] / n;
        let v = (self.sum_sq[i * self.dim + j] / n - m * m).max(0.0);
        (v / n).sqrt()
    }

    /// Largest `|estimate - truth| / SE` over the upper triangle, and the
    /// largest absolute deviation.
    pub fn compare(&self, truth: impl Fn(usize, usize) -> f64) -> CovarianceComparison {
        let mut max_z: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                let diff = (self.covariance(i, j) - truth(i, j)).abs();
                let se = self.standard_error(i, j).max(f64::MIN_POSITIVE);
                max_abs = max_abs.max(diff);
                max_z = max_z.max(diff / se);
            }
        }
        CovarianceComparison { max_standard_errors: max_z, max_abs_deviation: max_abs }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovarianceComparison {
    pub max_standard_errors: f64,
    pub max_abs_deviation: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let xs = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(median(&xs), 2.5);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(30, 100, 1.96);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo, hi) = wilson_interval(0, 1000, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.01);
    }

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - 2.0 * x).collect();
        let fit = linear_fit(&xs, &ys);
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ess_of_ar1() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let phi: f64 = 0.8;
        let mut x = 0.0;
        let chain: Vec<f64> = (0..20_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = phi * x + z;
                x
            })
            .collect();
        // n (1 - phi) / (1 + phi)
        let expected = 20_000.0 * 0.2 / 1.8;
        let ess = effective_sample_size(&chain);
        assert!((ess / expected - 1.0).abs() < 0.25, "ess {ess}");
        assert!((split_rhat(&chain) - 1.0).abs() < 0.05);
    }
}
