//! Gaussian-process path sampling on grids: exact draws through a Cholesky
//! factor, truncated Karhunen–Loève draws, derivative processes, and the
//! sup-norm tail curves of those processes.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::kernels::{kernel_matrix, CovarianceSpec, DerivativeKernel, EigenSystem, MultiIndex};
use crate::stats::{linear_fit, MonteCarloEstimate};

/// Jitter ladder, as multiples of the mean diagonal of the covariance.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Multivariate normal sampler `mean + L z` with `L Lᵀ = Σ + jitter·I`.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    mean: Vec<f64>,
    factor: DMatrix<f64>,
    jitter: f64,
}

impl GaussianSampler {
    /// Factor `cov`, escalating diagonal jitter until Cholesky succeeds.
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows();
        if cov.ncols() != n || mean.len() != n {
            return Err(Error::Misaligned(format!("mean of length {} for a {}x{} covariance", mean.len(), n, cov.ncols())));
        }
        let scale = (cov.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
        for &rel in JITTER_LADDER.iter() {
            let jitter = rel * scale;
            let mut c = cov.clone();
            for i in 0..n {
                c[(i, i)] += jitter;
            }
            if let Some(ch) = Cholesky::new(c) {
                let factor = ch.unpack();
                if factor.iter().all(|v| v.is_finite()) {
                    return Ok(Self { mean, factor, jitter });
                }
            }
        }
        Err(Error::IllConditioned { jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// The diagonal jitter that was needed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Draw into `out`, using `z` as scratch for the standard normals.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut Vec<f64>, out: &mut Vec<f64>) {
        let n = self.dim();
        z.clear();
        z.extend((0..n).map(|_| -> f64 { StandardNormal.sample(rng) }));
        out.clear();
        out.extend_from_slice(&self.mean);
        for j in 0..n {
            let zj = z[j];
            let col = self.factor.column(j);
            for i in j..n {
                out[i] += col[i] * zj;
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        let mut out = Vec::with_capacity(self.dim());
        self.draw_into(rng, &mut z, &mut out);
        out
    }
}

/// Exact sampler for the process with covariance `D^w D^w σ` on a grid.
/// With `w = 0` this is the process itself.
#[derive(Clone, Debug)]
pub struct PathSampler {
    grid: Arc<Grid>,
    inner: GaussianSampler,
}

impl PathSampler {
    pub fn new(spec: &CovarianceSpec, w: &MultiIndex, mean: &GridFunction) -> Result<Self> {
        let grid = mean.grid().clone();
        if grid.dim() != spec.dim {
            return Err(Error::Misaligned("grid and kernel differ in dimension".into()));
        }
        let kernel = DerivativeKernel::new(spec, w.clone())?;
        let cov = kernel_matrix(&kernel, grid.points());
        let inner = GaussianSampler::new(mean.values().to_vec(), cov)?;
        Ok(Self { grid, inner })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn gaussian(&self) -> &GaussianSampler {
        &self.inner
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GridFunction {
        GridFunction::new(self.grid.clone(), self.inner.draw(rng)).expect("sampler output matches its grid")
    }
}

/// One draw of the process with covariance `σ` and the given mean.
pub fn sample_exact<R: Rng + ?Sized>(spec: &CovarianceSpec, mean: &GridFunction, rng: &mut R) -> Result<GridFunction> {
    Ok(PathSampler::new(spec, &MultiIndex::zero(spec.dim), mean)?.sample(rng))
}

/// One draw of the derivative process `D^w η`, whose covariance is
/// `D^w D^w σ` and whose mean is `D^w μ` (supplied by the caller).
pub fn sample_derivative<R: Rng + ?Sized>(
    spec: &CovarianceSpec,
    w: &MultiIndex,
    mean_derivative: &GridFunction,
    rng: &mut R,
) -> Result<GridFunction> {
    Ok(PathSampler::new(spec, w, mean_derivative)?.sample(rng))
}

/// A truncated Karhunen–Loève expansion `W_N = Σ_{k≤N} √λ_k ξ_k ψ_k`.
#[derive(Clone, Debug)]
pub struct KlTruncation {
    eigen: Arc<EigenSystem>,
    xi: Vec<f64>,
}

impl KlTruncation {
    /// Draw `level` standard-normal coefficients.
    pub fn draw<R: Rng + ?Sized>(eigen: Arc<EigenSystem>, level: usize, rng: &mut R) -> Result<Self> {
        check_level(&eigen, level)?;
        let xi = (0..level).map(|_| StandardNormal.sample(rng)).collect();
        Ok(Self { eigen, xi })
    }

    pub fn with_coefficients(eigen: Arc<EigenSystem>, xi: Vec<f64>) -> Result<Self> {
        check_level(&eigen, xi.len())?;
        Ok(Self { eigen, xi })
    }

    pub fn level(&self) -> usize {
        self.xi.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.xi
    }

    pub fn eigen(&self) -> &EigenSystem {
        &self.eigen
    }
}

fn check_level(eigen: &EigenSystem, level: usize) -> Result<()> {
    if level == 0 || level > eigen.len() {
        Err(Error::TruncationOutOfRange { level, max: eigen.len() })
    } else {
        Ok(())
    }
}

/// `mean + Σ_{k≤N} √λ_k ξ_k ψ_k` on the grid of `mean`.
pub fn sample_kl(trunc: &KlTruncation, mean: &GridFunction) -> Result<GridFunction> {
    if mean.values().len() != trunc.eigen.points().len() {
        return Err(Error::Misaligned("mean and eigen system are on different grids".into()));
    }
    let path = trunc.eigen.combine(&trunc.xi);
    let values = mean.values().iter().zip(path.iter()).map(|(m, p)| m + p).collect();
    GridFunction::new(mean.grid().clone(), values)
}

/// Monte Carlo estimate of `E sup |W̄_N|²`, the expected squared grid
/// sup-norm of the tail `Σ_{k>N} √λ_k ξ_k ψ_k`.
pub fn truncation_error<R: Rng + ?Sized>(eigen: &EigenSystem, level: usize, draws: usize, rng: &mut R) -> Result<MonteCarloEstimate> {
    if level >= eigen.len() {
        return Err(Error::TruncationOutOfRange { level, max: eigen.len() - 1 });
    }
    let active: Vec<usize> = (level..eigen.len()).filter(|&k| eigen.eigenvalues()[k] > 0.0).collect();
    let n_pts = eigen.points().len();
    let basis = eigen.eigenfunctions();
    let mut values = Vec::with_capacity(draws);
    let mut path = vec![0.0; n_pts];
    for _ in 0..draws {
        path.iter_mut().for_each(|v| *v = 0.0);
        for &k in &active {
            let z: f64 = StandardNormal.sample(rng);
            let c = eigen.eigenvalues()[k].sqrt() * z;
            let col = basis.column(k);
            for (p, b) in path.iter_mut().zip(col.iter()) {
                *p += c * b;
            }
        }
        let sup = path.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        values.push(sup * sup);
    }
    Ok(MonteCarloEstimate::from_samples(&values))
}

/// Empirical tail frequency at one threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailPoint {
    pub threshold: f64,
    pub frequency: f64,
    pub hits: usize,
}

/// Empirical frequencies of `{ sup_grid |D^w η| > M }` for each threshold.
pub fn sup_tail_curve<R: Rng + ?Sized>(
    spec: &CovarianceSpec,
    w: &MultiIndex,
    grid: &Arc<Grid>,
    thresholds: &[f64],
    draws: usize,
    rng: &mut R,
) -> Result<Vec<TailPoint>> {
    if thresholds.iter().any(|&m| !(m > 0.0)) || thresholds.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::InvalidParameter("thresholds must be positive and increasing".into()));
    }
    let sampler = PathSampler::new(spec, w, &GridFunction::zeros(grid.clone()))?;
    let sups = sample_sups(sampler.gaussian(), draws, rng);
    Ok(tail_from_sups(&sups, thresholds))
}

/// Grid sup-norms of `draws` paths.
pub fn sample_sups<R: Rng + ?Sized>(sampler: &GaussianSampler, draws: usize, rng: &mut R) -> Vec<f64> {
    let mut z = Vec::with_capacity(sampler.dim());
    let mut out = Vec::with_capacity(sampler.dim());
    (0..draws)
        .map(|_| {
            sampler.draw_into(rng, &mut z, &mut out);
            out.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        })
        .collect()
}

pub fn tail_from_sups(sups: &[f64], thresholds: &[f64]) -> Vec<TailPoint> {
    let n = sups.len();
    thresholds
        .iter()
        .map(|&m| {
            let hits = sups.iter().filter(|&&s| s > m).count();
            TailPoint { threshold: m, frequency: hits as f64 / n as f64, hits }
        })
        .collect()
}

/// Fit of `log freq = log c₁ - c₂ M²` over thresholds `≥ min_threshold`
/// with at least `min_hits` exceedances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailFit {
    pub log_c1: f64,
    pub c2: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

pub fn fit_tail(curve: &[TailPoint], min_threshold: f64, min_hits: usize) -> Option<TailFit> {
    let used: Vec<&TailPoint> = curve.iter().filter(|p| p.threshold >= min_threshold && p.hits >= min_hits).collect();
    if used.len() < 3 {
        return None;
    }
    let xs: Vec<f64> = used.iter().map(|p| p.threshold * p.threshold).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.frequency.ln()).collect();
    let fit = linear_fit(&xs, &ys);
    Some(TailFit { log_c1: fit.intercept, c2: -fit.slope, r_squared: fit.r_squared, points_used: used.len() })
}

/// `σ_w² = sup_x var D^w η(x)` over a grid.
pub fn sup_variance(spec: &CovarianceSpec, w: &MultiIndex, grid: &Grid) -> Result<f64> {
    spec.check_derivative(w)?;
    Ok(grid.points().iter().map(|x| spec.derivative_value(w, x, x)).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::mercer_decompose;
    use crate::stats::CovarianceAccumulator;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Arc<Grid> {
        Arc::new(Grid::unit_interval(n).unwrap())
    }

    #[test]
    fn reproducible_under_seed() {
        let spec = CovarianceSpec::squared_exponential(1.0, 2.0, 1).unwrap();
        let mean = GridFunction::zeros(grid(10));
        let a = sample_exact(&spec, &mean, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_exact(&spec, &mean, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn vanishing_variance_returns_mean() {
        let spec = CovarianceSpec::squared_exponential(1e12, 1.0, 1).unwrap();
        let g = grid(20);
        let mean = GridFunction::from_fn(g, |x| (3.0 * x[0]).sin()).unwrap();
        let path = sample_exact(&spec, &mean, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let dev = path.values().iter().zip(mean.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-4);
    }

    #[test]
    fn single_point_is_scaled_normal() {
        let spec = CovarianceSpec::squared_exponential(4.0, 1.0, 1).unwrap();
        let g = Arc::new(Grid::new(1, 2, 0.0, 1.0).unwrap());
        let sampler = PathSampler::new(&spec, &MultiIndex::zero(1), &GridFunction::zeros(g)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..20_000).map(|_| sampler.sample(&mut rng).values()[0]).collect();
        let var = crate::stats::variance(&xs);
        // var = 1/τ, SE ≈ var·sqrt(2/n)
        assert!((var - 0.25).abs() < 5.0 * 0.25 * (2.0f64 / 20_000.0).sqrt());
    }

    #[test]
    fn kl_edges() {
        let spec = CovarianceSpec::squared_exponential(1.0, 1.0, 1).unwrap();
        let g = grid(16);
        let eig = Arc::new(mercer_decompose(&spec, &g).unwrap());
        assert!(matches!(
            KlTruncation::with_coefficients(eig.clone(), vec![]),
            Err(Error::TruncationOutOfRange { .. })
        ));
        assert!(KlTruncation::with_coefficients(eig.clone(), vec![0.0; 17]).is_err());

        let mean = GridFunction::from_fn(g.clone(), |x| x[0]).unwrap();
        let zero = KlTruncation::with_coefficients(eig.clone(), vec![0.0; 5]).unwrap();
        assert_eq!(sample_kl(&zero, &mean).unwrap().values(), mean.values());

        let one = KlTruncation::with_coefficients(eig.clone(), vec![1.7]).unwrap();
        let path = sample_kl(&one, &GridFunction::zeros(g)).unwrap();
        let psi = eig.eigenfunction(0);
        let ratio = path.values()[0] / psi[0];
        for (p, q) in path.values().iter().zip(&psi) {
            assert!((p - ratio * q).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_error_shrinks() {
        let spec = CovarianceSpec::squared_exponential(1.0, 1.0, 1).unwrap();
        let eig = mercer_decompose(&spec, &grid(32)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let last = truncation_error(&eig, eig.len() - 1, 500, &mut rng).unwrap();
        assert!(last.estimate < 1e-6);
        let mut prev = f64::INFINITY;
        let mut prev_se = 0.0;
        for n in 1..8 {
            let e = truncation_error(&eig, n, 2000, &mut rng).unwrap();
            assert!(e.estimate <= prev + 2.0 * (e.standard_error + prev_se));
            prev = e.estimate;
            prev_se = e.standard_error;
        }
        assert!(matches!(truncation_error(&eig, eig.len(), 10, &mut rng), Err(Error::TruncationOutOfRange { .. })));
    }

    #[test]
    fn derivative_process_covariance() {
        let spec = CovarianceSpec::squared_exponential(1.0, 1.0, 1).unwrap();
        let g = grid(12);
        let w = MultiIndex::unit(1, 0);
        let sampler = PathSampler::new(&spec, &w, &GridFunction::zeros(g.clone())).unwrap();
        let mut acc = CovarianceAccumulator::new(vec![0.0; g.len()]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10_000 {
            acc.push(sampler.sample(&mut rng).values());
        }
        let cmp = acc.compare(|i, j| spec.derivative_value(&w, g.point(i), g.point(j)));
        assert!(cmp.max_standard_errors < 5.0, "{cmp:?}");
    }

    #[test]
    fn tail_curve_is_monotone() {
        let spec = CovarianceSpec::squared_exponential(1.0, 1.0, 1).unwrap();
        let thresholds: Vec<f64> = (1..=12).map(|i| 0.25 * i as f64).collect();
        let curve = sup_tail_curve(&spec, &MultiIndex::zero(1), &grid(32), &thresholds, 5_000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for p in curve.windows(2) {
            assert!(p[0].frequency >= p[1].frequency);
        }
        assert!(sup_tail_curve(&spec, &MultiIndex::zero(1), &grid(8), &[1.0, 0.5], 10, &mut ChaCha8Rng::seed_from_u64(2)).is_err());
    }
}
