use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::grid::{Grid, GridFunction, PointSet};
use crate::kernels::{mercer_decompose, CovarianceSpec, EigenSystem, KernelFamily};
use crate::model::{clamp_probability, LinkFunction};
use crate::posterior::summary::PosteriorDraw;
use crate::rkhs::RkhsElement;
use crate::sampler::truncation_error;
use crate::stats::MonteCarloEstimate;
use crate::{Error, Result};

/// Components whose eigenvalue is below this fraction of the leading one are
/// treated as numerically zero when extending the basis off the grid.
const NYSTROM_REL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TauPrior {
    /// Density proportional to `τ^{-shape-1} e^{-scale/τ}`.
    InverseGamma { shape: f64, scale: f64 },
    Fixed { value: f64 },
}

impl Default for TauPrior {
    fn default() -> Self {
        TauPrior::InverseGamma { shape: 2.0, scale: 1.0 }
    }
}

impl TauPrior {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            TauPrior::InverseGamma { shape, scale } => shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite(),
            TauPrior::Fixed { value } => value > 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("improper tau prior {self:?}")))
        }
    }

    /// Log density of `log τ` (density of `τ` times `τ`), up to a constant.
    pub fn log_density_log_scale(&self, tau: f64) -> f64 {
        match *self {
            TauPrior::InverseGamma { shape, scale } => -shape * tau.ln() - scale / tau,
            TauPrior::Fixed { .. } => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            TauPrior::InverseGamma { shape, scale } => {
                let g: f64 = Gamma::new(shape, 1.0 / scale).expect("validated").sample(rng);
                1.0 / g
            }
            TauPrior::Fixed { value } => value,
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, TauPrior::Fixed { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LambdaPrior {
    /// `λ = log(1 + E)` with `E ~ Exp(1)`, so `P(λ > L) = exp(-(e^L - 1))`.
    #[default]
    ThinTail,
    /// Shape and rate.
    Gamma { shape: f64, rate: f64 },
    Fixed { value: f64 },
}

impl LambdaPrior {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LambdaPrior::ThinTail => true,
            LambdaPrior::Gamma { shape, rate } => shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite(),
            LambdaPrior::Fixed { value } => value > 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("improper lambda prior {self:?}")))
        }
    }

    pub fn cdf(&self, l: f64) -> f64 {
        if l <= 0.0 {
            return 0.0;
        }
        match *self {
            LambdaPrior::ThinTail => -(-l.exp_m1()).exp_m1(),
            LambdaPrior::Gamma { shape, rate } => statrs::distribution::Gamma::new(shape, rate).expect("validated").cdf(l),
            LambdaPrior::Fixed { value } => f64::from(l >= value),
        }
    }

    pub fn survival(&self, l: f64) -> f64 {
        match *self {
            LambdaPrior::ThinTail if l > 0.0 => (-l.exp_m1()).exp(),
            _ => 1.0 - self.cdf(l),
        }
    }

    /// Draw from the continuum prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LambdaPrior::ThinTail => {
                let e: f64 = Exp1.sample(rng);
                e.ln_1p()
            }
            LambdaPrior::Gamma { shape, rate } => Gamma::new(shape, 1.0 / rate).expect("validated").sample(rng),
            LambdaPrior::Fixed { value } => value,
        }
    }
}

/// Geometric ladder of `λ` values on which bases are cached.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderSpec {
    pub lo: f64,
    pub hi: f64,
    pub rungs: usize,
}

impl Default for LadderSpec {
    fn default() -> Self {
        Self { lo: 0.01, hi: 8.0, rungs: 64 }
    }
}

impl LadderSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.lo > 0.0 && self.hi >= self.lo && self.rungs >= 1 && self.hi.is_finite()) {
            return Err(Error::InvalidParameter(format!("bad lambda ladder {self:?}")));
        }
        if self.rungs == 1 {
            return Ok(vec![self.lo]);
        }
        let ratio = (self.hi / self.lo).ln() / (self.rungs - 1) as f64;
        Ok((0..self.rungs).map(|i| self.lo * (ratio * i as f64).exp()).collect())
    }
}

/// Full prior specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    pub family: KernelFamily,
    /// Prior mean `μ`; `None` means zero.
    pub mean: Option<RkhsElement>,
    pub link: LinkFunction,
    pub tau: TauPrior,
    pub lambda: LambdaPrior,
    /// Number of Karhunen–Loève coefficients `N`.
    pub truncation: usize,
    pub dim: usize,
    /// Grid points per axis on `[0,1]^d`.
    pub grid_points: usize,
    pub ladder: LadderSpec,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            family: KernelFamily::SquaredExponential,
            mean: None,
            link: LinkFunction::Logistic,
            tau: TauPrior::default(),
            lambda: LambdaPrior::ThinTail,
            truncation: 30,
            dim: 1,
            grid_points: 128,
            ladder: LadderSpec::default(),
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        self.tau.validate()?;
        self.lambda.validate()?;
        if self.truncation == 0 {
            return Err(Error::InvalidParameter("truncation must be at least 1".into()));
        }
        if self.dim == 0 || self.grid_points < 2 {
            return Err(Error::InvalidParameter("need dim >= 1 and at least 2 grid points".into()));
        }
        let total = self.grid_points.checked_pow(self.dim as u32).unwrap_or(usize::MAX);
        if self.truncation > total {
            return Err(Error::TruncationOutOfRange { level: self.truncation, max: total });
        }
        if let Some(m) = &self.mean {
            if m.dim() != self.dim {
                return Err(Error::Misaligned("prior mean dimension differs from prior".into()));
            }
        }
        Ok(())
    }
}

/// Karhunen–Loève basis for one `λ` rung with `τ = 1`.
#[derive(Debug)]
pub struct RungBasis {
    pub lambda: f64,
    pub eigen: Arc<EigenSystem>,
    /// `[√λ_k ψ_k(x)]` on the prior grid, `N` columns.
    pub grid_basis: DMatrix<f64>,
}

/// Outcome of the truncation check at the roughest rung.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruncationGate {
    pub lambda: f64,
    pub level: usize,
    pub error: MonteCarloEstimate,
    pub max_variance: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// A validated prior with its grid, `λ` ladder and a write-once basis cache.
/// Shareable across chains.
#[derive(Debug)]
pub struct PriorModel {
    spec: PriorSpec,
    grid: Arc<Grid>,
    rungs: Vec<f64>,
    log_mass: Vec<f64>,
    mean_grid: Vec<f64>,
    cache: Vec<OnceLock<std::result::Result<Arc<RungBasis>, String>>>,
}

impl PriorModel {
    pub fn new(spec: PriorSpec) -> Result<Self> {
        spec.validate()?;
        let grid = Arc::new(Grid::new(spec.dim, spec.grid_points, 0.0, 1.0)?);
        let rungs = match spec.lambda {
            LambdaPrior::Fixed { value } => vec![value],
            _ => spec.ladder.values()?,
        };
        let log_mass = rung_log_masses(&spec.lambda, &rungs);
        let mean_grid = match &spec.mean {
            Some(m) => m.values_at(grid.points()),
            None => vec![0.0; grid.len()],
        };
        let cache = (0..rungs.len()).map(|_| OnceLock::new()).collect();
        Ok(Self { spec, grid, rungs, log_mass, mean_grid, cache })
    }

    pub fn spec(&self) -> &PriorSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn rungs(&self) -> &[f64] {
        &self.rungs
    }

    /// Log prior mass of each rung: the continuum prior integrated over the
    /// cell between geometric midpoints of neighbouring rungs.
    pub fn rung_log_mass(&self) -> &[f64] {
        &self.log_mass
    }

    pub fn mean_on_grid(&self) -> &[f64] {
        &self.mean_grid
    }

    pub fn mean_at(&self, points: &PointSet) -> Vec<f64> {
        match &self.spec.mean {
            Some(m) => m.values_at(points),
            None => vec![0.0; points.len()],
        }
    }

    pub fn kernel_at(&self, rung: usize) -> Result<CovarianceSpec> {
        CovarianceSpec::new(self.spec.family, 1.0, self.rungs[rung], self.spec.dim)
    }

    /// Eigen system and grid basis for a rung, computed once.
    pub fn basis(&self, rung: usize) -> Result<Arc<RungBasis>> {
        let slot = self.cache.get(rung).ok_or_else(|| Error::InvalidParameter(format!("rung {rung} out of range")))?;
        slot.get_or_init(|| self.build_basis(rung).map(Arc::new).map_err(|e| e.to_string()))
            .clone()
            .map_err(Error::DecompositionFailed)
    }

    fn build_basis(&self, rung: usize) -> Result<RungBasis> {
        let kernel = self.kernel_at(rung)?;
        let eigen = Arc::new(mercer_decompose(&kernel, &self.grid)?);
        let grid_basis = self.extend(&eigen, &kernel, self.grid.points());
        Ok(RungBasis { lambda: self.rungs[rung], eigen, grid_basis })
    }

    fn extend(&self, eigen: &EigenSystem, kernel: &CovarianceSpec, at: &PointSet) -> DMatrix<f64> {
        let n = self.spec.truncation;
        let mut b = eigen.nystrom(kernel, at, n, NYSTROM_REL_TOL);
        for k in 0..n {
            b.column_mut(k).scale_mut(eigen.eigenvalues()[k].max(0.0).sqrt());
        }
        b
    }

    /// The rung basis evaluated at arbitrary points.
    pub fn basis_at(&self, rung: usize, points: &PointSet) -> Result<DMatrix<f64>> {
        if points.dim() != self.spec.dim {
            return Err(Error::Misaligned("points and prior differ in dimension".into()));
        }
        let basis = self.basis(rung)?;
        Ok(self.extend(&basis.eigen, &self.kernel_at(rung)?, points))
    }

    /// `η = μ + τ^{-1/2} B ξ` for a basis evaluated at some points.
    pub fn eta(&self, basis: &DMatrix<f64>, mean: &[f64], tau: f64, xi: &[f64]) -> Vec<f64> {
        let s = tau.sqrt().recip();
        (0..basis.nrows())
            .map(|i| mean[i] + s * (0..xi.len()).map(|k| basis[(i, k)] * xi[k]).sum::<f64>())
            .collect()
    }

    /// Assemble a draw from its coordinates.
    pub fn draw(&self, xi: Vec<f64>, tau: f64, rung: usize) -> Result<PosteriorDraw> {
        let basis = self.basis(rung)?;
        let eta = self.eta(&basis.grid_basis, &self.mean_grid, tau, &xi);
        let p: Vec<f64> = eta.iter().map(|&u| clamp_probability(self.spec.link.forward(u))).collect();
        Ok(PosteriorDraw {
            xi,
            tau,
            lambda: self.rungs[rung],
            rung,
            eta: GridFunction::new(self.grid.clone(), eta)?,
            p: GridFunction::new(self.grid.clone(), p)?,
        })
    }

    /// Draw a rung from the discretised `λ` prior.
    pub fn sample_rung<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, lm) in self.log_mass.iter().enumerate() {
            acc += lm.exp();
            if u < acc {
                return i;
            }
        }
        self.rungs.len() - 1
    }

    /// One draw from the (ladder-discretised) prior.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PosteriorDraw> {
        let tau = self.spec.tau.sample(rng);
        let rung = self.sample_rung(rng);
        let xi = (0..self.spec.truncation).map(|_| StandardNormal.sample(rng)).collect();
        self.draw(xi, tau, rung)
    }

    /// Probabilities of each draw at arbitrary points.
    pub fn probabilities_at(&self, draws: &[PosteriorDraw], points: &PointSet) -> Result<Vec<Vec<f64>>> {
        let mean = self.mean_at(points);
        let mut bases: Vec<Option<DMatrix<f64>>> = vec![None; self.rungs.len()];
        let mut out = Vec::with_capacity(draws.len());
        for d in draws {
            if bases[d.rung].is_none() {
                bases[d.rung] = Some(self.basis_at(d.rung, points)?);
            }
            let b = bases[d.rung].as_ref().expect("filled above");
            let eta = self.eta(b, &mean, d.tau, &d.xi);
            out.push(eta.into_iter().map(|u| clamp_probability(self.spec.link.forward(u))).collect());
        }
        Ok(out)
    }

    /// Monte Carlo truncation error `E sup|tail|²` at the largest rung,
    /// relative to the unit base variance; passes below `rel_threshold`.
    pub fn truncation_gate<R: Rng + ?Sized>(&self, draws: usize, rel_threshold: f64, rng: &mut R) -> Result<TruncationGate> {
        let rung = self.rungs.len() - 1;
        let basis = self.basis(rung)?;
        let level = self.spec.truncation;
        let error = if level >= basis.eigen.len() {
            MonteCarloEstimate { estimate: 0.0, standard_error: 0.0, samples: draws }
        } else {
            truncation_error(&basis.eigen, level, draws, rng)?
        };
        let max_variance = self.kernel_at(rung)?.max_variance();
        let threshold = rel_threshold * max_variance;
        Ok(TruncationGate {
            lambda: self.rungs[rung],
            level,
            passed: error.estimate + 2.0 * error.standard_error < threshold,
            error,
            max_variance,
            threshold,
        })
    }
}

fn rung_log_masses(prior: &LambdaPrior, rungs: &[f64]) -> Vec<f64> {
    if rungs.len() == 1 {
        return vec![0.0];
    }
    let mut edges = vec![0.0];
    edges.extend(rungs.windows(2).map(|w| (w[0] * w[1]).sqrt()));
    let mut masses: Vec<f64> = edges
        .iter()
        .enumerate()
        .map(|(i, &lo)| match edges.get(i + 1) {
            Some(&hi) => prior.cdf(hi) - prior.cdf(lo),
            None => prior.survival(lo),
        })
        .collect();
    // avoid log(0) for rungs far in the tail
    for m in masses.iter_mut() {
        *m = m.max(1e-300);
    }
    let total: f64 = masses.iter().sum();
    masses.iter().map(|m| (m / total).ln()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeed;

    #[test]
    fn thin_tail_survival() {
        let p = LambdaPrior::ThinTail;
        for l in [0.1, 0.5, 1.0, 2.0] {
            assert!((p.survival(l) - (-(l.exp() - 1.0)).exp()).abs() < 1e-14);
            assert!((p.cdf(l) + p.survival(l) - 1.0).abs() < 1e-14);
            assert!(p.survival(l) <= (-l.exp()).exp() * std::f64::consts::E + 1e-15);
        }
        let mut rng = StreamSeed::root(1).rng();
        let n = 100_000;
        let hits = (0..n).filter(|_| p.sample(&mut rng) > 1.0).count() as f64 / n as f64;
        assert!((hits - p.survival(1.0)).abs() < 5.0 * (p.survival(1.0) / n as f64).sqrt());
    }

    #[test]
    fn rung_masses_sum_to_one() {
        let model = PriorModel::new(PriorSpec::default()).unwrap();
        let total: f64 = model.rung_log_mass().iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(model.rungs().len(), 64);
        assert!((model.rungs()[63] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn default_truncation_gate_passes() {
        let model = PriorModel::new(PriorSpec::default()).unwrap();
        let mut rng = StreamSeed::root(2).rng();
        let gate = model.truncation_gate(2000, 1e-3, &mut rng).unwrap();
        assert!(gate.passed, "{gate:?}");
    }

    #[test]
    fn basis_is_cached_and_consistent_off_grid() {
        let model = PriorModel::new(PriorSpec::default()).unwrap();
        let a = model.basis(10).unwrap();
        let b = model.basis(10).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let on_grid = model.basis_at(10, model.grid().points()).unwrap();
        let diff = (&on_grid - &a.grid_basis).abs().max();
        assert!(diff < 1e-12);
    }

    #[test]
    fn basis_reproduces_kernel() {
        let model = PriorModel::new(PriorSpec::default()).unwrap();
        let rung = 40;
        let pts = PointSet::from_scalars(&[0.013, 0.5, 0.77]).unwrap();
        let b = model.basis_at(rung, &pts).unwrap();
        let k = model.kernel_at(rung).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let approx: f64 = (0..b.ncols()).map(|c| b[(i, c)] * b[(j, c)]).sum();
                let exact = k.value(pts.point(i), pts.point(j));
                assert!((approx - exact).abs() < 1e-3, "{i} {j} {approx} {exact}");
            }
        }
    }
}
