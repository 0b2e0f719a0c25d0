use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Grid, GridFunction};
use crate::kernels::MultiIndex;
use crate::posterior::PriorModel;
use crate::stats::MonteCarloEstimate;
use crate::{Error, Result};

/// Membership requires every derivative norm to be below `M_n (1 - SIEVE_REL_TOL)`.
pub const SIEVE_REL_TOL: f64 = 1e-9;

/// One sieve `Θ_n = {η : sup|D^w η| < M_n, |w| ≤ α}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SieveSpec {
    pub alpha: usize,
    pub m_n: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SieveMembership {
    pub member: bool,
    /// Grid sup-norm of each derivative with `|w| ≤ α`.
    pub norms: Vec<(MultiIndex, f64)>,
}

impl SieveMembership {
    pub fn radius(&self) -> f64 {
        self.norms.iter().map(|(_, v)| *v).fold(0.0, f64::max)
    }
}

/// Derivative along axis `j` on a tensor grid: central differences inside,
/// second-order one-sided differences at the two ends.
fn gradient(grid: &Grid, values: &[f64], j: usize) -> Vec<f64> {
    let m = grid.per_axis();
    let h = grid.spacing();
    let stride = grid.stride(j);
    let mut out = vec![0.0; values.len()];
    for (flat, o) in out.iter_mut().enumerate() {
        let i = (flat / stride) % m;
        let at = |k: usize| values[flat - i * stride + k * stride];
        *o = if i == 0 {
            (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
        } else if i == m - 1 {
            (3.0 * at(m - 1) - 4.0 * at(m - 2) + at(m - 3)) / (2.0 * h)
        } else {
            (at(i + 1) - at(i - 1)) / (2.0 * h)
        };
    }
    out
}

/// Finite-difference sup-norms of `D^w η` for all `|w| ≤ α`.
pub fn derivative_norms(eta: &GridFunction, alpha: usize) -> Result<Vec<(MultiIndex, f64)>> {
    let grid = eta.grid();
    let required = 4 * alpha + 1;
    if grid.per_axis() < required.max(3) {
        return Err(Error::GridTooCoarse { points: grid.per_axis(), required: required.max(3) });
    }
    let mut out = Vec::new();
    for w in MultiIndex::up_to(grid.dim(), alpha) {
        let mut v = eta.values().to_vec();
        for (j, &order) in w.components().iter().enumerate() {
            for _ in 0..order {
                v = gradient(grid, &v, j);
            }
        }
        let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        out.push((w, sup));
    }
    Ok(out)
}

pub fn sieve_member(eta: &GridFunction, spec: &SieveSpec) -> Result<SieveMembership> {
    let norms = derivative_norms(eta, spec.alpha)?;
    let limit = spec.m_n * (1.0 - SIEVE_REL_TOL);
    let member = norms.iter().all(|(_, v)| *v < limit);
    Ok(SieveMembership { member, norms })
}

/// Result of the growth-condition feasibility check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFeasibility {
    pub feasible: bool,
    /// Smallest admissible smoothness `(1 + 1/r) / (2 (1/d - 1/s))`.
    pub alpha_bound: f64,
}

/// `r` and `s` are the tail exponents of the `τ` and `λ` priors; `None`
/// stands for an arbitrarily thin tail.
pub fn growth_feasibility(d: usize, alpha: f64, r: Option<f64>, s: Option<f64>) -> Result<GrowthFeasibility> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let inv_r = r.map_or(0.0, |r| 1.0 / r);
    let inv_s = s.map_or(0.0, |s| 1.0 / s);
    if let Some(s) = s {
        if s <= d as f64 {
            return Err(Error::Infeasible(format!(
                "the lambda tail exponent s = {s} must exceed the dimension d = {d}"
            )));
        }
    }
    if r.is_some_and(|r| r <= 0.0) {
        return Err(Error::InvalidParameter("tau tail exponent must be positive".into()));
    }
    let alpha_bound = (1.0 + inv_r) / (2.0 * (1.0 / d as f64 - inv_s));
    let feasible = alpha >= alpha_bound && alpha > d as f64 / 2.0;
    Ok(GrowthFeasibility { feasible, alpha_bound })
}

/// Tail of the `λ` prior, which fixes the cut-off `λ_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LambdaTail {
    /// `Π(λ > L) = O(e^{-b L^s})`, giving `λ_n = n^{1/s}`.
    Polynomial { s: f64 },
    /// `Π(λ > L) ≤ e^{-e^L}`, giving `λ_n = log n`.
    DoubleExponential,
}

/// The sequences `τ_n = n^{-1/r}`, `λ_n` and the smallest `M_n` meeting
/// `M_n² τ_n λ_n^{-2α} ≥ b₁ n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SieveSequences {
    pub alpha: usize,
    pub dim: usize,
    pub r: f64,
    pub lambda_tail: LambdaTail,
    pub b1: f64,
    pub b2: f64,
}

impl Default for SieveSequences {
    fn default() -> Self {
        Self { alpha: 2, dim: 1, r: 1.0, lambda_tail: LambdaTail::DoubleExponential, b1: 1e-3, b2: 1.0 }
    }
}

impl SieveSequences {
    pub fn tau_n(&self, n: usize) -> f64 {
        (n as f64).powf(-1.0 / self.r)
    }

    pub fn lambda_n(&self, n: usize) -> f64 {
        match self.lambda_tail {
            LambdaTail::Polynomial { s } => (n as f64).powf(1.0 / s),
            LambdaTail::DoubleExponential => (n as f64).ln().max(f64::MIN_POSITIVE),
        }
    }

    pub fn m_n(&self, n: usize) -> f64 {
        let l = self.lambda_n(n);
        (self.b1 * n as f64 * l.powi(2 * self.alpha as i32) / self.tau_n(n)).sqrt()
    }

    /// Both growth inequalities at `n`.
    pub fn growth_holds(&self, n: usize) -> (bool, bool) {
        let (m, t, l) = (self.m_n(n), self.tau_n(n), self.lambda_n(n));
        let first = m * m * t * l.powi(-2 * self.alpha as i32) >= self.b1 * n as f64 * (1.0 - 1e-12);
        let second = m.powf(self.dim as f64 / self.alpha as f64) <= self.b2 * n as f64;
        (first, second)
    }

    pub fn spec(&self, n: usize) -> SieveSpec {
        SieveSpec { alpha: self.alpha, m_n: self.m_n(n), n }
    }
}

/// Largest derivative norm of each of `draws` prior paths. A path is in the
/// sieve with bound `M` iff its radius is below `M (1 - SIEVE_REL_TOL)`.
pub fn sieve_radii<R: Rng + ?Sized>(model: &PriorModel, alpha: usize, draws: usize, rng: &mut R) -> Result<Vec<f64>> {
    (0..draws)
        .map(|_| {
            let d = model.sample_prior(rng)?;
            let norms = derivative_norms(&d.eta, alpha)?;
            Ok(norms.iter().map(|(_, v)| *v).fold(0.0, f64::max))
        })
        .collect()
}

/// Monte Carlo prior mass outside the sieve.
pub fn sieve_complement_mass<R: Rng + ?Sized>(model: &PriorModel, spec: &SieveSpec, draws: usize, rng: &mut R) -> Result<MonteCarloEstimate> {
    let radii = sieve_radii(model, spec.alpha, draws, rng)?;
    Ok(complement_from_radii(&radii, spec.m_n))
}

/// Fraction of precomputed radii outside the sieve with bound `m_n`.
pub fn complement_from_radii(radii: &[f64], m_n: f64) -> MonteCarloEstimate {
    let limit = m_n * (1.0 - SIEVE_REL_TOL);
    let out = radii.iter().filter(|&&r| r >= limit).count();
    MonteCarloEstimate::proportion(out, radii.len())
}

#[cfg(test)]
mod unit {
    use super::*;
    use crate::posterior::PriorSpec;
    use crate::rng::StreamSeed;
    use std::sync::Arc;

    fn line() -> Arc<Grid> {
        Arc::new(Grid::unit_interval(257).unwrap())
    }

    #[test]
    fn constants_are_members() {
        let eta = GridFunction::from_fn(line(), |_| 0.7).unwrap();
        let m = sieve_member(&eta, &SieveSpec { alpha: 2, m_n: 1.0, n: 10 }).unwrap();
        assert!(m.member);
        assert_eq!(m.norms.len(), 3);
        assert!(m.norms[1].1 < 1e-12 && m.norms[2].1 < 1e-10);
    }

    #[test]
    fn linear_boundary_is_excluded() {
        let mn = 3.0;
        let eta = GridFunction::from_fn(line(), |x| mn * x[0]).unwrap();
        let m = sieve_member(&eta, &SieveSpec { alpha: 1, m_n: mn, n: 10 }).unwrap();
        assert!((m.norms[1].1 - mn).abs() < 1e-9);
        assert!(!m.member);
    }

    #[test]
    fn sine_derivative() {
        for omega in [1.0, 4.0, 9.0] {
            let eta = GridFunction::from_fn(line(), |x| (omega * x[0]).sin()).unwrap();
            let norms = derivative_norms(&eta, 1).unwrap();
            assert!((norms[1].1 - omega).abs() < 0.01 * omega, "{omega} {}", norms[1].1);
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let eta = GridFunction::from_fn(Arc::new(Grid::unit_interval(8).unwrap()), |x| x[0]).unwrap();
        assert!(matches!(derivative_norms(&eta, 2), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn mixed_derivative_in_two_dimensions() {
        let g = Arc::new(Grid::new(2, 65, 0.0, 1.0).unwrap());
        let eta = GridFunction::from_fn(g, |x| x[0] * x[0] * x[1]).unwrap();
        let norms = derivative_norms(&eta, 2).unwrap();
        let get = |w: &[usize]| norms.iter().find(|(m, _)| m.components() == w).unwrap().1;
        assert!((get(&[1, 1]) - 2.0).abs() < 1e-9);
        assert!((get(&[2, 0]) - 2.0).abs() < 1e-9);
        assert!(get(&[0, 2]) < 1e-9);
    }

    #[test]
    fn growth_bounds() {
        let g = growth_feasibility(1, 1.0, None, None).unwrap();
        assert!((g.alpha_bound - 0.5).abs() < 1e-15 && g.feasible);
        let g = growth_feasibility(1, 2.0, Some(1.0), Some(2.0)).unwrap();
        assert!((g.alpha_bound - 2.0).abs() < 1e-15 && g.feasible);
        // r = 1 gives s d / (s - d)
        let (d, s) = (2usize, 5.0);
        let g = growth_feasibility(d, 1.0, Some(1.0), Some(s)).unwrap();
        assert!((g.alpha_bound - s * d as f64 / (s - d as f64)).abs() < 1e-12 && !g.feasible);
        assert!(matches!(growth_feasibility(2, 3.0, Some(1.0), Some(2.0)), Err(Error::Infeasible(_))));
    }

    #[test]
    fn sequences_meet_first_growth_condition() {
        let seq = SieveSequences::default();
        for n in [25, 50, 100, 1000] {
            assert!(seq.growth_holds(n).0);
        }
        assert!(seq.m_n(50) > seq.m_n(25));
    }

    #[test]
    fn complement_mass_extremes_and_monotone() {
        let spec = PriorSpec { grid_points: 129, truncation: 30, ..PriorSpec::default() };
        let model = PriorModel::new(spec).unwrap();
        let mut rng = StreamSeed::root(3).rng();
        let radii = sieve_radii(&model, 2, 300, &mut rng).unwrap();
        assert_eq!(complement_from_radii(&radii, 1e6).estimate, 0.0);
        assert_eq!(complement_from_radii(&radii, 0.0).estimate, 1.0);
        let mut last = 1.0;
        for m in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let e = complement_from_radii(&radii, m).estimate;
            assert!(e <= last);
            last = e;
        }
    }
}
