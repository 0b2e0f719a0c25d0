//! Finite kernel expansions `η(x) = Σ aᵢ σ₀(λx, λtᵢ)`, their RKHS norms,
//! least-squares projection of targets onto such expansions, and Monte Carlo
//! small-ball probabilities around them.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::grid::{Grid, GridFunction, PointSet};
use crate::kernels::{CovarianceSpec, KernelFamily, MultiIndex, DEDUP_TOL};
use crate::sampler::PathSampler;
use crate::stats::wilson_interval;

/// `η(x) = Σᵢ aᵢ σ₀(λx, λtᵢ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RkhsElement {
    pub family: KernelFamily,
    pub lambda: f64,
    pub nodes: PointSet,
    pub coefficients: Vec<f64>,
}

impl RkhsElement {
    pub fn new(family: KernelFamily, lambda: f64, nodes: PointSet, coefficients: Vec<f64>) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        if nodes.is_empty() {
            return Err(Error::InvalidParameter("an expansion needs at least one node".into()));
        }
        if nodes.len() != coefficients.len() {
            return Err(Error::Misaligned(format!("{} nodes, {} coefficients", nodes.len(), coefficients.len())));
        }
        ensure_finite(&coefficients, "expansion coefficients")?;
        Ok(Self { family, lambda, nodes, coefficients })
    }

    /// One-dimensional squared-exponential expansion.
    pub fn se_1d(lambda: f64, nodes: &[f64], coefficients: &[f64]) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, lambda, PointSet::from_scalars(nodes)?, coefficients.to_vec())
    }

    /// The zero function, represented by a single node with coefficient 0.
    pub fn zero(family: KernelFamily, lambda: f64, dim: usize) -> Self {
        let nodes = PointSet::new(dim, vec![0.0; dim]).expect("origin is a valid point");
        Self { family, lambda, nodes, coefficients: vec![0.0] }
    }

    pub fn dim(&self) -> usize {
        self.nodes.dim()
    }

    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v * self.lambda).collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let u = self.scaled(x);
        self.nodes
            .iter()
            .zip(&self.coefficients)
            .map(|(t, a)| a * self.family.base(&u, &self.scaled(t)))
            .sum()
    }

    /// `D^w η(x) = λ^{|w|} Σᵢ aᵢ (∂ᵘʷ σ₀)(λx, λtᵢ)`.
    pub fn derivative(&self, w: &MultiIndex, x: &[f64]) -> Result<f64> {
        let u = self.scaled(x);
        let scale = self.lambda.powi(w.order() as i32);
        let mut acc = 0.0;
        for (t, a) in self.nodes.iter().zip(&self.coefficients) {
            acc += a * self.family.base_partial(w, &u, &self.scaled(t))?;
        }
        Ok(scale * acc)
    }

    pub fn on_grid(&self, grid: &Arc<Grid>) -> GridFunction {
        let values = grid.points().iter().map(|x| self.evaluate(x)).collect();
        GridFunction::new(grid.clone(), values).expect("finite expansion")
    }

    pub fn derivative_on_grid(&self, w: &MultiIndex, grid: &Arc<Grid>) -> Result<GridFunction> {
        let values = grid.points().iter().map(|x| self.derivative(w, x)).collect::<Result<Vec<_>>>()?;
        GridFunction::new(grid.clone(), values)
    }

    pub fn values_at(&self, points: &PointSet) -> Vec<f64> {
        points.iter().map(|x| self.evaluate(x)).collect()
    }

    /// Merge nodes that coincide in scaled coordinates, summing their
    /// coefficients.
    pub fn deduplicated(&self) -> RkhsElement {
        let mut nodes: Vec<Vec<f64>> = Vec::new();
        let mut coefs: Vec<f64> = Vec::new();
        for (t, &a) in self.nodes.iter().zip(&self.coefficients) {
            let hit = nodes.iter().position(|s| {
                s.iter().zip(t).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) * self.lambda <= DEDUP_TOL
            });
            match hit {
                Some(i) => coefs[i] += a,
                None => {
                    nodes.push(t.to_vec());
                    coefs.push(a);
                }
            }
        }
        let flat = nodes.concat();
        RkhsElement {
            family: self.family,
            lambda: self.lambda,
            nodes: PointSet::new(self.dim(), flat).expect("subset of valid nodes"),
            coefficients: coefs,
        }
    }

    /// Gram matrix `[σ₀(λtᵢ, λtⱼ)]` of the nodes.
    pub fn node_gram(&self) -> DMatrix<f64> {
        node_gram(self.family, self.lambda, &self.nodes)
    }
}

fn node_gram(family: KernelFamily, lambda: f64, nodes: &PointSet) -> DMatrix<f64> {
    let k = nodes.len();
    let scaled: Vec<Vec<f64>> = nodes.iter().map(|t| t.iter().map(|v| v * lambda).collect()).collect();
    DMatrix::from_fn(k, k, |i, j| family.base(&scaled[i], &scaled[j]))
}

/// Squared RKHS norm `aᵀ K a` of the expansion after merging coincident
/// nodes.
pub fn rkhs_norm_sq(e: &RkhsElement) -> Result<f64> {
    let e = e.deduplicated();
    let k = e.node_gram();
    let a = DVector::from_column_slice(&e.coefficients);
    let q = a.dot(&(&k * &a));
    let scale = a.dot(&a) * k.trace().max(1.0);
    if q < -1e-10 * scale {
        return Err(Error::DecompositionFailed(format!("node Gram is not positive semidefinite (aᵀKa = {q:e})")));
    }
    Ok(q.max(0.0))
}

/// Result of projecting a target onto a span of kernel sections.
#[derive(Clone, Debug)]
pub struct Projection {
    pub element: RkhsElement,
    pub sup_error: f64,
    pub ridge: f64,
}

/// Default ridge: `1e-8 · trace(K)`.
pub fn default_ridge(family: KernelFamily, lambda: f64, nodes: &PointSet) -> f64 {
    1e-8 * node_gram(family, lambda, nodes).trace()
}

/// Coefficients minimising `Σ_grid (target − Σ aᵢ σ₀(λ·, λtᵢ))² + ridge · aᵀKa`.
pub fn project_to_span(
    target: &GridFunction,
    family: KernelFamily,
    nodes: &PointSet,
    lambda: f64,
    ridge: f64,
) -> Result<Projection> {
    if nodes.is_empty() {
        return Err(Error::InvalidParameter("projection needs at least one node".into()));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge must be nonnegative, got {ridge}")));
    }
    let grid = target.grid();
    if grid.dim() != nodes.dim() {
        return Err(Error::Misaligned("target grid and nodes differ in dimension".into()));
    }
    let k = nodes.len();
    let g = grid.len();
    let scaled_nodes: Vec<Vec<f64>> = nodes.iter().map(|t| t.iter().map(|v| v * lambda).collect()).collect();
    let mut rows = g;
    let root = if ridge > 0.0 {
        rows += k;
        let eig = SymmetricEigen::new(node_gram(family, lambda, nodes));
        // R = D^{1/2} Vᵀ, so that RᵀR = K
        let mut r = eig.eigenvectors.transpose();
        for i in 0..k {
            let s = (eig.eigenvalues[i].max(0.0) * ridge).sqrt();
            r.row_mut(i).scale_mut(s);
        }
        Some(r)
    } else {
        None
    };
    let mut a = DMatrix::zeros(rows, k);
    let mut b = DVector::zeros(rows);
    for (r, x) in grid.points().iter().enumerate() {
        let u: Vec<f64> = x.iter().map(|v| v * lambda).collect();
        for (c, t) in scaled_nodes.iter().enumerate() {
            a[(r, c)] = family.base(&u, t);
        }
        b[r] = target.values()[r];
    }
    if let Some(root) = &root {
        a.view_mut((g, 0), (k, k)).copy_from(root);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if ridge == 0.0 {
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-12 * smax).count();
        if rank < k {
            return Err(Error::IncreaseRidge { rank, nodes: k });
        }
    }
    let coef = svd
        .solve(&b, 1e-14 * smax)
        .map_err(|e| Error::DecompositionFailed(format!("least-squares solve: {e}")))?;
    let element = RkhsElement::new(family, lambda, nodes.clone(), coef.iter().copied().collect())?;
    let fitted = a.rows(0, g) * &coef;
    let sup_error = (0..g).map(|r| (fitted[r] - b[r]).abs()).fold(0.0, f64::max);
    Ok(Projection { element, sup_error, ridge })
}

/// Monte Carlo estimate of `P(sup_grid |W − w₀| < ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallBallEstimate {
    pub eps: f64,
    pub hits: usize,
    pub draws: usize,
    pub estimate: f64,
    pub interval: (f64, f64),
}

/// Sup deviations `sup_grid |W − w₀|` for `draws` zero-mean prior paths.
pub fn ball_deviations<R: Rng + ?Sized>(
    spec: &CovarianceSpec,
    target: &RkhsElement,
    grid: &Arc<Grid>,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let sampler = PathSampler::new(spec, &MultiIndex::zero(spec.dim), &GridFunction::zeros(grid.clone()))?;
    let w0 = target.on_grid(grid);
    let mut z = Vec::new();
    let mut path = Vec::new();
    Ok((0..draws)
        .map(|_| {
            sampler.gaussian().draw_into(rng, &mut z, &mut path);
            path.iter().zip(w0.values()).map(|(p, w)| (p - w).abs()).fold(0.0, f64::max)
        })
        .collect())
}

/// Small-ball frequencies for a ladder of radii from shared deviations;
/// nested radii therefore give nested events exactly.
pub fn small_ball_from_deviations(deviations: &[f64], radii: &[f64]) -> Vec<SmallBallEstimate> {
    let draws = deviations.len();
    radii
        .iter()
        .map(|&eps| {
            let hits = deviations.iter().filter(|&&d| d < eps).count();
            SmallBallEstimate {
                eps,
                hits,
                draws,
                estimate: hits as f64 / draws as f64,
                interval: wilson_interval(hits, draws, 1.96),
            }
        })
        .collect()
}

pub fn small_ball_probability<R: Rng + ?Sized>(
    spec: &CovarianceSpec,
    target: &RkhsElement,
    eps: f64,
    grid: &Arc<Grid>,
    draws: usize,
    rng: &mut R,
) -> Result<SmallBallEstimate> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {eps}")));
    }
    let dev = ball_deviations(spec, target, grid, draws, rng)?;
    Ok(small_ball_from_deviations(&dev, &[eps])[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn evaluation_examples() {
        let e = RkhsElement::se_1d(3.0, &[0.4], &[2.5]).unwrap();
        assert_eq!(e.evaluate(&[0.4]), 2.5);
        let z = RkhsElement::se_1d(3.0, &[0.1, 0.9], &[0.0, 0.0]).unwrap();
        assert_eq!(z.evaluate(&[0.33]), 0.0);
        let sym = RkhsElement::se_1d(2.0, &[-0.3, 0.3], &[1.2, 1.2]).unwrap();
        for x in [0.1, 0.25, 0.7, 1.3] {
            assert!((sym.evaluate(&[x]) - sym.evaluate(&[-x])).abs() < 1e-14);
        }
        assert!(RkhsElement::se_1d(1.0, &[], &[]).is_err());
    }

    #[test]
    fn norm_examples() {
        let e = RkhsElement::se_1d(3.0, &[0.4], &[2.5]).unwrap();
        assert!((rkhs_norm_sq(&e).unwrap() - 6.25).abs() < 1e-14);
        let z = RkhsElement::se_1d(3.0, &[0.1, 0.9], &[0.0, 0.0]).unwrap();
        assert_eq!(rkhs_norm_sq(&z).unwrap(), 0.0);
        let dup = RkhsElement::se_1d(3.0, &[0.2, 0.2], &[1.7, -1.7]).unwrap();
        assert_eq!(rkhs_norm_sq(&dup).unwrap(), 0.0);
        assert_eq!(dup.deduplicated().nodes.len(), 1);
    }

    #[test]
    fn derivative_matches_differences() {
        let e = RkhsElement::se_1d(2.5, &[0.1, 0.6, 0.8], &[1.0, -0.5, 0.7]).unwrap();
        let w = MultiIndex::unit(1, 0);
        let x = 0.37;
        let h = 1e-5;
        let fd = (e.evaluate(&[x + h]) - e.evaluate(&[x - h])) / (2.0 * h);
        assert!((e.derivative(&w, &[x]).unwrap() - fd).abs() < 1e-8);
        let w2 = MultiIndex::new(vec![2]);
        let fd2 = (e.evaluate(&[x + 1e-4]) - 2.0 * e.evaluate(&[x]) + e.evaluate(&[x - 1e-4])) / 1e-8;
        assert!((e.derivative(&w2, &[x]).unwrap() - fd2).abs() < 1e-5);
    }

    #[test]
    fn projection_recovers_exact_expansion() {
        let nodes = [0.0, 0.25, 0.5, 0.75, 1.0];
        let coefs = [0.4, -1.0, 0.8, 0.3, -0.6];
        let truth = RkhsElement::se_1d(4.0, &nodes, &coefs).unwrap();
        let grid = Arc::new(Grid::unit_interval(101).unwrap());
        let target = truth.on_grid(&grid);
        let proj = project_to_span(&target, KernelFamily::SquaredExponential, &truth.nodes, 4.0, 0.0).unwrap();
        assert!(proj.sup_error < 1e-8);
        for (a, b) in proj.element.coefficients.iter().zip(coefs) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn projection_of_sine() {
        let grid = Arc::new(Grid::unit_interval(201).unwrap());
        let target = GridFunction::from_fn(grid.clone(), |x| (2.0 * std::f64::consts::PI * x[0]).sin()).unwrap();
        let mut errors = Vec::new();
        for k in [10usize, 20, 40] {
            let nodes: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
            let nodes = PointSet::from_scalars(&nodes).unwrap();
            let proj = project_to_span(&target, KernelFamily::SquaredExponential, &nodes, 5.0, 1e-8).unwrap();
            errors.push(proj.sup_error);
        }
        assert!(errors[1] < 1e-3, "{errors:?}");
        assert!(errors[0] >= errors[1] && errors[1] >= errors[2], "{errors:?}");
    }

    #[test]
    fn rank_deficient_projection_needs_ridge() {
        let grid = Arc::new(Grid::unit_interval(50).unwrap());
        let target = GridFunction::from_fn(grid, |x| x[0]).unwrap();
        let nodes = PointSet::from_scalars(&[0.5, 0.5 + 1e-14, 0.7]).unwrap();
        let err = project_to_span(&target, KernelFamily::SquaredExponential, &nodes, 1.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::IncreaseRidge { .. }));
    }

    #[test]
    fn small_ball_examples() {
        let spec = CovarianceSpec::squared_exponential(1.0, 1.0, 1).unwrap();
        let grid = Arc::new(Grid::unit_interval(32).unwrap());
        let zero = RkhsElement::zero(KernelFamily::SquaredExponential, 1.0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let est = small_ball_probability(&spec, &zero, 3.0, &grid, 5_000, &mut rng).unwrap();
        assert!(est.estimate > 0.9);
        let est = small_ball_probability(&spec, &zero, 10.0, &grid, 5_000, &mut rng).unwrap();
        assert!(est.estimate >= 1.0 - 10.0 / 5_000.0);
        let dev = ball_deviations(&spec, &zero, &grid, 2_000, &mut rng).unwrap();
        let ladder = small_ball_from_deviations(&dev, &[0.25, 0.5, 1.0, 2.0]);
        for p in ladder.windows(2) {
            assert!(p[0].estimate <= p[1].estimate);
        }
        assert!(small_ball_probability(&spec, &zero, 0.0, &grid, 10, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn norm_is_nonnegative(nodes in proptest::collection::vec(0.0..1.0f64, 1..8), seed in 0u64..1000, lambda in 0.5..6.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coefs: Vec<f64> = nodes.iter().map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect();
            let e = RkhsElement::se_1d(lambda, &nodes, &coefs).unwrap();
            let q = rkhs_norm_sq(&e).unwrap();
            prop_assert!(q >= 0.0);
            // zero norm forces a vanishing function
            if q == 0.0 {
                for x in [0.0, 0.3, 0.6, 1.0] {
                    prop_assert!(e.evaluate(&[x]).abs() < 1e-6);
                }
            }
            // reproducing property for a single node
            let single = RkhsElement::se_1d(lambda, &nodes[..1], &coefs[..1]).unwrap();
            prop_assert_eq!(single.evaluate(&nodes[..1]), coefs[0]);
        }
    }
}
