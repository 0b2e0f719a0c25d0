use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{kernel_matrix, CovarianceKernel};
use crate::error::{Error, Result};
use crate::grid::{Grid, PointSet};

/// Eigenpairs of the weighted Gram operator `f ↦ Σ_j w_j σ(·, x_j) f(x_j)`
/// on a finite point set.
///
/// Eigenfunctions are stored as grid values and are orthonormal in the
/// weighted inner product `⟨f, g⟩ = Σ_i w_i f(x_i) g(x_i)`.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    points: PointSet,
    weights: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// Column `k` holds `ψ_k` on the points.
    eigenfunctions: DMatrix<f64>,
}

/// Relative tolerance below which negative eigenvalues are clamped to zero
/// rather than reported as a failure.
const NEGATIVE_TOL: f64 = 1e-8;

/// Decompose `spec` on a grid with uniform cell weights.
pub fn mercer_decompose<K: CovarianceKernel + ?Sized>(kernel: &K, grid: &Grid) -> Result<EigenSystem> {
    mercer_decompose_weighted(kernel, grid.points(), &grid.cell_weights())
}

/// Decompose a kernel on arbitrary points with positive quadrature weights.
pub fn mercer_decompose_weighted<K: CovarianceKernel + ?Sized>(
    kernel: &K,
    points: &PointSet,
    weights: &[f64],
) -> Result<EigenSystem> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidParameter("eigendecomposition needs at least 2 points".into()));
    }
    if weights.len() != n || weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidParameter("quadrature weights must be positive, one per point".into()));
    }
    let gram = kernel_matrix(kernel, points);
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let mut op = gram;
    for i in 0..n {
        for j in 0..n {
            op[(i, j)] *= sqrt_w[i] * sqrt_w[j];
        }
    }
    let trace = op.trace();
    if !trace.is_finite() {
        return Err(Error::DecompositionFailed("non-finite kernel values".into()));
    }
    let eig = SymmetricEigen::try_new(op, f64::EPSILON, 0)
        .ok_or_else(|| Error::DecompositionFailed(format!("eigen solver did not converge (n = {n}, trace = {trace:e})")))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -NEGATIVE_TOL * trace.abs().max(f64::MIN_POSITIVE) {
        let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        return Err(Error::DecompositionFailed(format!(
            "kernel is not positive semidefinite: eigenvalue range [{min:e}, {max:e}], trace {trace:e}"
        )));
    }

    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenfunctions = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        eigenvalues.push(eig.eigenvalues[k].max(0.0));
        let v = eig.eigenvectors.column(k);
        // fix the sign so that the largest-magnitude entry is positive
        let pivot = v.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            eigenfunctions[(i, col)] = sign * v[i] / sqrt_w[i];
        }
    }
    Ok(EigenSystem { points: points.clone(), weights: weights.to_vec(), eigenvalues, eigenfunctions })
}

impl EigenSystem {
    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of eigenpairs (equal to the number of points).
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenvalues, nonincreasing and nonnegative.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Values of `ψ_k` on the points.
    pub fn eigenfunction(&self, k: usize) -> Vec<f64> {
        self.eigenfunctions.column(k).iter().copied().collect()
    }

    pub fn eigenfunctions(&self) -> &DMatrix<f64> {
        &self.eigenfunctions
    }

    /// Number of eigenvalues above `rel_tol * λ_1`.
    pub fn effective_rank(&self, rel_tol: f64) -> usize {
        let top = self.eigenvalues.first().copied().unwrap_or(0.0);
        self.eigenvalues.iter().take_while(|&&l| l > rel_tol * top).count()
    }

    /// Weighted inner product of eigenfunctions `j` and `k`.
    pub fn inner(&self, j: usize, k: usize) -> f64 {
        (0..self.points.len())
            .map(|i| self.weights[i] * self.eigenfunctions[(i, j)] * self.eigenfunctions[(i, k)])
            .sum()
    }

    /// `Σ_{k<rank} λ_k ψ_k(x_i)²` at every point.
    pub fn reconstruct_diagonal(&self, rank: usize) -> Vec<f64> {
        let rank = rank.min(self.len());
        (0..self.points.len())
            .map(|i| (0..rank).map(|k| self.eigenvalues[k] * self.eigenfunctions[(i, k)].powi(2)).sum())
            .collect()
    }

    /// Sum of the eigenvalues beyond the first `n`, relative to the total.
    pub fn tail_mass(&self, n: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        let tail: f64 = self.eigenvalues.iter().skip(n).sum();
        if total > 0.0 {
            tail / total
        } else {
            0.0
        }
    }

    /// Karhunen–Loève basis `[√λ_k ψ_k(x_i)]` for the first `n` components,
    /// one column per component.
    pub fn kl_basis(&self, n: usize) -> DMatrix<f64> {
        let n = n.min(self.len());
        let mut basis = self.eigenfunctions.columns(0, n).into_owned();
        for k in 0..n {
            let s = self.eigenvalues[k].sqrt();
            basis.column_mut(k).scale_mut(s);
        }
        basis
    }

    /// Nyström extension of the first `n` eigenfunctions to new points,
    /// `ψ_k(x) = λ_k⁻¹ Σ_j w_j σ(x, x_j) ψ_k(x_j)`. Components with
    /// `λ_k ≤ rel_tol · λ_1` are returned as zero columns because the
    /// extension is numerically meaningless there.
    pub fn nystrom<K: CovarianceKernel + ?Sized>(&self, kernel: &K, at: &PointSet, n: usize, rel_tol: f64) -> DMatrix<f64> {
        let n = n.min(self.len());
        let keep = self.effective_rank(rel_tol).min(n);
        let m = self.points.len();
        let mut cross = DMatrix::zeros(at.len(), m);
        for (r, x) in at.iter().enumerate() {
            for j in 0..m {
                cross[(r, j)] = kernel.covariance(x, self.points.point(j)) * self.weights[j];
            }
        }
        let projected = cross * self.eigenfunctions.columns(0, keep);
        let mut out = DMatrix::zeros(at.len(), n);
        for k in 0..keep {
            let inv = 1.0 / self.eigenvalues[k];
            for r in 0..at.len() {
                out[(r, k)] = projected[(r, k)] * inv;
            }
        }
        out
    }

    /// Mercer reconstruction `Σ λ_k ψ_k(x)²` at off-grid points using the
    /// Nyström extension over the numerically nonzero spectrum.
    pub fn reconstruct_at<K: CovarianceKernel + ?Sized>(&self, kernel: &K, at: &PointSet, rel_tol: f64) -> Vec<f64> {
        let keep = self.effective_rank(rel_tol);
        let ext = self.nystrom(kernel, at, keep, rel_tol);
        (0..at.len())
            .map(|r| (0..keep).map(|k| self.eigenvalues[k] * ext[(r, k)].powi(2)).sum())
            .collect()
    }

    /// Apply the KL basis: `Σ_{k<n} √λ_k ξ_k ψ_k` on the points.
    pub fn combine(&self, xi: &[f64]) -> DVector<f64> {
        let n = xi.len().min(self.len());
        let mut out = DVector::zeros(self.points.len());
        for k in 0..n {
            let c = self.eigenvalues[k].sqrt() * xi[k];
            if c != 0.0 {
                out.axpy(c, &self.eigenfunctions.column(k), 1.0);
            }
        }
        out
    }
}
