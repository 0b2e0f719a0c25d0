//! Covariance kernels of the form `σ(s, t) = τ⁻¹ σ₀(λs, λt)`, their mixed
//! partial-derivative kernels, Gram assembly and grid eigendecomposition.
//!
//! Base kernels are products of one-dimensional stationary kernels, so every
//! derivative kernel factorises over coordinates. The squared-exponential
//! family supports derivatives of any order through Hermite polynomials;
//! Matérn 5/2 is twice differentiable and only admits first-order mixed
//! derivative kernels.

mod mercer;

pub use mercer::{mercer_decompose, mercer_decompose_weighted, EigenSystem};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::grid::PointSet;

/// Registered base kernels `σ₀`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    /// `σ₀(u, v) = exp(-Σ (u_j - v_j)²)`.
    #[default]
    SquaredExponential,
    /// Product of one-dimensional Matérn kernels with smoothness 5/2.
    Matern52,
}

const SQRT5: f64 = 2.236_067_977_499_79;

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "squared-exponential",
            KernelFamily::Matern52 => "matern52",
        }
    }

    /// Largest per-coordinate order `m` for which `∂ᵘᵐ ∂ᵥᵐ σ₀` exists.
    pub fn max_mixed_order(self) -> usize {
        match self {
            KernelFamily::SquaredExponential => 8,
            KernelFamily::Matern52 => 1,
        }
    }

    /// `σ₀(u, v)`.
    pub fn base(self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            KernelFamily::SquaredExponential => {
                let r2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (-r2).exp()
            }
            KernelFamily::Matern52 => u.iter().zip(v).map(|(a, b)| matern52_1d(0, a - b)).product(),
        }
    }

    /// `∂ᵘʷ ∂ᵥʷ σ₀(u, v)`; the caller has checked the order is available.
    pub fn base_mixed(self, w: &MultiIndex, u: &[f64], v: &[f64]) -> f64 {
        match self {
            KernelFamily::SquaredExponential => u
                .iter()
                .zip(v)
                .zip(w.components())
                .map(|((a, b), &m)| {
                    let r = a - b;
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    sign * hermite(2 * m, r) * (-r * r).exp()
                })
                .product(),
            KernelFamily::Matern52 => u
                .iter()
                .zip(v)
                .zip(w.components())
                .map(|((a, b), &m)| {
                    if m == 0 {
                        matern52_1d(0, a - b)
                    } else {
                        -matern52_1d(2, a - b)
                    }
                })
                .product(),
        }
    }

    /// One-sided derivative `∂ᵘʷ σ₀(u, v)`, used to differentiate kernel
    /// sections `x ↦ σ₀(λx, λt)`.
    pub fn base_partial(self, w: &MultiIndex, u: &[f64], v: &[f64]) -> Result<f64> {
        let limit = match self {
            KernelFamily::SquaredExponential => 2 * self.max_mixed_order(),
            KernelFamily::Matern52 => 2,
        };
        if let Some(&m) = w.components().iter().find(|&&m| m > limit) {
            return Err(Error::DerivativeUnavailable { family: self.name(), order: m, max: limit });
        }
        Ok(match self {
            KernelFamily::SquaredExponential => u
                .iter()
                .zip(v)
                .zip(w.components())
                .map(|((a, b), &m)| {
                    let r = a - b;
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    sign * hermite(m, r) * (-r * r).exp()
                })
                .product(),
            KernelFamily::Matern52 => u
                .iter()
                .zip(v)
                .zip(w.components())
                .map(|((a, b), &m)| matern52_1d(m, a - b))
                .product(),
        })
    }
}

/// Physicists' Hermite polynomial `H_n(x)`.
pub(crate) fn hermite(n: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 2.0 * x;
    for k in 1..n {
        let next = 2.0 * x * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Derivatives of `k(r) = (1 + a|r| + a²r²/3) e^{-a|r|}`, `a = √5`.
fn matern52_1d(order: usize, r: f64) -> f64 {
    let a = SQRT5;
    let ar = a * r.abs();
    let e = (-ar).exp();
    match order {
        0 => (1.0 + ar + ar * ar / 3.0) * e,
        1 => -(a * a / 3.0) * r * (1.0 + ar) * e,
        2 => -(a * a / 3.0) * (1.0 + ar - ar * ar) * e,
        _ => unreachable!("checked by caller"),
    }
}

/// A multi-index `w = (w_1, ..., w_d)` selecting the mixed partial `D^w`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(components: Vec<usize>) -> Self {
        MultiIndex(components)
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// `e_j`, the first derivative along axis `j`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut w = vec![0; dim];
        w[axis] = 1;
        MultiIndex(w)
    }

    pub fn components(&self) -> &[usize] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|w| = Σ w_j`.
    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    /// Every multi-index of dimension `dim` with `|w| ≤ max_order`, in
    /// graded order.
    pub fn up_to(dim: usize, max_order: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0usize; dim];
        fn rec(j: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
            if j == cur.len() {
                out.push(MultiIndex(cur.clone()));
                return;
            }
            for m in 0..=left {
                cur[j] = m;
                rec(j + 1, left - m, cur, out);
            }
            cur[j] = 0;
        }
        rec(0, max_order, &mut cur, &mut out);
        out.sort_by_key(|w| (w.order(), std::cmp::Reverse(w.0.clone())));
        out
    }
}

/// The scaled kernel `σ(s, t) = τ⁻¹ σ₀(λs, λt)` on `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub family: KernelFamily,
    pub tau: f64,
    pub lambda: f64,
    pub dim: usize,
}

impl CovarianceSpec {
    pub fn new(family: KernelFamily, tau: f64, lambda: f64, dim: usize) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Self { family, tau, lambda, dim })
    }

    /// Squared-exponential kernel with the given scales.
    pub fn squared_exponential(tau: f64, lambda: f64, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, tau, lambda, dim)
    }

    pub fn with_scales(&self, tau: f64, lambda: f64) -> Result<Self> {
        Self::new(self.family, tau, lambda, self.dim)
    }

    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v * self.lambda).collect()
    }

    /// `σ(s, t)` without input validation.
    #[inline]
    pub fn value(&self, s: &[f64], t: &[f64]) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => {
                let r2: f64 = s.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
                (-self.lambda * self.lambda * r2).exp() / self.tau
            }
            _ => self.family.base(&self.scaled(s), &self.scaled(t)) / self.tau,
        }
    }

    /// `σ(s, t)`, rejecting non-finite or wrongly sized input.
    pub fn evaluate(&self, s: &[f64], t: &[f64]) -> Result<f64> {
        self.check_point(s)?;
        self.check_point(t)?;
        Ok(self.value(s, t))
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Misaligned(format!("point of dimension {} for a {}-d kernel", x.len(), self.dim)));
        }
        ensure_finite(x, "kernel argument")
    }

    pub fn check_derivative(&self, w: &MultiIndex) -> Result<()> {
        if w.dim() != self.dim {
            return Err(Error::Misaligned(format!("multi-index of dimension {} for a {}-d kernel", w.dim(), self.dim)));
        }
        let max = self.family.max_mixed_order();
        match w.components().iter().find(|&&m| m > max) {
            Some(&m) => Err(Error::DerivativeUnavailable { family: self.family.name(), order: m, max }),
            None => Ok(()),
        }
    }

    /// `D^w D^w σ(s, t)` without validation; see [`CovarianceSpec::derivative_kernel`].
    #[inline]
    pub fn derivative_value(&self, w: &MultiIndex, s: &[f64], t: &[f64]) -> f64 {
        let scale = self.lambda.powi(2 * w.order() as i32) / self.tau;
        scale * self.family.base_mixed(w, &self.scaled(s), &self.scaled(t))
    }

    /// The mixed derivative `D^w D^w σ(s, t)`, differentiating each argument
    /// by `w`. This is the covariance kernel of the derivative process `D^w η`.
    pub fn derivative_kernel(&self, w: &MultiIndex, s: &[f64], t: &[f64]) -> Result<f64> {
        self.check_derivative(w)?;
        self.check_point(s)?;
        self.check_point(t)?;
        Ok(self.derivative_value(w, s, t))
    }

    /// Largest diagonal value `σ(t, t)`; constant for the stationary families.
    pub fn max_variance(&self) -> f64 {
        1.0 / self.tau
    }

    /// Gram matrix of `D^w D^w σ` over `points`.
    pub fn gram(&self, points: &PointSet, w: &MultiIndex) -> Result<DMatrix<f64>> {
        gram(self, points, w)
    }
}

/// Anything that can serve as a covariance function on a point set.
pub trait CovarianceKernel {
    fn covariance(&self, s: &[f64], t: &[f64]) -> f64;
}

impl CovarianceKernel for CovarianceSpec {
    fn covariance(&self, s: &[f64], t: &[f64]) -> f64 {
        self.value(s, t)
    }
}

impl<F> CovarianceKernel for F
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    fn covariance(&self, s: &[f64], t: &[f64]) -> f64 {
        self(s, t)
    }
}

/// The derivative kernel `D^w D^w σ` viewed as a covariance function.
#[derive(Clone, Debug)]
pub struct DerivativeKernel<'a> {
    spec: &'a CovarianceSpec,
    w: MultiIndex,
}

impl<'a> DerivativeKernel<'a> {
    pub fn new(spec: &'a CovarianceSpec, w: MultiIndex) -> Result<Self> {
        spec.check_derivative(&w)?;
        Ok(Self { spec, w })
    }
}

impl CovarianceKernel for DerivativeKernel<'_> {
    fn covariance(&self, s: &[f64], t: &[f64]) -> f64 {
        self.spec.derivative_value(&self.w, s, t)
    }
}

/// Dense covariance matrix of any kernel over a point set.
pub fn kernel_matrix<K: CovarianceKernel + ?Sized>(kernel: &K, points: &PointSet) -> DMatrix<f64> {
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let pi = points.point(i);
        for j in i..n {
            let v = kernel.covariance(pi, points.point(j));
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Assemble the Gram matrix `[D^w D^w σ(p_i, p_j)]`, rejecting coincident
/// points.
pub fn gram(spec: &CovarianceSpec, points: &PointSet, w: &MultiIndex) -> Result<DMatrix<f64>> {
    spec.check_derivative(w)?;
    if points.dim() != spec.dim {
        return Err(Error::Misaligned("point set and kernel differ in dimension".into()));
    }
    check_distinct(points, spec.lambda)?;
    Ok(kernel_matrix(&DerivativeKernel { spec, w: w.clone() }, points))
}

/// Coincidence tolerance in scaled coordinates.
pub(crate) const DEDUP_TOL: f64 = 1e-12;

pub(crate) fn check_distinct(points: &PointSet, lambda: f64) -> Result<()> {
    let n = points.len();
    // sort along the first axis so that only near neighbours are compared
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points.point(a)[0].total_cmp(&points.point(b)[0]));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            let (pi, pj) = (points.point(i), points.point(j));
            if (pj[0] - pi[0]) * lambda > DEDUP_TOL {
                break;
            }
            let dist = pi.iter().zip(pj).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if dist * lambda <= DEDUP_TOL {
                return Err(Error::SingularGrid(i.min(j), i.max(j)));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn se(tau: f64, lambda: f64) -> CovarianceSpec {
        CovarianceSpec::squared_exponential(tau, lambda, 1).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(se(1.0, 1.0).evaluate(&[0.0], &[0.0]).unwrap(), 1.0);
        assert_relative_eq!(se(4.0, 2.0).evaluate(&[0.5], &[0.5]).unwrap(), 0.25);
        assert_relative_eq!(se(1.0, 1.0).evaluate(&[0.0], &[1.0]).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
        assert!(se(1.0, 1.0).evaluate(&[f64::NAN], &[0.0]).is_err());
        assert!(CovarianceSpec::squared_exponential(0.0, 1.0, 1).is_err());
        assert!(CovarianceSpec::squared_exponential(1.0, -1.0, 1).is_err());
    }

    #[test]
    fn derivative_examples() {
        let w = MultiIndex::unit(1, 0);
        let spec = se(2.0, 3.0);
        assert_relative_eq!(spec.derivative_kernel(&w, &[0.4], &[0.4]).unwrap(), 2.0 * 9.0 / 2.0, epsilon = 1e-12);
        let v = se(1.0, 1.0).derivative_kernel(&w, &[0.0], &[1.0]).unwrap();
        assert_relative_eq!(v, -2.0 * (-1.0f64).exp(), epsilon = 1e-14);
        let zero = MultiIndex::zero(1);
        assert_relative_eq!(spec.derivative_kernel(&zero, &[0.1], &[0.7]).unwrap(), spec.value(&[0.1], &[0.7]), max_relative = 1e-14);
    }

    #[test]
    fn matern_first_order_only() {
        let m = CovarianceSpec::new(KernelFamily::Matern52, 1.0, 1.0, 1).unwrap();
        assert_relative_eq!(m.derivative_kernel(&MultiIndex::unit(1, 0), &[0.3], &[0.3]).unwrap(), 5.0 / 3.0, epsilon = 1e-14);
        let err = m.derivative_kernel(&MultiIndex::new(vec![2]), &[0.0], &[0.0]).unwrap_err();
        assert!(matches!(err, Error::DerivativeUnavailable { .. }));
    }

    #[test]
    fn gram_examples() {
        let spec = se(1.0, 1.0);
        let one = PointSet::from_scalars(&[0.3]).unwrap();
        let g = gram(&spec, &one, &MultiIndex::zero(1)).unwrap();
        assert_eq!(g[(0, 0)], 1.0);
        let far = PointSet::from_scalars(&[0.0, 5.0]).unwrap();
        let g = gram(&spec, &far, &MultiIndex::zero(1)).unwrap();
        assert!(g[(0, 1)] < 1e-6);
        let dup = PointSet::from_scalars(&[0.1, 0.5, 0.1]).unwrap();
        assert!(matches!(gram(&spec, &dup, &MultiIndex::zero(1)), Err(Error::SingularGrid(0, 2))));
    }

    #[test]
    fn multi_indices_enumerated() {
        let all = MultiIndex::up_to(2, 2);
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], MultiIndex::zero(2));
        assert!(all.iter().all(|w| w.order() <= 2));
    }

    /// Central differences of `σ` in both arguments, with a small step sweep;
    /// returns the estimate whose neighbours agree best.
    fn fd_mixed(spec: &CovarianceSpec, s: f64, t: f64) -> f64 {
        let est = |h: f64| {
            (spec.value(&[s + h], &[t + h]) - spec.value(&[s + h], &[t - h]) - spec.value(&[s - h], &[t + h])
                + spec.value(&[s - h], &[t - h]))
                / (4.0 * h * h)
        };
        let hs = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
        let ests: Vec<f64> = hs.iter().map(|&h| est(h / spec.lambda)).collect();
        // Richardson on the last pair removes the h² term
        (4.0 * ests[3] - ests[2]) / 3.0
    }

    proptest! {
        #[test]
        fn symmetric_and_scaled(s in -2.0..2.0f64, t in -2.0..2.0f64, tau in 0.1..10.0f64, lambda in 0.1..5.0f64) {
            let spec = se(tau, lambda);
            prop_assert_eq!(spec.value(&[s], &[t]), spec.value(&[t], &[s]));
            for m in 0..4 {
                let w = MultiIndex::new(vec![m]);
                let unit = se(1.0, 1.0);
                let lhs = spec.derivative_value(&w, &[s], &[t]);
                let rhs = lambda.powi(2 * m as i32) / tau * unit.derivative_value(&w, &[lambda * s], &[lambda * t]);
                prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1e-300) + 1e-300);
            }
        }

        #[test]
        fn closed_form_matches_finite_differences(s in 0.0..1.0f64, t in 0.0..1.0f64, tau in 0.2..5.0f64, lambda in 0.3..4.0f64) {
            for spec in [se(tau, lambda), CovarianceSpec::new(KernelFamily::Matern52, tau, lambda, 1).unwrap()] {
                let w = MultiIndex::unit(1, 0);
                let exact = spec.derivative_value(&w, &[s], &[t]);
                let scale = spec.derivative_value(&w, &[s], &[s]).abs();
                let fd = fd_mixed(&spec, s, t);
                // Matérn is only C² at the origin, so the stencil loses accuracy near s = t
                let tol = if spec.family == KernelFamily::Matern52 { 2e-3 } else { 1e-5 };
                prop_assert!((exact - fd).abs() <= tol * scale, "{:?} exact {} fd {}", spec.family, exact, fd);
            }
        }

        #[test]
        fn random_grams_are_psd(xs in proptest::collection::vec(0.0..1.0f64, 2..25), lambda in 0.5..8.0f64) {
            let mut xs = xs;
            xs.sort_by(f64::total_cmp);
            xs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            let pts = PointSet::from_scalars(&xs).unwrap();
            let g = gram(&se(1.0, lambda), &pts, &MultiIndex::zero(1)).unwrap();
            prop_assert!((g.clone() - g.transpose()).abs().max() == 0.0);
            let eig = g.clone().symmetric_eigenvalues();
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(min >= -1e-8 * g.trace());
        }
    }

    #[test]
    fn second_order_matches_finite_differences_of_first() {
        // D²D² σ via differences of the closed-form first-order kernel
        let spec = se(1.5, 2.0);
        let w1 = MultiIndex::unit(1, 0);
        let w2 = MultiIndex::new(vec![2]);
        let (s, t) = (0.2, 0.55);
        let h = 1e-4;
        let f = |a: f64, b: f64| spec.derivative_value(&w1, &[a], &[b]);
        let fd = (f(s + h, t + h) - f(s + h, t - h) - f(s - h, t + h) + f(s - h, t - h)) / (4.0 * h * h);
        let exact = spec.derivative_value(&w2, &[s], &[t]);
        assert_relative_eq!(fd, exact, max_relative = 1e-5);
    }
}
