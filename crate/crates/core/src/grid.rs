//! Point sets, tensor grids on the unit cube, and functions sampled on them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite list of points in `R^d`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::Misaligned(format!(
                "{} coordinates is not a multiple of dimension {dim}",
                coords.len()
            )));
        }
        crate::error::ensure_finite(&coords, "point set")?;
        Ok(Self { dim, coords })
    }

    /// Points on the real line.
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::new(1, xs.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Concatenate two point sets of equal dimension.
    pub fn concat(&self, other: &PointSet) -> Result<PointSet> {
        if self.dim != other.dim {
            return Err(Error::Misaligned("point sets differ in dimension".into()));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Ok(PointSet { dim: self.dim, coords })
    }
}

/// Uniform tensor grid on `[lo, hi]^d`, endpoints included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lo: f64,
    hi: f64,
    per_axis: usize,
    points: PointSet,
}

impl Grid {
    pub fn new(dim: usize, per_axis: usize, lo: f64, hi: f64) -> Result<Self> {
        if per_axis < 2 {
            return Err(Error::InvalidParameter("grid needs at least 2 points per axis".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!("bad grid bounds [{lo}, {hi}]")));
        }
        let axis: Vec<f64> = (0..per_axis)
            .map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64)
            .collect();
        let total = per_axis.pow(dim as u32);
        let mut coords = Vec::with_capacity(total * dim);
        for flat in 0..total {
            // first coordinate varies slowest
            let mut rem = flat;
            let mut idx = vec![0usize; dim];
            for j in (0..dim).rev() {
                idx[j] = rem % per_axis;
                rem /= per_axis;
            }
            coords.extend(idx.iter().map(|&i| axis[i]));
        }
        Ok(Self { lo, hi, per_axis, points: PointSet::new(dim, coords)? })
    }

    /// `n` equally spaced points on `[0, 1]`.
    pub fn unit_interval(n: usize) -> Result<Self> {
        Self::new(1, n, 0.0, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.per_axis - 1) as f64
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.point(i)
    }

    pub fn axis(&self) -> Vec<f64> {
        (0..self.per_axis).map(|i| self.lo + self.spacing() * i as f64).collect()
    }

    pub fn volume(&self) -> f64 {
        (self.hi - self.lo).powi(self.dim() as i32)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().all(|&v| v >= self.lo && v <= self.hi)
    }

    /// Equal weights summing to the domain volume.
    pub fn cell_weights(&self) -> Vec<f64> {
        vec![self.volume() / self.len() as f64; self.len()]
    }

    /// Product trapezoid weights summing to the domain volume.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let axis_w: Vec<f64> = (0..self.per_axis)
            .map(|i| if i == 0 || i + 1 == self.per_axis { h / 2.0 } else { h })
            .collect();
        (0..self.len())
            .map(|flat| self.multi_index(flat).iter().map(|&i| axis_w[i]).product())
            .collect()
    }

    /// Per-axis indices of a flat index.
    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let d = self.dim();
        let mut idx = vec![0usize; d];
        let mut rem = flat;
        for j in (0..d).rev() {
            idx[j] = rem % self.per_axis;
            rem /= self.per_axis;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.per_axis + i)
    }

    /// Stride of axis `j` in the flat layout.
    pub fn stride(&self, j: usize) -> usize {
        self.per_axis.pow((self.dim() - 1 - j) as u32)
    }

    /// Multilinear interpolation of grid values at `x` (clamped to the domain).
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let d = self.dim();
        let h = self.spacing();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for j in 0..d {
            let u = ((x[j] - self.lo) / h).clamp(0.0, (self.per_axis - 1) as f64);
            let i = (u.floor() as usize).min(self.per_axis - 2);
            base[j] = i;
            frac[j] = u - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for j in 0..d {
                let up = (corner >> j) & 1;
                w *= if up == 1 { frac[j] } else { 1.0 - frac[j] };
                flat += (base[j] + up) * self.stride(j);
            }
            if w != 0.0 {
                acc += w * values[flat];
            }
        }
        acc
    }
}

/// Values of a function at every point of a grid.
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Misaligned(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        crate::error::ensure_finite(&values, "grid function")?;
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(f).collect();
        Self::new(grid, values)
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n] }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn at(&self, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_layout() {
        let g = Grid::unit_interval(5).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.point(4), &[1.0]);
        let w: f64 = g.trapezoid_weights().iter().sum();
        assert!((w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tensor_layout_and_interpolation() {
        let g = Grid::new(2, 3, 0.0, 1.0).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.point(1), &[0.0, 0.5]);
        assert_eq!(g.point(3), &[0.5, 0.0]);
        assert_eq!(g.flat_index(&g.multi_index(7)), 7);
        // bilinear functions are reproduced exactly
        let f = |x: &[f64]| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1];
        let vals: Vec<f64> = g.points().iter().map(f).collect();
        let x = [0.3, 0.85];
        assert!((g.interpolate(&vals, &x) - f(&x)).abs() < 1e-12);
        let w: f64 = g.trapezoid_weights().iter().sum();
        assert!((w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Grid::unit_interval(1).is_err());
        assert!(PointSet::new(2, vec![0.0, 1.0, 2.0]).is_err());
        assert!(PointSet::from_scalars(&[f64::NAN]).is_err());
        let g = Arc::new(Grid::unit_interval(4).unwrap());
        assert!(GridFunction::new(g, vec![0.0; 3]).is_err());
    }
}
