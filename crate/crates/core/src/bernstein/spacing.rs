use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A sorted one-dimensional design in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpacing {
    points: Vec<f64>,
}

impl DesignSpacing {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyDesign);
        }
        crate::error::ensure_finite(&points, "design")?;
        if let Some(i) = points.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::UnsortedDesign(i + 1));
        }
        if points[0] < 0.0 || points[points.len() - 1] > 1.0 {
            return Err(Error::InvalidParameter("design must lie in [0, 1]".into()));
        }
        Ok(Self { points })
    }

    /// Sorts first.
    pub fn from_unsorted(mut points: Vec<f64>) -> Result<Self> {
        points.sort_by(f64::total_cmp);
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacings(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.windows(2).map(|w| w[1] - w[0])
    }

    /// Spacings count as short (type I) when at most `K₁/n`, up to rounding.
    fn short_limit(&self, k1: f64) -> f64 {
        k1 / self.len() as f64 * (1.0 + 1e-9)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacingAudit {
    /// Sparse mass at most `δ`.
    pub satisfied: bool,
    /// Total length of spacings longer than `K₁/n`.
    pub sparse_mass: f64,
    /// Number of short spacings lying wholly inside one of the intervals.
    pub short_spacings_inside: usize,
    /// Design points that are endpoints of those spacings.
    pub covered_points: usize,
}

/// Audit the design against a sparse-mass budget `δ`, and count the design
/// points covered by short spacings inside `intervals` (pass an empty slice
/// to skip that part).
pub fn spacing_audit(design: &DesignSpacing, k1: f64, delta: f64, intervals: &[(f64, f64)]) -> SpacingAudit {
    let limit = design.short_limit(k1);
    let sparse_mass: f64 = design.spacings().filter(|&s| s > limit).sum();
    let pts = design.points();
    let mut covered = vec![false; pts.len()];
    let mut inside = 0usize;
    for &(a, b) in intervals {
        let start = pts.partition_point(|&x| x < a);
        let mut i = start;
        while i + 1 < pts.len() && pts[i + 1] <= b {
            if pts[i + 1] - pts[i] <= limit {
                inside += 1;
                covered[i] = true;
                covered[i + 1] = true;
            }
            i += 1;
        }
    }
    SpacingAudit {
        satisfied: sparse_mass <= delta,
        sparse_mass,
        short_spacings_inside: inside,
        covered_points: covered.iter().filter(|&&c| c).count(),
    }
}

#[cfg(test)]
mod unit {
    use super::*;
    use crate::rng::StreamSeed;
    use rand::Rng;

    #[test]
    fn regular_grid_has_no_sparse_mass() {
        let n = 1000;
        let d = DesignSpacing::new((1..=n).map(|i| i as f64 / n as f64).collect()).unwrap();
        let a = spacing_audit(&d, 1.0, 0.0, &[]);
        assert_eq!(a.sparse_mass, 0.0);
        assert!(a.satisfied);
    }

    #[test]
    fn one_wide_gap() {
        let mut pts: Vec<f64> = (0..50).map(|i| 0.3 * i as f64 / 49.0).collect();
        pts.extend((0..50).map(|i| 0.6 + 0.4 * i as f64 / 49.0));
        let d = DesignSpacing::new(pts).unwrap();
        let a = spacing_audit(&d, 2.0, 0.1, &[]);
        assert!(a.sparse_mass >= 0.3 - 1e-12 && !a.satisfied);
    }

    #[test]
    fn unsorted_is_flagged() {
        assert!(matches!(DesignSpacing::new(vec![0.1, 0.3, 0.2]), Err(Error::UnsortedDesign(2))));
    }

    #[test]
    fn covered_points_in_interval() {
        let n = 100;
        let d = DesignSpacing::new((1..=n).map(|i| i as f64 / (n + 1) as f64).collect()).unwrap();
        let a = spacing_audit(&d, 1.5, 0.0, &[(0.2, 0.5)]);
        let want = d.points().iter().filter(|&&x| (0.2..=0.5).contains(&x)).count();
        assert_eq!(a.covered_points, want);
        assert_eq!(a.short_spacings_inside, want - 1);
    }

    #[test]
    fn random_uniform_designs_mostly_pass() {
        let mut rng = StreamSeed::root(10).rng();
        let mut pass = 0;
        for _ in 0..200 {
            let d = DesignSpacing::from_unsorted((0..1000).map(|_| rng.random::<f64>()).collect()).unwrap();
            pass += usize::from(spacing_audit(&d, 10.0, 0.05, &[]).satisfied);
        }
        assert!(pass >= 190, "{pass}");
    }
}
