use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::grid::GridFunction;
use crate::model::{l1_distance, Quadrature};
use crate::stats::{mean, quantile_sorted};
use crate::{Error, Result};

/// One state of the chain: coefficients, hyperparameters and the induced
/// functions on the prior grid.
#[derive(Clone, Debug)]
pub struct PosteriorDraw {
    pub xi: Vec<f64>,
    pub tau: f64,
    pub lambda: f64,
    /// Index of `lambda` on the prior's ladder.
    pub rung: usize,
    pub eta: GridFunction,
    pub p: GridFunction,
}

/// Fraction of draws whose `L1` distance to `p0` exceeds `eps`. Each row of
/// `probabilities` holds one draw evaluated at the rule's points.
pub fn posterior_l1_mass(probabilities: &[Vec<f64>], p0: &[f64], eps: f64, rule: &Quadrature) -> Result<f64> {
    if probabilities.is_empty() {
        return Err(Error::InvalidParameter("no draws".into()));
    }
    let mut hits = 0usize;
    for p in probabilities {
        if l1_distance(p, p0, rule)? > eps {
            hits += 1;
        }
    }
    Ok(hits as f64 / probabilities.len() as f64)
}

/// Central pointwise band at a given coverage level.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub level: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PosteriorSummary {
    pub mean: GridFunction,
    pub bands: Vec<Band>,
}

impl PosteriorSummary {
    /// Fraction of grid points where the band at `level` contains `truth`.
    pub fn coverage(&self, level: f64, truth: &[f64]) -> Option<f64> {
        let band = self.bands.iter().find(|b| (b.level - level).abs() < 1e-12)?;
        let inside = truth.iter().enumerate().filter(|&(i, &t)| band.lower[i] <= t && t <= band.upper[i]).count();
        Some(inside as f64 / truth.len() as f64)
    }
}

/// Pointwise mean and central bands of functions sharing a grid.
pub fn posterior_summary(draws: &[GridFunction], levels: &[f64]) -> Result<PosteriorSummary> {
    let first = draws.first().ok_or_else(|| Error::InvalidParameter("no draws".into()))?;
    let m = first.values().len();
    if draws.iter().any(|d| d.values().len() != m) {
        return Err(Error::Misaligned("draws on different grids".into()));
    }
    if levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::InvalidParameter("band levels must lie in [0, 1]".into()));
    }
    let mut column = vec![0.0; draws.len()];
    let mut means = Vec::with_capacity(m);
    let mut bands: Vec<Band> = levels
        .iter()
        .map(|&level| Band { level, lower: Vec::with_capacity(m), upper: Vec::with_capacity(m) })
        .collect();
    for i in 0..m {
        for (c, d) in column.iter_mut().zip(draws) {
            *c = d.values()[i];
        }
        means.push(mean(&column));
        column.sort_by(f64::total_cmp);
        for b in bands.iter_mut() {
            b.lower.push(quantile_sorted(&column, 0.5 - b.level / 2.0));
            b.upper.push(quantile_sorted(&column, 0.5 + b.level / 2.0));
        }
    }
    Ok(PosteriorSummary { mean: GridFunction::new(first.grid().clone(), means)?, bands })
}

/// A flat, serialisable row describing one draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub index: usize,
    pub tau: f64,
    pub lambda: f64,
    pub mean_p: f64,
    pub min_p: f64,
    pub max_p: f64,
    pub xi: Vec<f64>,
}

impl DrawRecord {
    pub fn from_draw(index: usize, d: &PosteriorDraw) -> Self {
        let p = d.p.values();
        Self {
            index,
            tau: d.tau,
            lambda: d.lambda,
            mean_p: mean(p),
            min_p: p.iter().cloned().fold(f64::INFINITY, f64::min),
            max_p: p.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            xi: d.xi.clone(),
        }
    }
}

pub fn write_draws_csv<W: Write>(draws: &[PosteriorDraw], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let n = draws.first().map_or(0, |d| d.xi.len());
    let mut header: Vec<String> = ["index", "tau", "lambda", "mean_p", "min_p", "max_p"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=n).map(|k| format!("xi{k}")));
    out.write_record(&header)?;
    for (i, d) in draws.iter().enumerate() {
        let r = DrawRecord::from_draw(i, d);
        let mut row = vec![
            r.index.to_string(),
            r.tau.to_string(),
            r.lambda.to_string(),
            r.mean_p.to_string(),
            r.min_p.to_string(),
            r.max_p.to_string(),
        ];
        row.extend(r.xi.iter().map(|v| v.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_draws_json<W: Write>(draws: &[PosteriorDraw], w: W) -> Result<()> {
    let records: Vec<DrawRecord> = draws.iter().enumerate().map(|(i, d)| DrawRecord::from_draw(i, d)).collect();
    serde_json::to_writer_pretty(w, &records)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::sync::Arc;

    fn grid() -> Arc<Grid> {
        Arc::new(Grid::unit_interval(11).unwrap())
    }

    #[test]
    fn l1_mass_extremes() {
        let g = grid();
        let rule = Quadrature::lebesgue(&g);
        let p0: Vec<f64> = g.axis().iter().map(|x| 0.3 + 0.4 * x).collect();
        let draws: Vec<Vec<f64>> = (0..5).map(|k| p0.iter().map(|v| v + 0.01 * (k as f64 + 1.0)).collect()).collect();
        assert_eq!(posterior_l1_mass(&draws, &p0, 0.0, &rule).unwrap(), 1.0);
        assert_eq!(posterior_l1_mass(&draws, &p0, 2.0, &rule).unwrap(), 0.0);
        assert_eq!(posterior_l1_mass(&draws, &p0, 0.035, &rule).unwrap(), 0.4);
        assert!(posterior_l1_mass(&[], &p0, 0.1, &rule).is_err());
    }

    #[test]
    fn summary_examples() {
        let g = grid();
        let p = GridFunction::from_fn(g.clone(), |x| 0.2 + 0.5 * x[0]).unwrap();
        let s = posterior_summary(std::slice::from_ref(&p), &[0.5, 0.9]).unwrap();
        assert_eq!(s.mean.values(), p.values());
        let q = p.map(|v| 1.0 - v);
        let s = posterior_summary(&[p, q], &[0.5, 0.9]).unwrap();
        assert!(s.mean.values().iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn bands_are_nested() {
        let g = grid();
        let draws: Vec<GridFunction> = (0..40)
            .map(|k| GridFunction::from_fn(g.clone(), |x| ((k * 7919) % 101) as f64 / 101.0 * x[0]).unwrap())
            .collect();
        let s = posterior_summary(&draws, &[0.5, 0.9]).unwrap();
        for i in 0..11 {
            assert!(s.bands[1].lower[i] <= s.bands[0].lower[i] && s.bands[0].upper[i] <= s.bands[1].upper[i]);
        }
    }
}
