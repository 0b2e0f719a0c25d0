use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Grid, PointSet};
use crate::model::dataset::{CovariateMeasure, Dataset};
use crate::model::link::clamp_probability;
use crate::{Error, Result};

/// Which measure a [`Quadrature`] stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    /// Monte Carlo with fresh draws from `Q`.
    MonteCarloQ,
    /// The empirical design measure `Q_n`.
    EmpiricalQn,
    /// Lebesgue measure via the trapezoid rule on a tensor grid.
    Lebesgue,
}

/// Points and weights approximating integration against a measure.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadrature {
    kind: MeasureKind,
    points: PointSet,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn lebesgue(grid: &Grid) -> Self {
        Self {
            kind: MeasureKind::Lebesgue,
            points: grid.points().clone(),
            weights: grid.trapezoid_weights(),
        }
    }

    pub fn empirical(design: &PointSet) -> Result<Self> {
        if design.is_empty() {
            return Err(Error::EmptyDesign);
        }
        let n = design.len();
        Ok(Self {
            kind: MeasureKind::EmpiricalQn,
            points: design.clone(),
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn monte_carlo<R: Rng + ?Sized>(measure: &CovariateMeasure, dim: usize, m: usize, rng: &mut R) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("monte carlo rule needs at least one point".into()));
        }
        Ok(Self {
            kind: MeasureKind::MonteCarloQ,
            points: measure.sample(dim, m, rng)?,
            weights: vec![1.0 / m as f64; m],
        })
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum_i w_i f_i` for values aligned with the rule's points.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        self.check(values.len())?;
        Ok(self.weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }

    pub fn integrate_fn(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.weights.len() {
            return Err(Error::Misaligned(format!("{len} values for a {}-point rule", self.weights.len())));
        }
        Ok(())
    }
}

/// `∫|p - p0|` under the rule; both slices are evaluated at the rule's points.
pub fn l1_distance(p: &[f64], p0: &[f64], rule: &Quadrature) -> Result<f64> {
    rule.check(p.len())?;
    rule.check(p0.len())?;
    Ok(rule.weights.iter().zip(p.iter().zip(p0)).map(|(w, (a, b))| w * (a - b).abs()).sum())
}

/// `∫|f1 - f2|` over `Q x counting` for the Bernoulli densities `p^y (1-p)^(1-y)`.
pub fn joint_density_l1(p1: &[f64], p2: &[f64], rule: &Quadrature) -> Result<f64> {
    rule.check(p1.len())?;
    rule.check(p2.len())?;
    Ok(rule
        .weights
        .iter()
        .zip(p1.iter().zip(p2))
        .map(|(w, (a, b))| w * ((a - b).abs() + ((1.0 - a) - (1.0 - b)).abs()))
        .sum())
}

/// KL divergence of `Bernoulli(b)` from `Bernoulli(a)`, with clamping.
pub fn bernoulli_kl(a: f64, b: f64) -> f64 {
    let (a, b) = (clamp_probability(a), clamp_probability(b));
    let kl = a * (a / b).ln() + (1.0 - a) * ((1.0 - a) / (1.0 - b)).ln();
    kl.max(0.0)
}

/// `∫ KL(Bern(p0(x)) || Bern(p(x)))` under the rule.
pub fn kl_divergence(p0: &[f64], p: &[f64], rule: &Quadrature) -> Result<f64> {
    rule.check(p.len())?;
    rule.check(p0.len())?;
    Ok(rule.weights.iter().zip(p0.iter().zip(p)).map(|(w, (&a, &b))| w * bernoulli_kl(a, b)).sum())
}

/// `sum_i y_i log p_i + (1 - y_i) log(1 - p_i)` with `p_i` the model probability at the i-th covariate.
pub fn log_likelihood(p: &[f64], data: &Dataset) -> Result<f64> {
    if p.len() != data.len() {
        return Err(Error::Misaligned(format!("{} probabilities for {} observations", p.len(), data.len())));
    }
    Ok(p.iter()
        .zip(data.responses())
        .map(|(&pi, &y)| {
            let pi = clamp_probability(pi);
            if y {
                pi.ln()
            } else {
                (1.0 - pi).ln()
            }
        })
        .sum())
}

/// `[a (log a/b)^m + (1-a) (log (1-a)/(1-b))^m] / (a-b)^2`.
pub fn kl_moment_ratio(a: f64, b: f64, m: u32) -> f64 {
    let num = a * (a / b).ln().powi(m as i32) + (1.0 - a) * ((1.0 - a) / (1.0 - b)).ln().powi(m as i32);
    num / (a - b).powi(2)
}

/// Largest ratio over a `resolution x resolution` grid on `[eps0, 1-eps0]^2`
/// with the diagonal removed; the fitted constant for the quadratic bounds on
/// Bernoulli KL and its second moment.
pub fn fit_kl_moment_constant(eps0: f64, m: u32, resolution: usize) -> Result<f64> {
    if !(eps0 > 0.0 && eps0 < 0.5) {
        return Err(Error::InvalidParameter(format!("eps0 must lie in (0, 1/2), got {eps0}")));
    }
    if m == 0 || m > 2 || resolution < 2 {
        return Err(Error::InvalidParameter("need m in {1, 2} and resolution >= 2".into()));
    }
    let h = (1.0 - 2.0 * eps0) / (resolution - 1) as f64;
    let mut best = 0.0f64;
    for i in 0..resolution {
        let a = eps0 + i as f64 * h;
        for j in 0..resolution {
            if i != j {
                best = best.max(kl_moment_ratio(a, eps0 + j as f64 * h, m));
            }
        }
    }
    Ok(best)
}
