use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::grid::{GridFunction, PointSet};
use crate::model::link::LinkFunction;
use crate::rkhs::RkhsElement;
use crate::{Error, Result};

/// Covariate distribution `Q` on `[0,1]^d`, a product of identical marginals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CovariateMeasure {
    #[default]
    Uniform,
    Beta { a: f64, b: f64 },
}

impl CovariateMeasure {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CovariateMeasure::Uniform => Ok(()),
            CovariateMeasure::Beta { a, b } if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() => Ok(()),
            CovariateMeasure::Beta { a, b } => Err(Error::InvalidParameter(format!("beta shapes must be positive, got ({a}, {b})"))),
        }
    }

    pub fn sample_coordinate<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CovariateMeasure::Uniform => rng.random::<f64>(),
            CovariateMeasure::Beta { a, b } => rand_distr::Beta::new(a, b).expect("validated shapes").sample(rng),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, m: usize, rng: &mut R) -> Result<PointSet> {
        self.validate()?;
        let coords = (0..dim * m).map(|_| self.sample_coordinate(rng)).collect();
        PointSet::new(dim, coords)
    }

    /// Marginal quantile function.
    pub fn quantile(&self, q: f64) -> f64 {
        match *self {
            CovariateMeasure::Uniform => q,
            CovariateMeasure::Beta { a, b } => statrs::distribution::Beta::new(a, b).expect("validated shapes").inverse_cdf(q),
        }
    }

    /// Marginal density.
    pub fn density(&self, x: f64) -> f64 {
        use statrs::distribution::Continuous;
        match *self {
            CovariateMeasure::Uniform => f64::from((0.0..=1.0).contains(&x)),
            CovariateMeasure::Beta { a, b } => statrs::distribution::Beta::new(a, b).expect("validated shapes").pdf(x),
        }
    }
}

/// How covariates arose, stored alongside the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Design {
    Random { measure: CovariateMeasure },
    FixedGrid,
    FixedCustom,
}

/// Recipe for generating covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DesignSpec {
    /// iid draws from `Q`.
    Random { measure: CovariateMeasure },
    /// `x_i = i/(m+1)` per axis, tensorised; requires `n = m^d`.
    UniformGrid,
    /// Deterministic quantile design `x_i = F^{-1}(i/(m+1))` per axis.
    Quantile { measure: CovariateMeasure },
    /// Explicit covariates, row-major.
    Custom { dim: usize, coords: Vec<f64> },
}

impl DesignSpec {
    pub fn design(&self) -> Design {
        match self {
            DesignSpec::Random { measure } => Design::Random { measure: *measure },
            DesignSpec::UniformGrid => Design::FixedGrid,
            DesignSpec::Quantile { .. } | DesignSpec::Custom { .. } => Design::FixedCustom,
        }
    }

    pub fn covariates<R: Rng + ?Sized>(&self, dim: usize, n: usize, rng: &mut R) -> Result<PointSet> {
        match self {
            DesignSpec::Random { measure } => measure.sample(dim, n, rng),
            DesignSpec::UniformGrid => tensor_design(dim, n, |q| q),
            DesignSpec::Quantile { measure } => {
                measure.validate()?;
                tensor_design(dim, n, |q| measure.quantile(q))
            }
            DesignSpec::Custom { dim: d, coords } => {
                if *d != dim {
                    return Err(Error::Misaligned(format!("custom design has dimension {d}, expected {dim}")));
                }
                let pts = PointSet::new(dim, coords.clone())?;
                if pts.len() != n {
                    return Err(Error::Misaligned(format!("custom design has {} points, expected {n}", pts.len())));
                }
                Ok(pts)
            }
        }
    }
}

fn tensor_design(dim: usize, n: usize, marginal: impl Fn(f64) -> f64) -> Result<PointSet> {
    let m = (n as f64).powf(1.0 / dim as f64).round() as usize;
    if m.checked_pow(dim as u32) != Some(n) {
        return Err(Error::InvalidParameter(format!("grid design needs n = m^{dim}, got n = {n}")));
    }
    let axis: Vec<f64> = (1..=m).map(|i| marginal(i as f64 / (m + 1) as f64)).collect();
    let mut coords = Vec::with_capacity(n * dim);
    for flat in 0..n {
        let mut rem = flat;
        let mut idx = vec![0; dim];
        for j in (0..dim).rev() {
            idx[j] = rem % m;
            rem /= m;
        }
        coords.extend(idx.iter().map(|&i| axis[i]));
    }
    PointSet::new(dim, coords)
}

/// The data-generating response probability `p0`.
#[derive(Clone)]
pub enum TrueResponse {
    /// `p0 = H(eta0)`.
    Linked { eta: RkhsElement, link: LinkFunction },
    /// Probabilities tabulated on a grid, interpolated multilinearly.
    Tabulated(GridFunction),
    Constant(f64),
    Function(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for TrueResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrueResponse::Linked { eta, link } => f.debug_struct("Linked").field("eta", eta).field("link", link).finish(),
            TrueResponse::Tabulated(g) => f.debug_tuple("Tabulated").field(&g.values().len()).finish(),
            TrueResponse::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            TrueResponse::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl TrueResponse {
    pub fn probability(&self, x: &[f64]) -> f64 {
        match self {
            TrueResponse::Linked { eta, link } => link.forward(eta.evaluate(x)),
            TrueResponse::Tabulated(g) => g.at(x),
            TrueResponse::Constant(c) => *c,
            TrueResponse::Function(f) => f(x),
        }
    }

    pub fn probabilities(&self, points: &PointSet) -> Vec<f64> {
        points.iter().map(|x| self.probability(x)).collect()
    }
}

/// Covariates with binary responses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    covariates: PointSet,
    responses: Vec<bool>,
    design: Design,
}

impl Dataset {
    pub fn new(covariates: PointSet, responses: Vec<bool>, design: Design) -> Result<Self> {
        if covariates.len() != responses.len() {
            return Err(Error::Misaligned(format!(
                "{} covariates but {} responses",
                covariates.len(),
                responses.len()
            )));
        }
        if covariates.coords().iter().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err(Error::InvalidParameter("covariates must lie in the unit cube".into()));
        }
        Ok(Self { covariates, responses, design })
    }

    /// A dataset with no observations; the posterior is then the prior.
    pub fn empty(dim: usize) -> Self {
        Self {
            covariates: PointSet::new(dim, Vec::new()).expect("empty point set"),
            responses: Vec::new(),
            design: Design::FixedCustom,
        }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.covariates.dim()
    }

    pub fn covariates(&self) -> &PointSet {
        &self.covariates
    }

    pub fn responses(&self) -> &[bool] {
        &self.responses
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn successes(&self) -> usize {
        self.responses.iter().filter(|&&y| y).count()
    }

    /// Reorders observations: row `i` of the result is row `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::Misaligned("permutation length differs from data".into()));
        }
        let d = self.dim();
        let coords = order.iter().flat_map(|&i| self.covariates.point(i).iter().copied()).collect();
        let responses = order.iter().map(|&i| self.responses[i]).collect();
        Ok(Self {
            covariates: PointSet::new(d, coords)?,
            responses,
            design: self.design.clone(),
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dim()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        out.write_record(&header)?;
        for (x, &y) in self.covariates.iter().zip(&self.responses) {
            let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            row.push(u8::from(y).to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads `x1..xd,y` columns; the design is recorded as fixed-custom.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(r);
        let header = input.headers()?.clone();
        let dim = header.len().checked_sub(1).filter(|&d| d > 0).ok_or_else(|| Error::Config("csv needs x and y columns".into()))?;
        if header.get(dim) != Some("y") {
            return Err(Error::Config("last csv column must be y".into()));
        }
        let mut coords = Vec::new();
        let mut responses = Vec::new();
        for rec in input.records() {
            let rec = rec?;
            for j in 0..dim {
                coords.push(parse_field(&rec, j)?);
            }
            responses.push(match rec.get(dim).map(str::trim) {
                Some("1") => true,
                Some("0") => false,
                other => return Err(Error::Config(format!("response must be 0 or 1, got {other:?}"))),
            });
        }
        Self::new(PointSet::new(dim, coords)?, responses, Design::FixedCustom)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn parse_field(rec: &csv::StringRecord, j: usize) -> Result<f64> {
    let s = rec.get(j).unwrap_or("");
    s.trim().parse().map_err(|_| Error::Config(format!("bad number {s:?} in column {}", j + 1)))
}

/// Draws covariates per `design` and Bernoulli responses from `truth`.
pub fn simulate<R: Rng + ?Sized>(truth: &TrueResponse, design: &DesignSpec, dim: usize, n: usize, rng: &mut R) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDesign);
    }
    let covariates = design.covariates(dim, n, rng)?;
    let p = truth.probabilities(&covariates);
    if let Some(&bad) = p.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::ProbabilityOutOfRange(bad));
    }
    let responses = p.iter().map(|&pi| rng.random::<f64>() < pi).collect();
    Dataset::new(covariates, responses, design.design())
}
