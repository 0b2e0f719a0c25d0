use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{CovariateMeasure, DesignSpec, LinkFunction, TrueResponse};
use crate::posterior::{ChainConfig, LambdaPrior, PriorSpec, TauPrior};
use crate::rkhs::RkhsElement;
use crate::sieve::SieveSequences;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CampaignId {
    Theorem1,
    Theorem2,
    Theorem3,
    Sampler,
    KlTruncation,
    DerivativeTails,
    SmallBall,
    SieveMass,
    Entropy,
    Hoeffding,
    Separation,
    Bernstein,
    Spacing,
    PosteriorOracle,
}

impl CampaignId {
    pub const ALL: [CampaignId; 14] = [
        CampaignId::Sampler,
        CampaignId::KlTruncation,
        CampaignId::DerivativeTails,
        CampaignId::SmallBall,
        CampaignId::Hoeffding,
        CampaignId::Separation,
        CampaignId::Bernstein,
        CampaignId::Spacing,
        CampaignId::Entropy,
        CampaignId::SieveMass,
        CampaignId::PosteriorOracle,
        CampaignId::Theorem1,
        CampaignId::Theorem2,
        CampaignId::Theorem3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CampaignId::Theorem1 => "theorem1",
            CampaignId::Theorem2 => "theorem2",
            CampaignId::Theorem3 => "theorem3",
            CampaignId::Sampler => "sampler",
            CampaignId::KlTruncation => "kl-truncation",
            CampaignId::DerivativeTails => "derivative-tails",
            CampaignId::SmallBall => "small-ball",
            CampaignId::SieveMass => "sieve-mass",
            CampaignId::Entropy => "entropy",
            CampaignId::Hoeffding => "hoeffding",
            CampaignId::Separation => "separation",
            CampaignId::Bernstein => "bernstein",
            CampaignId::Spacing => "spacing",
            CampaignId::PosteriorOracle => "posterior-oracle",
        }
    }

    /// Replicates run when the config does not say otherwise.
    pub fn default_replicates(self) -> usize {
        match self {
            CampaignId::Theorem1 | CampaignId::Theorem2 | CampaignId::Theorem3 => 20,
            CampaignId::Hoeffding | CampaignId::Separation => 10_000,
            CampaignId::Bernstein => 500,
            CampaignId::Spacing => 200,
            _ => 1,
        }
    }
}

impl fmt::Display for CampaignId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CampaignId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CampaignId::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown campaign '{s}'")))
    }
}

/// `p0 = H(Σ aᵢ exp(-λ²(x - tᵢ)²))` on `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthSpec {
    pub lambda: f64,
    pub nodes: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub link: LinkFunction,
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self { lambda: 3.0, nodes: vec![0.15, 0.5, 0.85], coefficients: vec![1.8, -1.2, 1.8], link: LinkFunction::Logistic }
    }
}

impl TruthSpec {
    pub fn eta(&self) -> Result<RkhsElement> {
        RkhsElement::se_1d(self.lambda, &self.nodes, &self.coefficients)
    }

    pub fn response(&self) -> Result<TrueResponse> {
        Ok(TrueResponse::Linked { eta: self.eta()?, link: self.link })
    }
}

/// Measure for the `L1` distance in a consistency campaign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeasureChoice {
    /// Fresh draws from the covariate law.
    MonteCarlo { points: usize },
    /// The design's own empirical measure.
    Empirical,
    /// Trapezoid rule on a uniform grid.
    Lebesgue { grid_points: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacingCheck {
    pub k1: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsistencyParams {
    pub sample_sizes: Vec<usize>,
    pub eps: f64,
    pub truth: TruthSpec,
    pub prior: PriorSpec,
    pub chain: ChainConfig,
    /// `None` picks the campaign's own design.
    pub design: Option<DesignSpec>,
    pub measure: Option<MeasureChoice>,
    /// Covariate law for Monte Carlo measures.
    pub covariate_law: CovariateMeasure,
    /// The largest-`n` median must fall below this fraction of the smallest-`n` one.
    pub shrink_factor: f64,
    pub spacing: Option<SpacingCheck>,
    /// Sieve used to report membership of posterior draws.
    pub sieve: Option<SieveSequences>,
}

impl Default for ConsistencyParams {
    fn default() -> Self {
        Self {
            sample_sizes: vec![50, 200, 800],
            eps: 0.1,
            truth: TruthSpec::default(),
            prior: PriorSpec::default(),
            chain: ChainConfig::default(),
            design: None,
            measure: None,
            covariate_law: CovariateMeasure::Uniform,
            shrink_factor: 0.5,
            spacing: None,
            sieve: None,
        }
    }
}

impl ConsistencyParams {
    pub fn resolved(&self, id: CampaignId) -> (DesignSpec, MeasureChoice) {
        let (design, measure) = match id {
            CampaignId::Theorem2 => (
                DesignSpec::Quantile { measure: CovariateMeasure::Beta { a: 2.0, b: 5.0 } },
                MeasureChoice::Empirical,
            ),
            CampaignId::Theorem3 => (DesignSpec::UniformGrid, MeasureChoice::Lebesgue { grid_points: 513 }),
            _ => (DesignSpec::Random { measure: self.covariate_law }, MeasureChoice::MonteCarlo { points: 2000 }),
        };
        (self.design.clone().unwrap_or(design), self.measure.unwrap_or(measure))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerParams {
    pub grid_points: usize,
    pub draws: usize,
    pub tau: f64,
    pub lambda: f64,
    pub max_standard_errors: f64,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self { grid_points: 20, draws: 10_000, tau: 1.0, lambda: 2.0, max_standard_errors: 5.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KlParams {
    pub grid_points: usize,
    pub draws: usize,
    pub tau: f64,
    pub lambda: f64,
    pub max_standard_errors: f64,
    pub levels: Vec<usize>,
    pub error_draws: usize,
    /// Prior whose truncation level is gated.
    pub prior: PriorSpec,
    pub gate_draws: usize,
    pub gate_threshold: f64,
}

impl Default for KlParams {
    fn default() -> Self {
        Self {
            grid_points: 20,
            draws: 10_000,
            tau: 1.0,
            lambda: 2.0,
            max_standard_errors: 5.0,
            levels: (1..=12).collect(),
            error_draws: 2000,
            prior: PriorSpec::default(),
            gate_draws: 2000,
            gate_threshold: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DerivativeParams {
    pub grid_points: usize,
    pub draws: usize,
    pub tau: f64,
    pub lambda: f64,
    pub max_standard_errors: f64,
    pub fd_step: f64,
    pub fd_tolerance: f64,
    pub tail_orders: Vec<usize>,
    pub tail_grid_points: usize,
    pub tail_draws: usize,
    /// Threshold ladder as multiples of `σ_w`.
    pub tail_thresholds: Vec<f64>,
    /// Fit only thresholds at or beyond this multiple of `σ_w`.
    pub tail_fit_from: f64,
    pub tail_min_hits: usize,
    pub tail_min_r_squared: f64,
}

impl Default for DerivativeParams {
    fn default() -> Self {
        Self {
            grid_points: 12,
            draws: 10_000,
            tau: 1.0,
            lambda: 1.0,
            max_standard_errors: 5.0,
            fd_step: 1e-2,
            fd_tolerance: 1e-2,
            tail_orders: vec![0, 1, 2],
            tail_grid_points: 32,
            tail_draws: 100_000,
            tail_thresholds: (0..=24).map(|i| 1.0 + 0.125 * i as f64).collect(),
            tail_fit_from: 2.0,
            tail_min_hits: 10,
            tail_min_r_squared: 0.95,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmallBallParams {
    pub grid_points: usize,
    pub draws: usize,
    pub tau: f64,
    pub lambda: f64,
    /// Radii as multiples of the path scale `τ^{-1/2}`.
    pub radius_factors: Vec<f64>,
    pub min_hits: usize,
    pub targets: Vec<TruthSpec>,
}

impl Default for SmallBallParams {
    fn default() -> Self {
        let t = |nodes: Vec<f64>, coefficients: Vec<f64>| TruthSpec { lambda: 2.0, nodes, coefficients, link: LinkFunction::Logistic };
        Self {
            grid_points: 64,
            draws: 100_000,
            tau: 1.0,
            lambda: 2.0,
            radius_factors: vec![0.25, 0.5, 1.0],
            min_hits: 10,
            targets: vec![
                t(vec![0.5], vec![0.8]),
                t(vec![0.2, 0.8], vec![0.6, -0.6]),
                t(vec![0.1, 0.45, 0.9], vec![0.4, -0.5, 0.3]),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SieveMassParams {
    pub sample_sizes: Vec<usize>,
    pub draws: usize,
    pub sequences: SieveSequences,
    pub prior: PriorSpec,
    pub max_standard_errors: f64,
}

impl Default for SieveMassParams {
    fn default() -> Self {
        Self {
            sample_sizes: vec![25, 50, 100],
            draws: 4000,
            sequences: SieveSequences::default(),
            prior: PriorSpec::default(),
            max_standard_errors: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntropyParams {
    pub m_values: Vec<f64>,
    pub samples: usize,
    pub levels: usize,
    pub grid_points: usize,
    pub alpha: usize,
    /// Radii `ε_i = start · (M/2) · 2^{-i/2}`.
    pub eps_start: f64,
    pub eps_steps: usize,
    pub min_count: usize,
    /// Upper fit cut-off as a fraction of the sample size.
    pub max_count_fraction: f64,
    pub tolerance: f64,
}

impl Default for EntropyParams {
    fn default() -> Self {
        Self {
            m_values: vec![2.0, 4.0, 8.0],
            samples: 4000,
            levels: 7,
            grid_points: 257,
            alpha: 2,
            eps_start: 0.8,
            eps_steps: 16,
            min_count: 10,
            max_count_fraction: 0.25,
            tolerance: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoeffdingParams {
    /// `(m, ε)` cells for the single test.
    pub cells: Vec<(usize, f64)>,
    pub mu0: f64,
    pub composite_m: usize,
    pub net_size: usize,
    pub composite_eps: f64,
}

impl Default for HoeffdingParams {
    fn default() -> Self {
        Self { cells: vec![(100, 0.2), (400, 0.1), (400, 0.2)], mu0: 0.5, composite_m: 2000, net_size: 20, composite_eps: 0.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparationParams {
    /// Draws allowed per replicate before giving up on the premise.
    pub max_attempts: usize,
}

impl Default for SeparationParams {
    fn default() -> Self {
        Self { max_attempts: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BernsteinParams {
    pub orders: Vec<usize>,
    /// Orders over which successive error ratios are checked.
    pub ratio_orders: Vec<usize>,
    pub ratio_band: (f64, f64),
    pub max_cv: f64,
    pub train_orders: Vec<usize>,
    pub held_out_orders: Vec<usize>,
    pub eval_points: usize,
    pub n: usize,
    pub eps: f64,
    pub k1: f64,
    pub max_attempts: usize,
}

impl Default for BernsteinParams {
    fn default() -> Self {
        Self {
            orders: vec![10, 20, 40, 80, 160, 320],
            ratio_orders: vec![20, 40, 80, 160, 320],
            ratio_band: (0.45, 0.55),
            max_cv: 0.2,
            train_orders: vec![80, 160, 320],
            held_out_orders: vec![10, 20, 40],
            eval_points: 2001,
            n: 20_000,
            eps: 0.05,
            k1: 5.0,
            max_attempts: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpacingParams {
    pub n: usize,
    pub k1: f64,
    pub delta: f64,
    pub min_pass_rate: f64,
}

impl Default for SpacingParams {
    fn default() -> Self {
        Self { n: 1000, k1: 10.0, delta: 0.05, min_pass_rate: 0.95 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    pub truncation: usize,
    pub tau: f64,
    pub lambda: f64,
    pub covariates: Vec<f64>,
    pub responses: Vec<bool>,
    pub chain: ChainConfig,
    pub rel_tolerance: f64,
    pub quadrature_points: usize,
    pub quadrature_range: f64,
    /// Chain run without data against the default prior.
    pub prior_chain: ChainConfig,
    pub prior_truncation: usize,
    pub max_standard_errors: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            truncation: 2,
            tau: 0.25,
            lambda: 1.0,
            covariates: vec![0.1, 0.5, 0.9],
            responses: vec![true, true, false],
            chain: ChainConfig { iterations: 420_000, burn_in: 20_000, thin: 4, ..ChainConfig::default() },
            rel_tolerance: 0.02,
            quadrature_points: 801,
            quadrature_range: 9.0,
            prior_chain: ChainConfig { iterations: 110_000, burn_in: 10_000, thin: 5, ..ChainConfig::default() },
            prior_truncation: 8,
            max_standard_errors: 5.0,
        }
    }
}

impl OracleParams {
    pub fn prior(&self) -> PriorSpec {
        PriorSpec {
            truncation: self.truncation,
            tau: TauPrior::Fixed { value: self.tau },
            lambda: LambdaPrior::Fixed { value: self.lambda },
            ..PriorSpec::default()
        }
    }
}

/// Campaign-specific settings, selected by the `campaign` key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "campaign", rename_all = "kebab-case")]
pub enum CampaignParams {
    Theorem1(ConsistencyParams),
    Theorem2(ConsistencyParams),
    Theorem3(ConsistencyParams),
    Sampler(SamplerParams),
    KlTruncation(KlParams),
    DerivativeTails(DerivativeParams),
    SmallBall(SmallBallParams),
    SieveMass(SieveMassParams),
    Entropy(EntropyParams),
    Hoeffding(HoeffdingParams),
    Separation(SeparationParams),
    Bernstein(BernsteinParams),
    Spacing(SpacingParams),
    PosteriorOracle(OracleParams),
}

impl CampaignParams {
    pub fn default_for(id: CampaignId) -> Self {
        match id {
            CampaignId::Theorem1 => CampaignParams::Theorem1(ConsistencyParams::default()),
            CampaignId::Theorem2 => CampaignParams::Theorem2(ConsistencyParams::default()),
            CampaignId::Theorem3 => CampaignParams::Theorem3(ConsistencyParams {
                spacing: Some(SpacingCheck { k1: 2.0, delta: 0.1 }),
                sieve: Some(SieveSequences::default()),
                ..ConsistencyParams::default()
            }),
            CampaignId::Sampler => CampaignParams::Sampler(SamplerParams::default()),
            CampaignId::KlTruncation => CampaignParams::KlTruncation(KlParams::default()),
            CampaignId::DerivativeTails => CampaignParams::DerivativeTails(DerivativeParams::default()),
            CampaignId::SmallBall => CampaignParams::SmallBall(SmallBallParams::default()),
            CampaignId::SieveMass => CampaignParams::SieveMass(SieveMassParams::default()),
            CampaignId::Entropy => CampaignParams::Entropy(EntropyParams::default()),
            CampaignId::Hoeffding => CampaignParams::Hoeffding(HoeffdingParams::default()),
            CampaignId::Separation => CampaignParams::Separation(SeparationParams::default()),
            CampaignId::Bernstein => CampaignParams::Bernstein(BernsteinParams::default()),
            CampaignId::Spacing => CampaignParams::Spacing(SpacingParams::default()),
            CampaignId::PosteriorOracle => CampaignParams::PosteriorOracle(OracleParams::default()),
        }
    }

    pub fn id(&self) -> CampaignId {
        match self {
            CampaignParams::Theorem1(_) => CampaignId::Theorem1,
            CampaignParams::Theorem2(_) => CampaignId::Theorem2,
            CampaignParams::Theorem3(_) => CampaignId::Theorem3,
            CampaignParams::Sampler(_) => CampaignId::Sampler,
            CampaignParams::KlTruncation(_) => CampaignId::KlTruncation,
            CampaignParams::DerivativeTails(_) => CampaignId::DerivativeTails,
            CampaignParams::SmallBall(_) => CampaignId::SmallBall,
            CampaignParams::SieveMass(_) => CampaignId::SieveMass,
            CampaignParams::Entropy(_) => CampaignId::Entropy,
            CampaignParams::Hoeffding(_) => CampaignId::Hoeffding,
            CampaignParams::Separation(_) => CampaignId::Separation,
            CampaignParams::Bernstein(_) => CampaignId::Bernstein,
            CampaignParams::Spacing(_) => CampaignId::Spacing,
            CampaignParams::PosteriorOracle(_) => CampaignId::PosteriorOracle,
        }
    }
}

pub const DEFAULT_SEED: u64 = 20_240_601;

/// One campaign run: which campaign, its settings, and the seed tree root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub replicates: usize,
    /// Worker threads; `None` uses every core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub params: CampaignParams,
}

impl ExperimentConfig {
    pub fn default_for(id: CampaignId) -> Self {
        Self { seed: DEFAULT_SEED, replicates: id.default_replicates(), jobs: None, out_dir: None, params: CampaignParams::default_for(id) }
    }

    pub fn id(&self) -> CampaignId {
        self.params.id()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be positive".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be positive".into()));
        }
        match &self.params {
            CampaignParams::Theorem1(p) | CampaignParams::Theorem2(p) | CampaignParams::Theorem3(p) => {
                if p.sample_sizes.len() < 2 {
                    return Err(Error::Config("need at least two sample sizes".into()));
                }
                if !(p.eps > 0.0) {
                    return Err(Error::Config("eps must be positive".into()));
                }
                p.prior.validate()?;
                p.truth.eta()?;
            }
            CampaignParams::Hoeffding(p) if p.cells.is_empty() => return Err(Error::Config("no hoeffding cells".into())),
            CampaignParams::PosteriorOracle(p) if p.covariates.len() != p.responses.len() => {
                return Err(Error::Config("oracle covariates and responses differ in length".into()))
            }
            CampaignParams::SieveMass(p) if p.sample_sizes.len() < 2 => return Err(Error::Config("need at least two sample sizes".into())),
            _ => {}
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring `jobs` and `out_dir`,
    /// which do not affect results.
    pub fn sha256(&self) -> String {
        let canonical = Self { jobs: None, out_dir: None, ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod unit {
    use super::*;

    #[test]
    fn every_default_round_trips_through_toml() {
        for id in CampaignId::ALL {
            let cfg = ExperimentConfig::default_for(id);
            let text = cfg.to_toml().unwrap();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            assert_eq!(back, cfg, "{id}");
            assert_eq!(back.id(), id);
        }
    }

    #[test]
    fn missing_fields_take_defaults() {
        let cfg = ExperimentConfig::from_toml("campaign = \"theorem2\"\nseed = 7\nreplicates = 3\neps = 0.2\n").unwrap();
        match cfg.params {
            CampaignParams::Theorem2(p) => {
                assert_eq!(p.eps, 0.2);
                assert_eq!(p.sample_sizes, vec![50, 200, 800]);
                assert!(matches!(p.resolved(CampaignId::Theorem2).1, MeasureChoice::Empirical));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_is_required() {
        assert!(ExperimentConfig::from_toml("campaign = \"entropy\"\nreplicates = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("campaign = \"nope\"\nseed = 1\nreplicates = 1\n").is_err());
    }

    #[test]
    fn hash_ignores_jobs() {
        let a = ExperimentConfig::default_for(CampaignId::Spacing);
        let b = ExperimentConfig { jobs: Some(3), out_dir: Some("x".into()), ..a.clone() };
        let c = ExperimentConfig { seed: 1, ..a.clone() };
        assert_eq!(a.sha256(), b.sha256());
        assert_ne!(a.sha256(), c.sha256());
    }

    #[test]
    fn ids_parse() {
        for id in CampaignId::ALL {
            assert_eq!(id.name().parse::<CampaignId>().unwrap(), id);
        }
    }
}
