//! Reproducible experiment campaigns: configs, seed policy, parallel
//! replicates and machine-readable reports.
//!
//! Seeds form a tree: root seed, then campaign id, then replicate index.
//! Replicates run on a dedicated thread pool and are collected in index
//! order, so results do not depend on `jobs`.

mod config;
mod consistency;
mod design;
mod gp;
mod oracle;
mod report;
mod sieves;

use rayon::prelude::*;

pub use config::{
    BernsteinParams, CampaignId, CampaignParams, ConsistencyParams, DerivativeParams, EntropyParams, ExperimentConfig, HoeffdingParams,
    KlParams, MeasureChoice, OracleParams, SamplerParams, SeparationParams, SieveMassParams, SmallBallParams, SpacingCheck, SpacingParams,
    TruthSpec, DEFAULT_SEED,
};
pub use consistency::{fit_dataset, simulate_replicate, Fit};
pub use report::{emit_report, Aggregate, CampaignReport, Predicate, Provenance, Record, ReportFormat, SCHEMA_VERSION};

use crate::rng::StreamSeed;
use crate::{Error, Result};

/// Shared state handed to each campaign.
pub(crate) struct Context {
    stream: StreamSeed,
    replicates: usize,
    pool: rayon::ThreadPool,
}

impl Context {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(j) = config.jobs {
            builder = builder.num_threads(j);
        }
        let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Self { stream: StreamSeed::root(config.seed).child(config.id().name()), replicates: config.replicates, pool })
    }

    pub(crate) fn replicates(&self) -> usize {
        self.replicates
    }

    /// Stream of replicate `rep`.
    pub(crate) fn stream(&self, rep: usize) -> StreamSeed {
        self.stream.index(rep as u64)
    }

    /// Runs `f` over `0..count` on the pool, preserving order.
    pub(crate) fn map<T: Send>(&self, count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        self.pool.install(|| (0..count).into_par_iter().map(f).collect())
    }
}

/// Collects records in a fixed column layout.
pub(crate) struct Builder {
    columns: Vec<String>,
    records: Vec<Record>,
    aggregates: Vec<Aggregate>,
    predicates: Vec<Predicate>,
}

impl Builder {
    pub(crate) fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), records: Vec::new(), aggregates: Vec::new(), predicates: Vec::new() }
    }

    /// Adds a row given as `(column, value)` pairs; unnamed columns are `NaN`.
    pub(crate) fn row(&mut self, replicate: usize, cell: impl Into<String>, values: &[(&str, f64)]) {
        let mut row = vec![f64::NAN; self.columns.len()];
        for (name, v) in values {
            let j = self.columns.iter().position(|c| c == name).unwrap_or_else(|| panic!("unknown column {name}"));
            row[j] = *v;
        }
        self.records.push(Record { replicate, cell: cell.into(), values: row, error: None });
    }

    pub(crate) fn failure(&mut self, replicate: usize, cell: impl Into<String>, error: &Error) {
        self.records.push(Record { replicate, cell: cell.into(), values: vec![f64::NAN; self.columns.len()], error: Some(error.to_string()) });
    }

    pub(crate) fn aggregate(&mut self, name: impl Into<String>, value: f64) {
        self.aggregates.push(Aggregate { name: name.into(), value });
    }

    pub(crate) fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.predicates.push(Predicate::new(name, passed, detail));
    }

    /// Failed replicates make a campaign fail.
    pub(crate) fn check_failures(&mut self) {
        let failed = self.records.iter().filter(|r| r.error.is_some()).count();
        let first = self.records.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        self.check("no-failed-replicates", failed == 0, if failed == 0 { "all replicates ran".to_string() } else { format!("{failed} failed; first: {first}") });
    }

    fn finish(self, config: &ExperimentConfig, ctx: &Context) -> CampaignReport {
        let passed = !self.predicates.is_empty() && self.predicates.iter().all(|p| p.passed);
        CampaignReport {
            campaign: config.id(),
            provenance: Provenance {
                schema: SCHEMA_VERSION,
                config_sha256: config.sha256(),
                seed: config.seed,
                campaign_stream: ctx.stream.hex(),
                replicates: config.replicates,
            },
            columns: self.columns,
            records: self.records,
            aggregates: self.aggregates,
            predicates: self.predicates,
            passed,
        }
    }
}

/// Run one campaign. Replicate failures are recorded, not propagated; an
/// `Err` means the campaign could not be set up. When `out_dir` is set the
/// CSV and JSON reports are written there.
pub fn run_campaign(config: &ExperimentConfig) -> Result<CampaignReport> {
    config.validate()?;
    let ctx = Context::new(config)?;
    let id = config.id();
    let builder = match &config.params {
        CampaignParams::Theorem1(p) | CampaignParams::Theorem2(p) | CampaignParams::Theorem3(p) => consistency::run(id, p, &ctx)?,
        CampaignParams::Sampler(p) => gp::sampler(p, &ctx)?,
        CampaignParams::KlTruncation(p) => gp::kl_truncation(p, &ctx)?,
        CampaignParams::DerivativeTails(p) => gp::derivative_tails(p, &ctx)?,
        CampaignParams::SmallBall(p) => gp::small_ball(p, &ctx)?,
        CampaignParams::SieveMass(p) => sieves::sieve_mass(p, &ctx)?,
        CampaignParams::Entropy(p) => sieves::entropy(p, &ctx)?,
        CampaignParams::Hoeffding(p) => sieves::hoeffding(p, &ctx)?,
        CampaignParams::Separation(p) => sieves::separation(p, &ctx)?,
        CampaignParams::Bernstein(p) => design::bernstein(p, &ctx)?,
        CampaignParams::Spacing(p) => design::spacing(p, &ctx)?,
        CampaignParams::PosteriorOracle(p) => oracle::run(p, &ctx)?,
    };
    let report = builder.finish(config, &ctx);
    if let Some(dir) = &config.out_dir {
        emit_report(&report, dir, ReportFormat::Csv)?;
        emit_report(&report, dir, ReportFormat::Json)?;
    }
    Ok(report)
}
