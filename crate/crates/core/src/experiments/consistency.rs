use rand::Rng;

use crate::bernstein::{spacing_audit, DesignSpacing};
use crate::experiments::config::{CampaignId, CampaignParams, ConsistencyParams, ExperimentConfig, MeasureChoice};
use crate::experiments::{Builder, Context};
use crate::grid::Grid;
use crate::model::{l1_distance, simulate, Dataset, Quadrature};
use crate::posterior::{posterior_l1_mass, run_chain, ChainOutput, PriorModel};
use crate::rng::StreamSeed;
use crate::sieve::sieve_member;
use crate::stats::{mean, median};
use crate::{Error, Result};

const COLUMNS: [&str; 9] = ["n", "mass", "mean_l1", "tau_mean", "lambda_mean", "ess_ll", "in_sieve", "sparse_mass", "spacing_ok"];

fn dataset_stream(replicate: StreamSeed, n: usize) -> StreamSeed {
    replicate.child(&format!("n={n}"))
}

/// The dataset a consistency campaign analyses at replicate `rep` and
/// sample size `n`.
pub fn simulate_replicate(config: &ExperimentConfig, rep: usize, n: usize) -> Result<Dataset> {
    let p = consistency_params(config)?;
    let (design, _) = p.resolved(config.id());
    let stream = StreamSeed::root(config.seed).child(config.id().name()).index(rep as u64);
    simulate(&p.truth.response()?, &design, p.prior.dim, n, &mut dataset_stream(stream, n).rng())
}

pub(crate) fn consistency_params(config: &ExperimentConfig) -> Result<&ConsistencyParams> {
    match &config.params {
        CampaignParams::Theorem1(p) | CampaignParams::Theorem2(p) | CampaignParams::Theorem3(p) => Ok(p),
        other => Err(Error::Config(format!("campaign {} has no data model", other.id()))),
    }
}

/// Posterior fit of one dataset, scored against the configured truth.
#[derive(Debug)]
pub struct Fit {
    pub chain: ChainOutput,
    /// `L1` distance of each kept draw to the truth.
    pub l1: Vec<f64>,
    /// Fraction of draws farther than `eps` from the truth.
    pub mass: f64,
}

/// Runs the chain on `data` and measures each draw's distance to the truth
/// under the campaign's measure.
pub fn fit_dataset<R: Rng + ?Sized>(id: CampaignId, p: &ConsistencyParams, model: &PriorModel, data: &Dataset, rng: &mut R) -> Result<Fit> {
    let (_, measure) = p.resolved(id);
    let dim = p.prior.dim;
    let rule = match measure {
        MeasureChoice::MonteCarlo { points } => Quadrature::monte_carlo(&p.covariate_law, dim, points, rng)?,
        MeasureChoice::Empirical => Quadrature::empirical(data.covariates())?,
        MeasureChoice::Lebesgue { grid_points } => Quadrature::lebesgue(&Grid::new(dim, grid_points, 0.0, 1.0)?),
    };
    let chain = run_chain(model, data, &p.chain, rng)?;
    let probs = model.probabilities_at(&chain.draws, rule.points())?;
    let p0 = p.truth.response()?.probabilities(rule.points());
    let mass = posterior_l1_mass(&probs, &p0, p.eps, &rule)?;
    let l1 = probs.iter().map(|q| l1_distance(q, &p0, &rule)).collect::<Result<_>>()?;
    Ok(Fit { chain, l1, mass })
}

pub(super) fn run(id: CampaignId, p: &ConsistencyParams, ctx: &Context) -> Result<Builder> {
    let mut b = Builder::new(&COLUMNS);
    let (design, _) = p.resolved(id);
    let truth = p.truth.response()?;
    let model = PriorModel::new(p.prior.clone())?;
    let dim = p.prior.dim;
    let sizes = &p.sample_sizes;
    let jobs = ctx.replicates() * sizes.len();
    let results = ctx.map(jobs, |job| -> Result<Vec<(&'static str, f64)>> {
        let (rep, n) = (job / sizes.len(), sizes[job % sizes.len()]);
        let mut rng = dataset_stream(ctx.stream(rep), n).rng();
        let data = simulate(&truth, &design, dim, n, &mut rng)?;
        let fit = fit_dataset(id, p, &model, &data, &mut rng)?;
        let (out, mass) = (&fit.chain, fit.mass);
        let diag = |name: &str| out.diagnostics.scalar(name).map_or(f64::NAN, |s| s.mean);
        let mut row = vec![
            ("n", n as f64),
            ("mass", mass),
            ("mean_l1", mean(&fit.l1)),
            ("tau_mean", diag("tau")),
            ("lambda_mean", diag("lambda")),
            ("ess_ll", out.diagnostics.scalar("log_likelihood").map_or(f64::NAN, |s| s.ess)),
        ];
        if let Some(seq) = &p.sieve {
            let spec = seq.spec(n);
            let mut inside = 0usize;
            for d in &out.draws {
                inside += usize::from(sieve_member(&d.eta, &spec)?.member);
            }
            row.push(("in_sieve", inside as f64 / out.draws.len() as f64));
        }
        if let (Some(check), 1) = (p.spacing, dim) {
            let pts = DesignSpacing::from_unsorted(data.covariates().coords().to_vec())?;
            let audit = spacing_audit(&pts, check.k1, check.delta, &[]);
            row.push(("sparse_mass", audit.sparse_mass));
            row.push(("spacing_ok", f64::from(u8::from(audit.satisfied))));
        }
        Ok(row)
    });

    let mut masses: Vec<Vec<f64>> = vec![Vec::new(); sizes.len()];
    let mut spacing_ok = true;
    for (job, r) in results.into_iter().enumerate() {
        let (rep, k) = (job / sizes.len(), job % sizes.len());
        let cell = format!("n={}", sizes[k]);
        match r {
            Ok(row) => {
                masses[k].push(row[1].1);
                if let Some(&(_, ok)) = row.iter().find(|(c, _)| *c == "spacing_ok") {
                    spacing_ok &= ok == 1.0;
                }
                b.row(rep, cell, &row);
            }
            Err(e) => b.failure(rep, cell, &e),
        }
    }
    let medians: Vec<f64> = masses.iter().map(|m| if m.is_empty() { f64::NAN } else { median(m) }).collect();
    for (n, m) in sizes.iter().zip(&medians) {
        b.aggregate(format!("median_mass_n={n}"), *m);
    }
    let listing = sizes.iter().zip(&medians).map(|(n, m)| format!("n={n}: {m:.3}")).collect::<Vec<_>>().join(", ");
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    b.check("median-mass-decreasing", decreasing && medians.iter().all(|m| m.is_finite()), format!("median posterior mass outside the ε-ball: {listing}"));
    let (first, last) = (medians[0], medians[medians.len() - 1]);
    b.check("median-mass-shrinks", last < p.shrink_factor * first, format!("{last:.3} against {:.3} × {first:.3}", p.shrink_factor));
    if p.spacing.is_some() {
        b.check("design-spacing", spacing_ok, "every design passes the spacing audit");
    }
    b.check_failures();
    Ok(b)
}
