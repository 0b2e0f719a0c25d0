use crate::experiments::config::OracleParams;
use crate::experiments::{Builder, Context};
use crate::grid::PointSet;
use crate::model::{clamp_probability, Dataset, Design};
use crate::posterior::{run_chain, PosteriorDraw, PriorModel, PriorSpec};
use crate::stats::{effective_sample_size, mean, variance};
use crate::Result;

/// Posterior moments of a two-coefficient model by tensor quadrature of the
/// unnormalised density over `[-r, r]²`.
struct Reference {
    names: Vec<String>,
    values: Vec<f64>,
}

fn quadrature_reference(model: &PriorModel, data: &Dataset, tau: f64, points: usize, range: f64) -> Result<Reference> {
    let basis = model.basis_at(0, data.covariates())?;
    let mean_at = model.mean_at(data.covariates());
    let link = model.spec().link;
    let h = 2.0 * range / (points - 1) as f64;
    let m = data.len();
    let mut log_w = Vec::with_capacity(points * points);
    for i in 0..points {
        for j in 0..points {
            let xi = [-range + i as f64 * h, -range + j as f64 * h];
            let eta = model.eta(&basis, &mean_at, tau, &xi);
            let ll: f64 = eta.iter().zip(data.responses()).map(|(&u, &y)| {
                let (lp, lq) = link.log_probabilities(u);
                if y { lp } else { lq }
            }).sum();
            log_w.push(ll - 0.5 * (xi[0] * xi[0] + xi[1] * xi[1]));
        }
    }
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut acc = vec![0.0; 5 + m];
    for i in 0..points {
        for j in 0..points {
            let xi = [-range + i as f64 * h, -range + j as f64 * h];
            let w = (log_w[i * points + j] - top).exp();
            total += w;
            let eta = model.eta(&basis, &mean_at, tau, &xi);
            let f = [xi[0], xi[1], xi[0] * xi[0], xi[1] * xi[1], xi[0] * xi[1]];
            for (a, v) in acc.iter_mut().zip(f.into_iter().chain(eta.iter().map(|&u| clamp_probability(link.forward(u))))) {
                *a += w * v;
            }
        }
    }
    let mut names: Vec<String> = ["xi1", "xi2", "xi1^2", "xi2^2", "xi1*xi2"].iter().map(|s| s.to_string()).collect();
    names.extend((0..m).map(|i| format!("p(x{})", i + 1)));
    Ok(Reference { names, values: acc.into_iter().map(|a| a / total).collect() })
}

fn traces(draws: &[PosteriorDraw], probs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut t = vec![
        draws.iter().map(|d| d.xi[0]).collect::<Vec<_>>(),
        draws.iter().map(|d| d.xi[1]).collect(),
        draws.iter().map(|d| d.xi[0] * d.xi[0]).collect(),
        draws.iter().map(|d| d.xi[1] * d.xi[1]).collect(),
        draws.iter().map(|d| d.xi[0] * d.xi[1]).collect(),
    ];
    if let Some(first) = probs.first() {
        t.extend((0..first.len()).map(|i| probs.iter().map(|p| p[i]).collect()));
    }
    t
}

pub(super) fn run(p: &OracleParams, ctx: &Context) -> Result<Builder> {
    let mut b = Builder::new(&["estimate", "reference", "standard_error", "ess", "scaled_error"]);

    // small model against quadrature
    let model = PriorModel::new(p.prior())?;
    let covariates = PointSet::from_scalars(&p.covariates)?;
    let data = Dataset::new(covariates.clone(), p.responses.clone(), Design::FixedCustom)?;
    let reference = quadrature_reference(&model, &data, p.tau, p.quadrature_points, p.quadrature_range)?;
    let runs = ctx.map(ctx.replicates(), |rep| -> Result<Vec<Vec<f64>>> {
        let out = run_chain(&model, &data, &p.chain, &mut ctx.stream(rep).child("quadrature").rng())?;
        let probs = model.probabilities_at(&out.draws, &covariates)?;
        Ok(traces(&out.draws, &probs))
    });
    let mut worst = 0.0f64;
    let mut failed = false;
    for (rep, r) in runs.into_iter().enumerate() {
        match r {
            Ok(ts) => {
                for (k, t) in ts.iter().enumerate() {
                    let (est, want) = (mean(t), reference.values[k]);
                    // first moments may sit near zero; scale by the posterior spread
                    let scale = if k < 2 { want.abs().max((reference.values[k + 2] - want * want).max(0.0).sqrt()) } else { want.abs() };
                    let err = (est - want).abs() / scale;
                    worst = worst.max(err);
                    let ess = effective_sample_size(t);
                    b.row(rep, format!("quadrature {}", reference.names[k]), &[
                        ("estimate", est),
                        ("reference", want),
                        ("standard_error", (variance(t) / ess).sqrt()),
                        ("ess", ess),
                        ("scaled_error", err),
                    ]);
                }
            }
            Err(e) => {
                failed = true;
                b.failure(rep, "quadrature", &e);
            }
        }
    }
    b.aggregate("max_relative_error", worst);
    b.check(
        "matches-quadrature",
        !failed && worst <= p.rel_tolerance,
        format!("largest relative error {worst:.4} against tolerance {}", p.rel_tolerance),
    );

    // without data the chain must reproduce the prior
    let spec = PriorSpec { truncation: p.prior_truncation, ..PriorSpec::default() };
    let prior = PriorModel::new(spec.clone())?;
    let lambda_mean: f64 = prior.rung_log_mass().iter().zip(prior.rungs()).map(|(lm, r)| lm.exp() * r).sum();
    let inv_tau_mean = match spec.tau {
        crate::posterior::TauPrior::InverseGamma { shape, scale } => shape / scale,
        crate::posterior::TauPrior::Fixed { value } => 1.0 / value,
    };
    let runs = ctx.map(ctx.replicates(), |rep| -> Result<Vec<(String, Vec<f64>, f64)>> {
        let out = run_chain(&prior, &Dataset::empty(spec.dim), &p.prior_chain, &mut ctx.stream(rep).child("prior").rng())?;
        let d = &out.draws;
        let mut t = Vec::new();
        for k in 0..spec.truncation {
            t.push((format!("xi{}", k + 1), d.iter().map(|x| x.xi[k]).collect(), 0.0));
            t.push((format!("xi{}^2", k + 1), d.iter().map(|x| x.xi[k] * x.xi[k]).collect(), 1.0));
        }
        t.push(("1/tau".into(), d.iter().map(|x| 1.0 / x.tau).collect(), inv_tau_mean));
        t.push(("lambda".into(), d.iter().map(|x| x.lambda).collect(), lambda_mean));
        Ok(t)
    });
    let mut worst_z = 0.0f64;
    let mut failed = false;
    for (rep, r) in runs.into_iter().enumerate() {
        match r {
            Ok(ts) => {
                for (name, t, want) in ts {
                    let ess = effective_sample_size(&t);
                    let se = (variance(&t) / ess).sqrt();
                    let est = mean(&t);
                    let z = (est - want).abs() / se;
                    worst_z = worst_z.max(z);
                    b.row(rep, format!("prior {name}"), &[("estimate", est), ("reference", want), ("standard_error", se), ("ess", ess), ("scaled_error", z)]);
                }
            }
            Err(e) => {
                failed = true;
                b.failure(rep, "prior", &e);
            }
        }
    }
    b.aggregate("max_prior_z", worst_z);
    b.check(
        "reproduces-prior",
        !failed && worst_z <= p.max_standard_errors,
        format!("largest deviation {worst_z:.2} standard errors against {}", p.max_standard_errors),
    );
    b.check_failures();
    Ok(b)
}
