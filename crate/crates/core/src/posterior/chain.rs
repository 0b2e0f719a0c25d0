use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::{Dataset, LinkFunction, PROB_CLAMP};
use crate::posterior::prior::PriorModel;
use crate::posterior::summary::PosteriorDraw;
use crate::stats::{effective_sample_size, mean, split_rhat};
use crate::{Error, Result};

/// Update used for the Karhunen–Loève coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum XiSampler {
    #[default]
    EllipticalSlice,
    /// Preconditioned Crank–Nicolson random walk.
    PreconditionedWalk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    /// Total iterations including burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub xi_sampler: XiSampler,
    /// Initial log-scale step for `τ` moves.
    pub tau_step: f64,
    /// Largest rung jump in a `λ` proposal.
    pub lambda_jump: usize,
    /// Initial pCN step `β` when that sampler is selected.
    pub pcn_step: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 4000,
            burn_in: 2000,
            thin: 2,
            xi_sampler: XiSampler::EllipticalSlice,
            tau_step: 0.5,
            lambda_jump: 2,
            pcn_step: 0.2,
        }
    }
}

/// Acceptance rates per block.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub xi: f64,
    /// Mean likelihood evaluations per slice-sampling step.
    pub xi_evaluations: f64,
    pub tau: f64,
    pub tau_rescale: f64,
    pub lambda: f64,
    /// `λ` proposals rejected because the basis could not be built.
    pub lambda_failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarDiagnostic {
    pub name: String,
    pub mean: f64,
    pub ess: f64,
    pub rhat: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub acceptance: BlockAcceptance,
    pub scalars: Vec<ScalarDiagnostic>,
}

impl ChainDiagnostics {
    pub fn scalar(&self, name: &str) -> Option<&ScalarDiagnostic> {
        self.scalars.iter().find(|s| s.name == name)
    }
}

#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub draws: Vec<PosteriorDraw>,
    /// Log-likelihood of each kept draw.
    pub log_likelihood: Vec<f64>,
    pub diagnostics: ChainDiagnostics,
}

struct Counter {
    accepted: usize,
    proposed: usize,
}

impl Counter {
    fn new() -> Self {
        Self { accepted: 0, proposed: 0 }
    }

    fn record(&mut self, ok: bool) {
        self.proposed += 1;
        self.accepted += usize::from(ok);
    }

    fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Robbins–Monro tuning of a log step size toward a target acceptance rate.
struct Adapter {
    log_step: f64,
    target: f64,
    t: usize,
}

impl Adapter {
    fn new(step: f64, target: f64) -> Self {
        Self { log_step: step.ln(), target, t: 0 }
    }

    fn step(&self) -> f64 {
        self.log_step.exp()
    }

    fn update(&mut self, accepted: bool) {
        self.t += 1;
        let gain = (1.0 / (self.t as f64).sqrt()).min(0.5);
        self.log_step += gain * (f64::from(u8::from(accepted)) - self.target);
        self.log_step = self.log_step.clamp(-12.0, 3.0);
    }
}

struct Likelihood<'a> {
    link: LinkFunction,
    responses: &'a [bool],
    mean: Vec<f64>,
}

impl Likelihood<'_> {
    /// Log-likelihood of `η = μ + s f`.
    fn eval(&self, f: &[f64], s: f64) -> f64 {
        let lo = PROB_CLAMP.ln();
        let hi = (-PROB_CLAMP).ln_1p();
        self.responses
            .iter()
            .zip(f.iter().zip(&self.mean))
            .map(|(&y, (fi, mi))| {
                let u = mi + s * fi;
                let (lp, lq) = self.link.log_probabilities(u);
                (if y { lp } else { lq }).clamp(lo, hi)
            })
            .sum()
    }
}

fn apply(basis: &DMatrix<f64>, xi: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..basis.nrows()).map(|i| (0..xi.len()).map(|k| basis[(i, k)] * xi[k]).sum::<f64>()));
}

/// Run one Markov chain targeting the posterior given `data`.
///
/// Each iteration updates `ξ` (elliptical slice or pCN), then `τ` twice (a
/// log-scale random walk with `ξ` held fixed, and a move that rescales `ξ`
/// so that `η` is unchanged), then the `λ` rung by a symmetric random walk.
/// Step sizes adapt during burn-in only.
pub fn run_chain<R: Rng + ?Sized>(model: &PriorModel, data: &Dataset, config: &ChainConfig, rng: &mut R) -> Result<ChainOutput> {
    if config.iterations <= config.burn_in {
        return Err(Error::InvalidParameter(format!(
            "iterations ({}) must exceed burn-in ({})",
            config.iterations, config.burn_in
        )));
    }
    if config.thin == 0 {
        return Err(Error::InvalidParameter("thin must be positive".into()));
    }
    if !data.is_empty() && data.dim() != model.spec().dim {
        return Err(Error::Misaligned("data and prior differ in dimension".into()));
    }
    let spec = model.spec();
    let n_coef = spec.truncation;
    let lik = Likelihood { link: spec.link, responses: data.responses(), mean: model.mean_at(data.covariates()) };
    let n_rungs = model.rungs().len();
    let mut data_basis: Vec<Option<Arc<DMatrix<f64>>>> = vec![None; n_rungs];
    let mut basis_for = |rung: usize| -> Result<Arc<DMatrix<f64>>> {
        if let Some(b) = &data_basis[rung] {
            return Ok(b.clone());
        }
        let b = Arc::new(model.basis_at(rung, data.covariates())?);
        data_basis[rung] = Some(b.clone());
        Ok(b)
    };

    // initial state from the prior, retrying rungs whose basis fails
    let mut tau = spec.tau.sample(rng);
    let mut rung = model.sample_rung(rng);
    let mut basis = loop {
        match basis_for(rung) {
            Ok(b) => break b,
            Err(_) if n_rungs > 1 => rung = rng.random_range(0..n_rungs),
            Err(e) => return Err(e),
        }
    };
    let mut xi: Vec<f64> = (0..n_coef).map(|_| StandardNormal.sample(rng)).collect();
    let mut f = Vec::new();
    apply(&basis, &xi, &mut f);
    let mut ll = lik.eval(&f, tau.sqrt().recip());

    let mut xi_count = Counter::new();
    let mut xi_evals = 0usize;
    let mut tau_count = Counter::new();
    let mut rescale_count = Counter::new();
    let mut lambda_count = Counter::new();
    let mut lambda_failures = 0usize;
    let mut tau_adapt = Adapter::new(config.tau_step, 0.44);
    let mut rescale_adapt = Adapter::new(config.tau_step, 0.44);
    let mut pcn_adapt = Adapter::new(config.pcn_step.clamp(1e-6, 1.0), 0.25);

    let mut draws = Vec::new();
    let mut kept_ll = Vec::new();
    let mut nu = vec![0.0; n_coef];
    let mut g = Vec::new();
    let mut prop_f = Vec::new();

    for it in 0..config.iterations {
        let burning = it < config.burn_in;
        let s = tau.sqrt().recip();

        // ξ block
        for v in nu.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        apply(&basis, &nu, &mut g);
        match config.xi_sampler {
            XiSampler::EllipticalSlice => {
                let log_y = ll + rng.random::<f64>().ln();
                let mut theta = rng.random::<f64>() * std::f64::consts::TAU;
                let (mut lo, mut hi) = (theta - std::f64::consts::TAU, theta);
                loop {
                    let (c, sn) = (theta.cos(), theta.sin());
                    prop_f.clear();
                    prop_f.extend(f.iter().zip(&g).map(|(a, b)| a * c + b * sn));
                    let cand = lik.eval(&prop_f, s);
                    xi_evals += 1;
                    if cand > log_y {
                        for k in 0..n_coef {
                            xi[k] = xi[k] * c + nu[k] * sn;
                        }
                        std::mem::swap(&mut f, &mut prop_f);
                        ll = cand;
                        break;
                    }
                    if theta < 0.0 {
                        lo = theta;
                    } else {
                        hi = theta;
                    }
                    if hi - lo < 1e-12 {
                        // numerically degenerate bracket; keep the state
                        break;
                    }
                    theta = lo + rng.random::<f64>() * (hi - lo);
                }
                xi_count.record(true);
            }
            XiSampler::PreconditionedWalk => {
                let beta = pcn_adapt.step().min(1.0);
                let a = (1.0 - beta * beta).sqrt();
                prop_f.clear();
                prop_f.extend(f.iter().zip(&g).map(|(x, y)| a * x + beta * y));
                let cand = lik.eval(&prop_f, s);
                xi_evals += 1;
                let ok = rng.random::<f64>().ln() < cand - ll;
                if ok {
                    for k in 0..n_coef {
                        xi[k] = a * xi[k] + beta * nu[k];
                    }
                    std::mem::swap(&mut f, &mut prop_f);
                    ll = cand;
                }
                xi_count.record(ok);
                if burning {
                    pcn_adapt.update(ok);
                }
            }
        }

        // τ blocks
        if !spec.tau.is_fixed() {
            let z: f64 = StandardNormal.sample(rng);
            let cand_tau = tau * (tau_adapt.step() * z).exp();
            let cand = lik.eval(&f, cand_tau.sqrt().recip());
            let log_a = cand - ll + spec.tau.log_density_log_scale(cand_tau) - spec.tau.log_density_log_scale(tau);
            let ok = rng.random::<f64>().ln() < log_a;
            if ok {
                tau = cand_tau;
                ll = cand;
            }
            tau_count.record(ok);
            if burning {
                tau_adapt.update(ok);
            }

            let z: f64 = StandardNormal.sample(rng);
            let du = rescale_adapt.step() * z;
            let scale = (0.5 * du).exp();
            let norm_sq: f64 = xi.iter().map(|v| v * v).sum();
            let cand_tau = tau * du.exp();
            let log_a = -0.5 * norm_sq * (scale * scale - 1.0) + spec.tau.log_density_log_scale(cand_tau)
                - spec.tau.log_density_log_scale(tau)
                + 0.5 * n_coef as f64 * du;
            let ok = rng.random::<f64>().ln() < log_a;
            if ok {
                tau = cand_tau;
                xi.iter_mut().for_each(|v| *v *= scale);
                f.iter_mut().for_each(|v| *v *= scale);
            }
            rescale_count.record(ok);
            if burning {
                rescale_adapt.update(ok);
            }
        }

        // λ block
        if n_rungs > 1 {
            let jump = rng.random_range(1..=config.lambda_jump.max(1)) as isize;
            let dir = if rng.random::<bool>() { jump } else { -jump };
            let target = rung as isize + dir;
            let mut ok = false;
            if (0..n_rungs as isize).contains(&target) {
                let target = target as usize;
                match basis_for(target) {
                    Ok(cand_basis) => {
                        apply(&cand_basis, &xi, &mut prop_f);
                        let cand = lik.eval(&prop_f, tau.sqrt().recip());
                        let lm = model.rung_log_mass();
                        let log_a = cand - ll + lm[target] - lm[rung];
                        if rng.random::<f64>().ln() < log_a {
                            ok = true;
                            rung = target;
                            basis = cand_basis;
                            std::mem::swap(&mut f, &mut prop_f);
                            ll = cand;
                        }
                    }
                    Err(_) => lambda_failures += 1,
                }
            }
            lambda_count.record(ok);
        }

        if !burning && (it - config.burn_in) % config.thin == 0 {
            draws.push(model.draw(xi.clone(), tau, rung)?);
            kept_ll.push(ll);
        }
    }

    let acceptance = BlockAcceptance {
        xi: xi_count.rate(),
        xi_evaluations: xi_evals as f64 / config.iterations as f64,
        tau: tau_count.rate(),
        tau_rescale: rescale_count.rate(),
        lambda: lambda_count.rate(),
        lambda_failures,
    };
    let diagnostics = ChainDiagnostics { acceptance, scalars: scalar_diagnostics(&draws, &kept_ll) };
    Ok(ChainOutput { draws, log_likelihood: kept_ll, diagnostics })
}

fn scalar_diagnostics(draws: &[PosteriorDraw], ll: &[f64]) -> Vec<ScalarDiagnostic> {
    let traces: [(&str, Vec<f64>); 5] = [
        ("tau", draws.iter().map(|d| d.tau).collect()),
        ("lambda", draws.iter().map(|d| d.lambda).collect()),
        ("xi1", draws.iter().map(|d| d.xi[0]).collect()),
        ("mean_p", draws.iter().map(|d| mean(d.p.values())).collect()),
        ("log_likelihood", ll.to_vec()),
    ];
    traces
        .into_iter()
        .map(|(name, x)| ScalarDiagnostic {
            name: name.to_string(),
            mean: mean(&x),
            ess: effective_sample_size(&x),
            rhat: split_rhat(&x),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PointSet;
    use crate::model::{simulate, DesignSpec, TrueResponse};
    use crate::posterior::prior::{LambdaPrior, PriorSpec, TauPrior};
    use crate::rkhs::RkhsElement;
    use crate::rng::StreamSeed;

    fn small_prior() -> PriorSpec {
        PriorSpec { grid_points: 48, truncation: 12, ladder: crate::posterior::LadderSpec { lo: 0.05, hi: 4.0, rungs: 16 }, ..PriorSpec::default() }
    }

    #[test]
    fn rejects_bad_iteration_counts() {
        let model = PriorModel::new(small_prior()).unwrap();
        let cfg = ChainConfig { iterations: 10, burn_in: 10, ..ChainConfig::default() };
        let mut rng = StreamSeed::root(1).rng();
        assert!(run_chain(&model, &Dataset::empty(1), &cfg, &mut rng).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let model = PriorModel::new(small_prior()).unwrap();
        let mut rng = StreamSeed::root(2).rng();
        let data = simulate(&TrueResponse::Constant(0.7), &DesignSpec::UniformGrid, 1, 30, &mut rng).unwrap();
        let cfg = ChainConfig { iterations: 300, burn_in: 100, ..ChainConfig::default() };
        let a = run_chain(&model, &data, &cfg, &mut StreamSeed::root(3).rng()).unwrap();
        let b = run_chain(&model, &data, &cfg, &mut StreamSeed::root(3).rng()).unwrap();
        assert_eq!(a.log_likelihood, b.log_likelihood);
        assert_eq!(a.draws.len(), 100);
        assert_eq!(a.diagnostics.scalars.len(), 5);
    }

    #[test]
    fn huge_tau_pins_posterior_to_prior_mean() {
        let mean = RkhsElement::se_1d(1.0, &[0.5], &[0.8]).unwrap();
        let spec = PriorSpec { mean: Some(mean.clone()), tau: TauPrior::Fixed { value: 1e10 }, ..small_prior() };
        let model = PriorModel::new(spec).unwrap();
        let mut rng = StreamSeed::root(4).rng();
        let data = simulate(&TrueResponse::Constant(0.05), &DesignSpec::UniformGrid, 1, 200, &mut rng).unwrap();
        let out = run_chain(&model, &data, &ChainConfig { iterations: 400, burn_in: 100, ..ChainConfig::default() }, &mut rng).unwrap();
        let x = PointSet::from_scalars(&[0.3]).unwrap();
        let want = LinkFunction::Logistic.forward(mean.evaluate(&[0.3]));
        let probs = model.probabilities_at(&out.draws, &x).unwrap();
        let got = probs.iter().map(|p| p[0]).sum::<f64>() / probs.len() as f64;
        assert!((got - want).abs() < 1e-3, "{got} {want}");
    }

    #[test]
    fn data_moves_the_posterior() {
        let model = PriorModel::new(small_prior()).unwrap();
        let mut rng = StreamSeed::root(5).rng();
        let data = simulate(&TrueResponse::Constant(0.85), &DesignSpec::UniformGrid, 1, 400, &mut rng).unwrap();
        let out = run_chain(&model, &data, &ChainConfig::default(), &mut rng).unwrap();
        let mp = out.diagnostics.scalar("mean_p").unwrap().mean;
        assert!((mp - 0.85).abs() < 0.05, "{mp}");
        for sampler in [XiSampler::PreconditionedWalk] {
            let cfg = ChainConfig { xi_sampler: sampler, iterations: 6000, burn_in: 3000, ..ChainConfig::default() };
            let out = run_chain(&model, &data, &cfg, &mut rng).unwrap();
            let mp = out.diagnostics.scalar("mean_p").unwrap().mean;
            assert!((mp - 0.85).abs() < 0.05, "{mp}");
            let acc = out.diagnostics.acceptance.xi;
            assert!(acc > 0.05 && acc < 0.8, "{acc}");
        }
    }

    #[test]
    fn fixed_lambda_uses_single_rung() {
        let spec = PriorSpec { lambda: LambdaPrior::Fixed { value: 1.3 }, ..small_prior() };
        let model = PriorModel::new(spec).unwrap();
        let out = run_chain(&model, &Dataset::empty(1), &ChainConfig { iterations: 50, burn_in: 0, thin: 1, ..ChainConfig::default() }, &mut StreamSeed::root(6).rng()).unwrap();
        assert!(out.draws.iter().all(|d| d.lambda == 1.3));
        assert!(out.diagnostics.acceptance.lambda.is_nan());
    }
}
