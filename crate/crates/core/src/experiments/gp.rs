use std::sync::Arc;

use nalgebra::DMatrix;

use crate::experiments::config::{DerivativeParams, KlParams, SamplerParams, SmallBallParams};
use crate::experiments::{Builder, Context};
use crate::grid::{Grid, GridFunction};
use crate::kernels::{mercer_decompose, CovarianceSpec, MultiIndex};
use crate::posterior::PriorModel;
use crate::rkhs::{ball_deviations, rkhs_norm_sq, small_ball_from_deviations};
use crate::sampler::{fit_tail, sample_kl, sample_sups, sup_variance, tail_from_sups, GaussianSampler, KlTruncation, PathSampler};
use crate::stats::CovarianceAccumulator;
use crate::{Error, Result};

/// Largest `|a - b| / sqrt(se_a² + se_b²)` between two estimates.
fn two_sample_z(a: &CovarianceAccumulator, b: &CovarianceAccumulator, dim: usize) -> (f64, f64) {
    let (mut z, mut abs) = (0.0f64, 0.0f64);
    for i in 0..dim {
        for j in i..dim {
            let d = (a.covariance(i, j) - b.covariance(i, j)).abs();
            let se = (a.standard_error(i, j).powi(2) + b.standard_error(i, j).powi(2)).sqrt().max(f64::MIN_POSITIVE);
            z = z.max(d / se);
            abs = abs.max(d);
        }
    }
    (z, abs)
}

pub(super) fn sampler(p: &SamplerParams, ctx: &Context) -> Result<Builder> {
    let grid = Arc::new(Grid::unit_interval(p.grid_points)?);
    let spec = CovarianceSpec::squared_exponential(p.tau, p.lambda, 1)?;
    let sampler = PathSampler::new(&spec, &MultiIndex::zero(1), &GridFunction::zeros(grid.clone()))?;
    let results = ctx.map(ctx.replicates(), |rep| {
        let mut rng = ctx.stream(rep).rng();
        let mut acc = CovarianceAccumulator::new(vec![0.0; grid.len()]);
        for _ in 0..p.draws {
            acc.push(sampler.sample(&mut rng).values());
        }
        acc.compare(|i, j| spec.value(grid.point(i), grid.point(j)))
    });
    let mut b = Builder::new(&["max_standard_errors", "max_abs_deviation", "jitter"]);
    let mut worst = 0.0f64;
    for (rep, c) in results.iter().enumerate() {
        worst = worst.max(c.max_standard_errors);
        b.row(rep, "covariance", &[("max_standard_errors", c.max_standard_errors), ("max_abs_deviation", c.max_abs_deviation), ("jitter", sampler.gaussian().jitter())]);
    }
    b.aggregate("max_standard_errors", worst);
    b.check("covariance-within-se", worst <= p.max_standard_errors, format!("max |z| = {worst:.3} over {} draws", p.draws));
    Ok(b)
}

pub(super) fn kl_truncation(p: &KlParams, ctx: &Context) -> Result<Builder> {
    let grid = Arc::new(Grid::unit_interval(p.grid_points)?);
    let spec = CovarianceSpec::squared_exponential(p.tau, p.lambda, 1)?;
    let eigen = Arc::new(mercer_decompose(&spec, &grid)?);
    let exact = PathSampler::new(&spec, &MultiIndex::zero(1), &GridFunction::zeros(grid.clone()))?;
    let zeros = GridFunction::zeros(grid.clone());
    let prior = PriorModel::new(p.prior.clone())?;
    let n = grid.len();
    let results = ctx.map(ctx.replicates(), |rep| -> Result<_> {
        let mut rng = ctx.stream(rep).rng();
        let mut kl = CovarianceAccumulator::new(vec![0.0; n]);
        let mut ex = CovarianceAccumulator::new(vec![0.0; n]);
        for _ in 0..p.draws {
            let t = KlTruncation::draw(eigen.clone(), eigen.len(), &mut rng)?;
            kl.push(sample_kl(&t, &zeros)?.values());
            ex.push(exact.sample(&mut rng).values());
        }
        let vs_truth = kl.compare(|i, j| spec.value(grid.point(i), grid.point(j)));
        let vs_exact = two_sample_z(&kl, &ex, n);
        let mut errors = Vec::new();
        for &level in &p.levels {
            errors.push((level, crate::sampler::truncation_error(&eigen, level, p.error_draws, &mut rng)?));
        }
        let gate = prior.truncation_gate(p.gate_draws, p.gate_threshold, &mut rng)?;
        Ok((vs_truth, vs_exact, errors, gate))
    });
    let mut b = Builder::new(&["level", "estimate", "standard_error", "threshold", "max_standard_errors", "max_abs_deviation", "lambda"]);
    let (mut cov_ok, mut mono_ok, mut gate_ok) = (true, true, true);
    let (mut worst, mut gate_detail, mut mono_detail) = (0.0f64, String::new(), String::from("nonincreasing within 2 SE"));
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok((truth, (z, abs), errors, gate)) => {
                b.row(rep, "kl-vs-kernel", &[("max_standard_errors", truth.max_standard_errors), ("max_abs_deviation", truth.max_abs_deviation)]);
                b.row(rep, "kl-vs-exact", &[("max_standard_errors", z), ("max_abs_deviation", abs)]);
                worst = worst.max(truth.max_standard_errors).max(z);
                cov_ok &= truth.max_standard_errors <= p.max_standard_errors && z <= p.max_standard_errors;
                for (level, e) in &errors {
                    b.row(rep, format!("level={level}"), &[("level", *level as f64), ("estimate", e.estimate), ("standard_error", e.standard_error)]);
                }
                for w in errors.windows(2) {
                    let (a, c) = (&w[0].1, &w[1].1);
                    let slack = 2.0 * (a.standard_error.powi(2) + c.standard_error.powi(2)).sqrt();
                    if c.estimate > a.estimate + slack {
                        mono_ok = false;
                        mono_detail = format!("level {} exceeds level {} by more than 2 SE", w[1].0, w[0].0);
                    }
                }
                b.row(rep, "gate", &[
                    ("level", gate.level as f64),
                    ("estimate", gate.error.estimate),
                    ("standard_error", gate.error.standard_error),
                    ("threshold", gate.threshold),
                    ("lambda", gate.lambda),
                ]);
                gate_ok &= gate.passed;
                gate_detail = format!(
                    "level {} at lambda {:.2}: {:.2e} + 2 SE vs {:.2e}",
                    gate.level, gate.lambda, gate.error.estimate, gate.threshold
                );
            }
            Err(e) => b.failure(rep, "replicate", &e),
        }
    }
    b.aggregate("max_standard_errors", worst);
    b.check_failures();
    b.check("full-rank-kl-covariance", cov_ok, format!("max |z| = {worst:.3}"));
    b.check("truncation-error-monotone", mono_ok, mono_detail);
    b.check("truncation-gate", gate_ok, gate_detail);
    Ok(b)
}

/// Joint covariance of `(D η(x_i), η(x_i - h), η(x_i + h))` for a
/// one-dimensional process.
fn finite_difference_covariance(spec: &CovarianceSpec, xs: &[f64], h: f64) -> DMatrix<f64> {
    let n = xs.len();
    let w = MultiIndex::unit(1, 0);
    let at = |k: usize| -> (bool, f64) {
        match k / n {
            0 => (true, xs[k % n]),
            1 => (false, xs[k % n] - h),
            _ => (false, xs[k % n] + h),
        }
    };
    let cross = |d: f64, y: f64| -> f64 {
        // Cov(Dη(d), η(y)) = ∂_d σ(d, y)
        let u = [spec.lambda * d];
        let v = [spec.lambda * y];
        spec.lambda / spec.tau * spec.family.base_partial(&w, &u, &v).expect("first order is available")
    };
    DMatrix::from_fn(3 * n, 3 * n, |a, c| {
        let (da, xa) = at(a);
        let (dc, xc) = at(c);
        match (da, dc) {
            (true, true) => spec.derivative_value(&w, &[xa], &[xc]),
            (false, false) => spec.value(&[xa], &[xc]),
            (true, false) => cross(xa, xc),
            (false, true) => cross(xc, xa),
        }
    })
}

pub(super) fn derivative_tails(p: &DerivativeParams, ctx: &Context) -> Result<Builder> {
    let grid = Arc::new(Grid::unit_interval(p.grid_points)?);
    let spec = CovarianceSpec::squared_exponential(p.tau, p.lambda, 1)?;
    let w = MultiIndex::unit(1, 0);
    let n = grid.len();
    let deriv = PathSampler::new(&spec, &w, &GridFunction::zeros(grid.clone()))?;
    let xs = grid.axis();
    let joint = GaussianSampler::new(vec![0.0; 3 * n], finite_difference_covariance(&spec, &xs, p.fd_step))?;
    let tail_grid = Arc::new(Grid::unit_interval(p.tail_grid_points)?);
    let mut tail_samplers = Vec::new();
    for &order in &p.tail_orders {
        let wo = MultiIndex::new(vec![order]);
        let sigma = sup_variance(&spec, &wo, &tail_grid)?.sqrt();
        tail_samplers.push((order, sigma, PathSampler::new(&spec, &wo, &GridFunction::zeros(tail_grid.clone()))?));
    }
    let truth = |i: usize, j: usize| spec.derivative_value(&w, grid.point(i), grid.point(j));

    let results = ctx.map(ctx.replicates(), |rep| {
        let mut rng = ctx.stream(rep).rng();
        let mut direct = CovarianceAccumulator::new(vec![0.0; n]);
        for _ in 0..p.draws {
            direct.push(deriv.sample(&mut rng).values());
        }
        let direct_cmp = direct.compare(truth);
        let mut joint_d = CovarianceAccumulator::new(vec![0.0; n]);
        let mut joint_fd = CovarianceAccumulator::new(vec![0.0; n]);
        let mut fd = vec![0.0; n];
        for _ in 0..p.draws {
            let v = joint.draw(&mut rng);
            for i in 0..n {
                fd[i] = (v[2 * n + i] - v[n + i]) / (2.0 * p.fd_step);
            }
            joint_d.push(&v[..n]);
            joint_fd.push(&fd);
        }
        let fd_cmp = joint_fd.compare(truth);
        let pathwise = (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .map(|(i, j)| (joint_fd.covariance(i, j) - joint_d.covariance(i, j)).abs())
            .fold(0.0, f64::max);
        let tails: Vec<_> = tail_samplers
            .iter()
            .map(|(order, sigma, s)| {
                let sups = sample_sups(s.gaussian(), p.tail_draws, &mut rng);
                let thresholds: Vec<f64> = p.tail_thresholds.iter().map(|f| f * sigma).collect();
                let curve = tail_from_sups(&sups, &thresholds);
                let fit = fit_tail(&curve, p.tail_fit_from * sigma, p.tail_min_hits);
                (*order, *sigma, curve, fit)
            })
            .collect();
        (direct_cmp, fd_cmp, pathwise, tails)
    });

    let mut b = Builder::new(&[
        "order",
        "sigma",
        "threshold",
        "frequency",
        "hits",
        "r_squared",
        "c2",
        "max_standard_errors",
        "max_abs_deviation",
        "jitter",
    ]);
    let (mut cov_ok, mut fd_ok, mut tail_ok) = (true, true, true);
    let (mut cov_detail, mut fd_detail, mut tail_detail) = (String::new(), String::new(), Vec::new());
    for (rep, (direct, fd, pathwise, tails)) in results.into_iter().enumerate() {
        b.row(rep, "derivative", &[("max_standard_errors", direct.max_standard_errors), ("max_abs_deviation", direct.max_abs_deviation)]);
        b.row(rep, "finite-difference", &[
            ("max_standard_errors", fd.max_standard_errors),
            ("max_abs_deviation", pathwise),
            ("jitter", joint.jitter()),
        ]);
        cov_ok &= direct.max_standard_errors <= p.max_standard_errors;
        fd_ok &= pathwise <= p.fd_tolerance && fd.max_standard_errors <= p.max_standard_errors;
        cov_detail = format!("max |z| = {:.3}", direct.max_standard_errors);
        fd_detail = format!("difference quotients vs derivative draws: {pathwise:.2e}; vs closed form: max |z| = {:.3}", fd.max_standard_errors);
        for (order, sigma, curve, fit) in tails {
            for t in &curve {
                b.row(rep, format!("tail w={order}"), &[
                    ("order", order as f64),
                    ("sigma", sigma),
                    ("threshold", t.threshold),
                    ("frequency", t.frequency),
                    ("hits", t.hits as f64),
                ]);
            }
            let used: Vec<_> = curve.iter().filter(|t| t.threshold >= p.tail_fit_from * sigma && t.hits >= p.tail_min_hits).collect();
            let decreasing = used.windows(2).all(|w| w[1].frequency < w[0].frequency);
            match fit {
                Some(f) => {
                    b.row(rep, format!("tail-fit w={order}"), &[("order", order as f64), ("sigma", sigma), ("r_squared", f.r_squared), ("c2", f.c2)]);
                    let ok = decreasing && f.c2 > 0.0 && f.r_squared > p.tail_min_r_squared;
                    tail_ok &= ok;
                    tail_detail.push(format!("w={order}: R² {:.4}, {} points", f.r_squared, f.points_used));
                }
                None => {
                    tail_ok = false;
                    tail_detail.push(format!("w={order}: fewer than 3 usable thresholds"));
                }
            }
        }
    }
    b.check("derivative-covariance", cov_ok, cov_detail);
    b.check("finite-difference-covariance", fd_ok, fd_detail);
    b.check("tail-shape", tail_ok, tail_detail.join("; "));
    Ok(b)
}

pub(super) fn small_ball(p: &SmallBallParams, ctx: &Context) -> Result<Builder> {
    let grid = Arc::new(Grid::unit_interval(p.grid_points)?);
    let spec = CovarianceSpec::squared_exponential(p.tau, p.lambda, 1)?;
    let scale = spec.max_variance().sqrt();
    let radii: Vec<f64> = p.radius_factors.iter().map(|f| f * scale).collect();
    let targets = p.targets.iter().map(|t| t.eta()).collect::<Result<Vec<_>>>()?;
    if targets.iter().any(|t| (t.lambda - p.lambda).abs() > 1e-12) {
        return Err(Error::Config("small-ball targets must share the prior's lambda".into()));
    }
    let results = ctx.map(ctx.replicates() * targets.len(), |job| -> Result<_> {
        let (rep, k) = (job / targets.len(), job % targets.len());
        let mut rng = ctx.stream(rep).child(&format!("target={k}")).rng();
        let dev = ball_deviations(&spec, &targets[k], &grid, p.draws, &mut rng)?;
        Ok(small_ball_from_deviations(&dev, &radii))
    });
    let mut b = Builder::new(&["target", "rkhs_norm_sq", "radius", "hits", "estimate", "lower", "upper"]);
    let mut min_hits = usize::MAX;
    for (job, r) in results.into_iter().enumerate() {
        let (rep, k) = (job / targets.len(), job % targets.len());
        match r {
            Ok(est) => {
                let norm = rkhs_norm_sq(&targets[k]).unwrap_or(f64::NAN);
                for e in est {
                    min_hits = min_hits.min(e.hits);
                    b.row(rep, format!("target={k}"), &[
                        ("target", k as f64),
                        ("rkhs_norm_sq", norm),
                        ("radius", e.eps),
                        ("hits", e.hits as f64),
                        ("estimate", e.estimate),
                        ("lower", e.interval.0),
                        ("upper", e.interval.1),
                    ]);
                }
            }
            Err(e) => b.failure(rep, format!("target={k}"), &e),
        }
    }
    b.check_failures();
    b.aggregate("min_hits", min_hits as f64);
    b.check("small-ball-positive", min_hits >= p.min_hits && min_hits != usize::MAX, format!("fewest hits {min_hits} of {} draws", p.draws));
    Ok(b)
}
