use std::f64::consts::{E, TAU};

use rand::Rng;

use crate::bernstein::{self as bern, bernstein_error, fit_constant, separation_instance, spacing_audit, BernsteinError, DesignSpacing, SeparationSchedule};
use crate::experiments::config::{BernsteinParams, SpacingParams};
use crate::experiments::{Builder, Context};
use crate::stats::{mean, variance};
use crate::{Error, Result};

type TestFunction = (&'static str, fn(f64) -> f64, f64);

const TEST_FUNCTIONS: [TestFunction; 3] = [
    ("t^2", |t| t * t, 2.0),
    ("sin(2 pi t)", |t| (TAU * t).sin(), TAU * TAU),
    ("exp(t)", f64::exp, E),
];

pub(super) fn bernstein(p: &BernsteinParams, ctx: &Context) -> Result<Builder> {
    let mut b = Builder::new(&[
        "k",
        "value",
        "reference",
        "sup_error",
        "fitted_a",
        "ratio",
        "attempts",
        "l1",
        "sparse_mass",
        "intervals",
        "b_p_length",
        "approx_error",
        "covered_points",
        "separated",
        "bound",
        "violation",
    ]);

    // exact reproduction of constants and the closed form for t ↦ t
    let mut const_err = 0.0f64;
    for k in [1, 2, 7, 50, 400] {
        for c in [0.37, -2.5] {
            for i in 0..=10 {
                let x = i as f64 / 10.0;
                const_err = const_err.max((bern::bernstein(|_| c, k, x) - c).abs());
            }
        }
    }
    b.row(0, "constants", &[("sup_error", const_err)]);
    b.check("reproduces-constants", const_err <= 1e-12, format!("max error {const_err:.1e}"));
    let mut id_err = 0.0f64;
    for i in 0..=20 {
        let x = i as f64 / 20.0;
        let v = bern::bernstein(|t| t, 10, x);
        let r = x + (1.0 - 2.0 * x) / 20.0;
        id_err = id_err.max((v - r).abs());
        b.row(0, "identity k=10", &[("k", 10.0), ("value", v), ("reference", r)]);
    }
    b.check("identity-closed-form", id_err <= 1e-10, format!("max error {id_err:.1e}"));

    // error rate and the fitted constant
    let mut ratio_ok = true;
    let mut cv_ok = true;
    let mut held_ok = true;
    let mut details = Vec::new();
    let mut orders: Vec<usize> = p.orders.iter().chain(&p.ratio_orders).chain(&p.train_orders).chain(&p.held_out_orders).copied().collect();
    orders.sort_unstable();
    orders.dedup();
    for (name, h, h2) in TEST_FUNCTIONS {
        let errs: Vec<BernsteinError> = orders.iter().map(|&k| bernstein_error(h, h2, k, p.eval_points)).collect();
        let at = |k: usize| errs.iter().find(|e| e.k == k).expect("order evaluated");
        for e in &errs {
            b.row(0, format!("error {name}"), &[("k", e.k as f64), ("sup_error", e.sup_error), ("fitted_a", e.fitted_a.unwrap_or(f64::NAN))]);
        }
        let mut chains = vec![p.ratio_orders.clone()];
        if name == "t^2" {
            chains.push(vec![10, 20, 40]);
        }
        let mut worst = (f64::INFINITY, f64::NEG_INFINITY);
        for chain in chains {
            for w in chain.windows(2) {
                let r = at(w[1]).sup_error / at(w[0]).sup_error;
                b.row(0, format!("ratio {name}"), &[("k", w[1] as f64), ("ratio", r)]);
                ratio_ok &= (p.ratio_band.0..=p.ratio_band.1).contains(&r);
                worst = (worst.0.min(r), worst.1.max(r));
            }
        }
        let a_values: Vec<f64> = p.orders.iter().filter_map(|&k| at(k).fitted_a).collect();
        let cv = variance(&a_values).sqrt() / mean(&a_values);
        cv_ok &= cv < p.max_cv;
        let train: Vec<BernsteinError> = p.train_orders.iter().map(|&k| *at(k)).collect();
        let a = fit_constant(&train).unwrap_or(f64::NAN);
        let held = p.held_out_orders.iter().all(|&k| at(k).sup_error <= a * h2 / k as f64);
        held_ok &= held;
        details.push(format!("{name}: ratios [{:.3}, {:.3}], A cv {cv:.3}, A {a:.4}", worst.0, worst.1));
    }
    b.check("error-halves-per-doubling", ratio_ok, details.join("; "));
    b.check("fitted-constant-stable", cv_ok, format!("coefficient of variation below {}", p.max_cv));
    b.check("held-out-error-bound", held_ok, "held-out orders obey the bound with A fitted on training orders");

    // separated-point counts on random instances
    let schedule = SeparationSchedule::new(p.n, p.eps, p.k1);
    let results = ctx.map(ctx.replicates(), |rep| -> Result<_> {
        let mut rng = ctx.stream(rep).rng();
        for attempt in 1..=p.max_attempts {
            let inst = separation_instance(&schedule, &mut rng)?;
            let c = inst.check(&schedule);
            if c.premise {
                return Ok((attempt, c));
            }
        }
        Err(Error::Infeasible(format!("no instance met the premise in {} attempts", p.max_attempts)))
    });
    let mut violations = 0usize;
    let mut chain_ok = true;
    let mut min_sep = usize::MAX;
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok((attempts, c)) => {
                violations += usize::from(c.violation);
                min_sep = min_sep.min(c.separated);
                chain_ok &= c.intervals <= schedule.k_n && c.approx_error <= schedule.eps / 2.0 && c.unseparated_in_b_p == 0;
                b.row(rep, "pipeline", &[
                    ("k", schedule.k_n as f64),
                    ("attempts", attempts as f64),
                    ("l1", c.l1),
                    ("sparse_mass", c.sparse_mass),
                    ("intervals", c.intervals as f64),
                    ("b_p_length", c.b_p_length),
                    ("approx_error", c.approx_error),
                    ("covered_points", c.covered_points as f64),
                    ("separated", c.separated as f64),
                    ("bound", c.bound),
                    ("violation", f64::from(u8::from(c.violation))),
                ]);
            }
            Err(e) => b.failure(rep, "pipeline", &e),
        }
    }
    b.aggregate("pipeline_violations", violations as f64);
    b.aggregate("k_n", schedule.k_n as f64);
    b.aggregate("operator_constant", schedule.a);
    b.check_failures();
    b.check(
        "separated-point-count",
        violations == 0,
        format!(
            "{violations} violations over {} instances (n={}, ε={}, K₁={}, k_n={}); fewest separated {min_sep} vs bound {:.1}",
            ctx.replicates(),
            p.n,
            p.eps,
            p.k1,
            schedule.k_n,
            schedule.count_bound()
        ),
    );
    b.check("approximation-chain", chain_ok, "interval counts ≤ k_n, operator error ≤ ε/2, and every design point in B_p separated");
    Ok(b)
}

pub(super) fn spacing(p: &SpacingParams, ctx: &Context) -> Result<Builder> {
    let mut b = Builder::new(&["n", "k1", "delta", "sparse_mass", "satisfied"]);
    let grid = DesignSpacing::new((1..=p.n).map(|i| i as f64 / p.n as f64).collect())?;
    let g = spacing_audit(&grid, 1.0, 0.0, &[]);
    b.row(0, "grid", &[("n", p.n as f64), ("k1", 1.0), ("delta", 0.0), ("sparse_mass", g.sparse_mass), ("satisfied", f64::from(u8::from(g.satisfied)))]);
    b.check("grid-has-no-sparse-mass", g.sparse_mass == 0.0 && g.satisfied, format!("sparse mass {}", g.sparse_mass));

    let half = p.n / 2;
    let mut pts: Vec<f64> = (0..half).map(|i| 0.3 * i as f64 / (half - 1) as f64).collect();
    pts.extend((0..p.n - half).map(|i| 0.6 + 0.4 * i as f64 / (p.n - half - 1) as f64));
    let gap = spacing_audit(&DesignSpacing::new(pts)?, 2.0, 0.1, &[]);
    b.row(0, "gap", &[("n", p.n as f64), ("k1", 2.0), ("delta", 0.1), ("sparse_mass", gap.sparse_mass), ("satisfied", f64::from(u8::from(gap.satisfied)))]);
    b.check("wide-gap-detected", gap.sparse_mass >= 0.3 - 1e-12 && !gap.satisfied, format!("sparse mass {:.4}", gap.sparse_mass));

    let results = ctx.map(ctx.replicates(), |rep| -> Result<_> {
        let mut rng = ctx.stream(rep).rng();
        let d = DesignSpacing::from_unsorted((0..p.n).map(|_| rng.random::<f64>()).collect())?;
        Ok(spacing_audit(&d, p.k1, p.delta, &[]))
    });
    let mut passed = 0usize;
    let mut total = 0usize;
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(a) => {
                total += 1;
                passed += usize::from(a.satisfied);
                b.row(rep, "uniform", &[("n", p.n as f64), ("k1", p.k1), ("delta", p.delta), ("sparse_mass", a.sparse_mass), ("satisfied", f64::from(u8::from(a.satisfied)))]);
            }
            Err(e) => b.failure(rep, "uniform", &e),
        }
    }
    let rate = passed as f64 / total.max(1) as f64;
    b.aggregate("pass_rate", rate);
    b.check_failures();
    b.check("random-designs-pass", rate >= p.min_pass_rate, format!("{passed} of {total} uniform designs satisfy the audit"));
    Ok(b)
}
