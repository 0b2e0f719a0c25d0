use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::bernstein::intervals::{intervals_of, total_length};
use crate::bernstein::operator::{bernstein_error, fit_constant, BernsteinOperator};
use crate::bernstein::spacing::{spacing_audit, DesignSpacing};
use crate::sieve::count_separated;
use crate::Result;

/// Concrete constants for the separated-point count on a one-dimensional design.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationSchedule {
    pub n: usize,
    pub eps: f64,
    pub k1: f64,
    /// Bernstein order, `⌊γ' n⌋` with `γ' = 0.99 ε / (8 K₁)`.
    pub k_n: usize,
    /// Operator constant, fitted on closed-form test functions.
    pub a: f64,
    /// Curvature budget with `A M / k_n ≤ ε / 2`.
    pub curvature: f64,
}

impl SeparationSchedule {
    pub fn new(n: usize, eps: f64, k1: f64) -> Self {
        let k_n = ((0.99 * eps / (8.0 * k1)) * n as f64).floor().max(1.0) as usize;
        let a = calibrated_constant();
        Self { n, eps, k1, k_n, a, curvature: eps * k_n as f64 / (2.0 * a) }
    }

    pub fn count_bound(&self) -> f64 {
        self.n as f64 * self.eps / (2.0 * self.k1)
    }
}

/// Largest `err k / sup|h''|` over the standard test functions and orders 10 to 320.
pub fn calibrated_constant() -> f64 {
    let mut records = Vec::new();
    for k in [10, 20, 40, 80, 160, 320] {
        records.push(bernstein_error(|t| t * t, 2.0, k, 2001));
        records.push(bernstein_error(|t| (std::f64::consts::TAU * t).sin(), std::f64::consts::TAU.powi(2), k, 2001));
        records.push(bernstein_error(f64::exp, std::f64::consts::E, k, 2001));
    }
    fit_constant(&records).expect("curved test functions")
}

/// Smooth probability curve `u + s(x-½) + c(x-½)² + a sin(ωx + φ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothCurve {
    pub u: f64,
    pub s: f64,
    pub c: f64,
    pub a: f64,
    pub omega: f64,
    pub phi: f64,
}

impl SmoothCurve {
    pub fn eval(&self, x: f64) -> f64 {
        let z = x - 0.5;
        self.u + self.s * z + self.c * z * z + self.a * (self.omega * x + self.phi).sin()
    }

    pub fn curvature_bound(&self) -> f64 {
        2.0 * self.c.abs() + self.a.abs() * self.omega * self.omega
    }

    fn random<R: Rng + ?Sized>(level: f64, curvature: f64, rng: &mut R) -> Self {
        let omega = rng.random_range(1.0..8.0);
        Self {
            u: level,
            s: rng.random_range(-0.3..0.3),
            c: rng.random_range(-0.25..0.25) * curvature,
            a: rng.random_range(-0.5..0.5) * curvature / (omega * omega),
            omega,
            phi: rng.random_range(0.0..std::f64::consts::TAU),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    Grid,
    Jittered,
    Uniform,
    Beta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationInstance {
    pub p: SmoothCurve,
    pub p0: SmoothCurve,
    pub design_kind: DesignKind,
    pub design: DesignSpacing,
}

/// Outcome of one instance; `violation` is the only failure of the conclusion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationCheck {
    pub l1: f64,
    /// Both premises: `∫|p - p0| > 5ε` and a passing spacing audit.
    pub premise: bool,
    pub sparse_mass: f64,
    pub intervals: usize,
    pub b_p_length: f64,
    /// Largest `|h - b(·, k_n, h)|` over `p` and `p0`.
    pub approx_error: f64,
    /// Design points in `B_p` that are not separated by `ε`.
    pub unseparated_in_b_p: usize,
    pub covered_points: usize,
    pub separated: usize,
    pub bound: f64,
    pub violation: bool,
}

fn draw_design<R: Rng + ?Sized>(kind: DesignKind, n: usize, rng: &mut R) -> Result<DesignSpacing> {
    let nf = n as f64;
    let pts: Vec<f64> = match kind {
        DesignKind::Grid => (1..=n).map(|i| i as f64 / (nf + 1.0)).collect(),
        DesignKind::Jittered => (0..n).map(|i| (i as f64 + rng.random::<f64>()) / nf).collect(),
        DesignKind::Uniform => (0..n).map(|_| rng.random::<f64>()).collect(),
        DesignKind::Beta => {
            let b = Beta::new(1.3, 1.3).expect("valid shape");
            (0..n).map(|_| b.sample(rng)).collect()
        }
    };
    DesignSpacing::from_unsorted(pts)
}

/// A random pair of curves inside the curvature budget, kept in `[0.01, 0.99]`
/// and with `L1` gap above `5ε`, plus a random design.
pub fn separation_instance<R: Rng + ?Sized>(schedule: &SeparationSchedule, rng: &mut R) -> Result<SeparationInstance> {
    let in_range = |c: &SmoothCurve| (0..=200).all(|i| (0.01..=0.99).contains(&c.eval(i as f64 / 200.0)));
    let (p, p0) = loop {
        let gap = rng.random_range(5.0 * schedule.eps..0.7);
        let base = rng.random_range(0.1..(0.9 - gap).max(0.1 + 1e-9));
        let (lo, hi) = if rng.random_bool(0.5) { (base, base + gap) } else { (base + gap, base) };
        let p = SmoothCurve::random(hi, schedule.curvature, rng);
        let p0 = SmoothCurve::random(lo, schedule.curvature, rng);
        if in_range(&p) && in_range(&p0) && l1_gap(&p, &p0) > 5.0 * schedule.eps {
            break (p, p0);
        }
    };
    let design_kind = [DesignKind::Grid, DesignKind::Jittered, DesignKind::Uniform, DesignKind::Beta][rng.random_range(0..4)];
    let design = draw_design(design_kind, schedule.n, rng)?;
    Ok(SeparationInstance { p, p0, design_kind, design })
}

fn l1_gap(p: &SmoothCurve, p0: &SmoothCurve) -> f64 {
    let m = 4000;
    (0..m).map(|i| (i as f64 + 0.5) / m as f64).map(|x| (p.eval(x) - p0.eval(x)).abs()).sum::<f64>() / m as f64
}

impl SeparationInstance {
    pub fn check(&self, schedule: &SeparationSchedule) -> SeparationCheck {
        let eps = schedule.eps;
        let k = schedule.k_n;
        let bp = BernsteinOperator::new(|x| self.p.eval(x), k);
        let b0 = BernsteinOperator::new(|x| self.p0.eval(x), k);
        let approx_error = (0..=2000)
            .map(|i| i as f64 / 2000.0)
            .map(|x| (bp.eval(x) - self.p.eval(x)).abs().max((b0.eval(x) - self.p0.eval(x)).abs()))
            .fold(0.0, f64::max);
        let intervals = intervals_of(&bp.difference(&b0), eps);
        let audit = spacing_audit(&self.design, schedule.k1, eps, &intervals);
        let pv: Vec<f64> = self.design.points().iter().map(|&x| self.p.eval(x)).collect();
        let p0v: Vec<f64> = self.design.points().iter().map(|&x| self.p0.eval(x)).collect();
        let sep = count_separated(&pv, &p0v, eps);
        let unseparated_in_b_p = self
            .design
            .points()
            .iter()
            .enumerate()
            .filter(|(_, &x)| intervals.iter().any(|&(a, b)| a < x && x < b))
            .filter(|&(i, _)| (pv[i] - p0v[i]).abs() <= eps)
            .count();
        let l1 = l1_gap(&self.p, &self.p0);
        let premise = l1 > 5.0 * eps && audit.satisfied;
        let separated = sep.count();
        let bound = schedule.count_bound();
        SeparationCheck {
            l1,
            premise,
            sparse_mass: audit.sparse_mass,
            intervals: intervals.len(),
            b_p_length: total_length(&intervals),
            approx_error,
            unseparated_in_b_p,
            covered_points: audit.covered_points,
            separated,
            bound,
            violation: premise && (separated as f64) < bound,
        }
    }
}

#[cfg(test)]
mod unit {
    use super::*;
    use crate::rng::StreamSeed;

    #[test]
    fn schedule_constants() {
        let s = SeparationSchedule::new(20_000, 0.05, 5.0);
        assert_eq!(s.k_n, 24);
        assert!(s.a > 0.05 && s.a < 1.0, "{}", s.a);
        assert!(s.a * s.curvature / s.k_n as f64 <= 0.5 * s.eps + 1e-15);
    }

    #[test]
    fn pipeline_has_no_violations() {
        let s = SeparationSchedule::new(20_000, 0.05, 5.0);
        let root = StreamSeed::root(11);
        let mut premised = 0;
        for i in 0..60 {
            let mut rng = root.index(i).rng();
            let inst = separation_instance(&s, &mut rng).unwrap();
            let c = inst.check(&s);
            assert!(!c.violation, "{c:?}");
            assert!(c.intervals <= s.k_n);
            if c.premise {
                premised += 1;
                assert!(c.approx_error <= 0.5 * s.eps, "{c:?}");
                assert!(c.b_p_length > 2.0 * s.eps);
                assert_eq!(c.unseparated_in_b_p, 0);
                assert!(c.covered_points as f64 >= s.n as f64 * s.eps / s.k1 - 4.0 * s.k_n as f64, "{c:?}");
            }
        }
        assert!(premised >= 30, "{premised}");
    }
}
