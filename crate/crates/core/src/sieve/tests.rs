use serde::{Deserialize, Serialize};

use crate::sieve::separation::count_separated;
use crate::{Error, Result};

/// Which tail the one-sided test rejects in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Reject when `Σ(Y - μ₀) > mε/2`.
    Upper,
    /// Reject when `Σ(Y - μ₀) < -mε/2`.
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub m: usize,
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    /// Hoeffding guarantee `e^{-mε²/2}` on both error probabilities.
    pub error_bound: f64,
    pub direction: Direction,
}

pub fn hoeffding_test(y: &[bool], mu0: &[f64], eps: f64, direction: Direction) -> Result<TestResult> {
    if y.is_empty() {
        return Err(Error::EmptyDesign);
    }
    if y.len() != mu0.len() {
        return Err(Error::Misaligned(format!("{} responses for {} null means", y.len(), mu0.len())));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let m = y.len();
    let statistic: f64 = y.iter().zip(mu0).map(|(&yi, &mu)| f64::from(u8::from(yi)) - mu).sum();
    let threshold = m as f64 * eps / 2.0;
    let reject = match direction {
        Direction::Upper => statistic > threshold,
        Direction::Lower => statistic < -threshold,
    };
    Ok(TestResult { m, statistic, threshold, reject, error_bound: (-(m as f64) * eps * eps / 2.0).exp(), direction })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeResult {
    pub reject: bool,
    /// One entry per net element; `None` where the element is nowhere
    /// separated from `p0` and so cannot be tested.
    pub elements: Vec<Option<TestResult>>,
    /// Smallest index-set size among the tested elements.
    pub m: usize,
    /// Union bound `N e^{-mε²/8}` on the type-I error.
    pub error_bound: f64,
}

/// Maximum of one-sided tests of `p0` against each net element. Each test
/// uses the design points where the element exceeds `p0` by `ε` in the
/// dominant direction, at level `ε/2`.
pub fn composite_test(p0: &[f64], net: &[Vec<f64>], y: &[bool], eps: f64) -> Result<CompositeResult> {
    if net.is_empty() {
        return Err(Error::InvalidParameter("empty alternative net".into()));
    }
    if p0.len() != y.len() {
        return Err(Error::Misaligned(format!("{} responses for {} design points", y.len(), p0.len())));
    }
    let mut elements = Vec::with_capacity(net.len());
    let mut reject = false;
    let mut m = usize::MAX;
    for p in net {
        if p.len() != p0.len() {
            return Err(Error::Misaligned("net element evaluated on a different design".into()));
        }
        let sep = count_separated(p, p0, eps);
        let (idx, upper) = sep.dominant();
        if idx.is_empty() {
            elements.push(None);
            continue;
        }
        let ys: Vec<bool> = idx.iter().map(|&i| y[i]).collect();
        let mus: Vec<f64> = idx.iter().map(|&i| p0[i]).collect();
        let dir = if upper { Direction::Upper } else { Direction::Lower };
        let r = hoeffding_test(&ys, &mus, eps / 2.0, dir)?;
        reject |= r.reject;
        m = m.min(r.m);
        elements.push(Some(r));
    }
    let m = if m == usize::MAX { 0 } else { m };
    let error_bound = net.len() as f64 * (-(m as f64) * eps * eps / 8.0).exp();
    Ok(CompositeResult { reject, elements, m, error_bound })
}

#[cfg(test)]
mod unit {
    use super::*;

    #[test]
    fn matching_means_do_not_reject() {
        let y: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let r = hoeffding_test(&y, &[0.5; 100], 0.2, Direction::Upper).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(!r.reject);
    }

    #[test]
    fn bound_value() {
        let y = vec![false; 200];
        let r = hoeffding_test(&y, &[0.5; 200], 0.2, Direction::Upper).unwrap();
        assert!((r.error_bound - (-4.0f64).exp()).abs() < 1e-15);
        let lower = hoeffding_test(&y, &[0.5; 200], 0.2, Direction::Lower).unwrap();
        assert!(lower.reject && !r.reject);
    }

    #[test]
    fn empty_slice_rejected() {
        assert!(hoeffding_test(&[], &[], 0.1, Direction::Upper).is_err());
    }

    #[test]
    fn null_only_net() {
        let p0 = vec![0.4; 50];
        let y: Vec<bool> = (0..50).map(|i| i % 5 < 2).collect();
        let r = composite_test(&p0, std::slice::from_ref(&p0), &y, 0.1).unwrap();
        assert!(!r.reject);
        assert_eq!(r.elements, vec![None]);
    }

    #[test]
    fn composite_bound_formula() {
        let p0 = vec![0.5; 400];
        let net: Vec<Vec<f64>> = (0..20).map(|j| vec![if j % 2 == 0 { 0.75 } else { 0.25 }; 400]).collect();
        let y: Vec<bool> = (0..400).map(|i| i % 2 == 0).collect();
        let r = composite_test(&p0, &net, &y, 0.2).unwrap();
        assert_eq!(r.m, 400);
        assert!((r.error_bound - 20.0 * (-2.0f64).exp()).abs() < 1e-12);
        assert!(!r.reject);
    }
}
