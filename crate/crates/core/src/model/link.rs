use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

/// Probabilities are kept inside `[PROB_CLAMP, 1 - PROB_CLAMP]` wherever a
/// logarithm is taken.
pub const PROB_CLAMP: f64 = 1e-12;

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// A strictly increasing Lipschitz CDF `H` mapping the latent process to a
/// response probability.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LinkFunction {
    Probit,
    #[default]
    Logistic,
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl LinkFunction {
    pub fn forward(self, u: f64) -> f64 {
        match self {
            LinkFunction::Probit => 0.5 * erfc(-u / std::f64::consts::SQRT_2),
            LinkFunction::Logistic => {
                if u >= 0.0 {
                    1.0 / (1.0 + (-u).exp())
                } else {
                    let e = u.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// Density `H'(u)`.
    pub fn density(self, u: f64) -> f64 {
        match self {
            LinkFunction::Probit => FRAC_1_SQRT_2PI * (-0.5 * u * u).exp(),
            LinkFunction::Logistic => {
                let p = self.forward(u);
                p * (1.0 - p)
            }
        }
    }

    pub fn inverse(self, p: f64) -> f64 {
        match self {
            LinkFunction::Probit => {
                let mut u = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
                // one Newton step polishes the tails
                let d = self.density(u);
                if d > 0.0 {
                    u -= (self.forward(u) - p) / d;
                }
                u
            }
            LinkFunction::Logistic => (p / (1.0 - p)).ln(),
        }
    }

    /// Lipschitz constant `sup H'`.
    pub fn lipschitz(self) -> f64 {
        match self {
            LinkFunction::Probit => FRAC_1_SQRT_2PI,
            LinkFunction::Logistic => 0.25,
        }
    }

    /// `log H(u)` and `log(1 - H(u))`, stable for large `|u|`.
    pub fn log_probabilities(self, u: f64) -> (f64, f64) {
        match self {
            LinkFunction::Logistic => {
                // log σ(u) = -softplus(-u)
                (-softplus(-u), -softplus(u))
            }
            LinkFunction::Probit => {
                let p = clamp_probability(self.forward(u));
                let q = clamp_probability(self.forward(-u));
                (p.ln(), q.ln())
            }
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constants() {
        assert!((LinkFunction::Probit.lipschitz() - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-16);
        assert_eq!(LinkFunction::Logistic.lipschitz(), 0.25);
        assert_eq!(LinkFunction::Probit.forward(0.0), 0.5);
        assert_eq!(LinkFunction::Logistic.forward(0.0), 0.5);
    }

    proptest! {
        #[test]
        fn round_trip(p in 1e-9..(1.0 - 1e-9)) {
            for link in [LinkFunction::Probit, LinkFunction::Logistic] {
                prop_assert!((link.forward(link.inverse(p)) - p).abs() <= 1e-12);
            }
        }

        #[test]
        fn increasing_and_lipschitz(u in -8.0..8.0f64, du in 1e-6..2.0f64) {
            for link in [LinkFunction::Probit, LinkFunction::Logistic] {
                let (a, b) = (link.forward(u), link.forward(u + du));
                prop_assert!(b >= a);
                prop_assert!(b - a <= link.lipschitz() * du * (1.0 + 1e-12));
            }
        }

        #[test]
        fn log_probabilities_consistent(u in -30.0..30.0f64) {
            for link in [LinkFunction::Probit, LinkFunction::Logistic] {
                let (lp, lq) = link.log_probabilities(u);
                let p = clamp_probability(link.forward(u));
                prop_assert!((lp - p.ln()).abs() < 1e-9 || p <= PROB_CLAMP * 10.0);
                prop_assert!(lp <= 0.0 && lq <= 0.0);
            }
        }
    }
}
