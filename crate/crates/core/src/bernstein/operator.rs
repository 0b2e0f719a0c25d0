use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Four-point Gauss–Legendre rule on `[-1, 1]`.
const GL_NODES: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GL_WEIGHTS: [f64; 4] = [0.347_854_845_137_453_8, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_8];
const PANELS_PER_CELL: usize = 4;

/// Average of `h` over `[a, b]` by composite Gauss–Legendre (16 nodes).
fn cell_average(h: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let w = (b - a) / PANELS_PER_CELL as f64;
    let mut sum = 0.0;
    for p in 0..PANELS_PER_CELL {
        let mid = a + (p as f64 + 0.5) * w;
        for (x, wt) in GL_NODES.iter().zip(&GL_WEIGHTS) {
            sum += wt * h(mid + 0.5 * w * x);
        }
    }
    // each panel integral is (w/2) Σ wt h, and the cell has width PANELS * w
    sum * 0.5 / PANELS_PER_CELL as f64
}

/// `b(x, k, h) = Σ_j a_j C(k-1, j-1) x^{j-1} (1-x)^{k-j}` where `a_j` is the
/// average of `h` over `[(j-1)/k, j/k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BernsteinOperator {
    averages: Vec<f64>,
    ln_binom: Vec<f64>,
}

impl BernsteinOperator {
    pub fn new(h: impl Fn(f64) -> f64, k: usize) -> Self {
        assert!(k >= 1, "Bernstein order must be at least 1");
        let kf = k as f64;
        let averages = (0..k).map(|j| cell_average(&h, j as f64 / kf, (j + 1) as f64 / kf)).collect();
        Self::from_averages(averages)
    }

    pub fn from_averages(averages: Vec<f64>) -> Self {
        let k = averages.len();
        let top = ln_gamma(k as f64);
        let ln_binom = (0..k).map(|j| top - ln_gamma(j as f64 + 1.0) - ln_gamma((k - j) as f64)).collect();
        Self { averages, ln_binom }
    }

    pub fn order(&self) -> usize {
        self.averages.len()
    }

    pub fn averages(&self) -> &[f64] {
        &self.averages
    }

    /// The operator applied to `h1 - h2`, by linearity.
    pub fn difference(&self, other: &BernsteinOperator) -> BernsteinOperator {
        assert_eq!(self.order(), other.order(), "orders differ");
        BernsteinOperator {
            averages: self.averages.iter().zip(&other.averages).map(|(a, b)| a - b).collect(),
            ln_binom: self.ln_binom.clone(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.order();
        if k == 1 {
            return self.averages[0];
        }
        if x <= 0.0 {
            return self.averages[0];
        }
        if x >= 1.0 {
            return self.averages[k - 1];
        }
        let (lx, l1x) = (x.ln(), (-x).ln_1p());
        let deg = (k - 1) as f64;
        self.averages
            .iter()
            .zip(&self.ln_binom)
            .enumerate()
            .map(|(j, (a, lb))| a * (lb + j as f64 * lx + (deg - j as f64) * l1x).exp())
            .sum()
    }
}

pub fn bernstein(h: impl Fn(f64) -> f64, k: usize, x: f64) -> f64 {
    BernsteinOperator::new(h, k).eval(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernsteinError {
    pub k: usize,
    /// `sup |h - b(·, k, h)|` over the evaluation grid.
    pub sup_error: f64,
    /// `sup_error · k / sup|h''|`; `None` for affine `h`.
    pub fitted_a: Option<f64>,
}

/// Sup error of the order-`k` operator on a uniform grid of `points` nodes.
pub fn bernstein_error(h: impl Fn(f64) -> f64, h2_sup: f64, k: usize, points: usize) -> BernsteinError {
    let op = BernsteinOperator::new(&h, k);
    let sup_error = (0..points)
        .map(|i| {
            let x = i as f64 / (points - 1) as f64;
            (h(x) - op.eval(x)).abs()
        })
        .fold(0.0, f64::max);
    let fitted_a = (h2_sup > 0.0).then(|| sup_error * k as f64 / h2_sup);
    BernsteinError { k, sup_error, fitted_a }
}

/// Smallest `A` with `err ≤ A k⁻¹ sup|h''|` on every training record.
pub fn fit_constant(training: &[BernsteinError]) -> Option<f64> {
    training.iter().filter_map(|e| e.fitted_a).reduce(f64::max)
}

#[cfg(test)]
mod unit {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_constants() {
        for k in [1, 2, 7, 50, 400] {
            for x in [0.0, 0.1, 0.5, 0.93, 1.0] {
                assert!((bernstein(|_| 0.37, k, x) - 0.37).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn identity_closed_form() {
        let brute = |k: usize, x: f64| {
            // direct summation with exact cell integrals of t
            let kf = k as f64;
            (1..=k)
                .map(|j| {
                    let avg = (2.0 * j as f64 - 1.0) / (2.0 * kf);
                    let mut c = 1.0;
                    for i in 0..(j - 1) {
                        c *= (k - 1 - i) as f64 / (i + 1) as f64;
                    }
                    avg * c * x.powi(j as i32 - 1) * (1.0 - x).powi((k - j) as i32)
                })
                .sum::<f64>()
        };
        assert!((bernstein(|t| t, 10, 0.0) - 0.05).abs() < 1e-12);
        for k in [3, 10, 33] {
            assert!((bernstein(|t| t, k, 0.5) - 0.5).abs() < 1e-12);
            for x in [0.0, 0.2, 0.71, 1.0] {
                let closed = x + (1.0 - 2.0 * x) / (2.0 * k as f64);
                assert!((bernstein(|t| t, k, x) - closed).abs() < 1e-10);
                assert!((brute(k, x) - closed).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn affine_error_is_half_over_k() {
        for k in [5, 20, 80] {
            let e = bernstein_error(|t| 2.0 * t - 0.3, 0.0, k, 1001);
            assert!((e.sup_error - 2.0 / (2.0 * k as f64)).abs() < 1e-10);
            assert!(e.fitted_a.is_none());
        }
    }

    #[test]
    fn square_error_halves() {
        let errs: Vec<f64> = [10, 20, 40].iter().map(|&k| bernstein_error(|t| t * t, 2.0, k, 2001).sup_error).collect();
        for w in errs.windows(2) {
            let r = w[1] / w[0];
            assert!((0.45..=0.55).contains(&r), "{r}");
        }
    }

    proptest! {
        #[test]
        fn monotone_operator(a in -1.0..1.0f64, b in -1.0..1.0f64, c in 0.0..1.0f64, k in 1usize..60, x in 0.0..=1.0f64) {
            // h1 ≤ h2 pointwise since the gap c + 0.1 t² is nonnegative
            let h1 = |t: f64| a * t + b * (3.0 * t).sin();
            let h2 = |t: f64| h1(t) + c + 0.1 * t * t;
            prop_assert!(bernstein(h1, k, x) <= bernstein(h2, k, x) + 1e-12);
        }
    }
}
