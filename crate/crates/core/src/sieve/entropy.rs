use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Grid, GridFunction};
use crate::sieve::membership::derivative_norms;
use crate::stats::{linear_fit, LinearFit};
use crate::Result;

fn within(a: &[f64], b: &[f64], eps: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= eps)
}

/// How a greedy `ε`-net picks its centres from the sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NetStrategy {
    /// Scan in order, opening a centre at each uncovered function.
    Sequential,
    /// Repeatedly choose the function whose ball covers the most uncovered ones.
    #[default]
    SetCover,
}

/// Greedy sup-norm `ε`-net over a finite sample; returns the centre indices.
/// Every sample function lies within `eps` of some centre.
pub fn greedy_net(functions: &[Vec<f64>], eps: f64, strategy: NetStrategy) -> Vec<usize> {
    net_from(functions.len(), |i, j| within(&functions[i], &functions[j], eps), strategy)
}

/// Condensed matrix of pairwise sup-norm distances.
pub struct PairwiseSup {
    n: usize,
    d: Vec<f64>,
}

impl PairwiseSup {
    pub fn new(functions: &[Vec<f64>]) -> Self {
        let n = functions.len();
        let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 1..n {
            for j in 0..i {
                d.push(functions[i].iter().zip(&functions[j]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())));
            }
        }
        Self { n, d }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Greater => self.d[i * (i - 1) / 2 + j],
            std::cmp::Ordering::Less => self.d[j * (j - 1) / 2 + i],
        }
    }

    pub fn net(&self, eps: f64, strategy: NetStrategy) -> Vec<usize> {
        net_from(self.n, |i, j| self.get(i, j) <= eps, strategy)
    }
}

fn net_from(n: usize, close: impl Fn(usize, usize) -> bool, strategy: NetStrategy) -> Vec<usize> {
    match strategy {
        NetStrategy::Sequential => {
            let mut centres: Vec<usize> = Vec::new();
            for i in 0..n {
                if !centres.iter().any(|&c| close(c, i)) {
                    centres.push(i);
                }
            }
            centres
        }
        NetStrategy::SetCover => set_cover(n, close),
    }
}

struct BitRows {
    words: usize,
    bits: Vec<u64>,
}

impl BitRows {
    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }
}

fn set_cover(n: usize, close: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let words = n.div_ceil(64);
    let mut rows = BitRows { words, bits: vec![0u64; n * words] };
    for i in 0..n {
        rows.bits[i * words + i / 64] |= 1u64 << (i % 64);
        for j in 0..i {
            if close(i, j) {
                rows.bits[i * words + j / 64] |= 1u64 << (j % 64);
                rows.bits[j * words + i / 64] |= 1u64 << (i % 64);
            }
        }
    }
    let mut uncovered = vec![u64::MAX; words];
    if n % 64 != 0 {
        uncovered[words - 1] = (1u64 << (n % 64)) - 1;
    }
    let gain = |row: &[u64], unc: &[u64]| row.iter().zip(unc).map(|(a, b)| (a & b).count_ones() as usize).sum::<usize>();
    // lazy greedy: stored gains only ever overestimate
    let mut heap: std::collections::BinaryHeap<(usize, std::cmp::Reverse<usize>)> =
        (0..n).map(|i| (gain(rows.row(i), &uncovered), std::cmp::Reverse(i))).collect();
    let mut left = n;
    let mut centres = Vec::new();
    while left > 0 {
        let (stale, std::cmp::Reverse(i)) = heap.pop().expect("uncovered points remain");
        let fresh = gain(rows.row(i), &uncovered);
        if fresh < stale {
            heap.push((fresh, std::cmp::Reverse(i)));
            continue;
        }
        centres.push(i);
        left -= fresh;
        for (u, r) in uncovered.iter_mut().zip(rows.row(i)) {
            *u &= !r;
        }
    }
    centres.sort_unstable();
    centres
}

pub fn covering_number(functions: &[Vec<f64>], eps: f64) -> usize {
    greedy_net(functions, eps, NetStrategy::SetCover).len()
}

/// Multiscale cubic B-spline class on `[0,1]`: `f = A Σ_l Σ_j c_{lj} 4^{-l} B(2^l x - j)`
/// with `c_{lj}` uniform on `[-1, 1]`. Every level contributes a comparable
/// second derivative, so the class behaves like a ball of twice-differentiable
/// functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleClass {
    pub levels: usize,
    pub grid_points: usize,
}

impl Default for MultiscaleClass {
    fn default() -> Self {
        Self { levels: 7, grid_points: 257 }
    }
}

/// Centred cubic B-spline supported on `[-2, 2]`.
fn cubic_bspline(u: f64) -> f64 {
    let a = u.abs();
    if a >= 2.0 {
        0.0
    } else if a >= 1.0 {
        (2.0 - a).powi(3) / 6.0
    } else {
        (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0
    }
}

impl MultiscaleClass {
    pub fn grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::unit_interval(self.grid_points)?))
    }

    /// One member with unit amplitude.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let h = 1.0 / (self.grid_points - 1) as f64;
        let mut f = vec![0.0; self.grid_points];
        for l in 0..self.levels {
            let scale = (1u64 << l) as f64;
            let amp = scale.powi(-2);
            for j in -2..=(1i64 << l) + 2 {
                let c = amp * rng.random_range(-1.0..=1.0);
                let lo = ((j as f64 - 2.0) / scale).max(0.0);
                let hi = ((j as f64 + 2.0) / scale).min(1.0);
                if lo > hi {
                    continue;
                }
                let (a, b) = ((lo / h).floor() as usize, ((hi / h).ceil() as usize).min(self.grid_points - 1));
                for (i, v) in f.iter_mut().enumerate().take(b + 1).skip(a) {
                    *v += c * cubic_bspline(scale * i as f64 * h - j as f64);
                }
            }
        }
        f
    }

    /// `count` members rescaled together so that every one lies strictly
    /// inside the sieve with bound `m_n` at smoothness `alpha`.
    pub fn sample_in_sieve<R: Rng + ?Sized>(&self, count: usize, alpha: usize, m_n: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let grid = self.grid()?;
        let mut raw: Vec<Vec<f64>> = (0..count).map(|_| self.sample(rng)).collect();
        let mut radius = 0.0f64;
        for f in &raw {
            let g = GridFunction::new(grid.clone(), f.clone())?;
            radius = radius.max(derivative_norms(&g, alpha)?.iter().map(|(_, v)| *v).fold(0.0, f64::max));
        }
        let factor = if radius > 0.0 { 0.99 * m_n / radius } else { 1.0 };
        for f in raw.iter_mut() {
            f.iter_mut().for_each(|v| *v *= factor);
        }
        Ok(raw)
    }
}

/// Covering numbers over an `ε` ladder and the fitted growth exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyFit {
    pub eps: Vec<f64>,
    pub counts: Vec<usize>,
    /// Slope of `log log N` against `log(1/ε)` over the points used.
    pub exponent: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// Fits `log N ∝ ε^{-γ}` using only ladder points with
/// `min_count ≤ N ≤ max_count`, away from the one-ball and saturation
/// regimes of a finite sample.
pub fn fit_entropy_exponent(functions: &[Vec<f64>], eps: &[f64], min_count: usize, max_count: usize) -> Option<EntropyFit> {
    let dist = PairwiseSup::new(functions);
    let counts: Vec<usize> = eps.iter().map(|&e| dist.net(e, NetStrategy::SetCover).len()).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = eps
        .iter()
        .zip(&counts)
        .filter(|&(_, &n)| n >= min_count.max(2) && n <= max_count)
        .map(|(&e, &n)| ((1.0 / e).ln(), (n as f64).ln().ln()))
        .unzip();
    if xs.len() < 3 {
        return None;
    }
    let LinearFit { slope, r_squared, .. } = linear_fit(&xs, &ys);
    Some(EntropyFit { eps: eps.to_vec(), counts, exponent: slope, r_squared, points_used: xs.len() })
}
