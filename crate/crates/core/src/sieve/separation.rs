use rand::Rng;
use serde::{Deserialize, Serialize};

/// Design indices where `p` and `p0` differ by more than `ε`, split by sign.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Separation {
    /// Indices with `p > p0 + ε`.
    pub plus: Vec<usize>,
    /// Indices with `p < p0 - ε`.
    pub minus: Vec<usize>,
}

impl Separation {
    pub fn count(&self) -> usize {
        self.plus.len() + self.minus.len()
    }

    /// The larger of the two sets, with `true` when it is the upper one.
    pub fn dominant(&self) -> (&[usize], bool) {
        if self.plus.len() >= self.minus.len() {
            (&self.plus, true)
        } else {
            (&self.minus, false)
        }
    }
}

/// `p` and `p0` are evaluated at the same design points.
pub fn count_separated(p: &[f64], p0: &[f64], eps: f64) -> Separation {
    let mut s = Separation::default();
    for (i, (a, b)) in p.iter().zip(p0).enumerate() {
        if *a > b + eps {
            s.plus.push(i);
        } else if *a < b - eps {
            s.minus.push(i);
        }
    }
    s
}

/// Two bounded functions, piecewise constant on cells of a finite measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationProblem {
    /// Measure of each cell.
    pub weights: Vec<f64>,
    pub psi1: Vec<f64>,
    pub psi2: Vec<f64>,
    pub bound: f64,
    pub eps: f64,
}

impl SeparationProblem {
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn l1(&self) -> f64 {
        self.weights.iter().zip(self.psi1.iter().zip(&self.psi2)).map(|(w, (a, b))| w * (a - b).abs()).sum()
    }

    /// `∫|ψ₁ - ψ₂| dν > (1 + ν(X)) ε` and `0 ≤ ψ ≤ M`.
    pub fn premise(&self) -> bool {
        let bounded = self.psi1.iter().chain(&self.psi2).all(|&v| (0.0..=self.bound).contains(&v));
        bounded && self.eps > 0.0 && self.l1() > (1.0 + self.total_mass()) * self.eps
    }

    /// `ν{|ψ₁ - ψ₂| > ε}`.
    pub fn separated_mass(&self) -> f64 {
        self.weights
            .iter()
            .zip(self.psi1.iter().zip(&self.psi2))
            .filter(|(_, (a, b))| (*a - *b).abs() > self.eps)
            .map(|(w, _)| w)
            .sum()
    }

    pub fn conclusion(&self) -> bool {
        self.separated_mass() >= self.eps / self.bound
    }
}

/// A random instance satisfying the premise, or `None` when the drawn pair
/// is too close for any admissible `ε`.
pub fn separation_problem<R: Rng + ?Sized>(rng: &mut R) -> Option<SeparationProblem> {
    let cells = rng.random_range(1..=24);
    let total = rng.random_range(0.05..4.0);
    let raw: Vec<f64> = (0..cells).map(|_| rng.random_range(0.01..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w * total / sum).collect();
    let bound = rng.random_range(0.1..5.0);
    // sparse differences exercise the regime where separation is concentrated
    let sparse = rng.random_bool(0.5);
    let psi1: Vec<f64> = (0..cells).map(|_| rng.random_range(0.0..=bound)).collect();
    let psi2: Vec<f64> = psi1
        .iter()
        .map(|&a| if sparse && rng.random_bool(0.7) { a } else { rng.random_range(0.0..=bound) })
        .collect();
    let mut inst = SeparationProblem { weights, psi1, psi2, bound, eps: 0.0 };
    let cap = inst.l1() / (1.0 + inst.total_mass());
    if cap <= 0.0 {
        return None;
    }
    // push ε toward the premise boundary half of the time
    inst.eps = if rng.random_bool(0.5) { cap * rng.random_range(0.95..1.0) } else { cap * rng.random_range(0.0..1.0) };
    inst.premise().then_some(inst)
}

#[cfg(test)]
mod unit {
    use super::*;
    use crate::rng::StreamSeed;

    #[test]
    fn identical_functions_are_not_separated() {
        let p = [0.2, 0.5, 0.9];
        assert_eq!(count_separated(&p, &p, 0.0).count(), 0);
    }

    #[test]
    fn signs_are_split() {
        let s = count_separated(&[0.9, 0.1, 0.5, 0.8], &[0.5; 4], 0.2);
        assert_eq!(s.plus, vec![0, 3]);
        assert_eq!(s.minus, vec![1]);
        assert_eq!(s.dominant(), (&[0usize, 3][..], true));
    }

    #[test]
    fn worked_instance() {
        let inst = SeparationProblem { weights: vec![1.0], psi1: vec![1.0], psi2: vec![0.0], bound: 1.0, eps: 0.4 };
        assert!(inst.premise());
        assert_eq!(inst.separated_mass(), 1.0);
        assert!(inst.conclusion());
    }

    #[test]
    fn random_instances_satisfy_conclusion() {
        let mut rng = StreamSeed::root(8).rng();
        let mut checked = 0;
        while checked < 2000 {
            if let Some(inst) = separation_problem(&mut rng) {
                assert!(inst.conclusion(), "{inst:?}");
                checked += 1;
            }
        }
    }
}
