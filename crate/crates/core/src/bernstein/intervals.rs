use crate::bernstein::operator::BernsteinOperator;

/// Maximal open intervals of `[0, 1]` where `|b(t,k,p) - b(t,k,p0)| > 2ε`,
/// found by scanning `16 k` points and bisecting each crossing to `1e-10`.
pub fn b_p_intervals(p: impl Fn(f64) -> f64, p0: impl Fn(f64) -> f64, k: usize, eps: f64) -> Vec<(f64, f64)> {
    let gap = BernsteinOperator::new(p, k).difference(&BernsteinOperator::new(p0, k));
    intervals_of(&gap, eps)
}

pub(crate) fn intervals_of(gap: &BernsteinOperator, eps: f64) -> Vec<(f64, f64)> {
    let excess = |t: f64| gap.eval(t).abs() - 2.0 * eps;
    let steps = 16 * gap.order();
    let mut out = Vec::new();
    let mut start: Option<f64> = (excess(0.0) > 0.0).then_some(0.0);
    let mut prev_t = 0.0;
    let mut prev_in = start.is_some();
    for i in 1..=steps {
        let t = i as f64 / steps as f64;
        let inside = excess(t) > 0.0;
        if inside != prev_in {
            let edge = bisect(&excess, prev_t, t, prev_in);
            if inside {
                start = Some(edge);
            } else if let Some(s) = start.take() {
                out.push((s, edge));
            }
        }
        prev_t = t;
        prev_in = inside;
    }
    if let Some(s) = start {
        out.push((s, 1.0));
    }
    out
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, a_inside: bool) -> f64 {
    while b - a > 1e-10 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == a_inside {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

pub fn total_length(intervals: &[(f64, f64)]) -> f64 {
    intervals.iter().map(|(a, b)| b - a).sum()
}

#[cfg(test)]
mod unit {
    use super::*;
    use crate::rng::StreamSeed;
    use rand::Rng;

    #[test]
    fn equal_functions_give_nothing() {
        assert!(b_p_intervals(|t| 0.3 + 0.2 * t, |t| 0.3 + 0.2 * t, 12, 0.05).is_empty());
    }

    #[test]
    fn constant_gap_covers_everything() {
        let eps = 0.05;
        let iv = b_p_intervals(|_| 0.2 + 5.0 * eps, |_| 0.2, 9, eps);
        assert_eq!(iv.len(), 1);
        assert!((iv[0].0 - 0.0).abs() < 1e-12 && (iv[0].1 - 1.0).abs() < 1e-12);
        assert!(total_length(&iv) > 2.0 * eps);
    }

    #[test]
    fn endpoints_are_accurate() {
        // gap b(t) for p(t) = t, p0 = 0 is t + (1 - 2t)/(2k); crossing at 2ε
        let (k, eps) = (10, 0.2);
        let iv = b_p_intervals(|t| t, |_| 0.0, k, eps);
        let kf = k as f64;
        let root = (2.0 * eps - 1.0 / (2.0 * kf)) / (1.0 - 1.0 / kf);
        assert_eq!(iv.len(), 1);
        assert!((iv[0].0 - root).abs() < 1e-9);
    }

    #[test]
    fn interval_count_bounded_by_order() {
        let mut rng = StreamSeed::root(9).rng();
        for _ in 0..1000 {
            let k = rng.random_range(1..40);
            let (a, b, c, w) = (rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), rng.random_range(0.0..6.0), rng.random_range(1.0..30.0));
            let p = move |t: f64| 0.5 + a * (w * t + c).sin();
            let p0 = move |t: f64| 0.5 + b * (0.5 * w * t).cos();
            let iv = b_p_intervals(p, p0, k, 0.02);
            assert!(iv.len() <= k, "{} > {k}", iv.len());
        }
    }
}
