//! Summary statistics for evaluation returns.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Percentile bootstrap confidence interval of the mean.
///
/// `level` is the coverage (0.95 for a 95% interval). A single sample yields the
/// degenerate interval at that sample.
pub fn bootstrap_ci(xs: &[f64], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    if xs.len() <= 1 {
        let m = mean(xs);
        return (m, m);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = xs.len();
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(|a, b| a.total_cmp(b));
    let alpha = (1.0 - level) / 2.0;
    (quantile_sorted(&means, alpha), quantile_sorted(&means, 1.0 - alpha))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// First step whose value is within `frac` (relative) of the last value of a learning
/// curve `(step, value)`; `None` for an empty curve.
pub fn steps_to_within(curve: &[(u64, f64)], frac: f64) -> Option<u64> {
    let &(_, last) = curve.last()?;
    let tol = frac * last.abs();
    curve.iter().find(|(_, v)| (v - last).abs() <= tol).map(|&(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bootstrap_contains_mean_and_is_reproducible() {
        let xs = [1.0, 2.0, 4.0, 3.0, 10.0, -1.0];
        let (lo, hi) = bootstrap_ci(&xs, 2000, 0.95, 7);
        let m = mean(&xs);
        assert!(lo <= m && m <= hi);
        assert_eq!(bootstrap_ci(&xs, 2000, 0.95, 7), (lo, hi));
    }

    #[test]
    fn steps_to_within_final() {
        let curve = [(0, -100.0), (10, -12.0), (20, -10.5), (30, -10.0)];
        assert_eq!(steps_to_within(&curve, 0.05), Some(20));
        assert_eq!(steps_to_within(&[], 0.05), None);
    }
}
