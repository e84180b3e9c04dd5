//! Small statistics toolkit: deterministic sums, least squares, KS distances
//! and percentile bootstrap.

use rand::Rng;
use rayon::prelude::*;

use crate::rng::{self, CHUNK};

/// Sum with a fixed association order (chunk sums, then a sequential pass),
/// so parallel reductions are reproducible bit for bit.
pub fn det_sum(values: &[f64]) -> f64 {
    let parts: Vec<f64> = values.par_chunks(CHUNK).map(|c| c.iter().sum::<f64>()).collect();
    parts.iter().sum()
}

/// Mean and standard error (`std / sqrt(n)`, population std).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = det_sum(values) / n;
    let sq: Vec<f64> = values.par_iter().map(|v| (v - mean).powi(2)).collect();
    (mean, (det_sum(&sq) / n).sqrt() / n.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

/// Ordinary least squares `y ≈ intercept + slope·x`. Needs two distinct `x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Some(LinearFit {
        slope,
        intercept,
        residual: (ss / n as f64).sqrt(),
    })
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples` and a
/// continuous CDF.
pub fn ks_continuous(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// KS distance to a discrete law given as `(atom, probability)` pairs.
pub fn ks_discrete(samples: &[f64], atoms: &[(f64, f64)]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let mut a = atoms.to_vec();
    a.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut points: Vec<f64> = s.iter().copied().chain(a.iter().map(|x| x.0)).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let n = s.len() as f64;
    let (mut i, mut j) = (0usize, 0usize);
    let mut law = 0.0;
    let mut d: f64 = 0.0;
    for &t in &points {
        // left limits first
        d = d.max((i as f64 / n - law).abs());
        while i < s.len() && s[i] <= t {
            i += 1;
        }
        while j < a.len() && a[j].0 <= t {
            law += a[j].1;
            j += 1;
        }
        d = d.max((i as f64 / n - law).abs());
    }
    d
}

/// Percentile bootstrap interval for `stat` evaluated on resampled index sets.
pub fn bootstrap_ci<F>(n: usize, resamples: usize, level: f64, seed: u64, stat: F) -> (f64, f64)
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    let mut vals: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::substream(seed, rng::domain::BOOTSTRAP, b as u64);
            let idx: Vec<usize> = (0..n).map(|_| r.gen_range(0..n)).collect();
            stat(&idx)
        })
        .collect();
    vals.retain(|v| v.is_finite());
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    vals.sort_by(f64::total_cmp);
    let q = |p: f64| vals[((p * (vals.len() - 1) as f64).round() as usize).min(vals.len() - 1)];
    let tail = (1.0 - level) / 2.0;
    (q(tail), q(1.0 - tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fit_recovers_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = linear_fit(&xs, &ys).unwrap();
        assert_abs_diff_eq!(f.slope, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f.intercept, 2.0, epsilon = 1e-12);
        assert!(f.residual < 1e-12);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let s: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_continuous(&s, |x| x.clamp(0.0, 1.0)) <= 0.0005 + 1e-12);
        assert_abs_diff_eq!(ks_continuous(&[0.3], |x| x.clamp(0.0, 1.0)), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn ks_discrete_matches_hand_count() {
        let atoms = [(0.0, 0.5), (1.0, 0.5)];
        assert_abs_diff_eq!(ks_discrete(&[0.0, 1.0], &atoms), 0.0);
        assert_abs_diff_eq!(ks_discrete(&[0.0, 0.0, 0.0, 1.0], &atoms), 0.25);
        assert_abs_diff_eq!(ks_discrete(&[0.5], &atoms), 0.5);
    }

    #[test]
    fn det_sum_is_thread_independent() {
        let v: Vec<f64> = (0..100_000).map(|i| (i as f64).sin() * 1e-3).collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| det_sum(&v));
        let many = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap().install(|| det_sum(&v));
        assert_eq!(one.to_bits(), many.to_bits());
    }

    #[test]
    fn bootstrap_brackets_mean() {
        let v: Vec<f64> = (0..500).map(|i| (i % 7) as f64).collect();
        let (lo, hi) = bootstrap_ci(v.len(), 200, 0.95, 1, |idx| {
            idx.iter().map(|&i| v[i]).sum::<f64>() / idx.len() as f64
        });
        let m = v.iter().sum::<f64>() / v.len() as f64;
        assert!(lo < m && m < hi);
    }
}
