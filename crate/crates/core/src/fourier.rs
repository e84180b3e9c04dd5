//! Monte Carlo Fourier coefficients `F̂_q`, decay fits, and the computable
//! pieces of the decay pipeline: linearization residuals, oscillatory
//! averages and the per-`q` budget table.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::{ConformalIfs, Word};
use crate::measure::{sample_batch, EmpiricalMeasure, ProbVector};
use crate::renewal::{overshoot_law, walk_until, CircleUnit, StopRule};
use crate::rng::CHUNK;
use crate::stats::{bootstrap_ci, linear_fit};

/// Signal threshold in standard errors for a radius to enter the fit.
pub const SIGNAL_SIGMAS: f64 = 5.0;

/// Blocks the samples are cut into for the bootstrap.
const BOOT_BLOCKS: usize = 500;

fn phase(q: [f64; 2], z: Complex64) -> Complex64 {
    Complex64::from_polar(1.0, TAU * (q[0] * z.re + q[1] * z.im))
}

/// Chunked sums in index order, so the total does not depend on scheduling.
fn chunk_sums(points: &[Complex64], q: [f64; 2]) -> (Complex64, f64) {
    let parts: Vec<(Complex64, f64)> = points
        .par_chunks(CHUNK)
        .map(|c| {
            c.iter().fold((Complex64::new(0.0, 0.0), 0.0), |(s, s2), &z| {
                let e = phase(q, z);
                (s + e, s2 + e.norm_sqr())
            })
        })
        .collect();
    parts
        .into_iter()
        .fold((Complex64::new(0.0, 0.0), 0.0), |(a, b), (c, d)| (a + c, b + d))
}

/// `F̂_q = mean exp(2πi⟨q, x⟩)` and its standard error.
pub fn fourier_mc(em: &EmpiricalMeasure, q: [f64; 2]) -> (Complex64, f64) {
    fourier_points(&em.points, q)
}

fn fourier_points(points: &[Complex64], q: [f64; 2]) -> (Complex64, f64) {
    let n = points.len() as f64;
    if points.is_empty() {
        return (Complex64::new(f64::NAN, f64::NAN), f64::NAN);
    }
    if q == [0.0, 0.0] {
        return (Complex64::new(1.0, 0.0), 0.0);
    }
    let (s, s2) = chunk_sums(points, q);
    let mean = s / n;
    // |e|² = 1, so the sample variance is 1 − |mean|² up to the n/(n−1) factor
    let var = if points.len() > 1 { ((s2 / n - mean.norm_sqr()) * n / (n - 1.0)).max(0.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub q_abs: f64,
    pub estimate: Complex64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayScan {
    pub direction: [f64; 2],
    pub points: Vec<ScanPoint>,
    pub alpha_hat: f64,
    pub ci: (f64, f64),
    pub radii_used: Vec<f64>,
    /// `1/√count`.
    pub noise_floor: f64,
}

fn unit_direction(d: [f64; 2]) -> Result<[f64; 2]> {
    let n = d[0].hypot(d[1]);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidArgument("direction must be a nonzero vector".into()));
    }
    Ok([d[0] / n, d[1] / n])
}

/// Fit `log|F̂| = −α log|q| + c` over the radii whose estimate clears
/// `5·stderr`; the interval is a block bootstrap over samples.
pub fn decay_fit(
    em: &EmpiricalMeasure,
    direction: [f64; 2],
    radii: &[f64],
    count_per_radius: usize,
    resamples: usize,
    seed: u64,
) -> Result<DecayScan> {
    let dir = unit_direction(direction)?;
    if radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidArgument("radii must be positive".into()));
    }
    let pts = &em.points[..count_per_radius.min(em.len())];
    if pts.len() < BOOT_BLOCKS {
        return Err(Error::Precondition(format!("need at least {BOOT_BLOCKS} samples")));
    }
    let noise_floor = 1.0 / (pts.len() as f64).sqrt();
    let points: Vec<ScanPoint> = radii
        .iter()
        .map(|&r| {
            let (estimate, stderr) = fourier_points(pts, [r * dir[0], r * dir[1]]);
            ScanPoint {
                q_abs: r,
                estimate,
                stderr,
            }
        })
        .collect();
    let used: Vec<usize> = (0..points.len())
        .filter(|&i| points[i].estimate.norm() > SIGNAL_SIGMAS * points[i].stderr)
        .collect();
    if used.len() < 2 {
        return Err(Error::FitRefused(format!(
            "{} radii above the noise floor {noise_floor:.3e}",
            used.len()
        )));
    }
    let fit = |mods: &[f64]| {
        let xs: Vec<f64> = used.iter().map(|&i| points[i].q_abs.ln()).collect();
        let ys: Vec<f64> = mods.iter().map(|m| m.max(1e-300).ln()).collect();
        linear_fit(&xs, &ys).map(|f| -f.slope).unwrap_or(f64::NAN)
    };
    let alpha_hat = fit(&used.iter().map(|&i| points[i].estimate.norm()).collect::<Vec<_>>());
    // per-block sums for every used radius
    let block = pts.len() / BOOT_BLOCKS;
    let sums: Vec<Vec<Complex64>> = (0..BOOT_BLOCKS)
        .into_par_iter()
        .map(|b| {
            let chunk = &pts[b * block..(b + 1) * block];
            used.iter()
                .map(|&i| {
                    let r = points[i].q_abs;
                    chunk.iter().map(|&z| phase([r * dir[0], r * dir[1]], z)).sum()
                })
                .collect()
        })
        .collect();
    let ci = bootstrap_ci(BOOT_BLOCKS, resamples.max(1), 0.95, seed, |idx| {
        let mods: Vec<f64> = (0..used.len())
            .map(|j| (idx.iter().map(|&b| sums[b][j]).sum::<Complex64>() / (idx.len() * block) as f64).norm())
            .collect();
        fit(&mods)
    });
    Ok(DecayScan {
        direction: dir,
        radii_used: used.iter().map(|&i| points[i].q_abs).collect(),
        points,
        alpha_hat,
        ci,
        noise_floor,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Linearization {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `|g(x) − g(y) − g'(y)(x − y)|` against `|g'(y)| |x − y|^{1+β}` for
/// `g = f_word`; needs `|x − y| ≤ eps`.
pub fn linearization_residual(ifs: &ConformalIfs, word: &[usize], x: Complex64, y: Complex64, beta: f64, eps: f64) -> Result<Linearization> {
    if (x - y).norm() > eps {
        return Err(Error::Precondition(format!("|x - y| = {} exceeds {eps}", (x - y).norm())));
    }
    if let Some(&s) = word.iter().find(|&&s| s >= ifs.len()) {
        return Err(Error::SymbolOutOfRange {
            symbol: s,
            alphabet: ifs.len(),
        });
    }
    let (gx, _) = ifs.eval_word_d(word, x);
    let (gy, dy) = ifs.eval_word_d(word, y);
    let lhs = (gx - gy - dy * (x - y)).norm();
    let rhs = dy.norm() * (x - y).norm().powf(1.0 + beta);
    Ok(Linearization { lhs, rhs, pass: lhs <= rhs })
}

/// Average of `|F̂_q(M_{e^{-y-k+ix}} ∘ f_tail ν)|²` over an `nx × ny` midpoint
/// grid of `(x, y) ∈ 𝕋 × [0, c_max]`, with `q = (q_magnitude, 0)`; mean and
/// standard error across grid cells.
pub fn oscillatory_average(
    ifs: &ConformalIfs,
    em: &EmpiricalMeasure,
    word_tail: &[usize],
    k: f64,
    q_magnitude: f64,
    grid: (usize, usize),
) -> Result<(f64, f64)> {
    if !(k > 0.0) {
        return Err(Error::Precondition(format!("k must be positive, got {k}")));
    }
    let (nx, ny) = grid;
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument("grid must be nonempty".into()));
    }
    let pushed: Vec<Complex64> = em.points.par_iter().map(|&z| ifs.eval_word_d(word_tail, z).0).collect();
    let cells: Vec<(f64, f64)> = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| (TAU * (i as f64 + 0.5) / nx as f64, (j as f64 + 0.5) / ny as f64)))
        .collect();
    let vals: Vec<f64> = cells
        .iter()
        .map(|&(x, yf)| {
            let y = yf * ifs.c_max;
            let m = Complex64::from_polar((-y - k).exp(), x);
            let scaled: Vec<Complex64> = pushed.iter().map(|&z| m * z).collect();
            fourier_points(&scaled, [q_magnitude, 0.0]).0.norm_sqr()
        })
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = if vals.len() > 1 { vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok((mean, (var / n).sqrt()))
}

/// `k` tied to `|q|` by `|q| = e^{k + kε/17}`.
pub fn k_for(q_abs: f64, eps: f64) -> f64 {
    q_abs.ln() / (1.0 + eps / 17.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub samples: usize,
    pub depth: usize,
    /// Walks for the equidistribution term.
    pub walks: usize,
    /// Words sampled for the linearization term.
    pub words: usize,
    pub grid: (usize, usize),
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            samples: 20_000,
            depth: 30,
            walks: 10_000,
            words: 32,
            grid: (12, 8),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BudgetRow {
    pub q_abs: f64,
    pub k: f64,
    pub r: f64,
    pub beta: f64,
    /// `|q| · max` linearization residual of `f_{ω|β_k}` on sample pairs.
    pub linearization: f64,
    /// KS distance of the overshoot law at level `k`.
    pub equidistribution: f64,
    /// Square root of the oscillatory average.
    pub oscillatory: f64,
    pub budget: f64,
    pub measured: f64,
    pub measured_stderr: f64,
    pub within_budget: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub eps: f64,
    pub rows: Vec<BudgetRow>,
    /// The samples lie on a line, so `F̂` cannot decay along its normal.
    pub on_a_line: bool,
    /// `|F̂|` along that normal at the largest `|q|` when `on_a_line`.
    pub normal_modulus: Option<f64>,
}

/// Unit normal of the best-fit line and the ratio of the small to the large
/// principal variance.
fn principal_normal(points: &[Complex64]) -> ([f64; 2], f64) {
    let n = points.len() as f64;
    let m = points.iter().sum::<Complex64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for z in points {
        let d = z - m;
        sxx += d.re * d.re;
        syy += d.im * d.im;
        sxy += d.re * d.im;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let (big, small) = (tr / 2.0 + disc, tr / 2.0 - disc);
    // eigenvector of the small eigenvalue
    let v = if sxy.abs() > 1e-300 { [sxy, small - sxx] } else if sxx <= syy { [1.0, 0.0] } else { [0.0, 1.0] };
    let nv = v[0].hypot(v[1]);
    ([v[0] / nv, v[1] / nv], if big > 0.0 { small.max(0.0) / big } else { 0.0 })
}

/// Per-`|q|` budget table along the direction `(1, 0)`.
pub fn decay_pipeline_report(ifs: &ConformalIfs, p: &ProbVector, q_list: &[f64], eps: f64, cfg: &PipelineConfig) -> Result<PipelineReport> {
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("eps must be positive, got {eps}")));
    }
    if q_list.iter().any(|&q| !(q > 1.0)) {
        return Err(Error::InvalidArgument("every |q| must exceed 1 so that k > 0".into()));
    }
    let em = sample_batch(ifs, p, cfg.samples, cfg.depth, cfg.seed)?;
    let beta = 0.5;
    let mut rows = Vec::with_capacity(q_list.len());
    for (qi, &q_abs) in q_list.iter().enumerate() {
        let k = k_for(q_abs, eps);
        let r = (-k * eps / 1000.0).exp();
        let mut lin = 0.0f64;
        let mut tail: Word = Vec::new();
        for w in 0..cfg.words {
            let walk = walk_until(ifs, p, k, cfg.seed, (qi * cfg.words + w) as u64, StopRule::Beta { eps })?;
            let m = walk.beta.unwrap_or(walk.tau);
            let word = &walk.omega_prefix[..m.min(walk.omega_prefix.len())];
            if w == 0 {
                tail = word.to_vec();
            }
            let (x, y) = (em.points[(2 * w) % em.len()], em.points[(2 * w + 1) % em.len()]);
            let res = linearization_residual(ifs, word, x, y, beta, f64::INFINITY)?;
            lin = lin.max(q_abs * res.lhs);
        }
        let law = overshoot_law(ifs, p, k, cfg.walks, cfg.seed, CircleUnit::Turns)?;
        let tail_rest: Word = if tail.len() > 1 { tail[tail.len() - 1..].to_vec() } else { tail.clone() };
        let (osc, _) = oscillatory_average(ifs, &em, &tail_rest, k, q_abs, cfg.grid)?;
        let (f, se) = fourier_mc(&em, [q_abs, 0.0]);
        let budget = lin + law.ks_overshoot.max(law.ks_angle) + osc.sqrt();
        rows.push(BudgetRow {
            q_abs,
            k,
            r,
            beta,
            linearization: lin,
            equidistribution: law.ks_overshoot.max(law.ks_angle),
            oscillatory: osc.sqrt(),
            budget,
            measured: f.norm(),
            measured_stderr: se,
            within_budget: f.norm() <= budget + 3.0 * se,
        });
    }
    let (normal, flat) = principal_normal(&em.points);
    let on_a_line = flat < 1e-20;
    let normal_modulus = on_a_line.then(|| {
        let qmax = q_list.iter().copied().fold(0.0, f64::max);
        fourier_mc(&em, [qmax * normal[0], qmax * normal[1]]).0.norm()
    });
    Ok(PipelineReport {
        eps,
        rows,
        on_a_line,
        normal_modulus,
    })
}

/// `|sin(πt)/(πt)|`, the modulus of the Lebesgue transform on `[0, 1]`.
pub fn sinc_modulus(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        ((PI * t).sin() / (PI * t)).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::measure::geometric_ladder;
    use approx::assert_abs_diff_eq;

    fn lebesgue(count: usize, seed: u64) -> EmpiricalMeasure {
        let fx = fixtures::lebesgue_segment();
        sample_batch(&fx.ifs, &fx.p, count, 40, seed).unwrap()
    }

    fn dirac(count: usize) -> EmpiricalMeasure {
        EmpiricalMeasure {
            points: vec![Complex64::new(0.0, 0.0); count],
            seed: 0,
            truncation_depth: 0,
            codes: None,
        }
    }

    #[test]
    fn fourier_examples() {
        let em = lebesgue(50_000, 1);
        assert_eq!(fourier_mc(&em, [0.0, 0.0]), (Complex64::new(1.0, 0.0), 0.0));
        let (f, se) = fourier_mc(&em, [2.0, 0.0]);
        assert!(f.norm() < 3.0 * se * 1.5, "{f} {se}");
        for u in [0.7, 3.0, 100.0] {
            assert_eq!(fourier_mc(&em, [0.0, u]).0, Complex64::new(1.0, 0.0));
        }
        for t in [0.5, 1.5, 4.0] {
            let (f, se) = fourier_mc(&em, [t, 0.0]);
            assert!((f.norm() - sinc_modulus(t)).abs() < 3.0 * se + 1e-3, "{t}");
        }
    }

    #[test]
    fn conjugate_symmetry_and_modulus() {
        let fx = fixtures::rotation_rich();
        let em = sample_batch(&fx.ifs, &fx.p, 10_000, 30, 3).unwrap();
        for q in [[1.0, 2.0], [-3.5, 0.25]] {
            let (a, _) = fourier_mc(&em, q);
            let (b, _) = fourier_mc(&em, [-q[0], -q[1]]);
            assert_eq!(a, b.conj());
            assert!(a.norm() <= 1.0);
        }
    }

    #[test]
    fn lebesgue_fit_along_both_axes() {
        let em = lebesgue(200_000, 2);
        let radii = [0.5, 1.5, 3.5, 7.5, 15.5];
        let scan = decay_fit(&em, [1.0, 0.0], &radii, em.len(), 100, 9).unwrap();
        assert!((scan.alpha_hat - 1.0).abs() < 0.15, "{}", scan.alpha_hat);
        assert!(scan.ci.0 <= scan.alpha_hat && scan.alpha_hat <= scan.ci.1);
        let flat = decay_fit(&em, [0.0, 2.0], &geometric_ladder(1.0, 64.0, 6), em.len(), 50, 9).unwrap();
        assert_abs_diff_eq!(flat.alpha_hat, 0.0, epsilon = 1e-12);
        let d = decay_fit(&dirac(1000), [1.0, 1.0], &geometric_ladder(1.0, 64.0, 6), 1000, 20, 1).unwrap();
        assert_abs_diff_eq!(d.alpha_hat, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_refused_below_noise_floor() {
        let em = lebesgue(1000, 3);
        let err = decay_fit(&em, [1.0, 0.0], &[1000.5, 2000.5, 4000.5], 1000, 10, 1).unwrap_err();
        assert!(matches!(err, Error::FitRefused(_)));
    }

    #[test]
    fn fit_invariant_under_translation() {
        let fx = fixtures::rotation_rich();
        let em = sample_batch(&fx.ifs, &fx.p, 20_000, 30, 4).unwrap();
        let shifted = em.map_points(|z| z + Complex64::new(0.3, -0.2));
        let radii = geometric_ladder(0.5, 8.0, 5);
        let a = decay_fit(&em, [1.0, 0.0], &radii, em.len(), 20, 1).unwrap();
        let b = decay_fit(&shifted, [1.0, 0.0], &radii, em.len(), 20, 1).unwrap();
        assert_abs_diff_eq!(a.alpha_hat, b.alpha_hat, epsilon = 1e-6);
    }

    #[test]
    fn linearization_examples() {
        let fx = fixtures::lebesgue_segment();
        let x = Complex64::new(0.1, 0.05);
        let y = Complex64::new(0.12, 0.0);
        let l = linearization_residual(&fx.ifs, &[0, 1], x, y, 0.5, 0.1).unwrap();
        assert!(l.lhs < 1e-15);
        assert!(l.pass);
        let hq = fixtures::half_quadratic();
        let l = linearization_residual(&hq.ifs, &[1], x, y, 0.5, 0.1).unwrap();
        assert_abs_diff_eq!(l.lhs, (x - y).norm_sqr() / 8.0, epsilon = 1e-15);
        let gp = (0.5 + y / 4.0).norm();
        assert_eq!(l.pass, (x - y).norm().powf(0.5) <= 8.0 * gp);
        assert!(linearization_residual(&hq.ifs, &[1], x, y + 1.0, 0.5, 0.1).is_err());
    }

    #[test]
    fn oscillatory_examples() {
        let fx = fixtures::lebesgue_segment();
        let em = lebesgue(4000, 5);
        let (v, _) = oscillatory_average(&fx.ifs, &em, &[], 1.0, 0.0, (4, 4)).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        let (v, _) = oscillatory_average(&fx.ifs, &dirac(100), &[], 1.0, 50.0, (4, 4)).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        // |F|² of the scaled segment is sinc²(|q| s cos x); compare cellwise averages
        let em = lebesgue(40_000, 6);
        let k = 1.0;
        let mut last = f64::INFINITY;
        for q in [2.0, 8.0, 32.0] {
            let (v, _) = oscillatory_average(&fx.ifs, &em, &[], k, q, (8, 4)).unwrap();
            let mut oracle = 0.0;
            for j in 0..4 {
                for i in 0..8 {
                    let x = TAU * (i as f64 + 0.5) / 8.0;
                    let y = (j as f64 + 0.5) / 4.0 * fx.ifs.c_max;
                    oracle += sinc_modulus(q * (-y - k).exp() * x.cos()).powi(2);
                }
            }
            oracle /= 32.0;
            assert!((v - oracle).abs() < 0.02, "{q}: {v} vs {oracle}");
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn pipeline_relation_and_line_flag() {
        assert_abs_diff_eq!(k_for((10.0f64 + 10.0 * 0.3 / 17.0).exp(), 0.3), 10.0, epsilon = 1e-12);
        let fx = fixtures::two_ratio();
        let cfg = PipelineConfig {
            samples: 4000,
            walks: 2000,
            words: 4,
            ..PipelineConfig::default()
        };
        let rep = decay_pipeline_report(&fx.ifs, &fx.p, &[20.0, 60.0], 0.5, &cfg).unwrap();
        assert!(rep.on_a_line);
        assert_abs_diff_eq!(rep.normal_modulus.unwrap(), 1.0, epsilon = 1e-12);
        assert!(decay_pipeline_report(&fx.ifs, &fx.p, &[20.0], 0.0, &cfg).is_err());
    }
}
