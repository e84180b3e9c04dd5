//! Chaos-game sampling of self-conformal measures and ball-mass statistics.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::{ConformalIfs, HolomorphicMap};
use crate::rng::{self, domain};
use crate::stats::linear_fit;

/// Strictly positive weights summing to one within 1e-12.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector {
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ProbVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidProbability("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidProbability(format!("weight {w} is not strictly positive")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProbability(format!("weights sum to {sum}, not 1")));
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(ProbVector { weights, cumulative })
    }

    /// Normalizes positive weights; for derived vectors whose sum is only 1 up to rounding.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self::new(vec![1.0 / n as f64; n.max(1)]).unwrap_or_else(|_| {
            // 1/n rounding can leave the sum a few ulps away from 1
            Self::normalized(vec![1.0; n.max(1)]).expect("uniform weights")
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen::<f64>() * self.cumulative[self.cumulative.len() - 1];
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.weights.len() - 1)
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ProbVector::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Vec<f64> {
        p.weights
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    pub points: Vec<Complex64>,
    pub seed: u64,
    pub truncation_depth: usize,
    /// Digits `u_1 … u_depth` behind each point (outermost map first), kept
    /// only when requested.
    pub codes: Option<Vec<Vec<u16>>>,
}

impl EmpiricalMeasure {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Push the samples forward by `g`.
    pub fn map_points(&self, g: impl Fn(Complex64) -> Complex64 + Sync) -> EmpiricalMeasure {
        EmpiricalMeasure {
            points: self.points.par_iter().map(|&z| g(z)).collect(),
            seed: self.seed,
            truncation_depth: self.truncation_depth,
            codes: None,
        }
    }

    /// Dump as CSV with header `re,im`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "re,im")?;
        for z in &self.points {
            writeln!(out, "{},{}", z.re, z.im)?;
        }
        Ok(())
    }
}

/// Depth with `rho^depth ≤ tol`.
pub fn default_depth(rho: f64, tol: f64) -> usize {
    ((tol.ln() / rho.ln()).ceil() as usize).max(1)
}

/// Chaos game: point `i` is `f_{d_1} ∘ … ∘ f_{d_depth}(0)` where the digit at
/// level `j` is drawn by `draw(rng, j)` and names a map of `maps`.
pub(crate) fn chaos_game<D>(
    maps: &[HolomorphicMap],
    count: usize,
    depth: usize,
    seed: u64,
    stream: u64,
    keep_codes: bool,
    draw: D,
) -> EmpiricalMeasure
where
    D: Fn(&mut rand_chacha::ChaCha8Rng, usize) -> usize + Sync,
{
    let items = rng::par_generate(count, seed, stream, |r, _| {
        let digits: Vec<u16> = (0..depth).map(|j| draw(r, j) as u16).collect();
        let z = digits
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |x, &d| maps[d as usize].eval(x));
        (z, digits)
    });
    let (points, codes): (Vec<_>, Vec<_>) = items.into_iter().unzip();
    EmpiricalMeasure {
        points,
        seed,
        truncation_depth: depth,
        codes: keep_codes.then_some(codes),
    }
}

fn check_weights(ifs: &ConformalIfs, p: &ProbVector) -> Result<()> {
    if ifs.len() != p.len() {
        return Err(Error::InvalidArgument(format!(
            "{} maps but {} weights",
            ifs.len(),
            p.len()
        )));
    }
    Ok(())
}

/// `count` i.i.d. samples of the truncated coding map, digits drawn from `p`.
pub fn sample_batch(
    ifs: &ConformalIfs,
    p: &ProbVector,
    count: usize,
    depth: usize,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    check_weights(ifs, p)?;
    Ok(chaos_game(ifs.maps(), count, depth, seed, domain::SAMPLE, false, |r, _| p.sample(r)))
}

/// As [`sample_batch`] but keeping the digit sequence of every point.
pub fn sample_coded(
    ifs: &ConformalIfs,
    p: &ProbVector,
    count: usize,
    depth: usize,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    check_weights(ifs, p)?;
    if ifs.len() > u16::MAX as usize {
        return Err(Error::TooLarge {
            what: "alphabet for coded sampling",
            count: ifs.len() as u128,
            cap: u16::MAX as u128,
        });
    }
    Ok(chaos_game(ifs.maps(), count, depth, seed, domain::SAMPLE, true, |r, _| p.sample(r)))
}

/// `p_{w_1} ⋯ p_{w_m}`; the empty word has mass 1.
pub fn cylinder_measure(p: &ProbVector, w: &[usize]) -> f64 {
    w.iter().map(|&s| p.get(s)).product()
}

fn evenly_spaced(n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n).max(1);
    (0..k).map(|i| i * n / k).collect()
}

/// Counts of samples (other than the center itself when `exclude_self`)
/// within each radius of `radii` around `center`.
fn ball_counts(points: &[Complex64], center: usize, radii: &[f64], exclude_self: bool) -> Vec<usize> {
    let c = points[center];
    let r2: Vec<f64> = radii.iter().map(|r| r * r).collect();
    let mut counts = vec![0usize; radii.len()];
    for (i, z) in points.iter().enumerate() {
        if exclude_self && i == center {
            continue;
        }
        let d = (z - c).norm_sqr();
        for (k, rr) in r2.iter().enumerate() {
            if d <= *rr {
                counts[k] += 1;
            }
        }
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalDimension {
    /// Slope of the center-averaged `log ν̂(B(x, r))` against `log r`.
    pub d_hat: f64,
    pub fit_residual: f64,
    /// Slope of `log max_x ν̂(B(x, r))`; estimates the Frostman exponent `d`
    /// in `sup_y ν(B_r(y)) ≤ C r^d`.
    pub frostman_exponent: f64,
}

/// Geometric ladder `lo · ratio^k` up to and including `hi`.
pub fn geometric_ladder(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let step = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|k| lo * (step * k as f64).exp()).collect()
}

pub fn local_dimension_estimate(em: &EmpiricalMeasure, centers: usize, radii: &[f64]) -> Result<LocalDimension> {
    if radii.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "degenerate ladder: {} radii, need at least 3",
            radii.len()
        )));
    }
    if em.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let n = em.len() as f64;
    let idx = evenly_spaced(em.len(), centers);
    let counts: Vec<Vec<usize>> = idx.par_iter().map(|&c| ball_counts(&em.points, c, radii, false)).collect();
    let logr: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let typical: Vec<f64> = (0..radii.len())
        .map(|k| counts.iter().map(|c| (c[k] as f64 / n).ln()).sum::<f64>() / counts.len() as f64)
        .collect();
    let worst: Vec<f64> = (0..radii.len())
        .map(|k| (counts.iter().map(|c| c[k]).max().unwrap_or(1) as f64 / n).ln())
        .collect();
    let fit = linear_fit(&logr, &typical).ok_or_else(|| Error::InvalidArgument("radii must be distinct".into()))?;
    let frost = linear_fit(&logr, &worst).expect("same abscissae");
    Ok(LocalDimension {
        d_hat: fit.slope.clamp(0.0, 2.0),
        fit_residual: fit.residual,
        frostman_exponent: frost.slope.clamp(0.0, 2.0),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoublingReport {
    pub ratio: f64,
    /// Centers whose inner ball held no other sample.
    pub excluded: usize,
    pub tested: usize,
}

/// `max_x ν̂(B(x, factor·r)) / ν̂(B(x, r))` over sample points used as centers.
/// The center itself is not counted, so an isolated sample reports an empty
/// inner ball instead of a spurious mass.
pub fn doubling_ratio(em: &EmpiricalMeasure, centers_on_support: usize, r: f64, factor: f64) -> Result<DoublingReport> {
    if factor < 1.0 || r <= 0.0 {
        return Err(Error::InvalidArgument(format!("need r > 0 and factor >= 1, got r={r}, factor={factor}")));
    }
    let idx = evenly_spaced(em.len(), centers_on_support);
    let counts: Vec<Vec<usize>> = idx
        .par_iter()
        .map(|&c| ball_counts(&em.points, c, &[r, factor * r], true))
        .collect();
    let excluded = counts.iter().filter(|c| c[0] == 0).count();
    let ratio = counts
        .iter()
        .filter(|c| c[0] > 0)
        .map(|c| c[1] as f64 / c[0] as f64)
        .fold(f64::NAN, f64::max);
    if ratio.is_nan() {
        return Err(Error::InvalidArgument(format!("every inner ball of radius {r} is empty")));
    }
    Ok(DoublingReport {
        ratio,
        excluded,
        tested: idx.len(),
    })
}
