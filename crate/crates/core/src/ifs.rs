//! Holomorphic contractions of the closed unit disc, word composition and the
//! norm/angle derivative cocycles.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite sequence of 0-based map indices. `f_w = f_{w[0]} ∘ … ∘ f_{w[m-1]}`.
pub type Word = Vec<usize>;

/// Tolerance on `|z| ≤ 1` for points handed to the cocycle routines.
pub const DISC_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Affine,
    Polynomial,
    Moebius,
}

/// Config-facing description of a map. Affine and polynomial coefficients are
/// listed by ascending power; moebius takes `[a, b, c, d]` for `(az+b)/(cz+d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub kind: MapKind,
    pub coefficients: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HolomorphicMap {
    /// `a z + b`
    Affine { a: Complex64, b: Complex64 },
    /// `Σ coeffs[k] z^k`
    Polynomial { coeffs: Vec<Complex64> },
    /// `(a z + b) / (c z + d)`
    Moebius {
        a: Complex64,
        b: Complex64,
        c: Complex64,
        d: Complex64,
    },
    /// `parts[0] ∘ parts[1] ∘ …`, produced by composition when no closed form is kept.
    Composite { parts: Vec<HolomorphicMap> },
}

impl HolomorphicMap {
    pub fn affine(a: Complex64, b: Complex64) -> Self {
        HolomorphicMap::Affine { a, b }
    }

    /// Real-coefficient affine shorthand used all over the tests.
    pub fn scale_shift(r: f64, shift: f64) -> Self {
        Self::affine(Complex64::new(r, 0.0), Complex64::new(shift, 0.0))
    }

    pub fn polynomial(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidMap("polynomial needs at least one coefficient".into()));
        }
        Ok(HolomorphicMap::Polynomial { coeffs })
    }

    pub fn moebius(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Result<Self> {
        let gap = d.norm() - c.norm();
        if gap <= 0.0 {
            return Err(Error::PoleInside { gap });
        }
        if (a * d - b * c).norm() == 0.0 {
            return Err(Error::InvalidMap("moebius determinant vanishes".into()));
        }
        Ok(HolomorphicMap::Moebius { a, b, c, d })
    }

    pub fn from_spec(spec: &MapSpec) -> Result<Self> {
        let cs: Vec<Complex64> = spec
            .coefficients
            .iter()
            .map(|[re, im]| Complex64::new(*re, *im))
            .collect();
        if cs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidMap("non-finite coefficient".into()));
        }
        match spec.kind {
            MapKind::Affine => match cs.as_slice() {
                [b, a] => Ok(Self::affine(*a, *b)),
                _ => Err(Error::InvalidMap(format!(
                    "affine map takes 2 coefficients, got {}",
                    cs.len()
                ))),
            },
            MapKind::Polynomial => Self::polynomial(cs),
            MapKind::Moebius => match cs.as_slice() {
                [a, b, c, d] => Self::moebius(*a, *b, *c, *d),
                _ => Err(Error::InvalidMap(format!(
                    "moebius map takes 4 coefficients, got {}",
                    cs.len()
                ))),
            },
        }
    }

    pub fn kind(&self) -> Option<MapKind> {
        match self {
            HolomorphicMap::Affine { .. } => Some(MapKind::Affine),
            HolomorphicMap::Polynomial { .. } => Some(MapKind::Polynomial),
            HolomorphicMap::Moebius { .. } => Some(MapKind::Moebius),
            HolomorphicMap::Composite { .. } => None,
        }
    }

    #[inline]
    pub fn eval(&self, z: Complex64) -> Complex64 {
        match self {
            HolomorphicMap::Affine { a, b } => a * z + b,
            HolomorphicMap::Polynomial { coeffs } => {
                coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
            }
            HolomorphicMap::Moebius { a, b, c, d } => (a * z + b) / (c * z + d),
            HolomorphicMap::Composite { parts } => parts.iter().rev().fold(z, |x, m| m.eval(x)),
        }
    }

    /// Value and complex derivative.
    #[inline]
    pub fn eval_d(&self, z: Complex64) -> (Complex64, Complex64) {
        match self {
            HolomorphicMap::Affine { a, b } => (a * z + b, *a),
            HolomorphicMap::Polynomial { coeffs } => {
                let zero = Complex64::new(0.0, 0.0);
                let (mut p, mut dp) = (zero, zero);
                for c in coeffs.iter().rev() {
                    dp = dp * z + p;
                    p = p * z + c;
                }
                (p, dp)
            }
            HolomorphicMap::Moebius { a, b, c, d } => {
                let w = c * z + d;
                ((a * z + b) / w, (a * d - b * c) / (w * w))
            }
            HolomorphicMap::Composite { parts } => {
                let mut x = z;
                let mut der = Complex64::new(1.0, 0.0);
                for m in parts.iter().rev() {
                    let (v, d) = m.eval_d(x);
                    der *= d;
                    x = v;
                }
                (x, der)
            }
        }
    }

    /// Value, first and second complex derivatives.
    pub fn eval_d2(&self, z: Complex64) -> (Complex64, Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        match self {
            HolomorphicMap::Affine { a, b } => (a * z + b, *a, zero),
            HolomorphicMap::Polynomial { coeffs } => {
                let (mut p, mut dp, mut ddp) = (zero, zero, zero);
                for c in coeffs.iter().rev() {
                    ddp = ddp * z + 2.0 * dp;
                    dp = dp * z + p;
                    p = p * z + c;
                }
                (p, dp, ddp)
            }
            HolomorphicMap::Moebius { a, b, c, d } => {
                let w = c * z + d;
                let det = a * d - b * c;
                ((a * z + b) / w, det / (w * w), -2.0 * c * det / (w * w * w))
            }
            HolomorphicMap::Composite { parts } => {
                let mut x = z;
                let mut d1 = Complex64::new(1.0, 0.0);
                let mut d2 = zero;
                for m in parts.iter().rev() {
                    let (v, g1, g2) = m.eval_d2(x);
                    d2 = g2 * d1 * d1 + g1 * d2;
                    d1 *= g1;
                    x = v;
                }
                (x, d1, d2)
            }
        }
    }

    /// `self ∘ inner`, kept in closed form whenever the family is closed under it.
    pub fn compose(&self, inner: &HolomorphicMap) -> HolomorphicMap {
        use HolomorphicMap::*;
        match (self, inner) {
            (Affine { a: a1, b: b1 }, Affine { a: a2, b: b2 }) => Affine {
                a: a1 * a2,
                b: a1 * b2 + b1,
            },
            (Affine { .. } | Moebius { .. }, Affine { .. } | Moebius { .. }) => {
                let [a1, b1, c1, d1] = self.moebius_matrix().expect("affine or moebius");
                let [a2, b2, c2, d2] = inner.moebius_matrix().expect("affine or moebius");
                Moebius {
                    a: a1 * a2 + b1 * c2,
                    b: a1 * b2 + b1 * d2,
                    c: c1 * a2 + d1 * c2,
                    d: c1 * b2 + d1 * d2,
                }
            }
            (Polynomial { coeffs }, Affine { a, b }) => Polynomial {
                coeffs: poly_compose(coeffs, &[*b, *a]),
            },
            (Affine { a, b }, Polynomial { coeffs }) => {
                let mut out: Vec<Complex64> = coeffs.iter().map(|c| a * c).collect();
                out[0] += b;
                Polynomial { coeffs: out }
            }
            _ => {
                let mut parts = Vec::new();
                for m in [self, inner] {
                    match m {
                        Composite { parts: p } => parts.extend(p.iter().cloned()),
                        other => parts.push(other.clone()),
                    }
                }
                Composite { parts }
            }
        }
    }

    fn moebius_matrix(&self) -> Option<[Complex64; 4]> {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        match self {
            HolomorphicMap::Affine { a, b } => Some([*a, *b, zero, one]),
            HolomorphicMap::Moebius { a, b, c, d } => Some([*a, *b, *c, *d]),
            _ => None,
        }
    }

    /// Pole check for moebius pieces (also inside composites).
    fn pole_gap(&self) -> Option<f64> {
        match self {
            HolomorphicMap::Moebius { c, d, .. } => Some(d.norm() - c.norm()),
            HolomorphicMap::Composite { parts } => parts
                .iter()
                .filter_map(|p| p.pole_gap())
                .min_by(|a, b| a.total_cmp(b)),
            _ => None,
        }
    }
}

fn poly_mul(p: &[Complex64], q: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); p.len() + q.len() - 1];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

fn poly_compose(p: &[Complex64], q: &[Complex64]) -> Vec<Complex64> {
    let mut acc = vec![*p.last().expect("nonempty polynomial")];
    for c in p.iter().rev().skip(1) {
        acc = poly_mul(&acc, q);
        acc[0] += c;
    }
    acc
}

/// Lattice points of spacing `step` inside the closed disc together with
/// `boundary` equally spaced points on the unit circle (angle 0 included).
pub fn disc_sample(step: f64, boundary: usize) -> Vec<Complex64> {
    let m = (1.0 / step).floor() as i64;
    let mut pts = Vec::new();
    for j in -m..=m {
        for i in -m..=m {
            let z = Complex64::new(i as f64 * step, j as f64 * step);
            if z.norm() <= 1.0 {
                pts.push(z);
            }
        }
    }
    pts.extend(circle_points(boundary, 1.0));
    pts
}

pub fn circle_points(count: usize, radius: f64) -> impl Iterator<Item = Complex64> {
    (0..count).map(move |k| Complex64::from_polar(radius, TAU * k as f64 / count as f64))
}

/// Iterate `f` from 0 until the step drops below 1e-14.
pub fn fixed_point(f: &HolomorphicMap) -> Option<Complex64> {
    let mut x = Complex64::new(0.0, 0.0);
    for _ in 0..100_000 {
        let y = f.eval(x);
        if !y.re.is_finite() || !y.im.is_finite() || y.norm() > 1e6 {
            return None;
        }
        if (y - x).norm() < 1e-14 {
            return Some(y);
        }
        x = y;
    }
    None
}

/// A finite family of holomorphic maps of the disc with measured contraction
/// constants. Construction does not validate; see [`validate_ifs`].
#[derive(Clone, Debug)]
pub struct ConformalIfs {
    maps: Vec<HolomorphicMap>,
    labels: Vec<Word>,
    pub rho_min: f64,
    pub rho: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub l_hat: f64,
    pub tilde_c: f64,
}

/// Sampling used for the constants stored on an IFS.
const RANGE_STEP: f64 = 0.05;
const RANGE_BOUNDARY: usize = 1024;
const CONSTANT_WORD_BUDGET: usize = 64;

impl ConformalIfs {
    pub fn new(maps: Vec<HolomorphicMap>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidArgument("an IFS needs at least one map".into()));
        }
        let labels = (0..maps.len()).map(|i| vec![i]).collect();
        let mut ifs = Self::with_labels(maps, labels)?;
        let pts = disc_sample(RANGE_STEP, RANGE_BOUNDARY / 4);
        let mut depth = 1;
        while depth < 2 && ifs.len().pow(depth as u32 + 1) <= CONSTANT_WORD_BUDGET {
            depth += 1;
        }
        ifs.l_hat = distortion_over(&ifs, depth, &pts);
        ifs.tilde_c = gradient_bound_over(&ifs, depth, &pts);
        Ok(ifs)
    }

    pub fn from_specs(specs: &[MapSpec]) -> Result<Self> {
        Self::new(specs.iter().map(HolomorphicMap::from_spec).collect::<Result<_>>()?)
    }

    fn with_labels(maps: Vec<HolomorphicMap>, labels: Vec<Word>) -> Result<Self> {
        for m in &maps {
            if let Some(gap) = m.pole_gap() {
                if gap <= 0.0 {
                    return Err(Error::PoleInside { gap });
                }
            }
        }
        let pts = disc_sample(RANGE_STEP, RANGE_BOUNDARY);
        let (lo, hi) = maps
            .par_iter()
            .map(|m| derivative_range(m, &pts))
            .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
        if lo <= 0.0 || !hi.is_finite() {
            return Err(Error::InvalidMap("derivative vanishes or blows up on the disc".into()));
        }
        Ok(ConformalIfs {
            maps,
            labels,
            rho_min: lo,
            rho: hi,
            c_min: -hi.ln(),
            c_max: -lo.ln(),
            l_hat: 1.0,
            tilde_c: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn maps(&self) -> &[HolomorphicMap] {
        &self.maps
    }

    pub fn map(&self, i: usize) -> &HolomorphicMap {
        &self.maps[i]
    }

    /// Word over the original alphabet that each map stands for (length 1
    /// unless this IFS was produced by [`induce`]).
    pub fn labels(&self) -> &[Word] {
        &self.labels
    }

    fn check_word(&self, w: &[usize]) -> Result<()> {
        match w.iter().find(|&&s| s >= self.maps.len()) {
            Some(&symbol) => Err(Error::SymbolOutOfRange {
                symbol,
                alphabet: self.maps.len(),
            }),
            None => Ok(()),
        }
    }

    /// Unchecked composition; the hot path for samplers and operators.
    #[inline]
    pub fn eval_word_d(&self, w: &[usize], z: Complex64) -> (Complex64, Complex64) {
        let mut x = z;
        let mut der = Complex64::new(1.0, 0.0);
        for &s in w.iter().rev() {
            let (v, d) = self.maps[s].eval_d(x);
            der *= d;
            x = v;
        }
        (x, der)
    }
}

fn check_point(z: Complex64) -> Result<()> {
    if z.norm() > 1.0 + DISC_TOL || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::OutsideDisc { re: z.re, im: z.im });
    }
    Ok(())
}

fn derivative_range(m: &HolomorphicMap, pts: &[Complex64]) -> (f64, f64) {
    pts.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &z| {
        let d = m.eval_d(z).1.norm();
        (lo.min(d), hi.max(d))
    })
}

/// `(f_w(z), f_w'(z))`.
pub fn word_eval(ifs: &ConformalIfs, w: &[usize], z: Complex64) -> Result<(Complex64, Complex64)> {
    ifs.check_word(w)?;
    check_point(z)?;
    Ok(ifs.eval_word_d(w, z))
}

/// `(c, θ)` with `f_w'(z) = e^{-c + iθ}`, θ in `[0, 2π)`. The angle is summed
/// one composition step at a time so no branch of `arg` is crossed.
pub fn cocycle(ifs: &ConformalIfs, w: &[usize], z: Complex64) -> Result<(f64, f64)> {
    if w.is_empty() {
        return Err(Error::InvalidArgument("cocycle of the empty word".into()));
    }
    ifs.check_word(w)?;
    check_point(z)?;
    let mut x = z;
    let (mut c, mut theta) = (0.0, 0.0);
    for &s in w.iter().rev() {
        let (v, d) = ifs.maps[s].eval_d(x);
        if d.norm() == 0.0 {
            return Err(Error::ZeroDerivative { re: x.re, im: x.im });
        }
        c -= d.norm().ln();
        theta += d.arg();
        x = v;
    }
    Ok((c, theta.rem_euclid(TAU)))
}

/// `(log f_w')'(z)`, assembled along the orbit by the chain rule.
pub fn log_derivative_slope(ifs: &ConformalIfs, w: &[usize], z: Complex64) -> Complex64 {
    let mut x = z;
    let mut inner = Complex64::new(1.0, 0.0);
    let mut g = Complex64::new(0.0, 0.0);
    for &s in w.iter().rev() {
        let (v, d1, d2) = ifs.maps[s].eval_d2(x);
        g += d2 / d1 * inner;
        inner *= d1;
        x = v;
    }
    g
}

/// `∇ log|f_w'|` at `z`, from Cauchy–Riemann on `g = log f_w'`.
pub fn grad_log_modulus(ifs: &ConformalIfs, w: &[usize], z: Complex64) -> Result<[f64; 2]> {
    ifs.check_word(w)?;
    check_point(z)?;
    let g = log_derivative_slope(ifs, w, z);
    Ok([g.re, -g.im])
}

/// `∇ arg f_w'` at `z` (harmonic conjugate of `log|f_w'|`).
pub fn grad_arg(ifs: &ConformalIfs, w: &[usize], z: Complex64) -> Result<[f64; 2]> {
    ifs.check_word(w)?;
    check_point(z)?;
    let g = log_derivative_slope(ifs, w, z);
    Ok([g.im, g.re])
}

/// All words of exactly length `n` in lexicographic order.
pub fn words_of_length(alphabet: usize, n: usize) -> Vec<Word> {
    let mut out = vec![Vec::with_capacity(n)];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|w| {
                (0..alphabet).map(move |s| {
                    let mut v = w.clone();
                    v.push(s);
                    v
                })
            })
            .collect();
    }
    out
}

fn words_up_to(alphabet: usize, depth: usize) -> Vec<Word> {
    (1..=depth).flat_map(|n| words_of_length(alphabet, n)).collect()
}

fn distortion_over(ifs: &ConformalIfs, depth: usize, pts: &[Complex64]) -> f64 {
    words_up_to(ifs.len(), depth)
        .par_iter()
        .map(|w| {
            let (lo, hi) = pts.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &z| {
                let d = ifs.eval_word_d(w, z).1.norm();
                (lo.min(d), hi.max(d))
            });
            hi / lo
        })
        .reduce(|| 1.0, f64::max)
}

fn gradient_bound_over(ifs: &ConformalIfs, depth: usize, pts: &[Complex64]) -> f64 {
    words_up_to(ifs.len(), depth)
        .par_iter()
        .map(|w| {
            pts.iter()
                .map(|&z| log_derivative_slope(ifs, w, z).norm())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// `L̂`: largest ratio `sup|f_η'| / inf|f_η'|` over all words up to `depth`,
/// with `sup`/`inf` taken over a lattice of spacing `grid_step` plus boundary points.
pub fn distortion_estimate(ifs: &ConformalIfs, depth: usize, grid_step: f64) -> Result<f64> {
    if depth == 0 {
        return Err(Error::InvalidArgument("distortion depth must be at least 1".into()));
    }
    let count: u128 = (1..=depth).map(|n| (ifs.len() as u128).pow(n as u32)).sum();
    if count > 1 << 20 {
        return Err(Error::TooLarge {
            what: "distortion word count",
            count,
            cap: 1 << 20,
        });
    }
    let boundary = ((TAU / grid_step).ceil() as usize).max(256).next_multiple_of(4);
    Ok(distortion_over(ifs, depth, &disc_sample(grid_step, boundary)))
}

/// Sup of `|∇ log|f_η'||` over words up to `depth` (the constant `C̃`).
pub fn gradient_bound_estimate(ifs: &ConformalIfs, depth: usize, grid_step: f64) -> f64 {
    let boundary = ((TAU / grid_step).ceil() as usize).max(256);
    gradient_bound_over(ifs, depth, &disc_sample(grid_step, boundary))
}

/// The `N`-generation IFS made of all compositions `f_w`, `|w| = N`.
/// Distortion and gradient constants are inherited from the parent.
pub fn induce(ifs: &ConformalIfs, n: usize, cap: usize) -> Result<ConformalIfs> {
    if n == 0 {
        return Err(Error::InvalidArgument("inducing depth must be at least 1".into()));
    }
    let count = (ifs.len() as u128).saturating_pow(n as u32);
    if count > cap as u128 {
        return Err(Error::TooLarge {
            what: "induced map count",
            count,
            cap: cap as u128,
        });
    }
    let words = words_of_length(ifs.len(), n);
    let maps: Vec<HolomorphicMap> = words
        .iter()
        .map(|w| {
            w.iter()
                .rev()
                .skip(1)
                .fold(ifs.maps[*w.last().unwrap()].clone(), |acc, &s| ifs.maps[s].compose(&acc))
        })
        .collect();
    let labels = words
        .iter()
        .map(|w| w.iter().flat_map(|&s| ifs.labels[s].iter().copied()).collect())
        .collect();
    let mut out = ConformalIfs::with_labels(maps, labels)?;
    out.l_hat = ifs.l_hat;
    out.tilde_c = ifs.tilde_c;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MapReport {
    pub index: usize,
    pub max_boundary_modulus: f64,
    /// Boundary maximum inflated by the Lipschitz slack `rho · spacing / 2`.
    pub certified_bound: f64,
    pub sup_derivative: f64,
    pub inf_derivative: f64,
    pub fixed_point: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    Expansion { map: usize, sup_derivative: f64 },
    ImageOutside { map: usize, boundary_modulus: f64 },
    NoFixedPoint { map: usize },
    NoDistinctFixedPoints,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub maps: Vec<MapReport>,
    pub margin: f64,
    pub rho_min: f64,
    pub rho: f64,
    pub distinct_fixed_points: bool,
    pub l_hat: f64,
    pub tilde_c: f64,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the standing hypotheses: images inside the disc (boundary sampling),
/// strict contraction, and an infinite attractor (two distinct fixed points).
pub fn validate_ifs(
    ifs: &ConformalIfs,
    boundary_samples: usize,
    margin: f64,
    distortion_depth: usize,
) -> Result<ValidationReport> {
    if boundary_samples < 256 {
        return Err(Error::InvalidArgument(format!(
            "boundary_samples must be at least 256, got {boundary_samples}"
        )));
    }
    let grid_step = 0.02;
    let pts = disc_sample(grid_step, boundary_samples);
    let spacing = TAU / boundary_samples as f64;
    let mut violations = Vec::new();
    let mut maps = Vec::with_capacity(ifs.len());
    for (index, m) in ifs.maps.iter().enumerate() {
        let max_boundary_modulus = circle_points(boundary_samples, 1.0)
            .map(|z| m.eval(z).norm())
            .fold(0.0, f64::max);
        let (inf_derivative, sup_derivative) = derivative_range(m, &pts);
        let fp = fixed_point(m);
        if sup_derivative >= 1.0 {
            violations.push(Violation::Expansion {
                map: index,
                sup_derivative,
            });
        }
        if max_boundary_modulus > 1.0 - margin + 1e-12 {
            violations.push(Violation::ImageOutside {
                map: index,
                boundary_modulus: max_boundary_modulus,
            });
        }
        if fp.is_none() {
            violations.push(Violation::NoFixedPoint { map: index });
        }
        maps.push(MapReport {
            index,
            max_boundary_modulus,
            certified_bound: max_boundary_modulus + sup_derivative * spacing / 2.0,
            sup_derivative,
            inf_derivative,
            fixed_point: fp.map(|z| [z.re, z.im]),
        });
    }
    let fps: Vec<[f64; 2]> = maps.iter().filter_map(|m| m.fixed_point).collect();
    let distinct_fixed_points = fps.iter().any(|a| {
        fps.iter()
            .any(|b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() > 1e-9)
    });
    if !distinct_fixed_points {
        violations.push(Violation::NoDistinctFixedPoints);
    }
    let rho_min = maps.iter().map(|m| m.inf_derivative).fold(f64::INFINITY, f64::min);
    let rho = maps.iter().map(|m| m.sup_derivative).fold(0.0, f64::max);
    let depth = distortion_depth.max(1);
    let contracting = violations.iter().all(|v| !matches!(v, Violation::Expansion { .. }));
    let (l_hat, tilde_c) = if contracting {
        (
            distortion_estimate(ifs, depth, 0.05)?,
            gradient_bound_estimate(ifs, depth, 0.05),
        )
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(ValidationReport {
        maps,
        margin,
        rho_min,
        rho,
        distinct_fixed_points,
        l_hat,
        tilde_c,
        violations,
    })
}

/// Angle difference reduced to `[-π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(TAU) - PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn quad() -> ConformalIfs {
        ConformalIfs::new(vec![HolomorphicMap::polynomial(vec![c(0.0, 0.0), c(0.5, 0.0), c(0.125, 0.0)]).unwrap()])
            .unwrap()
    }

    fn halves() -> ConformalIfs {
        ConformalIfs::new(vec![HolomorphicMap::scale_shift(0.5, 0.0), HolomorphicMap::scale_shift(0.5, 0.5)])
            .unwrap()
    }

    #[test]
    fn word_eval_composes_left_to_right() {
        let (v, d) = word_eval(&halves(), &[1, 0], c(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(v.re, 0.5);
        assert_abs_diff_eq!(d.re, 0.25);
        let single = ConformalIfs::new(vec![HolomorphicMap::scale_shift(0.5, 0.0)]).unwrap();
        let (v, d) = word_eval(&single, &[0, 0, 0], c(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(v.re, 0.125);
        assert_abs_diff_eq!(d.re, 0.125);
    }

    #[test]
    fn quadratic_value_and_derivative_at_one() {
        let (v, d) = word_eval(&quad(), &[0], c(1.0, 0.0)).unwrap();
        // 1/2 + 1/8 and 1/2 + 2/8
        assert_abs_diff_eq!(v.re, 0.625, epsilon = 1e-15);
        assert_abs_diff_eq!(d.re, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, 0.0);
    }

    #[test]
    fn out_of_range_and_outside_disc_rejected() {
        assert!(matches!(
            word_eval(&halves(), &[2], c(0.0, 0.0)),
            Err(Error::SymbolOutOfRange { symbol: 2, alphabet: 2 })
        ));
        assert!(matches!(word_eval(&halves(), &[0], c(1.5, 0.0)), Err(Error::OutsideDisc { .. })));
    }

    #[test]
    fn moebius_pole_inside_rejected() {
        let one = c(1.0, 0.0);
        assert!(matches!(
            HolomorphicMap::moebius(one, c(0.0, 0.0), c(2.0, 0.0), one),
            Err(Error::PoleInside { .. })
        ));
    }

    #[test]
    fn cocycle_of_rotating_similarity() {
        let ifs = ConformalIfs::new(vec![HolomorphicMap::affine(c(0.5, 0.5), c(0.0, 0.0))]).unwrap();
        let (cc, th) = cocycle(&ifs, &[0], c(0.3, -0.2)).unwrap();
        assert_abs_diff_eq!(cc, 0.5 * 2f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(th, PI / 4.0, epsilon = 1e-14);
        let (cc, th) = cocycle(&ifs, &[0, 0], c(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(cc, 2f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(th, PI / 2.0, epsilon = 1e-14);
        let (cc, th) = cocycle(&quad(), &[0], c(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(cc, 2f64.ln(), epsilon = 1e-15);
        assert_eq!(th, 0.0);
    }

    #[test]
    fn cocycle_angle_lands_in_range() {
        let ifs = ConformalIfs::new(vec![HolomorphicMap::affine(c(-0.5, -1e-3), c(0.0, 0.0))]).unwrap();
        for n in 1..6 {
            let (_, th) = cocycle(&ifs, &vec![0; n], c(0.0, 0.0)).unwrap();
            assert!((0.0..TAU).contains(&th));
        }
    }

    #[test]
    fn grad_log_modulus_examples() {
        let g = grad_log_modulus(&halves(), &[0, 1, 1], c(0.2, 0.1)).unwrap();
        assert_eq!(g, [0.0, 0.0]);
        let g = grad_log_modulus(&quad(), &[0], c(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(g[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-15);
        // centered differences of log|f'| at i/2
        let z = c(0.0, 0.5);
        let h = 1e-5;
        let lm = |z: Complex64| (0.5 + z / 4.0).norm().ln();
        let fd = [
            (lm(z + h) - lm(z - h)) / (2.0 * h),
            (lm(z + c(0.0, h)) - lm(z - c(0.0, h))) / (2.0 * h),
        ];
        let g = grad_log_modulus(&quad(), &[0], z).unwrap();
        assert_abs_diff_eq!(g[0], fd[0], epsilon = 1e-6);
        assert_abs_diff_eq!(g[1], fd[1], epsilon = 1e-6);
    }

    #[test]
    fn grad_arg_matches_differences_of_angle() {
        let ifs = crate::fixtures::rotation_rich().ifs;
        let w = [0, 2, 1];
        let z = c(0.1, -0.3);
        let h = 1e-5;
        let arg_at = |z: Complex64| word_eval(&ifs, &w, z).unwrap().1;
        let base = arg_at(z);
        let fd = [
            ((arg_at(z + h) / base).arg() - (arg_at(z - h) / base).arg()) / (2.0 * h),
            ((arg_at(z + c(0.0, h)) / base).arg() - (arg_at(z - c(0.0, h)) / base).arg()) / (2.0 * h),
        ];
        let g = grad_arg(&ifs, &w, z).unwrap();
        assert_abs_diff_eq!(g[0], fd[0], epsilon = 1e-6);
        assert_abs_diff_eq!(g[1], fd[1], epsilon = 1e-6);
    }

    #[test]
    fn validation_examples() {
        let rep = validate_ifs(&halves(), 256, 0.0, 2).unwrap();
        assert!(rep.is_valid(), "{:?}", rep.violations);
        assert_eq!(rep.rho, 0.5);
        assert_eq!(rep.rho_min, 0.5);
        let fps: Vec<_> = rep.maps.iter().map(|m| m.fixed_point.unwrap()).collect();
        assert_abs_diff_eq!(fps[0][0], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(fps[1][0], 1.0, epsilon = 1e-13);

        let expand = ConformalIfs::new(vec![HolomorphicMap::scale_shift(2.0, 0.0)]).unwrap();
        let rep = validate_ifs(&expand, 256, 0.0, 1).unwrap();
        assert!(rep.violations.iter().any(|v| matches!(v, Violation::Expansion { .. })));

        let shifted = ConformalIfs::new(vec![HolomorphicMap::scale_shift(0.5, 0.75)]).unwrap();
        let rep = validate_ifs(&shifted, 256, 0.0, 1).unwrap();
        let bm = rep
            .violations
            .iter()
            .find_map(|v| match v {
                Violation::ImageOutside { boundary_modulus, .. } => Some(*boundary_modulus),
                _ => None,
            })
            .unwrap();
        assert_abs_diff_eq!(bm, 1.25, epsilon = 1e-12);
        assert!(validate_ifs(&halves(), 100, 0.0, 1).is_err());
    }

    #[test]
    fn distortion_examples() {
        assert_eq!(distortion_estimate(&halves(), 4, 0.05).unwrap(), 1.0);
        assert_abs_diff_eq!(distortion_estimate(&quad(), 1, 0.05).unwrap(), 3.0, epsilon = 1e-12);
        let ifs = crate::fixtures::quadratic_real().ifs;
        let l1 = distortion_estimate(&ifs, 1, 0.05).unwrap();
        let l3 = distortion_estimate(&ifs, 3, 0.05).unwrap();
        assert!(l3 >= l1);
        assert!(distortion_estimate(&ifs, 0, 0.05).is_err());
    }

    #[test]
    fn induce_examples() {
        let two = induce(&halves(), 2, 100).unwrap();
        assert_eq!(two.len(), 4);
        assert_eq!(two.labels()[2], vec![1, 0]);
        let single = ConformalIfs::new(vec![HolomorphicMap::scale_shift(0.5, 0.0)]).unwrap();
        let eighth = induce(&single, 3, 100).unwrap();
        assert_eq!(eighth.map(0), &HolomorphicMap::scale_shift(0.125, 0.0));
        let three = crate::fixtures::rotation_rich().ifs;
        assert!(matches!(induce(&three, 4, 50), Err(Error::TooLarge { count: 81, .. })));
    }

    #[test]
    fn induced_maps_agree_with_words() {
        for ifs in [crate::fixtures::uni_planar(true).ifs, crate::fixtures::quadratic_real().ifs] {
            let ind = induce(&ifs, 2, 1000).unwrap();
            assert!(ind.rho <= ifs.rho * ifs.rho + 1e-12);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for (k, label) in ind.labels().iter().enumerate() {
                let z = Complex64::from_polar(rng.gen::<f64>().sqrt(), rng.gen::<f64>() * TAU);
                let (a, da) = ind.eval_word_d(&[k], z);
                let (b, db) = ifs.eval_word_d(label, z);
                assert!((a - b).norm() < 1e-14 && (da - db).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn composition_closed_forms_agree() {
        let one = c(1.0, 0.0);
        let m = HolomorphicMap::moebius(c(0.3, 0.1), c(0.1, 0.0), c(0.2, 0.0), one).unwrap();
        let a = HolomorphicMap::affine(c(0.4, 0.2), c(-0.1, 0.3));
        let p = HolomorphicMap::polynomial(vec![c(0.1, 0.0), c(0.3, 0.1), c(0.05, -0.02)]).unwrap();
        let pairs = [(&m, &a), (&a, &m), (&p, &a), (&a, &p), (&p, &m), (&m, &p), (&p, &p)];
        for (outer, inner) in pairs {
            let comp = outer.compose(inner);
            for z in [c(0.2, -0.4), c(-0.7, 0.1), c(0.0, 0.0)] {
                let (v1, d1, s1) = comp.eval_d2(z);
                let (iv, id1, id2) = inner.eval_d2(z);
                let (ov, od1, od2) = outer.eval_d2(iv);
                assert!((v1 - ov).norm() < 1e-14);
                assert!((d1 - od1 * id1).norm() < 1e-14);
                assert!((s1 - (od2 * id1 * id1 + od1 * id2)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn spec_parsing() {
        let spec = MapSpec {
            kind: MapKind::Affine,
            coefficients: vec![[0.5, 0.0], [0.5, 0.0]],
        };
        assert_eq!(HolomorphicMap::from_spec(&spec).unwrap(), HolomorphicMap::scale_shift(0.5, 0.5));
        let bad = MapSpec {
            kind: MapKind::Moebius,
            coefficients: vec![[1.0, 0.0]],
        };
        assert!(HolomorphicMap::from_spec(&bad).is_err());
    }
}
