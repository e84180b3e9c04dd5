//! Twisted transfer operators `P_{s,ℓ}` on grid functions, their finite
//! word-sum forms, the spectral decay experiment and truncated resolvents.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{grid_norms, DiscGrid, Field, GridFunction};
use crate::ifs::{ConformalIfs, HolomorphicMap};
use crate::measure::ProbVector;
use crate::model::Model;
use crate::rng::{self, domain};
use crate::stats::linear_fit;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistParams {
    pub a: f64,
    pub b: f64,
    pub ell: i64,
    pub n: usize,
}

impl TwistParams {
    pub fn new(a: f64, b: f64, ell: i64) -> Self {
        TwistParams { a, b, ell, n: 1 }
    }

    /// Frequency size `|b| + |ℓ|`.
    pub fn frequency(&self) -> f64 {
        self.b.abs() + self.ell.unsigned_abs() as f64
    }

    /// `e^{2π(a+ib)c} · e^{iℓθ}` for a branch with complex derivative `d = e^{-c+iθ}`.
    #[inline]
    pub fn twist(&self, d: Complex64) -> Complex64 {
        let c = -d.norm().ln();
        let phase = TAU * self.b * c + self.ell as f64 * d.arg();
        Complex64::from_polar((TAU * self.a * c).exp(), phase)
    }
}

/// Finite sum over words `J = (J_1, …, J_N)` with `J_n` drawn from
/// `levels[n-1]` (pairs of map index and weight):
/// `Σ_J η(J) e^{2πs c(J,x)} e^{iℓθ(J,x)} g(f_J x)` where `f_J = f_{J_1} ∘ … ∘ f_{J_N}`.
#[derive(Clone, Debug)]
pub struct WordSum<'a> {
    pub maps: &'a [HolomorphicMap],
    pub levels: Vec<Vec<(usize, f64)>>,
}

impl<'a> WordSum<'a> {
    /// `N`-fold iterate of the plain operator of `(maps, p)`.
    pub fn iterate(maps: &'a [HolomorphicMap], p: &ProbVector, n: usize) -> Self {
        let level: Vec<(usize, f64)> = p.weights().iter().copied().enumerate().collect();
        WordSum {
            maps,
            levels: vec![level; n],
        }
    }

    pub fn word_count(&self) -> usize {
        self.levels.iter().map(|l| l.len()).product()
    }

    /// Calls `visit(word, f_J(x), f_J'(x), η(J))` for every word, innermost
    /// level enumerated outermost in the recursion.
    pub fn visit<V>(&self, x: Complex64, visit: &mut V)
    where
        V: FnMut(&[usize], Complex64, Complex64, f64),
    {
        let n = self.levels.len();
        let mut word = vec![0usize; n];
        self.descend(n, x, Complex64::new(1.0, 0.0), 1.0, &mut word, visit);
    }

    fn descend<V>(&self, level: usize, y: Complex64, d: Complex64, eta: f64, word: &mut [usize], visit: &mut V)
    where
        V: FnMut(&[usize], Complex64, Complex64, f64),
    {
        if level == 0 {
            visit(word, y, d, eta);
            return;
        }
        for &(m, w) in &self.levels[level - 1] {
            let (v, dv) = self.maps[m].eval_d(y);
            word[level - 1] = m;
            self.descend(level - 1, v, d * dv, eta * w, word, visit);
        }
    }

    pub fn apply_at<F: Field + ?Sized>(&self, tp: &TwistParams, g: &F, x: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        self.visit(x, &mut |_, y, d, eta| acc += tp.twist(d) * g.eval(y) * eta);
        acc
    }

    pub fn apply<F: Field + ?Sized>(&self, grid: &Arc<DiscGrid>, tp: &TwistParams, g: &F) -> GridFunction {
        GridFunction::build(grid, &|x: Complex64| self.apply_at(tp, g, x))
    }
}

/// One application of `P_{s,ℓ}` evaluated lazily at any point.
pub struct TransferField<'a, F: Field + ?Sized> {
    pub ifs: &'a ConformalIfs,
    pub p: &'a ProbVector,
    pub tp: TwistParams,
    pub inner: &'a F,
}

impl<F: Field + ?Sized> Field for TransferField<'_, F> {
    fn eval(&self, x: Complex64) -> Complex64 {
        self.ifs
            .maps()
            .iter()
            .zip(self.p.weights())
            .map(|(m, &w)| {
                let (y, d) = m.eval_d(x);
                self.tp.twist(d) * self.inner.eval(y) * w
            })
            .sum()
    }
}

pub(crate) fn check_images(ifs: &ConformalIfs, grid: &DiscGrid) -> Result<()> {
    let slack = 1.0 + grid.spacing();
    let bad = grid
        .nodes()
        .par_iter()
        .flat_map_iter(|&x| ifs.maps().iter().map(move |m| m.eval(x)))
        .find_any(|y| !(y.norm() <= slack));
    match bad {
        Some(y) => Err(Error::OutsideGrid { re: y.re, im: y.im }),
        None => Ok(()),
    }
}

/// `P_{s,ℓ} g` at every node, interpolating `g` at the image points.
pub fn transfer_apply(ifs: &ConformalIfs, p: &ProbVector, tp: &TwistParams, gf: &GridFunction) -> Result<GridFunction> {
    if ifs.len() != p.len() {
        return Err(Error::InvalidArgument("weights and maps differ in number".into()));
    }
    check_images(ifs, gf.grid())?;
    Ok(apply_unchecked(ifs, p, tp, gf))
}

fn apply_unchecked(ifs: &ConformalIfs, p: &ProbVector, tp: &TwistParams, gf: &GridFunction) -> GridFunction {
    let field = TransferField {
        ifs,
        p,
        tp: *tp,
        inner: gf,
    };
    GridFunction::build(gf.grid(), &field)
}

/// `P_{s,ℓ,ω,N} g` for the model, `N = omega_prefix.len()`.
pub fn transfer_apply_model<F: Field + ?Sized>(
    model: &Model,
    omega_prefix: &[usize],
    tp: &TwistParams,
    grid: &Arc<DiscGrid>,
    gf: &F,
) -> Result<GridFunction> {
    let sum = model.word_sum(omega_prefix)?;
    check_images(model.ifs(), grid)?;
    Ok(sum.apply(grid, tp, gf))
}

/// Random smooth real field `Σ_k a_k cos(⟨κ_k, z⟩ + φ_k)` with an explicit
/// gradient bound `Σ_k a_k |κ_k|`.
#[derive(Clone, Debug)]
pub struct TrigField {
    modes: Vec<([f64; 2], f64, f64)>,
}

impl TrigField {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, modes: usize, max_wavenumber: f64) -> Self {
        let modes = (0..modes)
            .map(|_| {
                let k = rng.gen_range(0.5..=max_wavenumber.max(0.5));
                let dir = rng.gen::<f64>() * TAU;
                ([k * dir.cos(), k * dir.sin()], rng.gen::<f64>() * TAU, rng.gen::<f64>())
            })
            .collect();
        TrigField { modes }
    }

    /// Rescale amplitudes so the gradient bound equals `bound`.
    pub fn with_gradient_bound(mut self, bound: f64) -> Self {
        let current = self.gradient_bound();
        if current > 0.0 {
            for m in &mut self.modes {
                m.2 *= bound / current;
            }
        }
        self
    }

    pub fn gradient_bound(&self) -> f64 {
        self.modes.iter().map(|(k, _, a)| a * k[0].hypot(k[1])).sum()
    }

    pub fn amplitude(&self) -> f64 {
        self.modes.iter().map(|m| m.2).sum()
    }

    pub fn value(&self, z: Complex64) -> f64 {
        self.modes
            .iter()
            .map(|(k, ph, a)| a * (k[0] * z.re + k[1] * z.im + ph).cos())
            .sum()
    }

    /// Value and gradient in one pass.
    pub fn value_gradient(&self, z: Complex64) -> (f64, [f64; 2]) {
        let mut v = 0.0;
        let mut g = [0.0, 0.0];
        for (k, ph, a) in &self.modes {
            let (s, c) = (k[0] * z.re + k[1] * z.im + ph).sin_cos();
            v += a * c;
            g[0] -= a * s * k[0];
            g[1] -= a * s * k[1];
        }
        (v, g)
    }

    pub fn gradient(&self, z: Complex64) -> [f64; 2] {
        self.modes.iter().fold([0.0, 0.0], |g, (k, ph, a)| {
            let s = -a * (k[0] * z.re + k[1] * z.im + ph).sin();
            [g[0] + s * k[0], g[1] + s * k[1]]
        })
    }
}

/// Positive cone member `exp(φ)`, `|∇H| ≤ bound · H`.
#[derive(Clone, Debug)]
pub struct ConeMember(pub TrigField);

impl Field for ConeMember {
    fn eval(&self, z: Complex64) -> Complex64 {
        Complex64::new(self.0.value(z).exp(), 0.0)
    }
}

/// Unimodular oscillation `exp(i φ(z))`.
#[derive(Clone, Debug)]
pub struct PhaseField(pub TrigField);

impl Field for PhaseField {
    fn eval(&self, z: Complex64) -> Complex64 {
        Complex64::from_polar(1.0, self.0.value(z))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    pub a_list: Vec<f64>,
    pub b_list: Vec<f64>,
    pub ell_list: Vec<i64>,
    pub n_max: usize,
    pub h: f64,
    /// Random probes besides the constant; half cone members, half phase patterns.
    pub probes: usize,
    /// Strip half-width bound on `|a|`.
    pub strip: f64,
    /// Frequency threshold on `|b| + |ℓ|`.
    pub frequency_threshold: f64,
    pub seed: u64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            a_list: vec![0.0],
            b_list: vec![50.0, 100.0, 200.0],
            ell_list: vec![0],
            n_max: 12,
            h: 0.01,
            probes: 4,
            strip: 0.05,
            frequency_threshold: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub a: f64,
    pub b: f64,
    pub ell: i64,
    pub n: usize,
    /// Probe-max of `‖P^n g‖_{C¹} / ‖g‖_{C¹}` (a lower bound on the operator norm).
    pub c1_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub a: f64,
    pub b: f64,
    pub ell: i64,
    pub alpha_hat: f64,
    /// Intercept of the tail fit, `log C_K`.
    pub log_c: f64,
    pub residual: f64,
    /// Smallest `C₁` making the a-priori gradient bound hold along the iterates.
    pub a_priori_c1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralDecayTable {
    pub rows: Vec<DecayRow>,
    pub fits: Vec<DecayFit>,
    /// From `log C_K ≈ const + (1+γ) log K` across frequencies.
    pub gamma_hat: Option<f64>,
    pub gamma_residual: Option<f64>,
}

fn probe_set(cfg: &SpectralConfig, freq: f64) -> Vec<Box<dyn Field + Send>> {
    let mut probes: Vec<Box<dyn Field + Send>> = vec![Box::new(|_z: Complex64| Complex64::new(1.0, 0.0))];
    for k in 0..cfg.probes {
        let mut r = rng::substream(cfg.seed, domain::PROBE, k as u64);
        let field = TrigField::random(&mut r, 4, 6.0);
        if k % 2 == 0 {
            let bound = (freq.max(1.0)).min(10.0) * 0.5;
            probes.push(Box::new(ConeMember(field.with_gradient_bound(bound))));
        } else {
            probes.push(Box::new(PhaseField(field.with_gradient_bound(TAU))));
        }
    }
    probes
}

/// Iterate `P_{a+ib,ℓ}` on a probe family and fit `‖P^n‖ ≈ C α̂^n` over the
/// tail `n ≥ n_max / 2`.
pub fn spectral_decay_experiment(ifs: &ConformalIfs, p: &ProbVector, cfg: &SpectralConfig) -> Result<SpectralDecayTable> {
    let tail_start = cfg.n_max.div_ceil(2).max(1);
    if cfg.n_max < tail_start + 1 {
        return Err(Error::EmptyTail);
    }
    if let Some(a) = cfg.a_list.iter().find(|a| a.abs() > cfg.strip) {
        return Err(Error::Precondition(format!("|a| = {} exceeds the strip half-width {}", a.abs(), cfg.strip)));
    }
    let worst = cfg.a_list.iter().fold(0.0f64, |m, a| m.max(a.abs())) * TAU * cfg.n_max as f64 * ifs.c_max;
    if worst > 600.0 {
        return Err(Error::Precondition(format!(
            "2π·|a|·n_max·c_max = {worst:.1} would overflow the weights"
        )));
    }
    let grid = DiscGrid::new(cfg.h)?;
    check_images(ifs, &grid)?;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &a in &cfg.a_list {
        for &b in &cfg.b_list {
            for &ell in &cfg.ell_list {
                let tp = TwistParams::new(a, b, ell);
                let k = tp.frequency();
                if k < cfg.frequency_threshold {
                    return Err(Error::Precondition(format!(
                        "|b|+|ell| = {k} is below the frequency threshold {}",
                        cfg.frequency_threshold
                    )));
                }
                let mut best = vec![0.0f64; cfg.n_max + 1];
                let mut a_priori = 0.0f64;
                for (pi, probe) in probe_set(cfg, k).iter().enumerate() {
                    let g0 = GridFunction::build(&grid, probe.as_ref());
                    let base = g0.c1_norm();
                    best[0] = best[0].max(1.0);
                    let mut g = g0.clone();
                    // real companions for the a-priori bound
                    let real = TwistParams::new(a, 0.0, 0);
                    let mut mod_f = g0.map(|v| Complex64::new(v.norm(), 0.0));
                    let grads = g0.gradient_norms();
                    let mut mod_grad = GridFunction::from_values(
                        &grid,
                        grads.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
                    )?;
                    for n in 1..=cfg.n_max {
                        g = apply_unchecked(ifs, p, &tp, &g);
                        best[n] = best[n].max(g.c1_norm() / base);
                        if pi < 2 {
                            mod_f = apply_unchecked(ifs, p, &real, &mod_f);
                            mod_grad = apply_unchecked(ifs, p, &real, &mod_grad);
                            let lhs = g.sup_gradient() - ifs.rho.powi(n as i32) * mod_grad.sup();
                            let denom = k.max(1.0) * mod_f.sup();
                            if denom > 0.0 {
                                a_priori = a_priori.max(lhs / denom);
                            }
                        }
                    }
                }
                for (n, &v) in best.iter().enumerate() {
                    rows.push(DecayRow { a, b, ell, n, c1_norm: v });
                }
                let xs: Vec<f64> = (tail_start..=cfg.n_max).map(|n| n as f64).collect();
                let ys: Vec<f64> = (tail_start..=cfg.n_max).map(|n| best[n].max(1e-300).ln()).collect();
                let fit = linear_fit(&xs, &ys).ok_or(Error::EmptyTail)?;
                fits.push(DecayFit {
                    a,
                    b,
                    ell,
                    alpha_hat: fit.slope.exp(),
                    log_c: fit.intercept,
                    residual: fit.residual,
                    a_priori_c1: a_priori.max(0.0),
                });
            }
        }
    }
    let (gamma_hat, gamma_residual) = gamma_fit(&fits);
    Ok(SpectralDecayTable {
        rows,
        fits,
        gamma_hat,
        gamma_residual,
    })
}

fn gamma_fit(fits: &[DecayFit]) -> (Option<f64>, Option<f64>) {
    let xs: Vec<f64> = fits.iter().map(|f| (f.b.abs() + f.ell.unsigned_abs() as f64).max(1.0).ln()).collect();
    let ys: Vec<f64> = fits.iter().map(|f| f.log_c).collect();
    match linear_fit(&xs, &ys) {
        Some(fit) => (Some(fit.slope - 1.0), Some(fit.residual)),
        None => (None, None),
    }
}

#[derive(Clone, Debug)]
pub struct NeumannReport {
    /// `Σ_{n<terms} P^n g`.
    pub partial_sum: GridFunction,
    /// `‖P^n g‖_{C¹}` for each term.
    pub term_norms: Vec<f64>,
    /// `‖Σ_{m≤n} P^m g‖_{C¹}`.
    pub partial_norms: Vec<f64>,
}

/// Consecutive non-shrinking terms that count as divergence.
pub const DIVERGENCE_RUN: usize = 10;

/// Truncated Neumann series of `(I − P_{s,ℓ})^{-1} g`. Divergence is declared
/// when the partial-sum norm grows for [`DIVERGENCE_RUN`] consecutive terms
/// whose own norms are not shrinking.
pub fn resolvent_neumann(
    ifs: &ConformalIfs,
    p: &ProbVector,
    tp: &TwistParams,
    gf: &GridFunction,
    terms: usize,
) -> Result<NeumannReport> {
    if terms == 0 {
        return Err(Error::InvalidArgument("need at least one term".into()));
    }
    check_images(ifs, gf.grid())?;
    let mut term = gf.clone();
    let mut sum = gf.clone();
    let mut term_norms = vec![gf.c1_norm()];
    let mut partial_norms = vec![sum.c1_norm()];
    let mut run = 0;
    for _ in 1..terms {
        term = apply_unchecked(ifs, p, tp, &term);
        let values: Vec<Complex64> = sum.values().iter().zip(term.values()).map(|(a, b)| a + b).collect();
        sum = GridFunction::from_values(gf.grid(), values)?;
        let tn = term.c1_norm();
        let sn = sum.c1_norm();
        let growing = sn > *partial_norms.last().unwrap();
        let stalled = tn >= term_norms.last().unwrap() * (1.0 - 1e-12);
        run = if growing && stalled { run + 1 } else { 0 };
        term_norms.push(tn);
        partial_norms.push(sn);
        if run >= DIVERGENCE_RUN {
            return Err(Error::Divergence(run));
        }
    }
    Ok(NeumannReport {
        partial_sum: sum,
        term_norms,
        partial_norms,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthPoint {
    pub b: f64,
    pub ell: i64,
    /// `‖Σ P^n g‖_{C¹} / ‖g‖_{C¹}`.
    pub resolvent_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthReport {
    pub points: Vec<GrowthPoint>,
    /// Fitted from `log norm ≈ const + (1+γ) log(1 + |b| + |ℓ|)`.
    pub gamma_hat: Option<f64>,
}

pub fn resolvent_growth(
    ifs: &ConformalIfs,
    p: &ProbVector,
    a: f64,
    frequencies: &[(f64, i64)],
    gf: &GridFunction,
    terms: usize,
) -> Result<GrowthReport> {
    let base = gf.c1_norm();
    let mut points = Vec::new();
    for &(b, ell) in frequencies {
        let rep = resolvent_neumann(ifs, p, &TwistParams::new(a, b, ell), gf, terms)?;
        points.push(GrowthPoint {
            b,
            ell,
            resolvent_norm: rep.partial_norms.last().unwrap() / base,
        });
    }
    let xs: Vec<f64> = points.iter().map(|q| (1.0 + q.b.abs() + q.ell.unsigned_abs() as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|q| q.resolvent_norm.ln()).collect();
    let gamma_hat = linear_fit(&xs, &ys).map(|f| f.slope - 1.0);
    Ok(GrowthReport { points, gamma_hat })
}

/// `(c1, bnorm)` of `P^n g` for a single parameter point, `n = 0..=n_max`.
pub fn norm_trajectory(
    ifs: &ConformalIfs,
    p: &ProbVector,
    tp: &TwistParams,
    gf: &GridFunction,
    n_max: usize,
) -> Result<Vec<(f64, f64)>> {
    check_images(ifs, gf.grid())?;
    let mut g = gf.clone();
    let mut out = vec![grid_norms(&g, tp.b, tp.ell)];
    for _ in 0..n_max {
        g = apply_unchecked(ifs, p, tp, &g);
        out.push(grid_norms(&g, tp.b, tp.ell));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::grid::grid_build;
    use crate::measure::sample_batch;
    use crate::stats::mean_stderr;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn single(a: Complex64) -> (ConformalIfs, ProbVector) {
        (
            ConformalIfs::new(vec![HolomorphicMap::affine(a, c(0.0, 0.0))]).unwrap(),
            ProbVector::uniform(1),
        )
    }

    fn one(h: f64) -> GridFunction {
        grid_build(h, &|_z: Complex64| c(1.0, 0.0)).unwrap()
    }

    #[test]
    fn single_map_examples() {
        let (ifs, p) = single(c(0.5, 0.0));
        let out = transfer_apply(&ifs, &p, &TwistParams::new(0.0, 0.0, 0), &one(0.05)).unwrap();
        assert!(out.values().iter().all(|v| *v == c(1.0, 0.0)));
        let out = transfer_apply(&ifs, &p, &TwistParams::new(1.0, 0.0, 0), &one(0.05)).unwrap();
        let expected = (TAU * 2f64.ln()).exp();
        assert_abs_diff_eq!(expected, 77.88, epsilon = 0.01);
        assert!(out.values().iter().all(|v| (v - expected).norm() < 1e-10));
        let (ifs, p) = single(c(0.0, 0.5));
        let out = transfer_apply(&ifs, &p, &TwistParams::new(0.0, 0.0, 1), &one(0.05)).unwrap();
        assert!(out.values().iter().all(|v| (v - c(0.0, 1.0)).norm() < 1e-15));
    }

    #[test]
    fn markov_property() {
        for f in fixtures::all() {
            let out = transfer_apply(&f.ifs, &f.p, &TwistParams::new(0.0, 0.0, 0), &one(0.02)).unwrap();
            let err = out.values().iter().map(|v| (v - 1.0).norm()).fold(0.0, f64::max);
            assert!(err < 1e-12, "{}: {err}", f.name);
        }
    }

    #[test]
    fn duality_with_invariant_measure() {
        let f = fixtures::rotation_rich();
        let em = sample_batch(&f.ifs, &f.p, 100_000, 40, 4).unwrap();
        let g = |z: Complex64| c(z.re * z.re - 0.3 * z.im, 0.0);
        let gf = grid_build(0.01, &g).unwrap();
        let pg = transfer_apply(&f.ifs, &f.p, &TwistParams::new(0.0, 0.0, 0), &gf).unwrap();
        let diff: Vec<f64> = em.points.iter().map(|&z| pg.interpolate(z).re - gf.interpolate(z).re).collect();
        let (m, se) = mean_stderr(&diff);
        assert!(m.abs() < 4.0 * se, "{m} vs {se}");
    }

    #[test]
    fn image_outside_hull_is_reported() {
        let ifs = ConformalIfs::new(vec![HolomorphicMap::scale_shift(0.5, 0.75)]).unwrap();
        let err = transfer_apply(&ifs, &ProbVector::uniform(1), &TwistParams::new(0.0, 0.0, 0), &one(0.05));
        assert!(matches!(err, Err(Error::OutsideGrid { .. })));
    }

    #[test]
    fn grid_refinement_is_second_order() {
        let f = fixtures::quadratic_real();
        let g = |z: Complex64| (z * c(1.3, 0.4)).exp();
        let tp = TwistParams::new(0.0, 1.0, 0);
        let exact = |z: Complex64| TransferField { ifs: &f.ifs, p: &f.p, tp, inner: &g }.eval(z);
        let err = |h: f64| {
            let out = transfer_apply(&f.ifs, &f.p, &tp, &grid_build(h, &g).unwrap()).unwrap();
            out.grid()
                .nodes()
                .iter()
                .zip(out.values())
                .map(|(&z, v)| (v - exact(z)).norm())
                .fold(0.0, f64::max)
        };
        let ratio = err(0.04) / err(0.02);
        assert!((3.0..5.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn word_sum_matches_nested_application() {
        let f = fixtures::uni_planar(true);
        let g = |z: Complex64| c(z.re, z.im * z.im);
        let tp = TwistParams::new(0.02, 3.0, 2);
        let inner = TransferField { ifs: &f.ifs, p: &f.p, tp, inner: &g };
        let outer = TransferField { ifs: &f.ifs, p: &f.p, tp, inner: &inner };
        let sum = WordSum::iterate(f.ifs.maps(), &f.p, 2);
        for z in [c(0.1, 0.2), c(-0.5, 0.7), c(0.99, 0.0)] {
            assert!((sum.apply_at(&tp, &g, z) - outer.eval(z)).norm() < 1e-12);
        }
        let mut total = 0.0;
        sum.visit(c(0.0, 0.0), &mut |_, _, _, eta| total += eta);
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-14);
        assert_eq!(sum.word_count(), 25);
    }

    #[test]
    fn similarity_control_does_not_decay() {
        let f = fixtures::lebesgue_segment();
        let cfg = SpectralConfig {
            b_list: vec![50.0],
            n_max: 6,
            h: 0.05,
            probes: 2,
            ..SpectralConfig::default()
        };
        let t = spectral_decay_experiment(&f.ifs, &f.p, &cfg).unwrap();
        assert_abs_diff_eq!(t.fits[0].alpha_hat, 1.0, epsilon = 1e-9);
        let bad = SpectralConfig { n_max: 0, ..cfg.clone() };
        assert!(matches!(spectral_decay_experiment(&f.ifs, &f.p, &bad), Err(Error::EmptyTail)));
        let big_a = SpectralConfig { a_list: vec![1.0], ..cfg };
        assert!(spectral_decay_experiment(&f.ifs, &f.p, &big_a).is_err());
    }

    #[test]
    fn geometric_resolvent() {
        let (ifs, p) = single(c(0.5, 0.0));
        let a = 0.3;
        let tp = TwistParams::new(-a, 0.0, 0);
        let rep = resolvent_neumann(&ifs, &p, &tp, &one(0.05), 60).unwrap();
        let r = 2f64.powf(-TAU * a);
        let limit = 1.0 / (1.0 - r);
        let v = rep.partial_sum.values()[0].re;
        assert!((v - limit).abs() < 1e-10);
        // truncation after k terms against the geometric tail
        let short = resolvent_neumann(&ifs, &p, &tp, &one(0.05), 8).unwrap();
        let err = (short.partial_sum.values()[0].re - limit).abs();
        assert!(err <= r.powi(8) / (1.0 - r) + 1e-12);
        let stochastic = resolvent_neumann(&ifs, &p, &TwistParams::new(0.0, 0.0, 0), &one(0.05), 40);
        assert!(matches!(stochastic, Err(Error::Divergence(_))));
    }

    #[test]
    fn cone_member_gradient_bound() {
        let mut r = rng::substream(1, domain::PROBE, 0);
        let field = TrigField::random(&mut r, 5, 8.0).with_gradient_bound(3.0);
        assert_abs_diff_eq!(field.gradient_bound(), 3.0, epsilon = 1e-12);
        for z in [c(0.1, 0.3), c(-0.8, 0.2)] {
            let g = field.gradient(z);
            assert!(g[0].hypot(g[1]) <= 3.0 + 1e-12);
            let h = 1e-6;
            let fd = (field.value(z + h) - field.value(z - h)) / (2.0 * h);
            assert_abs_diff_eq!(fd, g[0], epsilon = 1e-6);
        }
    }
}
