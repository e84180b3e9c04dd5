//! Dolgopyat operators `N^J = P_{a,0,ω,N}(χ_J ·)`: Vitali covers of the
//! sampled attractor, direction data, the damping multiplier `χ_J`, parameter
//! feasibility, and the cone, contraction and domination checks.

use std::collections::HashMap;
use std::f64::consts::{LN_2, PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DiscGrid, Field, GridFunction};
use crate::ifs::{circle_points, log_derivative_slope, Word};
use crate::measure::EmpiricalMeasure;
use crate::model::{draw_omega, sample_mu_given, Model};
use crate::rng::{self, domain};
use crate::transfer::{check_images, ConeMember, TrigField, TwistParams, WordSum};
use crate::uni::{nonconcentration_estimate, tn_check};

/// Extra branches drawn past the sample depth for partner refinement.
pub const REFINE_TAIL: usize = 12;

/// Plateau sharpness of the bump profile.
const BUMP_KAPPA: f64 = 0.6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VitaliCover {
    pub eps_tilde: f64,
    pub centers: Vec<Complex64>,
    /// Index of each center in the sample list it was picked from.
    pub sample_index: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CoverCheck {
    /// `10ε̃`-balls around distinct centers are disjoint.
    pub disjoint: bool,
    /// Every sample lies in some `50ε̃`-ball.
    pub covering: bool,
}

fn cell(z: Complex64, size: f64) -> (i64, i64) {
    ((z.re / size).floor() as i64, (z.im / size).floor() as i64)
}

/// Greedy cover: a sample becomes a center iff it is at least `20ε̃` from
/// every center kept so far.
pub fn vitali_cover(samples: &[Complex64], eps_tilde: f64) -> Result<VitaliCover> {
    if samples.is_empty() {
        return Err(Error::Precondition("a cover needs at least one sample".into()));
    }
    if !(eps_tilde > 0.0 && eps_tilde.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps_tilde must be positive, got {eps_tilde}")));
    }
    let sep = 20.0 * eps_tilde;
    let mut table: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut cover = VitaliCover {
        eps_tilde,
        centers: Vec::new(),
        sample_index: Vec::new(),
    };
    for (si, &z) in samples.iter().enumerate() {
        let (cx, cy) = cell(z, sep);
        let near = (-1..=1).any(|dx| {
            (-1..=1).any(|dy| {
                table
                    .get(&(cx + dx, cy + dy))
                    .is_some_and(|v| v.iter().any(|&c| (cover.centers[c] - z).norm() < sep))
            })
        });
        if !near {
            table.entry((cx, cy)).or_default().push(cover.centers.len());
            cover.centers.push(z);
            cover.sample_index.push(si);
        }
    }
    Ok(cover)
}

impl VitaliCover {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Brute-force check of both cover properties.
    pub fn check(&self, samples: &[Complex64]) -> CoverCheck {
        let e = self.eps_tilde;
        let disjoint = self
            .centers
            .iter()
            .enumerate()
            .all(|(i, a)| self.centers[i + 1..].iter().all(|b| (a - b).norm() >= 20.0 * e));
        let covering = samples
            .par_iter()
            .all(|z| self.centers.iter().any(|c| (c - z).norm() < 50.0 * e));
        CoverCheck { disjoint, covering }
    }
}

/// Constants the feasibility solve consumes, all measured on the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredConstants {
    /// Non-concentration `δ̂₁` of `μ_{σ^N ω}`.
    pub delta1: f64,
    /// Smallest singular value of `∇T_N` for the designated pair.
    pub sigma_min: f64,
    /// `‖T_N‖_{C²}`.
    pub t_c2: f64,
    /// Cocycle gradient bound `C̃`.
    pub tilde_c: f64,
    pub rho: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DolgopyatParams {
    /// Cone slope `A`.
    pub a_cone: f64,
    pub theta_damp: f64,
    pub eps1: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// `δ₁δ₂/(4A)`.
    pub delta3: f64,
    pub n: usize,
}

impl DolgopyatParams {
    /// `ε̃ = ε₁/(|b|+|ℓ|)`.
    pub fn eps_tilde(&self, frequency: f64) -> f64 {
        self.eps1 / frequency
    }

    /// Bump radius `2δ₃ε̃`.
    pub fn bump_radius(&self, frequency: f64) -> f64 {
        2.0 * self.delta3 * self.eps_tilde(frequency)
    }

    /// The five numbered constraints, in order.
    pub fn constraints(&self, t_c2: f64, rho: f64) -> [bool; 5] {
        let (a, e, d1, d2) = (self.a_cone, self.eps1, self.delta1, self.delta2);
        let rn = rho.powi(self.n as i32);
        [
            8.0 * t_c2 < a / 2.0,
            8.0 * rn <= 0.5,
            200.0 * e * a <= LN_2,
            2.5 * d1 * d2 * e - 25.0 * e * e / d2 - 40.0 * a * e * rn >= 2.0 * d1 * d2 * e,
            2.0 * self.theta_damp <= (d1 * d2 * e).powi(2) / 128.0,
        ]
    }

    /// Side conditions for cone invariance.
    pub fn cone_conditions(&self, tilde_c: f64, rho: f64) -> bool {
        let a = self.a_cone;
        let rn = rho.powi(self.n as i32);
        a >= 2.0_f64.max(4.0 * TAU * tilde_c)
            && rn <= ((a - 1.0) / (2.0 * a)).min(0.25)
            && self.theta_damp <= 0.5_f64.min(self.eps1 * (a - 1.0) / (16.0 * self.delta3))
            && self.theta_damp > 0.0
    }
}

const SHRINK: f64 = 1.0 - 1e-9;

/// Smallest `N ≥ n_min` and the largest `ε₁`, `θ` satisfying every constraint.
pub fn feasible_params(mc: &MeasuredConstants, n_min: usize, n_cap: usize) -> Result<DolgopyatParams> {
    if !(mc.delta1 > 0.0 && mc.sigma_min > 0.0 && mc.t_c2 > 0.0 && mc.rho > 0.0 && mc.rho < 1.0) {
        return Err(Error::Infeasible(format!(
            "measured constants must be positive (delta1 {}, sigma_min {}, |T|_C2 {}, rho {})",
            mc.delta1, mc.sigma_min, mc.t_c2, mc.rho
        )));
    }
    let delta1 = mc.delta1;
    let delta2 = mc.sigma_min.min(SHRINK / (2.0 * mc.t_c2));
    let a = 2.0_f64.max(4.0 * TAU * mc.tilde_c).max(16.0 * mc.t_c2 * (1.0 + 1e-6));
    let target = delta1 * delta2 / 2.0;
    let ok = |n: usize| {
        let rn = mc.rho.powi(n as i32);
        8.0 * rn <= 0.5 && rn <= ((a - 1.0) / (2.0 * a)).min(0.25) && 40.0 * a * rn <= target / 2.0
    };
    let n = (n_min.max(1)..=n_cap)
        .find(|&n| ok(n))
        .ok_or_else(|| Error::Infeasible(format!("no N up to {n_cap} makes 40 A rho^N small enough")))?;
    let rn = mc.rho.powi(n as i32);
    let eps1 = SHRINK * (LN_2 / (200.0 * a)).min(delta2 * (target - 40.0 * a * rn) / 25.0);
    let delta3 = delta1 * delta2 / (4.0 * a);
    let theta = SHRINK * 0.5_f64
        .min(eps1 * (a - 1.0) / (16.0 * delta3))
        .min((delta1 * delta2 * eps1).powi(2) / 256.0);
    Ok(DolgopyatParams {
        a_cone: a,
        theta_damp: theta,
        eps1,
        delta1,
        delta2,
        delta3,
        n,
    })
}

/// Everything the checks share: the branch sequence, the designated pair,
/// and coded samples of `μ_{σ^N ω}`.
#[derive(Clone, Debug)]
pub struct DolgopyatSetup<'m> {
    pub model: &'m Model,
    /// Branches `ω_1 … ω_{N + depth + REFINE_TAIL}`.
    pub omega: Word,
    pub params: DolgopyatParams,
    pub constants: Option<MeasuredConstants>,
    pub alpha: [Word; 2],
    pub eta: [f64; 2],
    pub samples: EmpiricalMeasure,
    pub seed: u64,
}

fn word_weight(model: &Model, omega: &[usize], w: &[usize]) -> f64 {
    omega
        .iter()
        .zip(w)
        .map(|(&k, &m)| {
            let pos = model.sub_ifss()[k].iter().position(|&x| x == m).expect("word follows the branches");
            model.p_tilde()[k].get(pos)
        })
        .product()
}

impl<'m> DolgopyatSetup<'m> {
    /// Setup with given parameters; `omega` needs `N + depth + REFINE_TAIL` branches.
    pub fn with_params(
        model: &'m Model,
        omega: Word,
        params: DolgopyatParams,
        count: usize,
        depth: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = params.n;
        if n == 0 || depth == 0 || count == 0 {
            return Err(Error::InvalidArgument("N, sample depth and sample count must be positive".into()));
        }
        if omega.len() < n + depth + REFINE_TAIL {
            return Err(Error::Precondition(format!(
                "omega has {} branches, need {}",
                omega.len(),
                n + depth + REFINE_TAIL
            )));
        }
        if !(params.theta_damp >= 0.0 && params.theta_damp < 1.0) {
            return Err(Error::InvalidArgument(format!("theta_damp must lie in [0, 1), got {}", params.theta_damp)));
        }
        let (a1, a2) = model.designated_pair(&omega[..n])?;
        let eta = [word_weight(model, &omega[..n], &a1), word_weight(model, &omega[..n], &a2)];
        let samples = sample_mu_given(model, &omega[n..n + depth], count, seed, true)?;
        Ok(DolgopyatSetup {
            model,
            omega,
            params,
            constants: None,
            alpha: [a1, a2],
            eta,
            samples,
            seed,
        })
    }

    /// Draw `ω`, measure the constants and solve for feasible parameters,
    /// raising `N` until the constants measured at `N` admit it.
    pub fn solve(model: &'m Model, count: usize, depth: usize, seed: u64, n_cap: usize) -> Result<Self> {
        let omega = draw_omega(model, n_cap + depth + REFINE_TAIL, seed, 0);
        let mut n = 1;
        loop {
            let mc = measure_constants(model, &omega, n, count, depth, seed)?;
            let mut params = feasible_params(&mc, n, n_cap)?;
            if params.n == n {
                params.n = n;
                let mut setup = DolgopyatSetup::with_params(model, omega[..n + depth + REFINE_TAIL].to_vec(), params, count, depth, seed)?;
                setup.constants = Some(mc);
                return Ok(setup);
            }
            n = params.n;
        }
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn word_sum(&self) -> Result<WordSum<'m>> {
        self.model.word_sum(&self.omega[..self.params.n])
    }
}

/// `δ̂₁`, `σ_min(∇T_N)`, `‖T_N‖_{C²}`, `C̃` and `ρ` for the first `n` branches.
pub fn measure_constants(model: &Model, omega: &[usize], n: usize, count: usize, depth: usize, seed: u64) -> Result<MeasuredConstants> {
    let witness = model.branch_uni(&omega[..n], 0.05)?;
    let tn = tn_check(model.ifs(), &witness, 0.02)?;
    let em = sample_mu_given(model, &omega[n..n + depth], count.max(2000), seed, true)?;
    let mut words: Vec<Word> = Vec::new();
    for c in em.codes.as_ref().expect("coded samples") {
        for d in 1..=2.min(c.len()) {
            let w: Word = c[..d].iter().map(|&x| x as usize).collect();
            if !words.contains(&w) {
                words.push(w);
            }
        }
    }
    let nc = nonconcentration_estimate(model.ifs(), &em, &words, 64)?;
    Ok(MeasuredConstants {
        delta1: nc.delta_hat,
        sigma_min: tn.delta2_hat,
        t_c2: tn.c2_norm_hat,
        tilde_c: model.ifs().tilde_c,
        rho: model.ifs().rho,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectionData {
    pub w: Vec<[f64; 2]>,
    pub w_hat: Vec<[f64; 2]>,
    pub partners: Vec<Complex64>,
    /// Projection `|⟨x_i − y_i, ŵ_i⟩|` reached by each partner.
    pub projections: Vec<f64>,
    pub threshold: f64,
    /// Centers with `|w_i| ≤ δ₂(|b|+|ℓ|)/2`.
    pub weak_directions: Vec<usize>,
}

/// `b·∇(log|f'_{α₁}| − log|f'_{α₂}|) + ℓ·∇(arg f'_{α₁} − arg f'_{α₂})` from
/// the difference `g` of the two slopes `(log f')'`.
pub fn direction_vector(g: Complex64, b: f64, ell: i64) -> [f64; 2] {
    let l = ell as f64;
    [b * g.re + l * g.im, -b * g.im + l * g.re]
}

fn unit(v: [f64; 2]) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    if n > 0.0 {
        [v[0] / n, v[1] / n]
    } else {
        [0.0, 0.0]
    }
}

/// `w_i` at every center, without partners.
pub fn direction_vectors(setup: &DolgopyatSetup, b: f64, ell: i64, cover: &VitaliCover) -> Vec<[f64; 2]> {
    let ifs = setup.model.ifs();
    cover
        .centers
        .iter()
        .map(|&x| {
            let g = log_derivative_slope(ifs, &setup.alpha[0], x) - log_derivative_slope(ifs, &setup.alpha[1], x);
            direction_vector(g, b, ell)
        })
        .collect()
}

/// Directions and partners. The partner of `x_i` maximizes the projection
/// over attractor points drawn inside the shallowest cylinder of `x_i` that
/// fits in `B_{5ε̃}(x_i)`; `refine` points are drawn per center. The
/// projection must exceed `nc_factor · δ₁ · 5ε̃`.
pub fn direction_data(
    setup: &DolgopyatSetup,
    b: f64,
    ell: i64,
    cover: &VitaliCover,
    nc_factor: f64,
    refine: usize,
) -> Result<DirectionData> {
    let k = b.abs() + ell.unsigned_abs() as f64;
    if k == 0.0 {
        return Err(Error::Precondition("direction data needs |b| + |ell| > 0".into()));
    }
    if refine == 0 {
        return Err(Error::InvalidArgument("need at least one refinement point".into()));
    }
    let model = setup.model;
    let ifs = model.ifs();
    let n = setup.params.n;
    let depth = setup.samples.truncation_depth;
    let codes = setup.samples.codes.as_ref().ok_or_else(|| Error::Precondition("samples need digit codes".into()))?;
    let eps = cover.eps_tilde;
    let threshold = nc_factor * setup.params.delta1 * 5.0 * eps;
    let w = direction_vectors(setup, b, ell, cover);
    let weak_directions = w
        .iter()
        .enumerate()
        .filter(|(_, v)| v[0].hypot(v[1]) <= setup.params.delta2 * k / 2.0)
        .map(|(i, _)| i)
        .collect();
    let w_hat: Vec<[f64; 2]> = w.iter().map(|&v| unit(v)).collect();
    let partners: Vec<Result<(Complex64, f64)>> = (0..cover.len())
        .into_par_iter()
        .map(|i| {
            let x = cover.centers[i];
            let code: Word = codes[cover.sample_index[i]].iter().map(|&c| c as usize).collect();
            let d = (1..=depth)
                .find(|&d| {
                    let c0 = ifs.eval_word_d(&code[..d], Complex64::new(0.0, 0.0)).0;
                    let r = circle_points(64, 1.0)
                        .map(|z| (ifs.eval_word_d(&code[..d], z).0 - c0).norm())
                        .fold(0.0, f64::max);
                    2.0 * r * 1.05 <= 5.0 * eps
                })
                .ok_or(Error::NoPartner { center: i })?;
            let tail = &setup.omega[n + d..n + d + REFINE_TAIL.min(setup.omega.len() - n - d)];
            let mut r = rng::substream(setup.seed, domain::REFINE, i as u64);
            let mut best = (x, 0.0);
            for _ in 0..refine {
                let mut z = Complex64::new(0.0, 0.0);
                let digits: Vec<usize> = tail
                    .iter()
                    .map(|&kb| model.sub_ifss()[kb][model.p_tilde()[kb].sample(&mut r)])
                    .collect();
                for &m in digits.iter().rev() {
                    z = ifs.map(m).eval(z);
                }
                let y = ifs.eval_word_d(&code[..d], z).0;
                if (x - y).norm() > 5.0 * eps {
                    continue;
                }
                let proj = ((x.re - y.re) * w_hat[i][0] + (x.im - y.im) * w_hat[i][1]).abs();
                if proj > best.1 {
                    best = (y, proj);
                }
            }
            if best.1 > threshold && best.1 > 0.0 {
                Ok(best)
            } else {
                Err(Error::NoPartner { center: i })
            }
        })
        .collect();
    let mut out = DirectionData {
        w,
        w_hat,
        partners: Vec::with_capacity(cover.len()),
        projections: Vec::with_capacity(cover.len()),
        threshold,
        weak_directions,
    };
    for p in partners {
        let (y, proj) = p?;
        out.partners.push(y);
        out.projections.push(proj);
    }
    Ok(out)
}

/// `(damped, at, center)`: damp the `α_damped` term on the ball around
/// `x_center` (`at = 1`) or its partner `y_center` (`at = 2`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub damped: u8,
    pub at: u8,
    pub center: usize,
}

/// The plateau profile: 1 on `s ≤ 1/2`, 0 on `s ≥ 1`, value and `d/ds`.
pub fn bump_profile(s: f64) -> (f64, f64) {
    if s <= 0.5 {
        return (1.0, 0.0);
    }
    if s >= 1.0 {
        return (0.0, 0.0);
    }
    let t = 2.0 * (1.0 - s);
    let a = (-BUMP_KAPPA / t).exp();
    let b = (-BUMP_KAPPA / (1.0 - t)).exp();
    let phi = a / (a + b);
    let dphi = a * b * (BUMP_KAPPA / (t * t) + BUMP_KAPPA / ((1.0 - t) * (1.0 - t))) / ((a + b) * (a + b));
    (phi, -2.0 * dphi)
}

/// `ψ_{c,ε}(z)` and its gradient.
pub fn bump(z: Complex64, c: Complex64, eps: f64) -> (f64, [f64; 2]) {
    let v = z - c;
    let r = v.norm();
    let (val, ds) = bump_profile(r / eps);
    if ds == 0.0 || r == 0.0 {
        return (val, [0.0, 0.0]);
    }
    let k = ds / (eps * r);
    (val, [k * v.re, k * v.im])
}

/// `N^J` for one `J`: `χ_J ∘ f_I` is `1 − θ Σ ψ` in source coordinates when
/// `I` is a designated word and 1 otherwise.
#[derive(Clone, Debug)]
pub struct DolgopyatOperator<'s> {
    sum: WordSum<'s>,
    alpha: [Word; 2],
    theta: f64,
    radius: f64,
    bumps: [Vec<Complex64>; 2],
    ifs: &'s crate::ifs::ConformalIfs,
}

impl<'s> DolgopyatOperator<'s> {
    pub fn new(
        setup: &DolgopyatSetup<'s>,
        j: &[Triple],
        cover: &VitaliCover,
        dd: Option<&DirectionData>,
        frequency: f64,
    ) -> Result<Self> {
        if j.is_empty() {
            return Err(Error::Precondition("J must be nonempty".into()));
        }
        let mut bumps = [Vec::new(), Vec::new()];
        for t in j {
            if t.center >= cover.len() || !(1..=2).contains(&t.damped) || !(1..=2).contains(&t.at) {
                return Err(Error::InvalidArgument(format!("malformed triple {t:?}")));
            }
            let c = if t.at == 1 {
                cover.centers[t.center]
            } else {
                dd.ok_or_else(|| Error::Precondition("partner triples need direction data".into()))?.partners[t.center]
            };
            bumps[t.damped as usize - 1].push(c);
        }
        if frequency <= 0.0 {
            return Err(Error::Precondition("frequency |b| + |ell| must be positive".into()));
        }
        Ok(DolgopyatOperator {
            sum: setup.word_sum()?,
            alpha: setup.alpha.clone(),
            theta: setup.params.theta_damp,
            radius: setup.params.bump_radius(frequency),
            bumps,
            ifs: setup.model.ifs(),
        })
    }

    /// Bump radius `2δ₃ε̃`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn which(&self, word: &[usize]) -> Option<usize> {
        (0..2).find(|&i| self.alpha[i] == word)
    }

    /// `1 − θ Σ ψ(x)` over the bumps of `α_{i+1}`, with gradient.
    pub fn damping(&self, i: usize, x: Complex64) -> (f64, [f64; 2]) {
        let mut v = 1.0;
        let mut g = [0.0, 0.0];
        for &c in &self.bumps[i] {
            if (x - c).norm() >= self.radius {
                continue;
            }
            let (p, dp) = bump(x, c, self.radius);
            v -= self.theta * p;
            g[0] -= self.theta * dp[0];
            g[1] -= self.theta * dp[1];
        }
        (v, g)
    }

    /// `N^J g(x)` with weight `e^{2πa c}`.
    pub fn eval<F: Field + ?Sized>(&self, a: f64, g: &F, x: Complex64) -> Complex64 {
        let tp = TwistParams::new(a, 0.0, 0);
        let mut acc = Complex64::new(0.0, 0.0);
        self.sum.visit(x, &mut |word, y, d, eta| {
            let chi = match self.which(word) {
                Some(i) => self.damping(i, x).0,
                None => 1.0,
            };
            acc += tp.twist(d) * g.eval(y) * (eta * chi);
        });
        acc
    }

    /// `χ_J(z)` through Newton inverses of the designated maps.
    pub fn chi_at(&self, z: Complex64) -> Result<f64> {
        let mut v = 1.0;
        for i in 0..2 {
            if self.bumps[i].is_empty() {
                continue;
            }
            if let Some(w) = invert_word(self.ifs, &self.alpha[i], z)? {
                v *= self.damping(i, w).0;
            }
        }
        Ok(v)
    }
}

/// `f_w^{-1}(z)` when `z ∈ f_w(D)`, by Newton from the cylinder center.
pub fn invert_word(ifs: &crate::ifs::ConformalIfs, w: &[usize], z: Complex64) -> Result<Option<Complex64>> {
    let c0 = ifs.eval_word_d(w, Complex64::new(0.0, 0.0)).0;
    let r = circle_points(64, 1.0)
        .map(|u| (ifs.eval_word_d(w, u).0 - c0).norm())
        .fold(0.0, f64::max);
    if (z - c0).norm() > 1.1 * r + 1e-12 {
        return Ok(None);
    }
    let mut u = Complex64::new(0.0, 0.0);
    for _ in 0..80 {
        let (v, d) = ifs.eval_word_d(w, u);
        let step = (v - z) / d;
        u -= step;
        if u.norm() > 3.0 {
            return Ok(None);
        }
        if step.norm() <= 1e-13 * (1.0 + u.norm()) {
            return Ok((u.norm() <= 1.0 + 1e-12).then_some(u));
        }
    }
    let (v, _) = ifs.eval_word_d(w, u);
    if (v - z).norm() <= 1e-14 {
        return Ok((u.norm() <= 1.0 + 1e-12).then_some(u));
    }
    Err(Error::NewtonFailure { re: z.re, im: z.im })
}

/// `χ_J` sampled on a grid.
pub fn chi_j(op: &DolgopyatOperator, grid: &Arc<DiscGrid>) -> Result<GridFunction> {
    let vals: Vec<Result<Complex64>> = grid
        .nodes()
        .par_iter()
        .map(|&z| op.chi_at(z).map(|v| Complex64::new(v, 0.0)))
        .collect();
    GridFunction::from_values(grid, vals.into_iter().collect::<Result<Vec<_>>>()?)
}

/// `N^J gf = P_{a,0,ω,N}(χ_J · gf)` on the grid of `gf`.
pub fn dolgopyat_apply(op: &DolgopyatOperator, a: f64, gf: &GridFunction) -> Result<GridFunction> {
    let grid = gf.grid().clone();
    check_images(op.ifs, &grid)?;
    Ok(GridFunction::build(&grid, &|x: Complex64| op.eval(a, gf, x)))
}

/// Positive cone member `exp φ` with `|∇φ| ≤ bound` and `|φ| ≤ 30`.
pub fn random_cone_member<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> Result<ConeMember> {
    if !(bound >= 0.0 && bound.is_finite()) {
        return Err(Error::Infeasible(format!("cone slope {bound} admits no test functions")));
    }
    let kmax = (bound / 10.0).max(1.0);
    let target = rng.gen_range(0.2..=1.0) * bound;
    let mut field = TrigField::random(rng, 4, kmax).with_gradient_bound(target);
    let amp = field.amplitude();
    if amp > 30.0 {
        field = field.with_gradient_bound(target * 30.0 / amp);
    }
    Ok(ConeMember(field))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionRow {
    pub trial: usize,
    pub cone_ok: bool,
    /// Largest `|∇N^J H| / (A (|b|+|ℓ|) N^J H)` over the nodes.
    pub cone_ratio: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionReport {
    pub rows: Vec<ContractionRow>,
    pub cone_ok: bool,
    pub cone_ok_fraction: f64,
    pub alpha_hat: f64,
}

/// Cone stability at the grid nodes and the `L²(μ_{σ^N ω})` ratio
/// `∫|N^J H|² / ∫P_{0,0}(H²)` for `trials` random cone members, with the
/// dense `J = {(1,1,j)}`. The sample set integrates.
pub fn cone_and_contraction_test(
    setup: &DolgopyatSetup,
    b: f64,
    ell: i64,
    cover: &VitaliCover,
    trials: usize,
    grid_h: f64,
) -> Result<ContractionReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let k = b.abs() + ell.unsigned_abs() as f64;
    let slope = setup.params.a_cone * k;
    let j: Vec<Triple> = (0..cover.len())
        .map(|c| Triple {
            damped: 1,
            at: 1,
            center: c,
        })
        .collect();
    let op = DolgopyatOperator::new(setup, &j, cover, None, k.max(f64::MIN_POSITIVE))?;
    let grid = DiscGrid::new(grid_h)?;
    let points = &setup.samples.points;
    let rows: Vec<Result<ContractionRow>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut r = rng::substream(setup.seed, domain::CONE, trial as u64);
            let h = random_cone_member(&mut r, slope)?;
            let field = &h.0;
            let mut cone_ratio = 0.0f64;
            for &x in grid.nodes() {
                let mut val = 0.0;
                let mut grad = Complex64::new(0.0, 0.0);
                op.sum.visit(x, &mut |word, y, d, eta| {
                    let (phi, gphi) = field.value_gradient(y);
                    let hy = phi.exp();
                    let (chi, dchi) = match op.which(word) {
                        Some(i) => op.damping(i, x),
                        None => (1.0, [0.0, 0.0]),
                    };
                    val += eta * chi * hy;
                    grad += eta * (chi * hy * d.conj() * Complex64::new(gphi[0], gphi[1]) + hy * Complex64::new(dchi[0], dchi[1]));
                });
                let lhs = grad.norm();
                if lhs > 0.0 {
                    cone_ratio = cone_ratio.max(if slope > 0.0 { lhs / (slope * val) } else { f64::INFINITY });
                }
            }
            let (mut num, mut den) = (0.0, 0.0);
            for &x in points {
                let mut nj = 0.0;
                let mut p2 = 0.0;
                op.sum.visit(x, &mut |word, y, _, eta| {
                    let hy = field.value(y).exp();
                    let chi = match op.which(word) {
                        Some(i) => op.damping(i, x).0,
                        None => 1.0,
                    };
                    nj += eta * chi * hy;
                    p2 += eta * hy * hy;
                });
                num += nj * nj;
                den += p2;
            }
            Ok(ContractionRow {
                trial,
                cone_ok: cone_ratio <= 1.0 + 1e-12,
                cone_ratio,
                ratio: num / den,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let ok = rows.iter().filter(|r| r.cone_ok).count();
    Ok(ContractionReport {
        cone_ok: ok == rows.len(),
        cone_ok_fraction: ok as f64 / rows.len() as f64,
        alpha_hat: rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max),
        rows,
    })
}

/// A center where no case of the selection fired, with
/// `[Θ₁(x), Θ₂(x), Θ₁(y), Θ₂(y)]` maximized over the balls.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CenterFailure {
    pub center: usize,
    pub theta: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominationOutcome {
    pub j: Vec<Triple>,
    pub dense: bool,
    pub verified: bool,
    pub failures: Vec<CenterFailure>,
    /// Ball points where the two designated terms are more than `π/2` apart.
    pub arg_violations: usize,
    /// Smallest `N^J H − |P f|` relative to `N^J H` over the check points.
    pub worst_margin: f64,
    /// `W_J` reaches every sample within `100ε̃`.
    pub covers_100: bool,
    /// `∫_{W_J} H dμ̂ / ∫ H dμ̂`.
    pub eps2_hat: f64,
}

/// `[Θ₁(x), Θ₂(x)]` for the designated pair, each term carrying its own
/// angle cocycle, and whether the two terms point more than `π/2` apart.
pub fn theta_values(setup: &DolgopyatSetup, tp: &TwistParams, f: &GridFunction, h: &GridFunction, x: Complex64) -> ([f64; 2], bool) {
    let ifs = setup.model.ifs();
    let theta = setup.params.theta_damp;
    let mut z = [Complex64::new(0.0, 0.0); 2];
    let mut hh = [0.0; 2];
    for i in 0..2 {
        let (y, d) = ifs.eval_word_d(&setup.alpha[i], x);
        let c = -d.norm().ln();
        z[i] = tp.twist(d) * f.eval(y) * setup.eta[i];
        hh[i] = (TAU * tp.a * c).exp() * h.eval(y).re * setup.eta[i];
    }
    let num = (z[0] + z[1]).norm();
    let bad = z[0].norm() > 0.0 && z[1].norm() > 0.0 && (z[0] / z[1]).arg().abs() > PI / 2.0;
    (
        [num / ((1.0 - 2.0 * theta) * hh[0] + hh[1]), num / (hh[0] + (1.0 - 2.0 * theta) * hh[1])],
        bad,
    )
}

/// Points of `B_r(c)`: center, 8 at `r/2`, 8 at `r`.
fn ball_points(c: Complex64, r: f64) -> Vec<Complex64> {
    let mut v = vec![c];
    for rr in [0.5 * r, r] {
        v.extend(circle_points(8, rr).map(|u| c + u));
    }
    v
}

/// Four-case selection of a dense `J` for `(f, H)` and verification of
/// `|P_{s,ℓ,ω,N} f| ≤ N^J H` on the grid nodes of `f` and at all centers and
/// partners.
#[allow(clippy::too_many_arguments)]
pub fn domination_select(
    setup: &DolgopyatSetup,
    tp: &TwistParams,
    f: &GridFunction,
    h: &GridFunction,
    cover: &VitaliCover,
    dd: &DirectionData,
) -> Result<DominationOutcome> {
    let k = tp.frequency();
    if k == 0.0 {
        return Err(Error::Precondition("domination needs |b| + |ell| > 0".into()));
    }
    if !Arc::ptr_eq(f.grid(), h.grid()) && f.grid().len() != h.grid().len() {
        return Err(Error::InvalidArgument("f and H must share a grid".into()));
    }
    let slope = setup.params.a_cone * k;
    let fv = f.values();
    let hv = h.values();
    if let Some(i) = (0..fv.len()).find(|&i| fv[i].norm() > hv[i].re || hv[i].im != 0.0) {
        return Err(Error::Precondition(format!("|f| <= H fails at node {i}")));
    }
    let gf = f.gradient_norms();
    if let Some(i) = (0..fv.len()).find(|&i| gf[i] > slope * hv[i].re) {
        return Err(Error::Precondition(format!("|grad f| <= A(|b|+|ell|) H fails at node {i}")));
    }
    let r = setup.params.bump_radius(k);
    let ball_max = |c: Complex64| {
        let mut t = [0.0f64; 2];
        let mut arg_bad = 0usize;
        for x in ball_points(c, r) {
            let (v, bad) = theta_values(setup, tp, f, h, x);
            t[0] = t[0].max(v[0]);
            t[1] = t[1].max(v[1]);
            arg_bad += bad as usize;
        }
        (t, arg_bad)
    };
    let per_center: Vec<(Option<Triple>, [f64; 4], usize)> = (0..cover.len())
        .into_par_iter()
        .map(|c| {
            let (tx, bx) = ball_max(cover.centers[c]);
            let (ty, by) = ball_max(dd.partners[c]);
            let cases = [(tx[0], 1u8, 1u8), (tx[1], 2, 1), (ty[0], 1, 2), (ty[1], 2, 2)];
            let pick = cases.iter().find(|(t, _, _)| *t <= 1.0).map(|&(_, damped, at)| Triple {
                damped,
                at,
                center: c,
            });
            (pick, [tx[0], tx[1], ty[0], ty[1]], bx + by)
        })
        .collect();
    let mut j = Vec::new();
    let mut failures = Vec::new();
    let mut arg_violations = 0;
    for (c, (pick, t, bad)) in per_center.into_iter().enumerate() {
        arg_violations += bad;
        match pick {
            Some(tr) => j.push(tr),
            None => failures.push(CenterFailure { center: c, theta: t }),
        }
    }
    let dense = is_dense(&j, cover.len());
    if j.is_empty() {
        return Ok(DominationOutcome {
            j,
            dense,
            verified: false,
            failures,
            arg_violations,
            worst_margin: f64::NEG_INFINITY,
            covers_100: false,
            eps2_hat: 0.0,
        });
    }
    let op = DolgopyatOperator::new(setup, &j, cover, Some(dd), k)?;
    let mut checks: Vec<Complex64> = f.grid().nodes().to_vec();
    checks.extend(&cover.centers);
    checks.extend(&dd.partners);
    let a = tp.a;
    let margins: Vec<f64> = checks
        .par_iter()
        .map(|&x| {
            let mut pf = Complex64::new(0.0, 0.0);
            let mut nh = 0.0;
            op.sum.visit(x, &mut |word, y, d, eta| {
                let chi = match op.which(word) {
                    Some(i) => op.damping(i, x).0,
                    None => 1.0,
                };
                pf += tp.twist(d) * f.eval(y) * eta;
                nh += (TAU * a * -d.norm().ln()).exp() * chi * h.eval(y).re * eta;
            });
            if nh > 0.0 {
                (nh - pf.norm()) / nh
            } else if pf.norm() == 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let worst_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let w_points: Vec<Complex64> = j
        .iter()
        .map(|t| if t.at == 1 { cover.centers[t.center] } else { dd.partners[t.center] })
        .collect();
    let eps = cover.eps_tilde;
    let pts = &setup.samples.points;
    let near = |z: &Complex64, rad: f64| w_points.iter().any(|w| (w - z).norm() < rad);
    let covers_100 = pts.par_iter().all(|z| near(z, 100.0 * eps));
    let (mut inside, mut total) = (0.0, 0.0);
    for z in pts {
        let hz = h.eval(*z).re;
        total += hz;
        if near(z, eps * setup.params.delta3) {
            inside += hz;
        }
    }
    Ok(DominationOutcome {
        verified: dense && failures.is_empty() && worst_margin >= -1e-12,
        j,
        dense,
        failures,
        arg_violations,
        worst_margin,
        covers_100,
        eps2_hat: inside / total,
    })
}

/// Every center carries some triple.
pub fn is_dense(j: &[Triple], centers: usize) -> bool {
    let mut seen = vec![false; centers];
    for t in j {
        if t.center < centers {
            seen[t.center] = true;
        }
    }
    seen.into_iter().all(|s| s)
}

/// Random admissible pair `(f, H)`: `H = e^φ` with `|∇φ| ≤ 2`,
/// `f = H · r · e^{iψ}` with `r ∈ [0.05, 0.95]` and `|∇ψ| ≤ 20`, so that
/// grid differences resolve both and `|∇f| ≤ A(|b|+|ℓ|) H` holds for `A(|b|+|ℓ|) ≥ 40`.
pub fn random_dominated_pair(grid: &Arc<DiscGrid>, slope: f64, seed: u64, index: u64) -> Result<(GridFunction, GridFunction)> {
    let mut r = rng::substream(seed, domain::PROBE, index);
    let h = random_cone_member(&mut r, slope.min(2.0))?;
    let amp = TrigField::random(&mut r, 3, 3.0);
    let phase = TrigField::random(&mut r, 3, 6.0).with_gradient_bound((slope / 4.0).min(20.0));
    let ampl = amp.amplitude().max(1e-12);
    let hg = GridFunction::build(grid, &h);
    let fg = GridFunction::build(grid, &|z: Complex64| {
        let rr = 0.5 + 0.45 * amp.value(z) / ampl;
        Complex64::from_polar(h.0.value(z).exp() * rr, phase.value(z))
    });
    Ok((fg, hg))
}
