//! The norm/angle random walk `(S_n, A_n)` driven by the cocycles along a
//! random sequence, stopping times, overshoot laws and renewal sums.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::{ConformalIfs, HolomorphicMap, MapKind, Word};
use crate::measure::{default_depth, ProbVector};
use crate::rng::{self, domain};
use crate::stats::{ks_continuous, mean_stderr};

/// Reporting convention for angles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircleUnit {
    /// Fractions of a turn in `[0, 1)`.
    #[default]
    Turns,
    /// Radians in `[0, 2π)`.
    Radians,
}

impl CircleUnit {
    /// Convert an angle in radians to this unit, reduced to one turn.
    pub fn report(self, radians: f64) -> f64 {
        let r = radians.rem_euclid(TAU);
        match self {
            CircleUnit::Turns => r / TAU,
            CircleUnit::Radians => r,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// `τ_k = min{n : S_n ≥ k}`.
    Tau,
    /// `β_k = min{m : |f'_{ω|m}(x₀)| < e^{-k-εk/18}}` at `x₀ = 0`.
    Beta { eps: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WalkRecord {
    /// Symbols `ω_1 … ω_τ`.
    pub omega_prefix: Word,
    /// `S_1, …, S_τ` in nats.
    pub s: Vec<f64>,
    /// `A_1, …, A_τ` in radians, reduced mod 2π.
    pub angles: Vec<f64>,
    pub tau: usize,
    /// `S_τ − k`.
    pub overshoot: f64,
    /// `A_τ` mod 2π.
    pub angle_at_stop: f64,
    pub beta: Option<usize>,
}

/// Tail depth making `ρ^depth` negligible against the cocycle tolerance.
pub fn tail_depth(ifs: &ConformalIfs) -> usize {
    default_depth(ifs.rho.max(1e-3), 1e-13).min(200)
}

/// Steps `j = 1..=len` of the walk along `symbols` (at least `len + depth`
/// long): `X_j = -log|f'_{ω_j}(x_{σ^j ω})|` and `Y_j = arg f'_{ω_j}(x_{σ^j ω})`,
/// with the tail point realized by composing the remaining symbols on 0.
pub fn walk_steps(ifs: &ConformalIfs, symbols: &[usize], len: usize) -> Vec<(f64, f64)> {
    let mut x = Complex64::new(0.0, 0.0);
    for &s in symbols[len..].iter().rev() {
        x = ifs.map(s).eval(x);
    }
    let mut steps = vec![(0.0, 0.0); len];
    for j in (0..len).rev() {
        let (v, d) = ifs.map(symbols[j]).eval_d(x);
        steps[j] = (-d.norm().ln(), d.arg());
        x = v;
    }
    steps
}

fn draw_symbols(p: &ProbVector, count: usize, r: &mut rand_chacha::ChaCha8Rng) -> Word {
    (0..count).map(|_| p.sample(r)).collect()
}

fn check(ifs: &ConformalIfs, p: &ProbVector) -> Result<()> {
    if ifs.len() != p.len() {
        return Err(Error::InvalidArgument(format!("{} maps but {} weights", ifs.len(), p.len())));
    }
    if !(ifs.c_min > 0.0) {
        return Err(Error::Precondition("the maps must be strict contractions".into()));
    }
    Ok(())
}

/// Mean and standard error of `S_n / n` over independent walks.
pub fn lyapunov_chi(ifs: &ConformalIfs, p: &ProbVector, walk_length: usize, trials: usize, seed: u64) -> Result<(f64, f64)> {
    check(ifs, p)?;
    if walk_length == 0 || trials == 0 {
        return Err(Error::InvalidArgument("walk length and trials must be positive".into()));
    }
    let depth = tail_depth(ifs);
    let vals: Vec<f64> = rng::par_generate(trials, seed, domain::WALK, |r, _| {
        let sym = draw_symbols(p, walk_length + depth, r);
        let s: f64 = walk_steps(ifs, &sym, walk_length).iter().map(|x| x.0).sum();
        s / walk_length as f64
    });
    Ok(if trials == 1 { (vals[0], 0.0) } else { mean_stderr(&vals) })
}

/// One walk stopped by `rule`; the walk is drawn from substream `index`.
pub fn walk_until(ifs: &ConformalIfs, p: &ProbVector, k: f64, seed: u64, index: u64, rule: StopRule) -> Result<WalkRecord> {
    check(ifs, p)?;
    if !(k > 0.0) {
        return Err(Error::Precondition(format!("k must be positive, got {k}")));
    }
    let mut r = rng::substream(seed, domain::WALK, index);
    Ok(walk_with(ifs, p, k, rule, &mut r))
}

fn walk_with(ifs: &ConformalIfs, p: &ProbVector, k: f64, rule: StopRule, r: &mut rand_chacha::ChaCha8Rng) -> WalkRecord {
    let depth = tail_depth(ifs);
    let extra = match rule {
        StopRule::Tau => 0.0,
        StopRule::Beta { eps } => eps.abs() * k / 18.0,
    };
    let max_steps = ((k + extra) / ifs.c_min).floor() as usize + 2;
    let sym = draw_symbols(p, max_steps + depth, r);
    let steps = walk_steps(ifs, &sym, max_steps);
    let mut s = Vec::new();
    let mut angles = Vec::new();
    let (mut sn, mut an) = (0.0, 0.0);
    for &(x, y) in &steps {
        sn += x;
        an += y;
        s.push(sn);
        angles.push(an.rem_euclid(TAU));
        if sn >= k {
            break;
        }
    }
    let tau = s.len();
    let beta = match rule {
        StopRule::Tau => None,
        StopRule::Beta { eps } => {
            let bound = (-k - eps * k / 18.0).exp();
            (1..=max_steps).find(|&m| ifs.eval_word_d(&sym[..m], Complex64::new(0.0, 0.0)).1.norm() < bound)
        }
    };
    WalkRecord {
        omega_prefix: sym[..tau].to_vec(),
        overshoot: s[tau - 1] - k,
        angle_at_stop: angles[tau - 1],
        s,
        angles,
        tau,
        beta,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OvershootLaw {
    pub k: f64,
    pub overshoots: Vec<f64>,
    /// Stopping angles in the requested unit.
    pub angles: Vec<f64>,
    pub taus: Vec<usize>,
    pub chi_hat: f64,
    /// KS distance of the overshoots to `y ↦ E[min(X, y)] / χ`.
    pub ks_overshoot: f64,
    /// KS distance of the angles to the uniform law.
    pub ks_angle: f64,
}

/// Draws of the stationary step `X = c̃(ω_1, σω)`, `ω ~ p^ℕ`.
pub fn step_draws(ifs: &ConformalIfs, p: &ProbVector, count: usize, seed: u64) -> Vec<f64> {
    let depth = tail_depth(ifs);
    rng::par_generate(count, seed, domain::TAIL, |r, _| {
        let sym = draw_symbols(p, 1 + depth, r);
        walk_steps(ifs, &sym, 1)[0].0
    })
}

/// Limit CDF of the overshoot, `F(y) = E[min(X, y)] / E[X]`, from step draws.
pub fn limit_overshoot_cdf(steps: &[f64]) -> impl Fn(f64) -> f64 + '_ {
    let mean: f64 = steps.iter().sum::<f64>() / steps.len() as f64;
    move |y: f64| {
        if y <= 0.0 {
            return 0.0;
        }
        let m: f64 = steps.iter().map(|&x| x.min(y)).sum::<f64>() / steps.len() as f64;
        (m / mean).min(1.0)
    }
}

/// Empirical joint law of `(angle, overshoot)` at level `k` and its KS
/// distances to the limit laws.
pub fn overshoot_law(
    ifs: &ConformalIfs,
    p: &ProbVector,
    k: f64,
    trials: usize,
    seed: u64,
    unit: CircleUnit,
) -> Result<OvershootLaw> {
    check(ifs, p)?;
    if !(k > 0.0) || trials == 0 {
        return Err(Error::Precondition("need k > 0 and at least one trial".into()));
    }
    let walks: Vec<WalkRecord> = rng::par_generate(trials, seed, domain::WALK, |r, _| walk_with(ifs, p, k, StopRule::Tau, r));
    let overshoots: Vec<f64> = walks.iter().map(|w| w.overshoot).collect();
    let radians: Vec<f64> = walks.iter().map(|w| w.angle_at_stop).collect();
    let steps = step_draws(ifs, p, trials.min(20_000), seed);
    let chi_hat = steps.iter().sum::<f64>() / steps.len() as f64;
    let cdf = limit_overshoot_cdf(&steps);
    let ks_overshoot = ks_continuous(&overshoots, &cdf);
    let ks_angle = ks_continuous(&radians, |a| (a / TAU).clamp(0.0, 1.0));
    Ok(OvershootLaw {
        k,
        angles: radians.iter().map(|&a| unit.report(a)).collect(),
        taus: walks.iter().map(|w| w.tau).collect(),
        overshoots,
        chi_hat,
        ks_overshoot,
        ks_angle,
    })
}

/// Exact law of `(overshoot, angle)` at level `k` by walking the word tree;
/// only for affine maps, whose steps do not depend on the tail.
pub fn enumerate_overshoot(ifs: &ConformalIfs, p: &ProbVector, k: f64, max_leaves: usize) -> Result<Vec<(f64, f64, f64)>> {
    check(ifs, p)?;
    let steps: Vec<(f64, f64)> = ifs
        .maps()
        .iter()
        .map(|m| match (m.kind(), m) {
            (Some(MapKind::Affine), HolomorphicMap::Affine { a, .. }) => Ok((-a.norm().ln(), a.arg())),
            _ => Err(Error::Precondition("exact enumeration needs affine maps".into())),
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    let mut stack = vec![(0.0f64, 0.0f64, 1.0f64)];
    while let Some((s, a, w)) = stack.pop() {
        for (i, &(x, y)) in steps.iter().enumerate() {
            let pi = p.get(i);
            if pi == 0.0 {
                continue;
            }
            let (s2, a2, w2) = (s + x, a + y, w * pi);
            if s2 >= k {
                out.push((s2 - k, a2.rem_euclid(TAU), w2));
                if out.len() > max_leaves {
                    return Err(Error::TooLarge {
                        what: "stopping words",
                        count: out.len() as u128,
                        cap: max_leaves as u128,
                    });
                }
            } else {
                stack.push((s2, a2, w2));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RenewalSum {
    pub value: f64,
    /// Mass of words at depth `n_max` that could still contribute.
    pub tail_estimate: f64,
    pub words_visited: usize,
}

/// Test function `f(z, θ, y)` with `f(·, ·, y) = 0` outside `support` in `y`.
pub struct RenewalTest<'a> {
    pub f: &'a (dyn Fn(Complex64, f64, f64) -> f64 + Sync),
    pub support: (f64, f64),
}

/// Word tree `η` with `η.z`, `θ(η, z)`, `c(η, z)`, `p_η`, pruned once
/// `c(η, z) − t` has passed the support. Calls `leaf` on every node.
fn renewal_tree<L>(ifs: &ConformalIfs, p: &ProbVector, z: Complex64, t: f64, hi: f64, n_max: usize, leaf: &mut L) -> Result<(f64, usize)>
where
    L: FnMut(Complex64, f64, f64, f64),
{
    let mut stack = vec![(z, 0.0f64, 0.0f64, 1.0f64, 0usize)];
    let mut tail = 0.0;
    let mut visited = 0;
    while let Some((w, th, c, pr, n)) = stack.pop() {
        visited += 1;
        leaf(w, th, c, pr);
        if c - t > hi {
            continue;
        }
        if n == n_max {
            tail += pr;
            continue;
        }
        for (i, m) in ifs.maps().iter().enumerate() {
            let pi = p.get(i);
            if pi == 0.0 {
                continue;
            }
            let (v, d) = m.eval_d(w);
            stack.push((v, th + d.arg(), c - d.norm().ln(), pr * pi, n + 1));
        }
    }
    if tail > 0.0 {
        return Err(Error::DepthExhausted(n_max));
    }
    Ok((tail, visited))
}

/// `R f(z, t) = Σ_n ∫ f(η.z, θ(η, z), c(η, z) − t) dp^n(η)` by exhaustive
/// enumeration with pruning.
pub fn renewal_partial_sum(ifs: &ConformalIfs, p: &ProbVector, test: &RenewalTest, z: Complex64, t: f64, n_max: usize) -> Result<RenewalSum> {
    check(ifs, p)?;
    let (lo, hi) = test.support;
    let mut value = 0.0;
    let (tail, visited) = renewal_tree(ifs, p, z, t, hi, n_max, &mut |w, th, c, pr| {
        let y = c - t;
        if y >= lo && y <= hi {
            value += pr * (test.f)(w, th, y);
        }
    })?;
    Ok(RenewalSum {
        value,
        tail_estimate: tail,
        words_visited: visited,
    })
}

/// Residue sum `E f(z, k) = Σ_n ∫∫ f(c(i, η.z), θ(i, η.z) + θ(η, z), c(η, z) − k) dp^n dp(i)`.
pub fn residue_partial_sum(ifs: &ConformalIfs, p: &ProbVector, test: &RenewalTest, z: Complex64, k: f64, n_max: usize) -> Result<RenewalSum> {
    check(ifs, p)?;
    let (lo, hi) = test.support;
    let mut value = 0.0;
    let (tail, visited) = renewal_tree(ifs, p, z, k, hi, n_max, &mut |w, th, c, pr| {
        let y = c - k;
        if y < lo || y > hi {
            return;
        }
        for (i, m) in ifs.maps().iter().enumerate() {
            let d = m.eval_d(w).1;
            value += pr * p.get(i) * (test.f)(Complex64::new(-d.norm().ln(), 0.0), d.arg() + th, y);
        }
    })?;
    Ok(RenewalSum {
        value,
        tail_estimate: tail,
        words_visited: visited,
    })
}

/// `(1/χ) ∫ g` over `[lo, hi]` by composite Simpson on `panels` (even) panels.
pub fn renewal_limit(chi: f64, g: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let n = panels.max(2) & !1;
    let h = (hi - lo) / n as f64;
    let mut acc = g(lo) + g(hi);
    for j in 1..n {
        acc += g(lo + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0 / chi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::ifs::{cocycle, HolomorphicMap};
    use crate::stats::ks_discrete;
    use approx::assert_abs_diff_eq;

    fn single_half() -> (ConformalIfs, ProbVector) {
        (
            ConformalIfs::new(vec![HolomorphicMap::scale_shift(0.5, 0.0)]).unwrap(),
            ProbVector::uniform(1),
        )
    }

    #[test]
    fn lyapunov_examples() {
        let ifs = fixtures::lebesgue_segment();
        let (chi, _) = lyapunov_chi(&ifs.ifs, &ifs.p, 50, 100, 1).unwrap();
        assert_abs_diff_eq!(chi, 2f64.ln(), epsilon = 1e-12);
        let fx = fixtures::two_ratio();
        let (chi, se) = lyapunov_chi(&fx.ifs, &fx.p, 200, 2000, 2).unwrap();
        let exact = (2f64.ln() + 3f64.ln()) / 2.0;
        assert!((chi - exact).abs() < 3.0 * se, "{chi} {se}");
        let fx = fixtures::uni_planar(false);
        let (chi, _) = lyapunov_chi(&fx.ifs, &fx.p, 100, 200, 3).unwrap();
        assert!(chi >= fx.ifs.c_min && chi <= fx.ifs.c_max);
    }

    #[test]
    fn lattice_walk_examples() {
        let (ifs, p) = single_half();
        let w = walk_until(&ifs, &p, 5.0, 0, 0, StopRule::Tau).unwrap();
        assert_eq!(w.tau, 8);
        assert_abs_diff_eq!(w.overshoot, 8.0 * 2f64.ln() - 5.0, epsilon = 1e-12);
        let w = walk_until(&ifs, &p, 0.3, 0, 0, StopRule::Tau).unwrap();
        assert_eq!(w.tau, 1);
        assert!(walk_until(&ifs, &p, 0.0, 0, 0, StopRule::Tau).is_err());
    }

    #[test]
    fn walk_invariants_on_nonlinear_fixture() {
        let fx = fixtures::uni_planar(false);
        let ifs = &fx.ifs;
        let mut prev_tau = 0;
        for (i, k) in [2.0, 4.0, 6.0, 8.0].into_iter().enumerate() {
            let w = walk_until(ifs, &fx.p, k, 9, 3, StopRule::Tau).unwrap();
            assert!(w.tau >= prev_tau, "same path, larger level");
            prev_tau = w.tau;
            let mut last = 0.0;
            for &s in &w.s {
                let inc = s - last;
                assert!(inc >= ifs.c_min - 1e-9 && inc <= ifs.c_max + 1e-9);
                last = s;
            }
            assert!(w.overshoot >= 0.0 && w.overshoot <= ifs.c_max);
            // symbolic sum agrees with the geometric derivative of the prefix
            let mut r = rng::substream(9, domain::WALK, 3);
            let extra = 0.0;
            let max_steps = ((k + extra) / ifs.c_min).floor() as usize + 2;
            let sym = draw_symbols(&fx.p, max_steps + tail_depth(ifs), &mut r);
            let mut x = Complex64::new(0.0, 0.0);
            for &s in sym[w.tau..].iter().rev() {
                x = ifs.map(s).eval(x);
            }
            let (c, th) = cocycle(ifs, &sym[..w.tau], x).unwrap();
            assert_abs_diff_eq!(c, w.s[w.tau - 1], epsilon = 1e-9);
            let dth = (th - w.angle_at_stop).rem_euclid(TAU);
            assert!(dth.min(TAU - dth) < 1e-9, "{i}");
        }
    }

    #[test]
    fn beta_rule_stops_past_threshold() {
        let fx = fixtures::uni_planar(false);
        let w = walk_until(&fx.ifs, &fx.p, 6.0, 1, 0, StopRule::Beta { eps: 0.5 }).unwrap();
        let m = w.beta.unwrap();
        let bound = (-6.0 - 0.5 * 6.0 / 18.0f64).exp();
        let mut r = rng::substream(1, domain::WALK, 0);
        let max_steps = ((6.0 + 0.5 * 6.0 / 18.0) / fx.ifs.c_min).floor() as usize + 2;
        let sym = draw_symbols(&fx.p, max_steps + tail_depth(&fx.ifs), &mut r);
        let d = |m: usize| fx.ifs.eval_word_d(&sym[..m], Complex64::new(0.0, 0.0)).1.norm();
        assert!(d(m) < bound && (m == 1 || d(m - 1) >= bound));
    }

    #[test]
    fn enumeration_is_a_probability_law() {
        let fx = fixtures::two_ratio();
        let law = enumerate_overshoot(&fx.ifs, &fx.p, 5.0, 1 << 20).unwrap();
        let total: f64 = law.iter().map(|x| x.2).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        assert!(law.iter().all(|x| x.0 >= 0.0 && x.0 <= 3f64.ln()));
        let nonlinear = fixtures::uni_planar(false);
        assert!(enumerate_overshoot(&nonlinear.ifs, &nonlinear.p, 5.0, 100).is_err());
    }

    #[test]
    fn overshoot_matches_enumeration() {
        let fx = fixtures::two_ratio();
        let law = overshoot_law(&fx.ifs, &fx.p, 5.0, 20_000, 4, CircleUnit::Turns).unwrap();
        let exact = enumerate_overshoot(&fx.ifs, &fx.p, 5.0, 1 << 20).unwrap();
        let atoms: Vec<(f64, f64)> = exact.iter().map(|x| (x.0, x.2)).collect();
        let ks = ks_discrete(&law.overshoots, &atoms);
        assert!(ks < 0.02, "{ks}");
        assert!(law.overshoots.iter().all(|&o| (0.0..=3f64.ln()).contains(&o)));
        assert!(law.angles.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn lattice_control_stays_far_from_the_limit() {
        let (ifs, p) = single_half();
        let a = overshoot_law(&ifs, &p, 5.0, 2000, 1, CircleUnit::Turns).unwrap();
        let b = overshoot_law(&ifs, &p, 20.0, 2000, 1, CircleUnit::Turns).unwrap();
        assert!(a.ks_overshoot > 0.2 && b.ks_overshoot > 0.2);
    }

    #[test]
    fn circle_units() {
        assert_abs_diff_eq!(CircleUnit::Turns.report(-std::f64::consts::FRAC_PI_2), 0.75);
        assert_abs_diff_eq!(CircleUnit::Radians.report(TAU + 1.0), 1.0, epsilon = 1e-12);
    }

    fn bump(y: f64) -> f64 {
        if y <= 0.0 || y >= 1.0 {
            0.0
        } else {
            (-1.0 / (y * (1.0 - y))).exp()
        }
    }

    #[test]
    fn single_map_renewal_closed_form() {
        let (ifs, p) = single_half();
        let f = |_: Complex64, _: f64, y: f64| bump(y);
        let test = RenewalTest { f: &f, support: (0.0, 1.0) };
        for t in [0.3, 2.0, 7.7] {
            let got = renewal_partial_sum(&ifs, &p, &test, Complex64::new(0.2, 0.0), t, 40).unwrap();
            let exact: f64 = (0..40).map(|n| bump(n as f64 * 2f64.ln() - t)).sum();
            assert_abs_diff_eq!(got.value, exact, epsilon = 1e-15);
            // residue: the extra symbol contributes its own cocycle, weight 1
            let res = residue_partial_sum(&ifs, &p, &test, Complex64::new(0.2, 0.0), t, 40).unwrap();
            assert_abs_diff_eq!(res.value, exact, epsilon = 1e-15);
        }
        let zero = |_: Complex64, _: f64, _: f64| 0.0;
        let test = RenewalTest { f: &zero, support: (0.0, 1.0) };
        assert_eq!(renewal_partial_sum(&ifs, &p, &test, Complex64::new(0.0, 0.0), 3.0, 40).unwrap().value, 0.0);
        let test = RenewalTest { f: &f, support: (0.0, 1.0) };
        assert_eq!(
            renewal_partial_sum(&ifs, &p, &test, Complex64::new(0.0, 0.0), 10.0, 5).unwrap_err(),
            Error::DepthExhausted(5)
        );
    }

    #[test]
    fn two_ratio_renewal_near_limit() {
        let fx = fixtures::two_ratio();
        let f = |_: Complex64, _: f64, y: f64| bump(y);
        let test = RenewalTest { f: &f, support: (0.0, 1.0) };
        let got = renewal_partial_sum(&fx.ifs, &fx.p, &test, Complex64::new(0.0, 0.0), 10.0, 25).unwrap();
        let chi = (2f64.ln() + 3f64.ln()) / 2.0;
        let limit = renewal_limit(chi, bump, 0.0, 1.0, 2000);
        assert!((got.value - limit).abs() < 0.05 * limit, "{} {}", got.value, limit);
    }
}
