//! UNI witness search, inducing certificates, the `T_N` local
//! diffeomorphism check and the non-concentration estimate.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::{circle_points, disc_sample, induce, log_derivative_slope, words_of_length, ConformalIfs, HolomorphicMap, Word};
use crate::measure::{EmpiricalMeasure, ProbVector};

/// Boundary samples used for image discs.
const IMAGE_SAMPLES: usize = 256;

/// Disc `B(center, radius)` containing `f(D)`: center `f(0)`, radius the
/// largest boundary-image distance plus the Lipschitz gap between samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageDisc {
    pub center: [f64; 2],
    pub radius: f64,
}

impl ImageDisc {
    pub fn of(f: &HolomorphicMap) -> Self {
        let c = f.eval(Complex64::new(0.0, 0.0));
        let (far, lip) = circle_points(IMAGE_SAMPLES, 1.0).fold((0.0f64, 0.0f64), |(far, lip), z| {
            let (v, d) = f.eval_d(z);
            (far.max((v - c).norm()), lip.max(d.norm()))
        });
        ImageDisc {
            center: [c.re, c.im],
            radius: far + lip * PI / IMAGE_SAMPLES as f64,
        }
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(self.center[0], self.center[1])
    }

    /// Strict separation of the two discs.
    pub fn disjoint(&self, other: &ImageDisc) -> bool {
        (self.center() - other.center()).norm() > self.radius + other.radius
    }
}

pub fn image_discs(ifs: &ConformalIfs) -> Vec<ImageDisc> {
    ifs.maps().par_iter().map(ImageDisc::of).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniWitness {
    pub xi: Word,
    pub zeta: Word,
    /// Grid infimum of `|∇(log|f_ξ'| − log|f_ζ'|)|`.
    pub m_hat: f64,
    /// Grid supremum of the same quantity.
    pub m_prime_hat: f64,
}

fn uni_points(grid_step: f64) -> Vec<Complex64> {
    let boundary = ((TAU / grid_step).ceil() as usize).max(64);
    disc_sample(grid_step, boundary)
}

/// `(inf, sup)` of `|g_a − g_b|` over `pts`, where `g` is `(log f')'`. The
/// modulus of the gradient of a harmonic function equals `|g|` by
/// Cauchy–Riemann.
fn band(ga: &[Complex64], gb: &[Complex64]) -> (f64, f64) {
    ga.iter().zip(gb).fold((f64::INFINITY, 0.0f64), |(lo, hi), (a, b)| {
        let v = (a - b).norm();
        (lo.min(v), hi.max(v))
    })
}

/// Witness data for a fixed pair of words.
pub fn uni_pair(ifs: &ConformalIfs, xi: &[usize], zeta: &[usize], grid_step: f64) -> Result<UniWitness> {
    if xi == zeta {
        return Err(Error::Precondition("a UNI pair needs two distinct words".into()));
    }
    if xi.len() != zeta.len() || xi.is_empty() {
        return Err(Error::Precondition("UNI words must be nonempty and of equal length".into()));
    }
    if let Some(&s) = xi.iter().chain(zeta).find(|&&s| s >= ifs.len()) {
        return Err(Error::SymbolOutOfRange {
            symbol: s,
            alphabet: ifs.len(),
        });
    }
    let pts = uni_points(grid_step);
    let g = |w: &[usize]| -> Vec<Complex64> { pts.par_iter().map(|&z| log_derivative_slope(ifs, w, z)).collect() };
    let (m_hat, m_prime_hat) = band(&g(xi), &g(zeta));
    Ok(UniWitness {
        xi: xi.to_vec(),
        zeta: zeta.to_vec(),
        m_hat,
        m_prime_hat,
    })
}

/// Best pair of words of length `n` by grid infimum, scanning the first
/// `pair_budget` pairs in lexicographic order.
pub fn uni_scan(ifs: &ConformalIfs, n: usize, grid_step: f64, pair_budget: usize) -> Result<UniWitness> {
    if n == 0 {
        return Err(Error::Precondition("word length must be at least 1".into()));
    }
    let count = (ifs.len() as u128).saturating_pow(n as u32);
    if count > 1 << 16 {
        return Err(Error::TooLarge {
            what: "UNI scan word count",
            count,
            cap: 1 << 16,
        });
    }
    let words = words_of_length(ifs.len(), n);
    if words.len() < 2 {
        return Err(Error::Precondition("a single-map IFS has no word pairs".into()));
    }
    let pts = uni_points(grid_step);
    let slopes: Vec<Vec<Complex64>> = words
        .par_iter()
        .map(|w| pts.iter().map(|&z| log_derivative_slope(ifs, w, z)).collect())
        .collect();
    let pairs: Vec<(usize, usize)> = (0..words.len())
        .flat_map(|i| (i + 1..words.len()).map(move |j| (i, j)))
        .take(pair_budget.max(1))
        .collect();
    let scored: Vec<(f64, f64)> = pairs.par_iter().map(|&(i, j)| band(&slopes[i], &slopes[j])).collect();
    let mut best = 0;
    for (k, s) in scored.iter().enumerate() {
        if s.0 > scored[best].0 {
            best = k;
        }
    }
    let (i, j) = pairs[best];
    Ok(UniWitness {
        xi: words[i].clone(),
        zeta: words[j].clone(),
        m_hat: scored[best].0,
        m_prime_hat: scored[best].1,
    })
}

/// Which of the two designated pairs is triple-disjoint from map `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub map: usize,
    /// 0 for the pair `(f₁, f₂)`, 1 for `(f₃, f₄)`.
    pub pair: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InducingCertificate {
    pub n: usize,
    /// Number of maps of the induced IFS the indices below refer to.
    pub map_count: usize,
    /// `f₁, f₂, f₃, f₄` as indices into the induced IFS.
    pub designated: [usize; 4],
    pub m: f64,
    pub m_prime: f64,
    pub attachments: Vec<Attachment>,
    /// `m − 2 C̃ ρ^N`.
    pub slack: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingConstraint {
    TooFewMaps,
    TooManyMaps,
    NoSeparatedUniPair,
    NoDisjointPairOfPairs,
    TripleDisjointness,
    Slack,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InducingAttempt {
    pub n: usize,
    pub binding: BindingConstraint,
    /// Largest pair infimum among separated pairs at this depth.
    pub best_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InducingSearch {
    pub certificate: Option<InducingCertificate>,
    pub attempts: Vec<InducingAttempt>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InducingConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub grid_step: f64,
    /// Cap on the induced map count.
    pub map_cap: usize,
    /// Candidate pairs kept (best first) when combining two pairs.
    pub pair_pool: usize,
}

impl Default for InducingConfig {
    fn default() -> Self {
        InducingConfig {
            n_min: 1,
            n_max: 4,
            grid_step: 0.05,
            map_cap: 256,
            pair_pool: 64,
        }
    }
}

/// First inducing depth admitting two separated UNI pairs that every other
/// map can attach to, with positive slack.
pub fn inducing_search(ifs: &ConformalIfs, p: &ProbVector, cfg: &InducingConfig) -> Result<InducingSearch> {
    if ifs.len() != p.len() {
        return Err(Error::InvalidArgument("weights and maps differ in number".into()));
    }
    if cfg.n_min == 0 || cfg.n_min > cfg.n_max {
        return Err(Error::InvalidArgument("inducing range must satisfy 1 ≤ n_min ≤ n_max".into()));
    }
    let mut attempts = Vec::new();
    for n in cfg.n_min..=cfg.n_max {
        let induced = match induce(ifs, n, cfg.map_cap) {
            Ok(x) => x,
            Err(Error::TooLarge { .. }) => {
                attempts.push(InducingAttempt {
                    n,
                    binding: BindingConstraint::TooManyMaps,
                    best_m: 0.0,
                });
                break;
            }
            Err(e) => return Err(e),
        };
        let slack_loss = 2.0 * ifs.tilde_c * ifs.rho.powi(n as i32);
        match certify(&induced, n, slack_loss, cfg) {
            Ok(cert) => {
                return Ok(InducingSearch {
                    certificate: Some(cert),
                    attempts,
                })
            }
            Err((binding, best_m)) => attempts.push(InducingAttempt { n, binding, best_m }),
        }
    }
    Ok(InducingSearch {
        certificate: None,
        attempts,
    })
}

fn certify(
    ifs: &ConformalIfs,
    n: usize,
    slack_loss: f64,
    cfg: &InducingConfig,
) -> std::result::Result<InducingCertificate, (BindingConstraint, f64)> {
    let count = ifs.len();
    if count < 4 {
        return Err((BindingConstraint::TooFewMaps, 0.0));
    }
    let discs = image_discs(ifs);
    let pts = uni_points(cfg.grid_step);
    let slopes: Vec<Vec<Complex64>> = ifs
        .maps()
        .par_iter()
        .map(|m| {
            pts.iter()
                .map(|&z| {
                    let (_, d1, d2) = m.eval_d2(z);
                    d2 / d1
                })
                .collect()
        })
        .collect();
    let mut pairs: Vec<(usize, usize, f64, f64)> = (0..count)
        .flat_map(|i| (i + 1..count).map(move |j| (i, j)))
        .filter(|&(i, j)| discs[i].disjoint(&discs[j]))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(i, j)| {
            let (lo, hi) = band(&slopes[i], &slopes[j]);
            (i, j, lo, hi)
        })
        .filter(|x| x.2 > 0.0)
        .collect();
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    pairs.truncate(cfg.pair_pool);
    let best_m = pairs.first().map_or(0.0, |x| x.2);
    if pairs.is_empty() {
        return Err((BindingConstraint::NoSeparatedUniPair, 0.0));
    }
    // combinations ordered by the weaker of the two infima
    let mut combos: Vec<(usize, usize, f64)> = (0..pairs.len())
        .flat_map(|a| (a + 1..pairs.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| {
            let (p, q) = (pairs[a], pairs[b]);
            p.0 != q.0 && p.0 != q.1 && p.1 != q.0 && p.1 != q.1
        })
        .map(|(a, b)| (a, b, pairs[a].2.min(pairs[b].2)))
        .collect();
    if combos.is_empty() {
        return Err((BindingConstraint::NoDisjointPairOfPairs, best_m));
    }
    combos.sort_by(|x, y| y.2.total_cmp(&x.2).then((x.0, x.1).cmp(&(y.0, y.1))));
    let mut binding = BindingConstraint::TripleDisjointness;
    for (a, b, m) in combos {
        let (p, q) = (pairs[a], pairs[b]);
        let designated = [p.0, p.1, q.0, q.1];
        let attach = |k: usize| {
            [(p.0, p.1), (q.0, q.1)]
                .iter()
                .position(|&(u, v)| discs[u].disjoint(&discs[k]) && discs[v].disjoint(&discs[k]))
        };
        let mut attachments = Vec::new();
        let mut ok = true;
        for k in (0..count).filter(|k| !designated.contains(k)) {
            match attach(k) {
                Some(pair) => attachments.push(Attachment { map: k, pair }),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let slack = m - slack_loss;
        if slack <= 0.0 {
            binding = BindingConstraint::Slack;
            continue;
        }
        return Ok(InducingCertificate {
            n,
            map_count: count,
            designated,
            m,
            m_prime: p.3.max(q.3),
            attachments,
            slack,
        });
    }
    Err((binding, best_m))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TnReport {
    /// Grid infimum of the smallest singular value of `∇T_N`.
    pub delta2_hat: f64,
    /// `sup|T₁| + sup‖∇T‖ + sup‖∇²T‖` from finite differences.
    pub c2_norm_hat: f64,
    /// `max |det ∇T_N − |(log h)'|²|` with `h = f_ξ'/f_ζ'`.
    pub jacobian_residual: f64,
    /// Largest `σ_min² − det` seen (nonpositive when consistent).
    pub singular_det_gap: f64,
}

/// Finite-difference check of `T_N = (log|f_ξ'| − log|f_ζ'|, arg f_ξ' − arg f_ζ')`
/// on the lattice of spacing `grid_step` inside the disc.
pub fn tn_check(ifs: &ConformalIfs, witness: &UniWitness, grid_step: f64) -> Result<TnReport> {
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(Error::InvalidArgument(format!("grid step must lie in (0, 0.1], got {grid_step}")));
    }
    let (xi, zeta) = (&witness.xi, &witness.zeta);
    if let Some(&s) = xi.iter().chain(zeta).find(|&&s| s >= ifs.len()) {
        return Err(Error::SymbolOutOfRange {
            symbol: s,
            alphabet: ifs.len(),
        });
    }
    let h = |z: Complex64| ifs.eval_word_d(xi, z).1 / ifs.eval_word_d(zeta, z).1;
    let d = grid_step;
    let m = (1.0 / d).floor() as i64;
    let rows: Vec<(f64, f64, f64, f64, f64)> = (-m..=m)
        .into_par_iter()
        .flat_map_iter(|j| (-m..=m).map(move |i| Complex64::new(i as f64 * d, j as f64 * d)))
        .filter(|z| z.norm() <= 1.0)
        .map(|z| {
            let (ex, ey) = (Complex64::new(d, 0.0), Complex64::new(0.0, d));
            let h0 = h(z);
            let (hxp, hxm, hyp, hym) = (h(z + ex), h(z - ex), h(z + ey), h(z - ey));
            // principal logs of ratios avoid branch cuts of arg
            let tx = (hxp / hxm).ln() / (2.0 * d);
            let ty = (hyp / hym).ln() / (2.0 * d);
            let det = tx.re * ty.im - ty.re * tx.im;
            let symbolic = (log_derivative_slope(ifs, xi, z) - log_derivative_slope(ifs, zeta, z)).norm_sqr();
            let t = tx.norm_sqr() + ty.norm_sqr();
            let sigma_min = ((t - (t * t - 4.0 * det * det).max(0.0).sqrt()) / 2.0).max(0.0).sqrt();
            let sigma_max = ((t + (t * t - 4.0 * det * det).max(0.0).sqrt()) / 2.0).sqrt();
            let txx = (hxp * hxm / (h0 * h0)).ln() / (d * d);
            let tyy = (hyp * hym / (h0 * h0)).ln() / (d * d);
            let hpp = h(z + ex + ey);
            let hmm = h(z - ex - ey);
            let hpm = h(z + ex - ey);
            let hmp = h(z - ex + ey);
            let txy = (hpp * hmm / (hpm * hmp)).ln() / (4.0 * d * d);
            let hess = (txx.norm_sqr() + tyy.norm_sqr() + 2.0 * txy.norm_sqr()).sqrt();
            (
                sigma_min,
                (det - symbolic).abs(),
                h0.norm().ln().abs(),
                sigma_max,
                hess,
            )
        })
        .collect();
    let mut rep = TnReport {
        delta2_hat: f64::INFINITY,
        c2_norm_hat: 0.0,
        jacobian_residual: 0.0,
        singular_det_gap: f64::NEG_INFINITY,
    };
    let (mut sup_t, mut sup_grad, mut sup_hess) = (0.0f64, 0.0f64, 0.0f64);
    for &(smin, res, t1, smax, hess) in &rows {
        rep.delta2_hat = rep.delta2_hat.min(smin);
        rep.jacobian_residual = rep.jacobian_residual.max(res);
        sup_t = sup_t.max(t1);
        sup_grad = sup_grad.max(smax);
        sup_hess = sup_hess.max(hess);
        // σ_min² ≤ σ_min σ_max = |det|
        rep.singular_det_gap = rep.singular_det_gap.max(smin * smin - smin * smax);
    }
    rep.c2_norm_hat = sup_t + sup_grad + sup_hess;
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonConcentrationEstimate {
    pub delta_hat: f64,
    pub worst_direction: [f64; 2],
    pub worst_word: Word,
    /// `δ̂ − 2 L̂ ρ`.
    pub slack: f64,
    pub tested_words: usize,
    pub skipped_words: usize,
}

/// Fewest samples a cylinder needs to be tested.
pub const MIN_CYLINDER_SAMPLES: usize = 30;

/// `min` over words and directions of
/// `min_x max_y |⟨x − y, w⟩| / |f_η'(0)|`, with `x, y` the samples whose
/// digit sequence starts with `η`. Needs a coded sample set.
pub fn nonconcentration_estimate(
    ifs: &ConformalIfs,
    em: &EmpiricalMeasure,
    words: &[Word],
    directions: usize,
) -> Result<NonConcentrationEstimate> {
    let codes = em
        .codes
        .as_ref()
        .ok_or_else(|| Error::Precondition("non-concentration needs samples with digit codes".into()))?;
    if directions == 0 {
        return Err(Error::InvalidArgument("need at least one direction".into()));
    }
    let dirs: Vec<[f64; 2]> = (0..directions)
        .map(|k| {
            let t = PI * k as f64 / directions as f64;
            // snap so axis directions are exact
            let snap = |v: f64| if v.abs() < 1e-15 { 0.0 } else { v };
            [snap(t.cos()), snap(t.sin())]
        })
        .collect();
    let per_word: Vec<Option<(f64, [f64; 2], usize)>> = words
        .par_iter()
        .enumerate()
        .map(|(wi, w)| {
            let members: Vec<Complex64> = em
                .points
                .iter()
                .zip(codes)
                .filter(|(_, c)| c.len() >= w.len() && c.iter().zip(w).all(|(&a, &b)| a as usize == b))
                .map(|(z, _)| *z)
                .collect();
            if members.len() < MIN_CYLINDER_SAMPLES {
                return None;
            }
            let scale = ifs.eval_word_d(w, Complex64::new(0.0, 0.0)).1.norm();
            let mut worst = (f64::INFINITY, dirs[0], wi);
            for dir in &dirs {
                let proj: Vec<f64> = members.iter().map(|z| z.re * dir[0] + z.im * dir[1]).collect();
                let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let spread = proj.iter().map(|&p| (p - lo).max(hi - p)).fold(f64::INFINITY, f64::min);
                let v = spread / scale;
                if v < worst.0 {
                    worst = (v, *dir, wi);
                }
            }
            Some(worst)
        })
        .collect();
    let tested: Vec<_> = per_word.iter().flatten().collect();
    let skipped = per_word.len() - tested.len();
    let best = tested
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::Precondition("no cylinder holds enough samples".into()))?;
    Ok(NonConcentrationEstimate {
        delta_hat: best.0,
        worst_direction: best.1,
        worst_word: words[best.2].clone(),
        slack: best.0 - 2.0 * ifs.l_hat * ifs.rho,
        tested_words: tested.len(),
        skipped_words: skipped,
    })
}

/// All words of length `1..=depth`.
pub fn words_up_to(alphabet: usize, depth: usize) -> Vec<Word> {
    (1..=depth).flat_map(|n| words_of_length(alphabet, n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::measure::sample_coded;

    #[test]
    fn similarity_has_no_uni() {
        let f = fixtures::lebesgue_segment();
        let w = uni_scan(&f.ifs, 3, 0.05, 1000).unwrap();
        assert_eq!(w.m_hat, 0.0);
        assert_eq!(w.m_prime_hat, 0.0);
        let search = inducing_search(&f.ifs, &f.p, &InducingConfig { n_max: 3, ..Default::default() }).unwrap();
        assert!(search.certificate.is_none());
        assert!(search.attempts.iter().all(|a| a.best_m == 0.0));
    }

    #[test]
    fn half_quadratic_has_uni() {
        let f = fixtures::half_quadratic();
        let w = uni_scan(&f.ifs, 3, 0.05, 1000).unwrap();
        assert!(w.m_hat > 0.0 && w.m_hat <= w.m_prime_hat);
        assert_ne!(w.xi, w.zeta);
    }

    #[test]
    fn pair_guards_and_symmetry() {
        let f = fixtures::half_quadratic();
        assert!(uni_pair(&f.ifs, &[0, 1], &[0, 1], 0.05).is_err());
        assert!(uni_pair(&f.ifs, &[0, 1], &[0], 0.05).is_err());
        let a = uni_pair(&f.ifs, &[0, 1], &[1, 1], 0.05).unwrap();
        let b = uni_pair(&f.ifs, &[1, 1], &[0, 1], 0.05).unwrap();
        assert_eq!((a.m_hat, a.m_prime_hat), (b.m_hat, b.m_prime_hat));
    }

    #[test]
    fn finer_grid_brackets() {
        let f = fixtures::half_quadratic();
        let coarse = uni_pair(&f.ifs, &[0, 0, 1], &[1, 1, 1], 0.05).unwrap();
        let fine = uni_pair(&f.ifs, &[0, 0, 1], &[1, 1, 1], 0.005).unwrap();
        assert!(fine.m_hat <= coarse.m_hat * 1.05 && fine.m_hat >= coarse.m_hat * 0.95);
        assert!(fine.m_prime_hat <= coarse.m_prime_hat * 1.05 && fine.m_prime_hat >= coarse.m_prime_hat * 0.95);
    }

    #[test]
    fn planar_certificate_at_first_generation() {
        let f = fixtures::uni_planar(false);
        let s = inducing_search(&f.ifs, &f.p, &InducingConfig::default()).unwrap();
        let cert = s.certificate.expect("certificate");
        assert_eq!(cert.n, 1);
        assert!(cert.slack > 0.0 && cert.m <= cert.m_prime);
        let f = fixtures::uni_planar(true);
        let cert = inducing_search(&f.ifs, &f.p, &InducingConfig::default()).unwrap().certificate.unwrap();
        assert_eq!(cert.attachments.len(), 1);
        let four = cert.attachments[0].map;
        assert_eq!(four, 4);
    }

    #[test]
    fn tn_check_identity() {
        let f = fixtures::half_quadratic();
        let w = uni_pair(&f.ifs, &[1], &[0], 0.05).unwrap();
        let rep = tn_check(&f.ifs, &w, 0.01).unwrap();
        assert!(rep.jacobian_residual < 1e-3, "{}", rep.jacobian_residual);
        assert!(rep.delta2_hat > 0.0);
        assert!(rep.singular_det_gap <= 1e-12);
        let s = fixtures::two_ratio();
        let w = uni_pair(&s.ifs, &[0], &[1], 0.05).unwrap();
        let rep = tn_check(&s.ifs, &w, 0.05).unwrap();
        assert!(rep.delta2_hat < 1e-9);
    }

    #[test]
    fn disc_separation() {
        let a = ImageDisc::of(&HolomorphicMap::scale_shift(0.25, -0.5));
        let b = ImageDisc::of(&HolomorphicMap::scale_shift(0.25, 0.5));
        assert!(a.disjoint(&b));
        assert!((a.radius - 0.25).abs() < 0.01);
        let c = ImageDisc::of(&HolomorphicMap::scale_shift(0.5, 0.2));
        assert!(!a.disjoint(&c));
    }

    #[test]
    fn segment_concentrates_on_normal() {
        let f = fixtures::lebesgue_segment();
        let em = sample_coded(&f.ifs, &f.p, 20_000, 30, 3).unwrap();
        let words = words_up_to(2, 3);
        let est = nonconcentration_estimate(&f.ifs, &em, &words, 16).unwrap();
        assert_eq!(est.delta_hat, 0.0);
        assert!((est.worst_direction[1] - 1.0).abs() < 1e-12);
        let only_x = nonconcentration_estimate(&f.ifs, &em, &words, 1).unwrap();
        assert!(only_x.delta_hat > 0.3);
    }

    #[test]
    fn planar_attractor_does_not_concentrate() {
        let f = fixtures::rotation_rich();
        let em = sample_coded(&f.ifs, &f.p, 60_000, 30, 5).unwrap();
        let est = nonconcentration_estimate(&f.ifs, &em, &words_up_to(3, 3), 64).unwrap();
        assert!(est.delta_hat > 0.05, "{}", est.delta_hat);
        assert_eq!(est.skipped_words, 0);
    }
}
