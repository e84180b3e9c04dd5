//! The Bernoulli model: sub-IFSs with separated images, the selection vector
//! `q`, per-branch weights `p̃`, random `μ_ω` samplers and cylinder geometry.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::{circle_points, induce, words_of_length, ConformalIfs, Word};
use crate::measure::{chaos_game, EmpiricalMeasure, ProbVector};
use crate::rng::{self, domain};
use crate::stats::linear_fit;
use crate::transfer::WordSum;
use crate::uni::{image_discs, uni_pair, ImageDisc, InducingCertificate, UniWitness};

/// Largest induced IFS a model is built from.
pub const MODEL_MAP_CAP: usize = 4096;

#[derive(Clone, Debug)]
pub struct Model {
    ifs: ConformalIfs,
    p: ProbVector,
    depth: usize,
    sub_ifss: Vec<Vec<usize>>,
    cores: Vec<[usize; 2]>,
    q: ProbVector,
    p_tilde: Vec<ProbVector>,
    n_counts: Vec<usize>,
}

/// JSON shape of a model: membership by map index of the (induced) IFS.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub inducing_depth: usize,
    pub sub_ifss: Vec<Vec<usize>>,
    pub cores: Vec<[usize; 2]>,
    pub q: Vec<f64>,
    pub p_tilde: Vec<Vec<f64>>,
    pub n_counts: Vec<usize>,
}

impl Model {
    /// Model over `ifs` with one sub-IFS per entry of `subs` (map indices).
    /// `cores[k]` is the designated pair of branch `k`; it defaults to the two
    /// smallest members.
    pub fn new(ifs: ConformalIfs, p: ProbVector, subs: Vec<Vec<usize>>, cores: Option<Vec<[usize; 2]>>) -> Result<Self> {
        if ifs.len() != p.len() {
            return Err(Error::InvalidArgument("weights and maps differ in number".into()));
        }
        if subs.is_empty() {
            return Err(Error::InvalidArgument("a model needs at least one sub-IFS".into()));
        }
        let mut subs = subs;
        for s in &mut subs {
            s.sort_unstable();
            s.dedup();
            if s.len() < 2 {
                return Err(Error::Precondition("every sub-IFS needs at least two maps".into()));
            }
            if let Some(&bad) = s.iter().find(|&&i| i >= ifs.len()) {
                return Err(Error::SymbolOutOfRange {
                    symbol: bad,
                    alphabet: ifs.len(),
                });
            }
        }
        let cores = match cores {
            Some(c) => c,
            None => subs.iter().map(|s| [s[0], s[1]]).collect(),
        };
        if cores.len() != subs.len() || cores.iter().zip(&subs).any(|(c, s)| c[0] == c[1] || !s.contains(&c[0]) || !s.contains(&c[1])) {
            return Err(Error::Precondition("each core pair must be two distinct members of its sub-IFS".into()));
        }
        let discs = image_discs(&ifs);
        for (k, s) in subs.iter().enumerate() {
            for (a, &i) in s.iter().enumerate() {
                for &j in &s[a + 1..] {
                    if !discs[i].disjoint(&discs[j]) {
                        return Err(Error::Precondition(format!(
                            "sub-IFS {k}: images of maps {i} and {j} are not separated"
                        )));
                    }
                }
            }
        }
        let mut n_counts = vec![0usize; ifs.len()];
        for s in &subs {
            for &i in s {
                n_counts[i] += 1;
            }
        }
        if let Some(i) = n_counts.iter().position(|&n| n == 0) {
            return Err(Error::Precondition(format!("map {i} belongs to no sub-IFS")));
        }
        let raw_q: Vec<f64> = subs
            .iter()
            .map(|s| s.iter().map(|&i| p.get(i) / n_counts[i] as f64).sum())
            .collect();
        let p_tilde = subs
            .iter()
            .zip(&raw_q)
            .map(|(s, &qj)| ProbVector::normalized(s.iter().map(|&i| p.get(i) / n_counts[i] as f64 / qj).collect()))
            .collect::<Result<Vec<_>>>()?;
        let q = ProbVector::normalized(raw_q)?;
        Ok(Model {
            ifs,
            p,
            depth: 1,
            sub_ifss: subs,
            cores,
            q,
            p_tilde,
            n_counts,
        })
    }

    pub fn ifs(&self) -> &ConformalIfs {
        &self.ifs
    }

    pub fn p(&self) -> &ProbVector {
        &self.p
    }

    /// Inducing depth of the IFS the model was built on.
    pub fn inducing_depth(&self) -> usize {
        self.depth
    }

    pub fn sub_ifss(&self) -> &[Vec<usize>] {
        &self.sub_ifss
    }

    pub fn cores(&self) -> &[[usize; 2]] {
        &self.cores
    }

    pub fn q(&self) -> &ProbVector {
        &self.q
    }

    pub fn p_tilde(&self) -> &[ProbVector] {
        &self.p_tilde
    }

    pub fn n_counts(&self) -> &[usize] {
        &self.n_counts
    }

    pub fn record(&self) -> ModelRecord {
        ModelRecord {
            inducing_depth: self.depth,
            sub_ifss: self.sub_ifss.clone(),
            cores: self.cores.clone(),
            q: self.q.weights().to_vec(),
            p_tilde: self.p_tilde.iter().map(|v| v.weights().to_vec()).collect(),
            n_counts: self.n_counts.clone(),
        }
    }

    fn check_omega(&self, omega: &[usize]) -> Result<()> {
        match omega.iter().find(|&&k| k >= self.sub_ifss.len()) {
            Some(&k) => Err(Error::SymbolOutOfRange {
                symbol: k,
                alphabet: self.sub_ifss.len(),
            }),
            None => Ok(()),
        }
    }

    /// The word sum defining `P_{s,ℓ,ω,N}` for `N = omega.len()`.
    pub fn word_sum(&self, omega: &[usize]) -> Result<WordSum<'_>> {
        if omega.is_empty() {
            return Err(Error::Precondition("omega prefix must be nonempty".into()));
        }
        self.check_omega(omega)?;
        Ok(WordSum {
            maps: self.ifs.maps(),
            levels: omega
                .iter()
                .map(|&k| self.sub_ifss[k].iter().copied().zip(self.p_tilde[k].weights().iter().copied()).collect())
                .collect(),
        })
    }

    /// `Q([ω])`.
    pub fn cylinder_weight(&self, omega: &[usize]) -> f64 {
        omega.iter().map(|&k| self.q.get(k)).product()
    }

    /// `(α₁, α₂)` in `X_N^{(ω)}`: a common prefix through the first core map
    /// of each branch, then the two core maps of the last branch.
    pub fn designated_pair(&self, omega: &[usize]) -> Result<(Word, Word)> {
        if omega.is_empty() {
            return Err(Error::Precondition("omega prefix must be nonempty".into()));
        }
        self.check_omega(omega)?;
        let mut a: Word = omega.iter().map(|&k| self.cores[k][0]).collect();
        let mut b = a.clone();
        let last = self.cores[*omega.last().unwrap()];
        *a.last_mut().unwrap() = last[0];
        *b.last_mut().unwrap() = last[1];
        Ok((a, b))
    }

    /// `m̂` for the designated pair of `ω` (UNI in the branch).
    pub fn branch_uni(&self, omega: &[usize], grid_step: f64) -> Result<UniWitness> {
        let (a, b) = self.designated_pair(omega)?;
        uni_pair(&self.ifs, &a, &b, grid_step)
    }

    /// Pairs `(k, i, j)` inside a sub-IFS whose image discs meet.
    pub fn separation_violations(&self) -> Vec<(usize, usize, usize)> {
        let discs = image_discs(&self.ifs);
        let mut out = Vec::new();
        for (k, s) in self.sub_ifss.iter().enumerate() {
            for (a, &i) in s.iter().enumerate() {
                for &j in &s[a + 1..] {
                    if !discs[i].disjoint(&discs[j]) {
                        out.push((k, i, j));
                    }
                }
            }
        }
        out
    }
}

/// Lexicographically first maximum-cardinality set of maps containing `base`
/// with pairwise separated images. Exact when at most 64 maps can join,
/// greedy in index order beyond that.
pub fn maximal_extension(discs: &[ImageDisc], base: &[usize]) -> Vec<usize> {
    let candidates: Vec<usize> = (0..discs.len())
        .filter(|j| !base.contains(j) && base.iter().all(|&b| discs[b].disjoint(&discs[*j])))
        .collect();
    let mut out: Vec<usize> = base.to_vec();
    if candidates.len() <= 64 {
        let m = candidates.len();
        let compat: Vec<u64> = (0..m)
            .map(|a| {
                (0..m)
                    .filter(|&b| b != a && discs[candidates[a]].disjoint(&discs[candidates[b]]))
                    .fold(0u64, |acc, b| acc | 1 << b)
            })
            .collect();
        let mut best = (0u32, 0u64);
        let all = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
        clique(&compat, 0, all, &mut best);
        out.extend((0..m).filter(|&a| best.1 >> a & 1 == 1).map(|a| candidates[a]));
    } else {
        for &j in &candidates {
            if out.iter().all(|&i| discs[i].disjoint(&discs[j])) {
                out.push(j);
            }
        }
    }
    out.sort_unstable();
    out
}

fn clique(compat: &[u64], chosen: u64, allowed: u64, best: &mut (u32, u64)) {
    let size = chosen.count_ones();
    if size > best.0 {
        *best = (size, chosen);
    }
    if allowed == 0 || size + allowed.count_ones() <= best.0 {
        return;
    }
    let v = allowed.trailing_zeros() as usize;
    let bit = 1u64 << v;
    clique(compat, chosen | bit, allowed & compat[v], best);
    clique(compat, chosen, allowed & !bit, best);
}

/// Assemble the model from a certificate: `Ψ_k` cores from the designated
/// quadruple and attachments, each extended to maximum cardinality.
pub fn build_model(ifs: &ConformalIfs, p: &ProbVector, cert: &InducingCertificate) -> Result<Model> {
    if ifs.len() != p.len() {
        return Err(Error::InvalidArgument("weights and maps differ in number".into()));
    }
    let induced = induce(ifs, cert.n, MODEL_MAP_CAP)?;
    if induced.len() != cert.map_count || cert.designated.iter().any(|&d| d >= induced.len()) {
        return Err(Error::Precondition(format!(
            "certificate describes {} maps, the induced IFS has {}",
            cert.map_count,
            induced.len()
        )));
    }
    let weights: Vec<f64> = words_of_length(ifs.len(), cert.n)
        .iter()
        .map(|w| w.iter().map(|&s| p.get(s)).product())
        .collect();
    let pn = ProbVector::normalized(weights)?;
    let d = cert.designated;
    let pairs = [[d[0], d[1]], [d[2], d[3]]];
    let discs = image_discs(&induced);
    let mut subs = Vec::with_capacity(induced.len());
    let mut cores = Vec::with_capacity(induced.len());
    for k in 0..induced.len() {
        let (core, extra) = match d.iter().position(|&x| x == k) {
            Some(pos) => (pairs[pos / 2], None),
            None => {
                let att = cert
                    .attachments
                    .iter()
                    .find(|a| a.map == k)
                    .ok_or_else(|| Error::Precondition(format!("certificate has no attachment for map {k}")))?;
                (pairs[att.pair], Some(k))
            }
        };
        let mut base = core.to_vec();
        base.extend(extra);
        for (a, &i) in base.iter().enumerate() {
            if base[a + 1..].iter().any(|&j| !discs[i].disjoint(&discs[j])) {
                return Err(Error::Precondition(format!("core of branch {k} is not separated")));
            }
        }
        subs.push(maximal_extension(&discs, &base));
        cores.push(core);
    }
    let mut model = Model::new(induced, pn, subs, Some(cores))?;
    model.depth = cert.n;
    Ok(model)
}

/// Draw `ω ∈ I^len` from `Q = q^ℕ`.
pub fn draw_omega(model: &Model, len: usize, seed: u64, index: u64) -> Word {
    let mut r = rng::substream(seed, domain::OMEGA, index);
    (0..len).map(|_| model.q.sample(&mut r)).collect()
}

/// Samples of `μ_ω` for a fixed prefix; point `i` is
/// `f_{u_1} ∘ … ∘ f_{u_depth}(0)` with `u_j ~ p̃^{(ω_j)}`.
pub fn sample_mu_given(model: &Model, omega: &[usize], count: usize, seed: u64, keep_codes: bool) -> Result<EmpiricalMeasure> {
    if omega.is_empty() {
        return Err(Error::Precondition("omega prefix must be nonempty".into()));
    }
    model.check_omega(omega)?;
    let subs = &model.sub_ifss;
    let pt = &model.p_tilde;
    Ok(chaos_game(model.ifs.maps(), count, omega.len(), seed, domain::MODEL_SAMPLE, keep_codes, |r, j| {
        let k = omega[j];
        subs[k][pt[k].sample(r)]
    }))
}

/// One prefix `ω ~ Q` of length `depth` and `count` samples of `μ_ω`.
pub fn sample_mu_omega(model: &Model, seed: u64, count: usize, depth: usize) -> Result<(Word, EmpiricalMeasure)> {
    let omega = draw_omega(model, depth, seed, 0);
    let em = sample_mu_given(model, &omega, count, seed, false)?;
    Ok((omega, em))
}

/// Samples of `∫ μ_ω dQ(ω)`: every point carries its own `ω`.
pub fn sample_disintegrated(model: &Model, count: usize, depth: usize, seed: u64) -> EmpiricalMeasure {
    let subs = &model.sub_ifss;
    let pt = &model.p_tilde;
    let q = &model.q;
    chaos_game(model.ifs.maps(), count, depth, seed, domain::MODEL_SAMPLE, false, |r, _| {
        let k = q.sample(r);
        subs[k][pt[k].sample(r)]
    })
}

/// True when the first samples are all within `1e-9` of each other.
pub fn collapse_suspected(em: &EmpiricalMeasure) -> bool {
    let head = &em.points[..em.points.len().min(1000)];
    head.iter().all(|z| (z - head[0]).norm() < 1e-9)
}

const DIAMETER_SAMPLES: usize = 128;

/// Max pairwise distance among boundary image samples of `f_w`.
pub fn cylinder_diameter(ifs: &ConformalIfs, w: &[usize]) -> f64 {
    let pts: Vec<Complex64> = circle_points(DIAMETER_SAMPLES, 1.0).map(|z| ifs.eval_word_d(w, z).0).collect();
    let mut d = 0.0f64;
    for (a, x) in pts.iter().enumerate() {
        for y in &pts[a + 1..] {
            d = d.max((x - y).norm());
        }
    }
    d
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CylinderRow {
    pub outer_depth: usize,
    pub inner_depth: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CylinderGeometry {
    pub rows: Vec<CylinderRow>,
    pub c_fit: f64,
    pub r1: f64,
    pub r2: f64,
    /// `min |C_α| / r` over tested balls, `C_α` the shallowest cylinder of
    /// the center's code that fits in the ball.
    pub b1_hat: Option<f64>,
    pub balls_tested: usize,
}

/// Diameter ratios of nested cylinders along `ω` and ball-fitting constants.
pub fn cylinder_geometry(
    model: &Model,
    omega: &[usize],
    depth_pairs: &[(usize, usize)],
    trials: usize,
    radii: &[f64],
    seed: u64,
) -> Result<CylinderGeometry> {
    model.check_omega(omega)?;
    if depth_pairs.iter().any(|&(o, i)| i <= o || i > omega.len()) {
        return Err(Error::Precondition("depth pairs need outer < inner ≤ |omega|".into()));
    }
    let ifs = &model.ifs;
    let jobs: Vec<(usize, usize, usize)> = depth_pairs
        .iter()
        .enumerate()
        .flat_map(|(pi, &(outer, inner))| (0..trials).map(move |t| (pi * trials + t, outer, inner)))
        .collect();
    let rows: Vec<CylinderRow> = jobs
        .par_iter()
        .map(|&(job, outer, inner)| {
            {
                let mut r = rng::substream(seed, domain::CYLINDER, job as u64);
                let alpha: Word = omega[..inner]
                    .iter()
                    .map(|&k| model.sub_ifss[k][model.p_tilde[k].sample(&mut r)])
                    .collect();
                let ratio = cylinder_diameter(ifs, &alpha) / cylinder_diameter(ifs, &alpha[..outer]);
                CylinderRow {
                    outer_depth: outer,
                    inner_depth: inner,
                    ratio,
                }
            }
        })
        .collect();
    let (c_fit, r1, r2) = envelope_fit(&rows);
    let em = sample_mu_given(model, omega, radii.len().max(1) * 16, seed ^ 0x5eed, true)?;
    let codes = em.codes.as_ref().unwrap();
    let mut b1: Option<f64> = None;
    let mut balls = 0;
    for (x, code) in em.points.iter().zip(codes).take(16) {
        let word: Word = code.iter().map(|&d| d as usize).collect();
        for &r in radii {
            let fit = (1..=word.len()).find(|&d| {
                circle_points(DIAMETER_SAMPLES, 1.0).all(|z| (ifs.eval_word_d(&word[..d], z).0 - x).norm() <= r)
            });
            if let Some(d) = fit {
                balls += 1;
                let v = cylinder_diameter(ifs, &word[..d]) / r;
                b1 = Some(b1.map_or(v, |b| b.min(v)));
            }
        }
    }
    Ok(CylinderGeometry {
        rows,
        c_fit,
        r1,
        r2,
        b1_hat: b1,
        balls_tested: balls,
    })
}

/// `(C, r₁, r₂)` from the lower and upper envelopes of `log ratio` against
/// the depth gap.
fn envelope_fit(rows: &[CylinderRow]) -> (f64, f64, f64) {
    let mut gaps: Vec<usize> = rows.iter().map(|r| r.inner_depth - r.outer_depth).collect();
    gaps.sort_unstable();
    gaps.dedup();
    let env = |pick: fn(f64, f64) -> f64, init: f64| -> Vec<f64> {
        gaps.iter()
            .map(|&g| {
                rows.iter()
                    .filter(|r| r.inner_depth - r.outer_depth == g)
                    .map(|r| r.ratio.ln())
                    .fold(init, pick)
            })
            .collect()
    };
    let hi = env(f64::max, f64::NEG_INFINITY);
    let lo = env(f64::min, f64::INFINITY);
    let xs: Vec<f64> = gaps.iter().map(|&g| g as f64).collect();
    match (linear_fit(&xs, &hi), linear_fit(&xs, &lo)) {
        (Some(u), Some(l)) => (u.intercept.exp().max((-l.intercept).exp()), l.slope.exp(), u.slope.exp()),
        _ => {
            let r2 = xs.iter().zip(&hi).map(|(g, h)| (h / g).exp()).fold(0.0, f64::max);
            let r1 = xs.iter().zip(&lo).map(|(g, l)| (l / g).exp()).fold(f64::INFINITY, f64::min);
            (1.0, r1, r2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::grid::{grid_build, GridFunction};
    use crate::ifs::HolomorphicMap;
    use crate::measure::sample_batch;
    use crate::stats::mean_stderr;
    use crate::transfer::{transfer_apply, transfer_apply_model, TwistParams};
    use crate::uni::{inducing_search, InducingConfig};
    use approx::assert_abs_diff_eq;

    fn planar_model(overlap: bool) -> Model {
        let f = fixtures::uni_planar(overlap);
        let cert = inducing_search(&f.ifs, &f.p, &InducingConfig::default()).unwrap().certificate.unwrap();
        build_model(&f.ifs, &f.p, &cert).unwrap()
    }

    #[test]
    fn disjoint_images_give_full_branches() {
        let m = planar_model(false);
        assert!(m.sub_ifss().iter().all(|s| s == &vec![0, 1, 2, 3]));
        assert_eq!(m.n_counts(), &[4, 4, 4, 4]);
        // brute-force evaluation of the two display formulas
        for j in 0..4 {
            let qj: f64 = (0..4).map(|i| m.p().get(i) / 4.0).sum();
            assert_abs_diff_eq!(m.q().get(j), qj, epsilon = 1e-15);
            assert_abs_diff_eq!(qj, 0.25, epsilon = 1e-15);
        }
        assert!(m.separation_violations().is_empty());
    }

    #[test]
    fn overlap_model_counts() {
        let m = planar_model(true);
        assert_eq!(m.sub_ifss().len(), 5);
        assert!(m.sub_ifss().iter().all(|s| s.len() >= 2));
        assert!(m.separation_violations().is_empty());
        let total: f64 = m.q().weights().iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        for (i, &n) in m.n_counts().iter().enumerate() {
            let direct = m.sub_ifss().iter().filter(|s| s.contains(&i)).count();
            assert_eq!(n, direct);
        }
        // maps 0 and 4 overlap, so no branch holds both
        assert!(m.sub_ifss().iter().all(|s| !(s.contains(&0) && s.contains(&4))));
    }

    #[test]
    fn random_weights_normalize() {
        let f = fixtures::uni_planar(false);
        for seed in 0..20u64 {
            let mut r = rng::substream(seed, domain::PROBE, 0);
            let w: Vec<f64> = (0..4).map(|_| rand::Rng::gen_range(&mut r, 0.05..1.0)).collect();
            let p = ProbVector::normalized(w).unwrap();
            let subs = vec![vec![0, 1], vec![1, 2, 3], vec![0, 3], vec![0, 1, 2, 3]];
            let m = Model::new(f.ifs.clone(), p, subs, None).unwrap();
            let sum_q: f64 = m.q().weights().iter().sum();
            assert_abs_diff_eq!(sum_q, 1.0, epsilon = 1e-12);
            for pt in m.p_tilde() {
                assert_abs_diff_eq!(pt.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn guards() {
        let f = fixtures::uni_planar(false);
        assert!(Model::new(f.ifs.clone(), f.p.clone(), vec![vec![0], vec![1, 2, 3]], None).is_err());
        assert!(Model::new(f.ifs.clone(), f.p.clone(), vec![vec![0, 1], vec![1, 2]], None).is_err());
        let r = fixtures::rotation_rich();
        assert!(Model::new(r.ifs.clone(), r.p.clone(), vec![vec![0, 1, 2]], None).is_err());
    }

    #[test]
    fn exact_extension_prefers_lexicographic_family() {
        let disc = |x: f64| ImageDisc::of(&HolomorphicMap::scale_shift(0.1, x));
        // 0 clashes with 1; 2 clashes with 3
        let discs = vec![disc(-0.8), disc(-0.7), disc(0.0), disc(0.1), disc(0.8)];
        assert_eq!(maximal_extension(&discs, &[4]), vec![0, 2, 4]);
        assert_eq!(maximal_extension(&discs, &[1]), vec![1, 2, 4]);
    }

    #[test]
    fn word_sum_weights_sum_to_one() {
        let m = planar_model(true);
        for omega in [vec![0], vec![4, 2], vec![1, 3, 4]] {
            let sum = m.word_sum(&omega).unwrap();
            let mut total = 0.0;
            sum.visit(Complex64::new(0.0, 0.0), &mut |_, _, _, eta| total += eta);
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn full_branch_model_matches_iteration() {
        let f = fixtures::uni_planar(false);
        let m = Model::new(f.ifs.clone(), f.p.clone(), vec![vec![0, 1, 2, 3]; 4], None).unwrap();
        let tp = TwistParams::new(0.01, 4.0, 1);
        let g = |z: Complex64| Complex64::new(1.0 + z.re * z.im, z.re);
        let grid = grid_build(0.05, &g).unwrap();
        let lazy = m.word_sum(&[2, 0, 3]).unwrap();
        let direct = crate::transfer::WordSum::iterate(f.ifs.maps(), &f.p, 3);
        for &z in grid.grid().nodes().iter().step_by(37) {
            assert!((lazy.apply_at(&tp, &g, z) - direct.apply_at(&tp, &g, z)).norm() < 1e-12);
        }
        // one application through the grid path as well
        let a = transfer_apply(&f.ifs, &f.p, &tp, &GridFunction::build(grid.grid(), &g)).unwrap();
        let b = transfer_apply_model(&m, &[1], &tp, grid.grid(), &g).unwrap();
        let err = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-3);
    }

    #[test]
    fn single_level_is_short_sum() {
        let m = planar_model(false);
        let sum = m.word_sum(&[0]).unwrap();
        assert_eq!(sum.word_count(), 4);
    }

    #[test]
    fn designated_pair_has_uni() {
        let m = planar_model(true);
        for seed in 0..5 {
            let omega = draw_omega(&m, 3, seed, 0);
            let w = m.branch_uni(&omega, 0.05).unwrap();
            assert!(w.m_hat > 0.0, "{omega:?}");
            assert_eq!(w.xi[..2], w.zeta[..2]);
        }
    }

    #[test]
    fn disintegration_of_measure() {
        let f = fixtures::uni_planar(true);
        let m = planar_model(true);
        let g = |z: Complex64| z.re * z.re + 0.5 * z.im - z.re * z.im;
        let nu = sample_batch(&f.ifs, &f.p, 200_000, 12, 1).unwrap();
        let mix = sample_disintegrated(&m, 200_000, 12, 2);
        let a: Vec<f64> = nu.points.iter().map(|&z| g(z)).collect();
        let b: Vec<f64> = mix.points.iter().map(|&z| g(z)).collect();
        let ((ma, sa), (mb, sb)) = (mean_stderr(&a), mean_stderr(&b));
        assert!((ma - mb).abs() < 4.0 * sa.hypot(sb));
    }

    #[test]
    fn stochastic_stationarity() {
        let m = planar_model(true);
        let omega = draw_omega(&m, 14, 9, 0);
        let g = |z: Complex64| z.re - 2.0 * z.im * z.im;
        let mu = sample_mu_given(&m, &omega, 100_000, 3, false).unwrap();
        let mut shifted = omega[1..].to_vec();
        shifted.push(0);
        let next = sample_mu_given(&m, &shifted, 100_000, 4, false).unwrap();
        let k = omega[0];
        let lhs: Vec<f64> = mu.points.iter().map(|&z| g(z)).collect();
        let rhs: Vec<f64> = next
            .points
            .iter()
            .map(|&z| {
                m.sub_ifss()[k]
                    .iter()
                    .zip(m.p_tilde()[k].weights())
                    .map(|(&j, &w)| w * g(m.ifs().map(j).eval(z)))
                    .sum()
            })
            .collect();
        let ((a, sa), (b, sb)) = (mean_stderr(&lhs), mean_stderr(&rhs));
        assert!((a - b).abs() < 4.0 * sa.hypot(sb), "{a} {b}");
        assert!(!collapse_suspected(&mu));
    }

    #[test]
    fn full_branches_reproduce_nu() {
        let f = fixtures::uni_planar(false);
        let m = Model::new(f.ifs.clone(), f.p.clone(), vec![vec![0, 1, 2, 3]; 4], None).unwrap();
        let omega = draw_omega(&m, 10, 1, 0);
        let mu = sample_mu_given(&m, &omega, 50_000, 6, false).unwrap();
        let nu = sample_batch(&f.ifs, &f.p, 50_000, 10, 7).unwrap();
        let a: Vec<f64> = mu.points.iter().map(|z| z.re).collect();
        let b: Vec<f64> = nu.points.iter().map(|z| z.re).collect();
        let ((x, sx), (y, sy)) = (mean_stderr(&a), mean_stderr(&b));
        assert!((x - y).abs() < 4.0 * sx.hypot(sy));
    }

    #[test]
    fn similarity_cylinders_halve() {
        let pair = ConformalIfs::new(vec![
            HolomorphicMap::scale_shift(0.45, -0.5),
            HolomorphicMap::scale_shift(0.45, 0.5),
        ])
        .unwrap();
        let m = Model::new(pair, ProbVector::uniform(2), vec![vec![0, 1]; 2], None).unwrap();
        let omega = vec![0, 1, 0, 1, 1, 0];
        let g = cylinder_geometry(&m, &omega, &[(1, 2), (1, 3), (2, 5)], 4, &[0.3, 0.1], 3).unwrap();
        for row in &g.rows {
            let gap = (row.inner_depth - row.outer_depth) as i32;
            assert_abs_diff_eq!(row.ratio, 0.45f64.powi(gap), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(g.r2, 0.45, epsilon = 1e-9);
        assert_abs_diff_eq!(g.r1, 0.45, epsilon = 1e-9);
        assert!(g.b1_hat.unwrap() > 0.0);
    }

    #[test]
    fn nonlinear_cylinder_rates() {
        let m = planar_model(true);
        let omega = draw_omega(&m, 6, 2, 0);
        let g = cylinder_geometry(&m, &omega, &[(1, 2), (1, 3), (1, 4), (2, 5)], 16, &[0.2, 0.05], 5).unwrap();
        assert!(g.r2 <= m.ifs().rho * 1.1, "{} vs {}", g.r2, m.ifs().rho);
        assert!(g.r1 >= m.ifs().rho_min / 1.1, "{} vs {}", g.r1, m.ifs().rho_min);
        let alpha: Word = omega.iter().map(|&k| m.sub_ifss()[k][0]).collect();
        let diams: Vec<f64> = (1..=alpha.len()).map(|d| cylinder_diameter(m.ifs(), &alpha[..d])).collect();
        assert!(diams.windows(2).all(|w| w[1] < w[0]));
    }
}
