//! Cross-module checks against closed forms.

use conformal_core::fixtures;
use conformal_core::fourier::{fourier_mc, sinc_modulus};
use conformal_core::ifs::cocycle;
use conformal_core::measure::sample_batch;
use conformal_core::renewal::{enumerate_overshoot, overshoot_law, CircleUnit};
use conformal_core::transfer::transfer_apply;
use conformal_core::{Complex64, DiscGrid, GridFunction, TwistParams};

#[test]
fn cocycle_adds_along_words() {
    let f = fixtures::moebius_pair();
    let z = Complex64::new(0.1, -0.2);
    let (u, v) = (vec![0, 1, 1], vec![1, 0]);
    let w: Vec<usize> = u.iter().chain(&v).copied().collect();
    let (c, t) = cocycle(&f.ifs, &w, z).unwrap();
    let (cv, tv) = cocycle(&f.ifs, &v, z).unwrap();
    let (cu, tu) = cocycle(&f.ifs, &u, f.ifs.eval_word_d(&v, z).0).unwrap();
    assert!((c - cu - cv).abs() < 1e-12);
    let d = (t - tu - tv).rem_euclid(std::f64::consts::TAU);
    assert!(d.min(std::f64::consts::TAU - d) < 1e-12);
}

#[test]
fn untwisted_operator_fixes_constants() {
    let f = fixtures::quadratic_real();
    let grid = DiscGrid::new(0.05).unwrap();
    let one = GridFunction::build(&grid, &|_: Complex64| Complex64::new(1.0, 0.0));
    let out = transfer_apply(&f.ifs, &f.p, &TwistParams::new(0.0, 0.0, 0), &one).unwrap();
    assert!(out.values().iter().all(|v| (v - 1.0).norm() < 1e-12));
}

#[test]
fn sampling_is_reproducible() {
    let f = fixtures::rotation_rich();
    let a = sample_batch(&f.ifs, &f.p, 10_000, 20, 42).unwrap();
    let b = sample_batch(&f.ifs, &f.p, 10_000, 20, 42).unwrap();
    let c = sample_batch(&f.ifs, &f.p, 10_000, 20, 43).unwrap();
    assert_eq!(a.points, b.points);
    assert_ne!(a.points, c.points);
}

#[test]
fn lebesgue_transform_is_sinc() {
    let f = fixtures::lebesgue_segment();
    let em = sample_batch(&f.ifs, &f.p, 200_000, 40, 1).unwrap();
    for t in [0.7, 2.5, 6.0] {
        let (est, se) = fourier_mc(&em, [t, 0.0]);
        assert!((est.norm() - sinc_modulus(t)).abs() < 4.0 * se, "t = {t}");
    }
}

#[test]
fn enumerated_overshoot_is_a_law() {
    let f = fixtures::two_ratio();
    let atoms = enumerate_overshoot(&f.ifs, &f.p, 3.0, 1 << 16).unwrap();
    let mass: f64 = atoms.iter().map(|a| a.2).sum();
    assert!((mass - 1.0).abs() < 1e-12);
    let law = overshoot_law(&f.ifs, &f.p, 3.0, 2000, 5, CircleUnit::Turns).unwrap();
    let max_step = atoms.iter().map(|a| a.0).fold(0.0, f64::max);
    assert!(law.overshoots.iter().all(|&o| o >= 0.0 && o <= max_step + 1e-12));
}
