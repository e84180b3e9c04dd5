//! Reference IFSs used by the tests, benches and CLI examples.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_2, TAU};

use num_complex::Complex64;

use crate::ifs::{ConformalIfs, HolomorphicMap};
use crate::measure::ProbVector;

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub ifs: ConformalIfs,
    pub p: ProbVector,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn build(name: &'static str, maps: Vec<HolomorphicMap>, weights: Vec<f64>) -> Fixture {
    Fixture {
        name,
        ifs: ConformalIfs::new(maps).expect("fixture maps are valid"),
        p: ProbVector::new(weights).expect("fixture weights are valid"),
    }
}

/// `{z/2, z/2 + 1/2}`; the invariant measure for equal weights is Lebesgue on `[0, 1]`.
pub fn lebesgue_segment() -> Fixture {
    build(
        "lebesgue-segment",
        vec![HolomorphicMap::scale_shift(0.5, 0.0), HolomorphicMap::scale_shift(0.5, 0.5)],
        vec![0.5, 0.5],
    )
}

/// `{z/2, z/3 + 2/3}`: a similarity pair with incommensurable log-ratios.
pub fn two_ratio() -> Fixture {
    build(
        "two-ratio",
        vec![HolomorphicMap::scale_shift(0.5, 0.0), HolomorphicMap::scale_shift(1.0 / 3.0, 2.0 / 3.0)],
        vec![0.5, 0.5],
    )
}

/// Real-coefficient pair with one genuinely quadratic map: UNI holds while
/// the attractor sits on the real line.
pub fn quadratic_real() -> Fixture {
    build(
        "quadratic-real",
        vec![
            HolomorphicMap::polynomial(vec![c(-0.45, 0.0), c(0.4, 0.0), c(0.1, 0.0)]).unwrap(),
            HolomorphicMap::scale_shift(0.4, 0.45),
        ],
        vec![0.5, 0.5],
    )
}

/// `{z/2, z/2 + z²/8}`, both fixing 0.
pub fn half_quadratic() -> Fixture {
    build(
        "half-quadratic",
        vec![
            HolomorphicMap::scale_shift(0.5, 0.0),
            HolomorphicMap::polynomial(vec![c(0.0, 0.0), c(0.5, 0.0), c(0.125, 0.0)]).unwrap(),
        ],
        vec![0.5, 0.5],
    )
}

pub const UNI_PLANAR_LAMBDA: f64 = 0.08;
pub const UNI_PLANAR_BETA: f64 = 0.3;

/// Four small quadratic maps `c_k + λ e^{iφ_k}(z + β_k z²)` around a square of
/// radius 0.6 with alternating `β_k = ±0.3`, so the pairs (0,1) and (2,3)
/// satisfy UNI at the first generation. With `overlap` a fifth map sits next
/// to map 0 and overlaps it, which makes the model construction non-trivial.
pub fn uni_planar(overlap: bool) -> Fixture {
    let quad = |center: Complex64, rot: f64, beta: f64, lambda: f64| {
        let l = Complex64::from_polar(lambda, rot);
        HolomorphicMap::polynomial(vec![center, l, l * beta]).unwrap()
    };
    let mut maps: Vec<HolomorphicMap> = (0..4)
        .map(|k| {
            let center = Complex64::from_polar(0.6, FRAC_PI_4 + k as f64 * FRAC_PI_2);
            let beta = if k % 2 == 0 { UNI_PLANAR_BETA } else { -UNI_PLANAR_BETA };
            quad(center, 0.7 * k as f64 + 0.3, beta, UNI_PLANAR_LAMBDA)
        })
        .collect();
    let mut weights = vec![0.25; 4];
    if overlap {
        let center = Complex64::from_polar(0.51, FRAC_PI_4);
        maps.push(quad(center, 2.1, 0.1, 0.07));
        weights = vec![0.2; 5];
    }
    build(if overlap { "uni-planar-overlap" } else { "uni-planar" }, maps, weights)
}

/// Three overlapping rotating quadratic maps; the attractor is planar and far
/// from any analytic curve.
pub fn rotation_rich() -> Fixture {
    let maps = (0..3)
        .map(|k| {
            HolomorphicMap::polynomial(vec![
                Complex64::from_polar(0.45, TAU * k as f64 / 3.0),
                Complex64::from_polar(0.45, 1.0),
                c(0.04, 0.0),
            ])
            .unwrap()
        })
        .collect();
    build("rotation-rich", maps, vec![1.0 / 3.0; 3])
}

/// Two moebius contractions with real centers on opposite sides.
pub fn moebius_pair() -> Fixture {
    let one = c(1.0, 0.0);
    build(
        "moebius-pair",
        vec![
            HolomorphicMap::moebius(c(0.3, 0.1), c(-0.4, 0.0), c(0.2, 0.0), one).unwrap(),
            HolomorphicMap::moebius(c(0.35, -0.1), c(0.45, 0.1), c(-0.15, 0.05), one).unwrap(),
        ],
        vec![0.4, 0.6],
    )
}

pub fn all() -> Vec<Fixture> {
    vec![
        lebesgue_segment(),
        two_ratio(),
        quadratic_real(),
        half_quadratic(),
        uni_planar(false),
        uni_planar(true),
        rotation_rich(),
        moebius_pair(),
    ]
}

pub fn by_name(name: &str) -> Option<Fixture> {
    all().into_iter().find(|f| f.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::validate_ifs;

    #[test]
    fn valid_fixtures_validate() {
        for f in all() {
            let rep = validate_ifs(&f.ifs, 512, 0.0, 2).unwrap();
            if f.name == "half-quadratic" {
                assert!(!rep.distinct_fixed_points);
                continue;
            }
            assert!(rep.is_valid(), "{}: {:?}", f.name, rep.violations);
        }
    }

    #[test]
    fn uni_planar_constants() {
        let f = uni_planar(false);
        assert!((f.ifs.rho - UNI_PLANAR_LAMBDA * (1.0 + 2.0 * UNI_PLANAR_BETA)).abs() < 1e-3);
        assert!(f.ifs.tilde_c < 2.0);
    }

    #[test]
    fn lookup_by_name() {
        assert!(by_name("two-ratio").is_some());
        assert!(by_name("nope").is_none());
    }
}
