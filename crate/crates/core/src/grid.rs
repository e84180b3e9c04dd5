//! Collocation of C¹ functions on a square lattice restricted to the closed
//! unit disc.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Anything that can be evaluated pointwise on the disc.
pub trait Field: Sync {
    fn eval(&self, z: Complex64) -> Complex64;
}

impl<F: Fn(Complex64) -> Complex64 + Sync> Field for F {
    fn eval(&self, z: Complex64) -> Complex64 {
        self(z)
    }
}

#[derive(Debug)]
pub struct DiscGrid {
    h: f64,
    m: i64,
    nodes: Vec<Complex64>,
    lattice: Vec<(i64, i64)>,
    /// `(2m+1)²` table from lattice position to node index.
    slots: Vec<Option<u32>>,
}

impl DiscGrid {
    pub fn new(h: f64) -> Result<Arc<Self>> {
        if !(h > 0.0 && h <= 0.1) {
            return Err(Error::InvalidArgument(format!("grid spacing must lie in (0, 0.1], got {h}")));
        }
        let m = (1.0 / h).floor() as i64;
        let side = (2 * m + 1) as usize;
        let mut slots = vec![None; side * side];
        let mut nodes = Vec::new();
        let mut lattice = Vec::new();
        for j in -m..=m {
            for i in -m..=m {
                let z = Complex64::new(i as f64 * h, j as f64 * h);
                if z.norm() <= 1.0 + 1e-12 {
                    slots[((j + m) as usize) * side + (i + m) as usize] = Some(nodes.len() as u32);
                    nodes.push(z);
                    lattice.push((i, j));
                }
            }
        }
        Ok(Arc::new(DiscGrid {
            h,
            m,
            nodes,
            lattice,
            slots,
        }))
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn slot(&self, i: i64, j: i64) -> Option<usize> {
        if i.abs() > self.m || j.abs() > self.m {
            return None;
        }
        let side = 2 * self.m + 1;
        self.slots[((j + self.m) * side + i + self.m) as usize].map(|s| s as usize)
    }

    fn nearest(&self, z: Complex64) -> usize {
        let (u, v) = (z.re / self.h, z.im / self.h);
        let (ci, cj) = (u.round() as i64, v.round() as i64);
        let mut best = (f64::INFINITY, 0usize);
        for r in 0..=self.m + 1 {
            for j in cj - r..=cj + r {
                for i in ci - r..=ci + r {
                    if (i - ci).abs() != r && (j - cj).abs() != r {
                        continue;
                    }
                    if let Some(s) = self.slot(i, j) {
                        let d = (self.nodes[s] - z).norm_sqr();
                        if d < best.0 {
                            best = (d, s);
                        }
                    }
                }
            }
            // any node found on ring r is within (r+1)·√2·h; one more ring settles ties
            if best.0.is_finite() && r >= 1 {
                break;
            }
        }
        best.1
    }

    /// Bilinear interpolation on cells whose four corners are nodes, nearest
    /// node otherwise.
    pub fn interpolate(&self, values: &[Complex64], z: Complex64) -> Complex64 {
        let snap = |x: f64| if (x - x.round()).abs() < 1e-9 { x.round() } else { x };
        let (u, v) = (snap(z.re / self.h), snap(z.im / self.h));
        let (i0, j0) = (u.floor() as i64, v.floor() as i64);
        let (s, t) = (u - i0 as f64, v - j0 as f64);
        match (
            self.slot(i0, j0),
            self.slot(i0 + 1, j0),
            self.slot(i0, j0 + 1),
            self.slot(i0 + 1, j0 + 1),
        ) {
            (Some(a), Some(b), Some(c), Some(d)) => {
                // lerp form keeps constants and nodes exact
                let lo = values[a] + (values[b] - values[a]) * s;
                let hi = values[c] + (values[d] - values[c]) * s;
                lo + (hi - lo) * t
            }
            _ => values[self.nearest(z)],
        }
    }

    /// Finite-difference partials `(∂x, ∂y)` at node `k`: centered when both
    /// neighbours exist, one-sided otherwise, zero for an isolated direction.
    pub fn partials(&self, values: &[Complex64], k: usize) -> (Complex64, Complex64) {
        let (i, j) = self.lattice[k];
        let diff = |minus: Option<usize>, plus: Option<usize>| match (minus, plus) {
            (Some(a), Some(b)) => (values[b] - values[a]) / (2.0 * self.h),
            (None, Some(b)) => (values[b] - values[k]) / self.h,
            (Some(a), None) => (values[k] - values[a]) / self.h,
            (None, None) => Complex64::new(0.0, 0.0),
        };
        (
            diff(self.slot(i - 1, j), self.slot(i + 1, j)),
            diff(self.slot(i, j - 1), self.slot(i, j + 1)),
        )
    }
}

/// Largest singular value of the real 2×2 Jacobian with columns `dx`, `dy`.
pub fn jacobian_norm(dx: Complex64, dy: Complex64) -> f64 {
    let t = dx.norm_sqr() + dy.norm_sqr();
    let det = dx.re * dy.im - dx.im * dy.re;
    ((t + (t * t - 4.0 * det * det).max(0.0).sqrt()) / 2.0).sqrt()
}

#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Arc<DiscGrid>,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn build<F: Field + ?Sized>(grid: &Arc<DiscGrid>, f: &F) -> Self {
        let values = grid.nodes.par_iter().map(|&z| f.eval(z)).collect();
        GridFunction {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn from_values(grid: &Arc<DiscGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(GridFunction {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<DiscGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn interpolate(&self, z: Complex64) -> Complex64 {
        self.grid.interpolate(&self.values, z)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64 + Sync) -> GridFunction {
        GridFunction {
            grid: Arc::clone(&self.grid),
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Jacobian operator norm at every node.
    pub fn gradient_norms(&self) -> Vec<f64> {
        (0..self.values.len())
            .into_par_iter()
            .map(|k| {
                let (dx, dy) = self.grid.partials(&self.values, k);
                jacobian_norm(dx, dy)
            })
            .collect()
    }

    pub fn sup_gradient(&self) -> f64 {
        self.gradient_norms().into_iter().fold(0.0, f64::max)
    }

    pub fn c1_norm(&self) -> f64 {
        self.sup() + self.sup_gradient()
    }
}

impl Field for GridFunction {
    fn eval(&self, z: Complex64) -> Complex64 {
        self.interpolate(z)
    }
}

pub fn grid_build<F: Field + ?Sized>(h: f64, f: &F) -> Result<GridFunction> {
    Ok(GridFunction::build(&DiscGrid::new(h)?, f))
}

/// `(‖g‖_{C¹}, ‖g‖_{(b)})`; the frequency divisor is `|b| + |ell|` and the
/// `(b)`-norm falls back to the C¹ norm when that divisor is below 1.
pub fn grid_norms(gf: &GridFunction, b: f64, ell: i64) -> (f64, f64) {
    let sup = gf.sup();
    let grad = gf.sup_gradient();
    let k = b.abs() + ell.unsigned_abs() as f64;
    let c1 = sup + grad;
    let bnorm = if k >= 1.0 { sup + grad / k } else { c1 };
    (c1, bnorm)
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

    #[test]
    fn node_count_close_to_area() {
        let g = DiscGrid::new(0.01).unwrap();
        let expected = std::f64::consts::PI / 1e-4;
        assert!((g.len() as f64 / expected - 1.0).abs() < 0.01);
        assert!(g.nodes().iter().all(|z| z.norm() <= 1.0 + 1e-12));
        assert!(DiscGrid::new(0.2).is_err());
        assert!(DiscGrid::new(0.0).is_err());
    }

    #[test]
    fn constants_and_nodes_interpolate_exactly() {
        let one = grid_build(0.05, &|_z: Complex64| c(1.0, 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let z = Complex64::from_polar(rng.gen::<f64>().sqrt() * 1.02, rng.gen::<f64>() * 6.3);
            assert_eq!(one.interpolate(z), c(1.0, 0.0));
        }
        let re = grid_build(0.05, &|z: Complex64| c(z.re, 0.0)).unwrap();
        assert_abs_diff_eq!(re.interpolate(c(0.5, 0.0)).re, 0.5, epsilon = 1e-15);
        for (k, z) in re.grid().nodes().iter().enumerate() {
            assert_eq!(re.interpolate(*z), re.values()[k]);
        }
    }

    #[test]
    fn interpolation_is_second_order() {
        let f = |z: Complex64| z * z;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Complex64> = (0..2000)
            .map(|_| Complex64::from_polar(rng.gen::<f64>().sqrt() * 0.85, rng.gen::<f64>() * 6.3))
            .collect();
        let err = |h: f64| {
            let g = grid_build(h, &f).unwrap();
            pts.iter().map(|&z| (g.interpolate(z) - f(z)).norm()).fold(0.0, f64::max)
        };
        let (coarse, fine) = (err(0.04), err(0.02));
        let ratio = coarse / fine;
        assert!((3.0..5.0).contains(&ratio), "refinement ratio {ratio}");
        assert!(coarse <= 0.04 * 0.04);
    }

    #[test]
    fn norm_examples() {
        let one = grid_build(0.02, &|_z: Complex64| c(1.0, 0.0)).unwrap();
        assert_eq!(grid_norms(&one, 7.0, 0), (1.0, 1.0));
        let re = grid_build(0.02, &|z: Complex64| c(z.re, 0.0)).unwrap();
        let (c1, bn) = grid_norms(&re, 10.0, 0);
        assert_abs_diff_eq!(c1, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(bn, 1.1, epsilon = 1e-9);
        let (c1, bn) = grid_norms(&re, 0.5, 0);
        assert_eq!(c1, bn);
        let (_, coupled) = grid_norms(&re, 6.0, 4);
        assert_abs_diff_eq!(coupled, 1.1, epsilon = 1e-9);
    }

    #[test]
    fn jacobian_norm_of_rotation_and_shear() {
        // holomorphic z ↦ (2+i) z has both singular values √5
        assert_abs_diff_eq!(jacobian_norm(c(2.0, 1.0), c(-1.0, 2.0)), 5f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(jacobian_norm(c(1.0, 0.0), c(0.0, 0.0)), 1.0, epsilon = 1e-12);
    }
}
