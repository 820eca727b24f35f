//! Periodic tensor grids on `[-L, L)^d`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Default cap on `n^d`: 2^26 points, about 1 GiB per complex field.
pub const DEFAULT_MAX_POINTS: usize = 1 << 26;

/// Grid points per local oscillation wavelength required by the resolution rule.
pub const POINTS_PER_WAVELENGTH: f64 = 8.0;

/// A point in at most three dimensions; unused trailing coordinates are zero.
pub type Point = [f64; 3];

/// Uniform periodic grid with `n` points per axis on `[-L, L)^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    n: usize,
    half_len: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, half_len: f64) -> Result<Self> {
        Self::with_budget(dim, n, half_len, DEFAULT_MAX_POINTS)
    }

    pub fn with_budget(dim: usize, n: usize, half_len: f64, max_points: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 16, got {n}"
            )));
        }
        if !(half_len.is_finite() && half_len > 0.0) {
            return Err(Error::InvalidGrid(format!("half-length must be positive, got {half_len}")));
        }
        let total = n
            .checked_pow(dim as u32)
            .ok_or_else(|| Error::InvalidGrid("point count overflows".into()))?;
        if total > max_points {
            return Err(Error::InvalidGrid(format!(
                "{n}^{dim} = {total} points exceeds the memory budget of {max_points}"
            )));
        }
        Ok(Self { dim, n, half_len })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_len(&self) -> f64 {
        self.half_len
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_len / self.n as f64
    }

    /// Volume element `dx^d` used by every quadrature.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of grid index `i` along any axis.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_len + i as f64 * self.dx()
    }

    /// Per-axis indices of a flat row-major index (axis 0 slowest).
    pub fn unflatten(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for axis in (0..self.dim).rev() {
            idx[axis] = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize; 3]) -> usize {
        idx[..self.dim].iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn point(&self, flat: usize) -> Point {
        let idx = self.unflatten(flat);
        let mut p = [0.0; 3];
        for axis in 0..self.dim {
            p[axis] = self.coord(idx[axis]);
        }
        p
    }

    /// Largest admissible spacing for semiclassical parameter `eps` when the
    /// total phase gradient is bounded by `phase_gradient_max`.
    pub fn max_dx_for(eps: f64, phase_gradient_max: f64) -> f64 {
        if phase_gradient_max <= 0.0 {
            return f64::INFINITY;
        }
        eps * 2.0 * PI / (POINTS_PER_WAVELENGTH * phase_gradient_max)
    }

    /// Smallest power-of-two `n >= 16` satisfying the resolution rule on `[-L, L)`.
    pub fn min_n_for(eps: f64, phase_gradient_max: f64, half_len: f64) -> usize {
        let dx_max = Self::max_dx_for(eps, phase_gradient_max);
        let mut n = 16usize;
        while 2.0 * half_len / (n as f64) > dx_max && n < (1 << 30) {
            n *= 2;
        }
        n
    }

    /// Checks `dx <= 2 pi eps / (8 Phi)`.
    pub fn check_resolution(&self, eps: f64, phase_gradient_max: f64) -> Result<()> {
        let dx_max = Self::max_dx_for(eps, phase_gradient_max);
        if self.dx() > dx_max * (1.0 + 1e-12) {
            return Err(Error::Underresolved {
                eps,
                n: self.n,
                dx: self.dx(),
                dx_max,
                min_n: Self::min_n_for(eps, phase_gradient_max, self.half_len),
            });
        }
        Ok(())
    }

    /// Same box and dimension, different resolution.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.dim, n, self.half_len)
    }
}

/// Convenience constructor mirroring `GridSpec::new`.
pub fn make_grid(dim: usize, n: usize, half_len: f64) -> Result<GridSpec> {
    GridSpec::new(dim, n, half_len)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_origin() {
        let g = make_grid(1, 16, 1.0).unwrap();
        assert_eq!(g.dx(), 0.125);
        assert_eq!(g.coord(0), -1.0);

        let g = make_grid(2, 64, 4.0).unwrap();
        assert_eq!(g.len(), 4096);
        assert_eq!(g.dx(), 0.125);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(make_grid(1, 17, 1.0).is_err());
        assert!(make_grid(1, 8, 1.0).is_err());
        assert!(make_grid(4, 16, 1.0).is_err());
        assert!(make_grid(0, 16, 1.0).is_err());
        assert!(make_grid(1, 16, -1.0).is_err());
        assert!(GridSpec::with_budget(3, 1024, 1.0, 1 << 20).is_err());
    }

    #[test]
    fn flat_index_roundtrip() {
        let g = make_grid(3, 16, 2.0).unwrap();
        for flat in [0, 1, 17, 255, 4095] {
            assert_eq!(g.flatten(&g.unflatten(flat)), flat);
        }
        let p = g.point(g.flatten(&[1, 2, 3]));
        assert_eq!(p, [g.coord(1), g.coord(2), g.coord(3)]);
    }

    #[test]
    fn resolution_rule() {
        // eps = 1/16, Phi = 1: dx_max = 2 pi / 128
        let dx_max = GridSpec::max_dx_for(1.0 / 16.0, 1.0);
        assert!((dx_max - 2.0 * PI / 128.0).abs() < 1e-15);
        let n = GridSpec::min_n_for(1.0 / 16.0, 1.0, 4.0);
        assert_eq!(n, 256);
        let g = make_grid(1, 128, 4.0).unwrap();
        match g.check_resolution(1.0 / 16.0, 1.0) {
            Err(Error::Underresolved { min_n, .. }) => assert_eq!(min_n, 256),
            other => panic!("expected resolution error, got {other:?}"),
        }
        assert!(g.with_n(256).unwrap().check_resolution(1.0 / 16.0, 1.0).is_ok());
    }
}
