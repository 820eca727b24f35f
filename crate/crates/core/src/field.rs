//! Sampled fields on a [`GridSpec`], support boxes and smooth bump profiles.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: GridSpec,
    data: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: GridSpec,
    data: Vec<f64>,
}

macro_rules! field_common {
    ($ty:ident, $elem:ty, $zero:expr) => {
        impl $ty {
            pub fn zeros(grid: GridSpec) -> Self {
                Self { grid, data: vec![$zero; grid.len()] }
            }

            pub fn from_vec(grid: GridSpec, data: Vec<$elem>) -> Result<Self> {
                if data.len() != grid.len() {
                    return Err(Error::InvalidParameter(format!(
                        "sample count {} does not match grid size {}",
                        data.len(),
                        grid.len()
                    )));
                }
                Ok(Self { grid, data })
            }

            /// Samples `f` at every grid point.
            pub fn from_fn(grid: GridSpec, f: impl Fn(&Point) -> $elem) -> Self {
                let data = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
                Self { grid, data }
            }

            pub fn grid(&self) -> &GridSpec {
                &self.grid
            }

            pub fn data(&self) -> &[$elem] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [$elem] {
                &mut self.data
            }

            pub fn into_vec(self) -> Vec<$elem> {
                self.data
            }

            pub fn is_finite(&self) -> bool {
                self.data.iter().all(|v| v.is_finite())
            }

            pub fn map(&self, f: impl Fn($elem) -> $elem) -> Self {
                Self { grid: self.grid, data: self.data.iter().map(|&v| f(v)).collect() }
            }

            pub fn zip_with(&self, other: &Self, f: impl Fn($elem, $elem) -> $elem) -> Result<Self> {
                if self.grid != other.grid {
                    return Err(Error::GridMismatch);
                }
                let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
                Ok(Self { grid: self.grid, data })
            }

            pub fn add(&self, other: &Self) -> Result<Self> {
                self.zip_with(other, |a, b| a + b)
            }

            pub fn sub(&self, other: &Self) -> Result<Self> {
                self.zip_with(other, |a, b| a - b)
            }

            pub fn scale(&self, s: f64) -> Self {
                self.map(|v| v * s)
            }
        }
    };
}

field_common!(ComplexField, Complex64, Complex64::new(0.0, 0.0));
field_common!(RealField, f64, 0.0);

impl ComplexField {
    pub fn real(&self) -> RealField {
        RealField { grid: self.grid, data: self.data.iter().map(|z| z.re).collect() }
    }

    pub fn imag(&self) -> RealField {
        RealField { grid: self.grid, data: self.data.iter().map(|z| z.im).collect() }
    }

    pub fn modulus_sq(&self) -> RealField {
        RealField { grid: self.grid, data: self.data.iter().map(|z| z.norm_sqr()).collect() }
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    /// Pointwise product with a real field.
    pub fn mul_real(&self, other: &RealField) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).collect();
        Ok(Self { grid: self.grid, data })
    }

    pub fn scale_complex(&self, s: Complex64) -> Self {
        self.map(|v| v * s)
    }
}

impl RealField {
    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid,
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Axis-aligned box `center ± radius` (closed).
#[derive(Debug, Clone, PartialEq)]
pub struct SupportBox {
    center: Vec<f64>,
    radius: Vec<f64>,
}

impl SupportBox {
    pub fn new(center: Vec<f64>, radius: Vec<f64>) -> Result<Self> {
        if center.len() != radius.len() || center.is_empty() || center.len() > 3 {
            return Err(Error::InvalidParameter(
                "support box center and radius must share a dimension in 1..=3".into(),
            ));
        }
        if radius.iter().any(|&r| !(r.is_finite() && r > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "support box radii must be positive, got {radius:?}"
            )));
        }
        Ok(Self { center, radius })
    }

    /// Cube of half-width `radius` around `center`.
    pub fn cube(center: &[f64], radius: f64) -> Result<Self> {
        Self::new(center.to_vec(), vec![radius; center.len()])
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> &[f64] {
        &self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.center
            .iter()
            .zip(&self.radius)
            .enumerate()
            .all(|(a, (&c, &r))| (p[a] - c).abs() <= r)
    }

    /// Box grown by `by` on every side.
    pub fn dilate(&self, by: f64) -> Self {
        Self { center: self.center.clone(), radius: self.radius.iter().map(|r| r + by).collect() }
    }

    pub fn translate(&self, shift: &[f64]) -> Self {
        Self {
            center: self.center.iter().zip(shift).map(|(c, s)| c + s).collect(),
            radius: self.radius.clone(),
        }
    }

    /// Requires the box to stay at least `margin` away from the periodic
    /// boundary of `grid`.
    pub fn check_inside(&self, grid: &GridSpec, margin: f64) -> Result<()> {
        if self.dim() != grid.dim() {
            return Err(Error::InvalidParameter("support box dimension differs from grid".into()));
        }
        let l = grid.half_len();
        for (a, (&c, &r)) in self.center.iter().zip(&self.radius).enumerate() {
            // the last grid point is L - dx; the point at -L is its periodic neighbour
            if c - r - margin < -l || c + r + margin > l - grid.dx() {
                return Err(Error::SupportOutsideDomain {
                    margin,
                    detail: format!("axis {a}: [{}, {}] vs [-{l}, {l})", c - r, c + r),
                });
            }
        }
        Ok(())
    }
}

/// Canonical smooth bump `exp(-1/(1 - s))` as a function of `s = r^2`.
pub(crate) fn bump_profile(s: f64) -> f64 {
    if s < 1.0 {
        (-1.0 / (1.0 - s)).exp()
    } else {
        0.0
    }
}

/// `height * exp(-1/(1 - r^2))` with `r = |x - center| / radius`, zero for `r >= 1`.
///
/// The support box `center ± radius` must keep a margin of `4 dx` to the
/// periodic boundary.
pub fn bump(grid: &GridSpec, center: &[f64], radius: f64, height: f64) -> Result<RealField> {
    let support = SupportBox::cube(center, radius)?;
    support.check_inside(grid, 4.0 * grid.dx())?;
    let d = grid.dim();
    Ok(RealField::from_fn(*grid, |p| {
        let s = (0..d).map(|a| (p[a] - center[a]).powi(2)).sum::<f64>() / (radius * radius);
        height * bump_profile(s)
    }))
}

/// Fraction of the L2 mass of `f` lying outside `support`; zero for `f == 0`.
pub fn mass_outside(f: &ComplexField, support: &SupportBox) -> f64 {
    let grid = f.grid();
    let (mut total, mut outside) = (0.0, 0.0);
    for (i, z) in f.data().iter().enumerate() {
        let m = z.norm_sqr();
        total += m;
        if !support.contains(&grid.point(i)) {
            outside += m;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outside / total
    }
}

pub fn mass_outside_real(f: &RealField, support: &SupportBox) -> f64 {
    mass_outside(&f.to_complex(), support)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn bump_values() {
        let g = make_grid(1, 256, 4.0).unwrap();
        let b = bump(&g, &[0.0], 1.0, 1.0).unwrap();
        let i0 = 128; // x = 0
        assert_eq!(g.coord(i0), 0.0);
        assert!((b.data()[i0] - (-1.0f64).exp()).abs() < 1e-15);
        for (i, v) in b.data().iter().enumerate() {
            assert!(*v >= 0.0);
            if g.coord(i).abs() >= 1.0 {
                assert_eq!(*v, 0.0);
            }
        }
        assert!((b.max() - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn disjoint_bumps_have_zero_product() {
        let g = make_grid(1, 256, 4.0).unwrap();
        let b1 = bump(&g, &[-1.5], 1.0, 2.0).unwrap();
        let b2 = bump(&g, &[1.5], 1.0, 3.0).unwrap();
        assert!(b1.mul(&b2).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bump_rejects_boundary_contact() {
        let g = make_grid(1, 64, 2.0).unwrap();
        assert!(bump(&g, &[1.5], 0.5, 1.0).is_err());
        assert!(bump(&g, &[-1.5], 0.5, 1.0).is_err());
        assert!(bump(&g, &[0.0], 1.0, 1.0).is_ok());
    }

    #[test]
    fn mass_outside_cases() {
        let g = make_grid(1, 256, 4.0).unwrap();
        let b = bump(&g, &[0.0], 1.0, 1.0).unwrap().to_complex();
        let inside = SupportBox::cube(&[0.0], 1.5).unwrap();
        assert!(mass_outside(&b, &inside) <= 1e-14);
        let away = SupportBox::cube(&[3.0], 0.5).unwrap();
        assert_eq!(mass_outside(&b, &away), 1.0);
        assert_eq!(mass_outside(&ComplexField::zeros(g), &inside), 0.0);
    }

    #[test]
    fn mass_outside_half_line() {
        // bump centred between two grid points; the box covers [c, c + 10]
        let g = make_grid(1, 256, 4.0).unwrap();
        let c = 0.5 * g.dx();
        let b = bump(&g, &[c], 1.0, 1.0).unwrap().to_complex();
        let half = SupportBox::new(vec![c + 5.0], vec![5.0]).unwrap();
        // quadrature oracle: left-half mass over total mass
        let (mut left, mut total) = (0.0, 0.0);
        for i in 0..g.n() {
            let x = g.coord(i);
            let v = bump_profile(((x - c) / 1.0).powi(2)).powi(2);
            total += v;
            if x < c {
                left += v;
            }
        }
        assert!((mass_outside(&b, &half) - left / total).abs() < 1e-14);
        assert!((mass_outside(&b, &half) - 0.5).abs() < 1e-10);
    }
}
