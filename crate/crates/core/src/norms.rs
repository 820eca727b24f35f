//! Discrete norms on periodic grids.

use crate::field::{ComplexField, RealField};
use crate::spectral::Spectral;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    L2,
    Linf,
    /// Sobolev norm with Fourier weight `(1 + |kappa|^2)^{s/2}`.
    Hs(f64),
    /// `max(L2, Linf)`, the norm of `L2 ∩ Linf`.
    Combined,
}

pub fn norm(f: &ComplexField, kind: NormKind) -> f64 {
    match kind {
        NormKind::L2 => l2(f),
        NormKind::Linf => linf(f),
        NormKind::Combined => l2(f).max(linf(f)),
        NormKind::Hs(s) => hs(f, s),
    }
}

pub fn norm_real(f: &RealField, kind: NormKind) -> f64 {
    norm(&f.to_complex(), kind)
}

/// `sqrt(sum |f|^2 dx^d)`.
pub fn l2(f: &ComplexField) -> f64 {
    mass(f).sqrt()
}

/// `sum |f|^2 dx^d`.
pub fn mass(f: &ComplexField) -> f64 {
    f.data().iter().map(|z| z.norm_sqr()).sum::<f64>() * f.grid().cell_volume()
}

pub fn linf(f: &ComplexField) -> f64 {
    f.data().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn hs(f: &ComplexField, s: f64) -> f64 {
    assert!(s >= 0.0, "Sobolev index must be nonnegative");
    let sp = Spectral::for_grid(f.grid());
    let hat = sp.forward_field(f);
    let grid = f.grid();
    // Parseval: sum |f|^2 dx^d = (dx^d / N) sum |f_hat|^2
    let weight = grid.cell_volume() / grid.len() as f64;
    let sum: f64 = hat
        .iter()
        .zip(sp.ksq())
        .map(|(c, &k2)| (1.0 + k2).powf(s) * c.norm_sqr())
        .sum();
    (sum * weight).sqrt()
}

/// Relative distance `|a - b| / max(|b|, tiny)` in the given norm.
pub fn relative_error(a: &ComplexField, b: &ComplexField, kind: NormKind) -> f64 {
    let diff = a.sub(b).expect("fields on different grids");
    let denom = norm(b, kind);
    if denom == 0.0 {
        norm(&diff, kind)
    } else {
        norm(&diff, kind) / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use num_complex::Complex64;
    use proptest::prelude::*;

    #[test]
    fn constant_and_zero() {
        let g = make_grid(1, 32, 1.0).unwrap();
        let one = ComplexField::from_fn(g, |_| Complex64::new(1.0, 0.0));
        assert!((norm(&one, NormKind::L2) - 2f64.sqrt()).abs() < 1e-14);
        let zero = ComplexField::zeros(g);
        for kind in [NormKind::L2, NormKind::Linf, NormKind::Hs(1.5), NormKind::Combined] {
            assert_eq!(norm(&zero, kind), 0.0);
        }
    }

    #[test]
    fn single_mode_sobolev() {
        let l = 2.0;
        let g = make_grid(1, 64, l).unwrap();
        let k = 3.0 * std::f64::consts::PI / l;
        let f = ComplexField::from_fn(g, |p| Complex64::from_polar(1.0, k * p[0]));
        for s in [0.0, 1.0, 2.5] {
            let direct = (1.0 + k * k).powf(s / 2.0) * (2.0 * l).sqrt();
            assert!((norm(&f, NormKind::Hs(s)) - direct).abs() < 1e-12 * direct);
        }
    }

    proptest! {
        #[test]
        fn parseval_and_h0(vals in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 256)) {
            let g = make_grid(2, 16, 1.5).unwrap();
            let f = ComplexField::from_vec(g, vals.iter().map(|&(a, b)| Complex64::new(a, b)).collect()).unwrap();
            let phys = norm(&f, NormKind::L2);
            let spec = norm(&f, NormKind::Hs(0.0));
            prop_assert!((phys - spec).abs() <= 1e-12 * phys.max(1e-300));
            prop_assert!(norm(&f, NormKind::Combined) >= phys);
        }
    }
}
