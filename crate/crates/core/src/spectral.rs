//! FFT-based operators on periodic grids.
//!
//! Conventions: the forward transform is unnormalized, the inverse divides by
//! `n^d`. Mode `m` along an axis has wavenumber `kappa = pi m / L` with `m`
//! taken in `[-n/2, n/2)`. The Nyquist mode is treated as the real cosine
//! `cos(kappa_N (x + L))`, so first derivatives zero it and shifts and
//! off-grid evaluation keep real fields real.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::grid::{GridSpec, Point};

const LINES_PER_TASK: usize = 64;

/// Cached FFT plans and wavenumber tables for one grid.
pub struct Spectral {
    grid: GridSpec,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    kappa: Vec<f64>,
    ksq: Vec<f64>,
}

type CacheKey = (usize, usize, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<Spectral>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<Spectral>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Spectral {
    /// Shared instance for `grid`; plans are built once per process.
    pub fn for_grid(grid: &GridSpec) -> Arc<Spectral> {
        let key = (grid.dim(), grid.n(), grid.half_len().to_bits());
        let mut map = cache().lock().expect("spectral cache poisoned");
        map.entry(key).or_insert_with(|| Arc::new(Spectral::build(*grid))).clone()
    }

    fn build(grid: GridSpec) -> Self {
        let n = grid.n();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let base = PI / grid.half_len();
        let kappa: Vec<f64> = (0..n).map(|i| base * signed_mode(i, n) as f64).collect();
        let ksq = (0..grid.len())
            .map(|flat| {
                let idx = grid.unflatten(flat);
                (0..grid.dim()).map(|a| kappa[idx[a]].powi(2)).sum()
            })
            .collect();
        Self { grid, fwd, inv, kappa, ksq }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Wavenumber of FFT index `i` along any axis.
    pub fn kappa(&self, i: usize) -> f64 {
        self.kappa[i]
    }

    pub fn kappas(&self) -> &[f64] {
        &self.kappa
    }

    /// `|kappa|^2` per flat mode index.
    pub fn ksq(&self) -> &[f64] {
        &self.ksq
    }

    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.grid.n() / 2
    }

    /// Largest resolved wavenumber `pi / dx`.
    pub fn kappa_max(&self) -> f64 {
        PI / self.grid.dx()
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.fwd);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inv);
        let s = 1.0 / self.grid.len() as f64;
        data.par_iter_mut().for_each(|z| *z *= s);
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.grid.len(), "buffer does not match grid");
        let (n, d) = (self.grid.n(), self.grid.dim());
        for axis in 0..d {
            fft_axis(data, n, d, axis, fft);
        }
    }

    pub fn forward_field(&self, f: &ComplexField) -> Vec<Complex64> {
        let mut hat = f.data().to_vec();
        self.forward(&mut hat);
        hat
    }

    pub fn forward_real(&self, f: &RealField) -> Vec<Complex64> {
        let mut hat: Vec<Complex64> = f.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut hat);
        hat
    }

    pub fn inverse_to_field(&self, mut hat: Vec<Complex64>) -> ComplexField {
        self.inverse(&mut hat);
        ComplexField::from_vec(self.grid, hat).expect("length checked by transform")
    }

    pub fn inverse_to_real(&self, mut hat: Vec<Complex64>) -> RealField {
        self.inverse(&mut hat);
        RealField::from_vec(self.grid, hat.into_iter().map(|z| z.re).collect())
            .expect("length checked by transform")
    }

    /// `i kappa_axis * hat`, Nyquist zeroed.
    pub fn derivative_hat(&self, hat: &[Complex64], axis: usize) -> Vec<Complex64> {
        let grid = self.grid;
        hat.par_iter()
            .enumerate()
            .map(|(flat, &c)| {
                let i = grid.unflatten(flat)[axis];
                if self.is_nyquist(i) {
                    Complex64::new(0.0, 0.0)
                } else {
                    c * Complex64::new(0.0, self.kappa[i])
                }
            })
            .collect()
    }

    /// `-kappa_a kappa_b * hat`; Nyquist zeroed for mixed derivatives.
    pub fn second_derivative_hat(&self, hat: &[Complex64], a: usize, b: usize) -> Vec<Complex64> {
        let grid = self.grid;
        hat.par_iter()
            .enumerate()
            .map(|(flat, &c)| {
                let idx = grid.unflatten(flat);
                if a != b && (self.is_nyquist(idx[a]) || self.is_nyquist(idx[b])) {
                    Complex64::new(0.0, 0.0)
                } else {
                    -c * self.kappa[idx[a]] * self.kappa[idx[b]]
                }
            })
            .collect()
    }

    pub fn laplacian_hat(&self, hat: &[Complex64]) -> Vec<Complex64> {
        hat.par_iter().zip(self.ksq.par_iter()).map(|(&c, &k2)| -c * k2).collect()
    }

    /// Gradient of `data` (physical space), returned in physical space.
    pub fn gradient_of(&self, data: &[Complex64]) -> Vec<Vec<Complex64>> {
        let mut hat = data.to_vec();
        self.forward(&mut hat);
        (0..self.grid.dim())
            .map(|a| {
                let mut g = self.derivative_hat(&hat, a);
                self.inverse(&mut g);
                g
            })
            .collect()
    }

    /// Per-axis phase factors for a shift `f(x) -> f(x - s)`.
    fn shift_factors(&self, shift: &[f64]) -> Vec<Vec<Complex64>> {
        (0..self.grid.dim())
            .map(|a| {
                (0..self.grid.n())
                    .map(|i| {
                        let arg = self.kappa[i] * shift[a];
                        if self.is_nyquist(i) {
                            Complex64::new(arg.cos(), 0.0)
                        } else {
                            Complex64::from_polar(1.0, -arg)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Multiplies Fourier coefficients by the shift `f(x) -> f(x - s)`.
    pub fn shift_hat(&self, hat: &mut [Complex64], shift: &[f64]) {
        let factors = self.shift_factors(shift);
        let grid = self.grid;
        hat.par_iter_mut().enumerate().for_each(|(flat, c)| {
            let idx = grid.unflatten(flat);
            for (a, fa) in factors.iter().enumerate() {
                *c *= fa[idx[a]];
            }
        });
    }

    /// 1D interpolation weights `e^{i kappa_k (x + L)}` for every mode `k`.
    fn basis_row(&self, x: f64) -> Vec<Complex64> {
        let l = self.grid.half_len();
        (0..self.grid.n())
            .map(|i| {
                let arg = self.kappa[i] * (x + l);
                if self.is_nyquist(i) {
                    Complex64::new(arg.cos(), 0.0)
                } else {
                    Complex64::from_polar(1.0, arg)
                }
            })
            .collect()
    }
}

fn signed_mode(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

fn fft_axis(data: &mut [Complex64], n: usize, dim: usize, axis: usize, fft: &Arc<dyn Fft<f64>>) {
    let stride = n.pow((dim - 1 - axis) as u32);
    if stride == 1 {
        data.par_chunks_mut(n * LINES_PER_TASK).for_each(|chunk| fft.process(chunk));
        return;
    }
    let block = n * stride;
    data.par_chunks_mut(block).for_each(|blk| {
        let mut scratch = vec![Complex64::new(0.0, 0.0); block];
        transpose(blk, n, stride, &mut scratch);
        scratch.par_chunks_mut(n * LINES_PER_TASK).for_each(|chunk| fft.process(chunk));
        transpose(&scratch, stride, n, blk);
    });
}

/// `dst[j * rows + i] = src[i * cols + j]` for a `rows x cols` source.
fn transpose(src: &[Complex64], rows: usize, cols: usize, dst: &mut [Complex64]) {
    const TILE: usize = 32;
    dst.par_chunks_mut(rows * TILE).enumerate().for_each(|(tile_j, out)| {
        let j0 = tile_j * TILE;
        let jn = out.len() / rows;
        for i0 in (0..rows).step_by(TILE) {
            for i in i0..(i0 + TILE).min(rows) {
                let row = &src[i * cols..];
                for jj in 0..jn {
                    out[jj * rows + i] = row[j0 + jj];
                }
            }
        }
    });
}

pub fn spectral_gradient(f: &ComplexField) -> Vec<ComplexField> {
    let sp = Spectral::for_grid(f.grid());
    sp.gradient_of(f.data())
        .into_iter()
        .map(|g| ComplexField::from_vec(*f.grid(), g).expect("same grid"))
        .collect()
}

pub fn spectral_gradient_real(f: &RealField) -> Vec<RealField> {
    spectral_gradient(&f.to_complex()).iter().map(|g| g.real()).collect()
}

pub fn spectral_laplacian(f: &ComplexField) -> ComplexField {
    let sp = Spectral::for_grid(f.grid());
    let hat = sp.forward_field(f);
    sp.inverse_to_field(sp.laplacian_hat(&hat))
}

pub fn spectral_laplacian_real(f: &RealField) -> RealField {
    spectral_laplacian(&f.to_complex()).real()
}

/// Upper-triangular Hessian entries `(0,0), (0,1), .., (1,1), ..`.
pub fn spectral_hessian_real(f: &RealField) -> Vec<RealField> {
    let sp = Spectral::for_grid(f.grid());
    let hat = sp.forward_real(f);
    let d = f.grid().dim();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for a in 0..d {
        for b in a..d {
            out.push(sp.inverse_to_real(sp.second_derivative_hat(&hat, a, b)));
        }
    }
    out
}

/// `x -> f(x - shift)`, exact for trigonometric polynomials.
pub fn translate(f: &ComplexField, shift: &[f64]) -> ComplexField {
    let sp = Spectral::for_grid(f.grid());
    let mut hat = sp.forward_field(f);
    sp.shift_hat(&mut hat, shift);
    sp.inverse_to_field(hat)
}

pub fn translate_real(f: &RealField, shift: &[f64]) -> RealField {
    translate(&f.to_complex(), shift).real()
}

/// Changes the resolution of `f` on the same box: Fourier zero-padding when
/// refining, subsampling onto the nested coarse grid when coarsening.
pub fn resample(f: &ComplexField, n_new: usize) -> Result<ComplexField> {
    let grid = *f.grid();
    let n = grid.n();
    let target = grid.with_n(n_new)?;
    if n_new == n {
        return Ok(f.clone());
    }
    if n_new < n {
        let stride = n / n_new;
        let data = (0..target.len())
            .map(|flat| {
                let mut idx = target.unflatten(flat);
                for i in idx.iter_mut().take(grid.dim()) {
                    *i *= stride;
                }
                f.data()[grid.flatten(&idx)]
            })
            .collect();
        return ComplexField::from_vec(target, data);
    }
    let sp = Spectral::for_grid(&grid);
    let hat = sp.forward_field(f);
    // per-axis target slots and weights; the Nyquist coefficient splits evenly
    let targets: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let m = signed_mode(i, n);
            if i == n / 2 {
                vec![(n_new - n / 2, 0.5), (n / 2, 0.5)]
            } else {
                vec![(m.rem_euclid(n_new as i64) as usize, 1.0)]
            }
        })
        .collect();
    let scale = (n_new as f64 / n as f64).powi(grid.dim() as i32);
    let mut out = vec![Complex64::new(0.0, 0.0); target.len()];
    let d = grid.dim();
    for (flat, &c) in hat.iter().enumerate() {
        let idx = grid.unflatten(flat);
        let mut slots: Vec<([usize; 3], f64)> = vec![([0; 3], scale)];
        for a in 0..d {
            let mut next = Vec::with_capacity(slots.len() * 2);
            for (base, w) in &slots {
                for &(ti, tw) in &targets[idx[a]] {
                    let mut b = *base;
                    b[a] = ti;
                    next.push((b, w * tw));
                }
            }
            slots = next;
        }
        for (b, w) in slots {
            out[target.flatten(&b)] += c * w;
        }
    }
    let tsp = Spectral::for_grid(&target);
    Ok(tsp.inverse_to_field(out))
}

pub fn resample_real(f: &RealField, n_new: usize) -> Result<RealField> {
    Ok(resample(&f.to_complex(), n_new)?.real())
}

/// Trigonometric interpolant of `f` evaluated at arbitrary points.
pub fn eval_at(f: &ComplexField, points: &[Point]) -> Vec<Complex64> {
    let grid = *f.grid();
    let sp = Spectral::for_grid(&grid);
    let hat = sp.forward_field(f);
    let norm = 1.0 / grid.len() as f64;
    let d = grid.dim();
    let n = grid.n();
    points
        .par_iter()
        .map(|p| {
            let rows: Vec<Vec<Complex64>> = (0..d).map(|a| sp.basis_row(p[a])).collect();
            // contract the last axis first
            let mut acc: Vec<Complex64> = hat.clone();
            for a in (0..d).rev() {
                let outer = acc.len() / n;
                acc = (0..outer)
                    .map(|o| {
                        acc[o * n..(o + 1) * n]
                            .iter()
                            .zip(&rows[a])
                            .map(|(c, w)| c * w)
                            .sum::<Complex64>()
                    })
                    .collect();
            }
            acc[0] * norm
        })
        .collect()
}

/// Interpolant evaluated on the tensor grid `axes[0] x axes[1] x ..`
/// (row-major output, axis 0 slowest).
pub fn eval_tensor(f: &ComplexField, axes: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    let grid = *f.grid();
    let d = grid.dim();
    if axes.len() != d {
        return Err(Error::InvalidParameter("one coordinate list per axis required".into()));
    }
    let sp = Spectral::for_grid(&grid);
    let mut data = sp.forward_field(f);
    let mut shape: Vec<usize> = vec![grid.n(); d];
    for (a, coords) in axes.iter().enumerate() {
        let rows: Vec<Vec<Complex64>> = coords.iter().map(|&x| sp.basis_row(x)).collect();
        data = apply_along_axis(&data, &shape, a, &rows);
        shape[a] = coords.len();
    }
    let norm = 1.0 / grid.len() as f64;
    data.iter_mut().for_each(|z| *z *= norm);
    Ok(data)
}

/// Contracts axis `axis` of a row-major array with the matrix `rows`
/// (`rows[t][k]` weights input index `k` for output index `t`).
fn apply_along_axis(
    data: &[Complex64],
    shape: &[usize],
    axis: usize,
    rows: &[Vec<Complex64>],
) -> Vec<Complex64> {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let len_in = shape[axis];
    let len_out = rows.len();
    let mut out = vec![Complex64::new(0.0, 0.0); outer * len_out * inner];
    out.par_chunks_mut(len_out * inner).enumerate().for_each(|(o, chunk)| {
        let src = &data[o * len_in * inner..(o + 1) * len_in * inner];
        for (t, row) in rows.iter().enumerate() {
            let dst = &mut chunk[t * inner..(t + 1) * inner];
            for (k, w) in row.iter().enumerate() {
                let line = &src[k * inner..(k + 1) * inner];
                for (z, s) in dst.iter_mut().zip(line) {
                    *z += w * s;
                }
            }
        }
    });
    out
}

/// Exponential filter acting on the top third of modes along each axis.
#[derive(Debug, Clone, Copy)]
pub struct ExpFilter {
    pub strength: f64,
    pub order: i32,
    pub cutoff: f64,
}

impl Default for ExpFilter {
    fn default() -> Self {
        Self { strength: 36.0, order: 36, cutoff: 2.0 / 3.0 }
    }
}

impl ExpFilter {
    fn weights(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let eta = signed_mode(i, n).unsigned_abs() as f64 / (n / 2) as f64;
                if eta <= self.cutoff {
                    1.0
                } else {
                    let r = (eta - self.cutoff) / (1.0 - self.cutoff);
                    (-self.strength * r.powi(self.order)).exp()
                }
            })
            .collect()
    }

    pub fn apply(&self, grid: &GridSpec, hat: &mut [Complex64]) {
        let w = self.weights(grid.n());
        let d = grid.dim();
        hat.par_iter_mut().enumerate().for_each(|(flat, c)| {
            let idx = grid.unflatten(flat);
            let f: f64 = (0..d).map(|a| w[idx[a]]).product();
            *c *= f;
        });
    }

    /// Energy fraction carried by modes inside the filter band.
    pub fn band_fraction(&self, grid: &GridSpec, hat: &[Complex64]) -> f64 {
        let n = grid.n();
        let d = grid.dim();
        let in_band: Vec<bool> = (0..n)
            .map(|i| signed_mode(i, n).unsigned_abs() as f64 / (n / 2) as f64 > self.cutoff)
            .collect();
        let (band, total) = hat
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(b, t), (flat, c)| {
                let idx = grid.unflatten(flat);
                let m = c.norm_sqr();
                if (0..d).any(|a| in_band[idx[a]]) {
                    (b + m, t + m)
                } else {
                    (b, t + m)
                }
            });
        if total == 0.0 {
            0.0
        } else {
            band / total
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = make_grid(2, 32, 3.0).unwrap();
        let f = ComplexField::from_fn(g, |_| Complex64::new(2.5, -1.0));
        for comp in spectral_gradient(&f) {
            assert!(comp.data().iter().all(|z| z.norm() < 1e-13));
        }
    }

    #[test]
    fn gradient_of_sine_is_exact() {
        let l = 1.0;
        let g = make_grid(1, 64, l).unwrap();
        let f = RealField::from_fn(g, |p| (PI * p[0] / l).sin());
        let df = &spectral_gradient_real(&f)[0];
        for (i, v) in df.data().iter().enumerate() {
            let x = g.coord(i);
            assert!((v - PI / l * (PI * x / l).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // band-limited field; centred differences converge at O(dx^2)
        let field = |p: &Point| {
            (p[0]).sin() + 0.3 * (2.0 * p[0] + 0.4).cos() - 0.2 * (3.0 * p[0]).sin()
        };
        let mut errs = vec![];
        for n in [64usize, 128, 256] {
            let g = make_grid(1, n, PI).unwrap();
            let f = RealField::from_fn(g, field);
            let df = &spectral_gradient_real(&f)[0];
            let dx = g.dx();
            let err = (0..n)
                .map(|i| {
                    let fd = (f.data()[(i + 1) % n] - f.data()[(i + n - 1) % n]) / (2.0 * dx);
                    (fd - df.data()[i]).abs()
                })
                .fold(0.0, f64::max);
            errs.push(err);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn real_input_gives_real_gradient_in_2d() {
        let g = make_grid(2, 32, 2.0).unwrap();
        let f = RealField::from_fn(g, |p| (p[0] * PI / 2.0).cos() * (p[1] * PI).sin() + p[0].sin());
        let hat = Spectral::for_grid(&g).forward_real(&f);
        for a in 0..2 {
            let mut d = Spectral::for_grid(&g).derivative_hat(&hat, a);
            Spectral::for_grid(&g).inverse(&mut d);
            assert!(d.iter().all(|z| z.im.abs() < 1e-12));
        }
    }

    #[test]
    fn translation_is_exact_for_resolved_modes() {
        let g = make_grid(2, 32, PI).unwrap();
        let f = ComplexField::from_fn(g, |p| Complex64::from_polar(1.0, 3.0 * p[0] - 2.0 * p[1]));
        let s = [0.37, -1.1];
        let shifted = translate(&f, &s);
        let exact = ComplexField::from_fn(g, |p| {
            Complex64::from_polar(1.0, 3.0 * (p[0] - s[0]) - 2.0 * (p[1] - s[1]))
        });
        assert!(max_err(shifted.data(), exact.data()) < 1e-12);
    }

    #[test]
    fn resample_roundtrip_and_interpolation() {
        let g = make_grid(1, 32, PI).unwrap();
        let f = RealField::from_fn(g, |p| (2.0 * p[0]).sin() + 0.5 * (5.0 * p[0]).cos());
        let up = resample_real(&f, 128).unwrap();
        for (i, v) in up.data().iter().enumerate() {
            let x = up.grid().coord(i);
            assert!((v - ((2.0 * x).sin() + 0.5 * (5.0 * x).cos())).abs() < 1e-12);
        }
        let down = resample_real(&up, 32).unwrap();
        assert!(max_err(down.to_complex().data(), f.to_complex().data()) < 1e-12);
    }

    #[test]
    fn resample_keeps_nyquist_real() {
        let g = make_grid(2, 16, 1.0).unwrap();
        let f = RealField::from_fn(g, |p| (8.0 * PI * p[0]).cos() + (3.0 * PI * p[1]).sin());
        let up = resample(&f.to_complex(), 64).unwrap();
        assert!(up.data().iter().all(|z| z.im.abs() < 1e-12));
        // on the shared nodes the refined field reproduces the samples
        let back = resample(&up, 16).unwrap();
        assert!(max_err(back.data(), f.to_complex().data()) < 1e-12);
    }

    #[test]
    fn off_grid_evaluation() {
        let g = make_grid(2, 32, 2.0).unwrap();
        let h = |p: &Point| (PI * p[0] / 2.0).sin() * (PI * p[1]).cos() + 0.25;
        let f = RealField::from_fn(g, h).to_complex();
        let pts = vec![[0.123, -0.77, 0.0], [1.9, 1.3, 0.0]];
        let vals = eval_at(&f, &pts);
        for (p, v) in pts.iter().zip(&vals) {
            assert!((v.re - h(p)).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
        let axes = vec![vec![0.1, 0.2, -1.5], vec![0.3, 0.9]];
        let tens = eval_tensor(&f, &axes).unwrap();
        for (i, x) in axes[0].iter().enumerate() {
            for (j, y) in axes[1].iter().enumerate() {
                assert!((tens[i * 2 + j].re - h(&[*x, *y, 0.0])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn filter_leaves_low_modes_alone() {
        let g = make_grid(1, 64, PI).unwrap();
        let sp = Spectral::for_grid(&g);
        let f = RealField::from_fn(g, |p| (3.0 * p[0]).sin());
        let mut hat = sp.forward_real(&f);
        let filt = ExpFilter::default();
        assert!(filt.band_fraction(&g, &hat) < 1e-28);
        filt.apply(&g, &mut hat);
        let back = sp.inverse_to_real(hat);
        assert!(back.sub(&f).unwrap().data().iter().all(|v| v.abs() < 1e-14));

        let noisy = RealField::from_fn(g, |p| (30.0 * p[0]).cos());
        let hat = sp.forward_real(&noisy);
        assert!(filt.band_fraction(&g, &hat) > 0.99);
    }
}
