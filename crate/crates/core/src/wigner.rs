//! Wigner transforms, their moments and Husimi functions on a coarse
//! phase-space grid.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField, SupportBox};
use crate::grid::GridSpec;
use crate::norms::mass;
use crate::spectral::{spectral_gradient, translate};

pub const SLICE_MAGIC: &[u8; 5] = b"WKBW1";

/// Fraction of the correlation energy near the eta-window edge above which
/// the transform warns.
pub const TRUNCATION_WARN: f64 = 1e-3;

/// Coarse `x` samples of a spatial grid times a uniform `xi` window
/// `[-xi_max, xi_max)^d` with `m` points per axis.
///
/// The dual `eta` grid has spacing `stride·dx/eps`, so the shifts
/// `eps·eta/2` are multiples of half a grid cell and `xi_max = pi/deta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSpaceGrid {
    grid: GridSpec,
    eps: f64,
    coarse: usize,
    stride: usize,
    m: usize,
}

impl PhaseSpaceGrid {
    pub fn new(grid: GridSpec, eps: f64, coarse: usize, stride: usize, m: usize) -> Result<Self> {
        let bad = |s: String| Err(Error::InvalidParameter(s));
        if !(eps > 0.0) {
            return bad(format!("eps must be positive, got {eps}"));
        }
        if !coarse.is_power_of_two() || coarse > grid.n() / 16 {
            return bad(format!("coarse factor {coarse} must be a power of two at most n/16"));
        }
        if stride == 0 || !m.is_power_of_two() || m < 4 {
            return bad(format!("need stride >= 1 and m a power of two >= 4, got {stride}, {m}"));
        }
        if m * stride > 2 * grid.n() {
            return bad(format!("eta window of {m} x {stride} half-cells exceeds one period"));
        }
        Ok(Self { grid, eps, coarse, stride, m })
    }

    /// Largest power-of-two stride keeping `xi_max >= 1.5 max|k|`, and
    /// `m` covering a full eta period unless that exceeds `max_m`.
    pub fn for_wavevectors(grid: GridSpec, eps: f64, coarse: usize, ks: &[Vec<f64>], max_m: usize) -> Result<Self> {
        let kmax = ks.iter().map(|k| k.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
        let need = (1.5 * kmax).max(f64::MIN_POSITIVE);
        let mut stride = 1;
        while stride * 2 <= grid.n() && std::f64::consts::PI * eps / (2 * stride) as f64 / grid.dx() >= need {
            stride *= 2;
        }
        let psg = Self::new(grid, eps, coarse, stride, (2 * grid.n() / stride).min(max_m).max(4))?;
        if psg.xi_max() < need {
            return Err(Error::InvalidParameter(format!(
                "xi window {} cannot hold 1.5 max|k| = {need} at this resolution",
                psg.xi_max()
            )));
        }
        Ok(psg)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn coarse(&self) -> usize {
        self.coarse
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Grid of the coarse `x` samples.
    pub fn x_grid(&self) -> GridSpec {
        self.grid.with_n(self.grid.n() / self.coarse).expect("coarse grid has at least 16 points per axis")
    }

    pub fn nx(&self) -> usize {
        self.grid.n() / self.coarse
    }

    pub fn x_len(&self) -> usize {
        self.nx().pow(self.dim() as u32)
    }

    pub fn xi_len(&self) -> usize {
        self.m.pow(self.dim() as u32)
    }

    pub fn deta(&self) -> f64 {
        self.stride as f64 * self.grid.dx() / self.eps
    }

    pub fn xi_max(&self) -> f64 {
        std::f64::consts::PI / self.deta()
    }

    pub fn dxi(&self) -> f64 {
        2.0 * self.xi_max() / self.m as f64
    }

    pub fn dx_coarse(&self) -> f64 {
        self.grid.dx() * self.coarse as f64
    }

    /// `xi` value of index `j` along any axis.
    pub fn xi(&self, j: usize) -> f64 {
        -self.xi_max() + j as f64 * self.dxi()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.grid.coord(i * self.coarse)
    }

    fn split(&self, flat: usize, n: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut f = flat;
        for a in (0..self.dim()).rev() {
            idx[a] = f % n;
            f /= n;
        }
        idx
    }

    pub fn x_index(&self, flat: usize) -> [usize; 3] {
        self.split(flat, self.nx())
    }

    pub fn xi_index(&self, flat: usize) -> [usize; 3] {
        self.split(flat, self.m)
    }

    /// Phase-space cell volume `(dx_coarse dxi)^d`.
    pub fn cell(&self) -> f64 {
        (self.dx_coarse() * self.dxi()).powi(self.dim() as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceKind {
    Wigner,
    Husimi,
}

/// Phase-space values, row-major with the `x` index outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerSlice {
    pub psg: PhaseSpaceGrid,
    pub kind: SliceKind,
    pub t: f64,
    pub values: Vec<f64>,
    /// Share of the correlation energy in the outer quarter of the eta window;
    /// zero for Husimi slices and for windows spanning a full period.
    pub truncation: f64,
}

impl WignerSlice {
    pub fn value(&self, x_flat: usize, xi_flat: usize) -> f64 {
        self.values[x_flat * self.psg.xi_len() + xi_flat]
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.psg.cell()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Mass of the cells with `x` in `x_box` and `xi` in the cube
    /// `xi_center ± xi_radius`.
    pub fn mass_in(&self, x_box: Option<&SupportBox>, xi_center: &[f64], xi_radius: f64) -> f64 {
        let p = &self.psg;
        let d = p.dim();
        let xi_ok: Vec<bool> = (0..p.xi_len())
            .map(|j| {
                let idx = p.xi_index(j);
                (0..d).all(|a| (p.xi(idx[a]) - xi_center[a]).abs() <= xi_radius)
            })
            .collect();
        let mut total = 0.0;
        for i in 0..p.x_len() {
            let idx = p.x_index(i);
            let mut pt = [0.0; 3];
            for a in 0..d {
                pt[a] = p.x(idx[a]);
            }
            if x_box.is_some_and(|b| !b.contains(&pt)) {
                continue;
            }
            let row = &self.values[i * p.xi_len()..(i + 1) * p.xi_len()];
            total += row.iter().zip(&xi_ok).filter(|(_, ok)| **ok).map(|(v, _)| v).sum::<f64>();
        }
        total * p.cell()
    }

    /// Mass within `radius` (cube) of each wavevector.
    pub fn ridge_masses(&self, ks: &[Vec<f64>], radius: f64) -> Vec<f64> {
        ks.iter().map(|k| self.mass_in(None, k, radius)).collect()
    }

    /// Dump: magic `WKBW1`, `u8` kind (0 Wigner, 1 Husimi), `u8` dimension,
    /// `u32` n, `f64` half length, `f64` eps, `u32` coarse, `u32` stride,
    /// `u32` m, `f64` t, then the values as `f64`; little-endian.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let p = &self.psg;
        w.write_all(SLICE_MAGIC)?;
        w.write_all(&[matches!(self.kind, SliceKind::Husimi) as u8, p.dim() as u8])?;
        w.write_all(&(p.grid.n() as u32).to_le_bytes())?;
        w.write_all(&p.grid.half_len().to_le_bytes())?;
        w.write_all(&p.eps.to_le_bytes())?;
        for v in [p.coarse, p.stride, p.m] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&self.t.to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * self.values.len());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let fmt = |e: Error| Error::Format(e.to_string());
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != SLICE_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let mut head = [0u8; 2];
        r.read_exact(&mut head)?;
        let kind = match head[0] {
            0 => SliceKind::Wigner,
            1 => SliceKind::Husimi,
            k => return Err(Error::Format(format!("unknown slice kind {k}"))),
        };
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        let mut u32_ = |r: &mut R| -> Result<usize> {
            r.read_exact(&mut b4)?;
            Ok(u32::from_le_bytes(b4) as usize)
        };
        let n = u32_(&mut r)?;
        let mut f64_ = |r: &mut R| -> Result<f64> {
            r.read_exact(&mut b8)?;
            Ok(f64::from_le_bytes(b8))
        };
        let half_len = f64_(&mut r)?;
        let eps = f64_(&mut r)?;
        let mut b4 = [0u8; 4];
        let mut dims = [0usize; 3];
        for v in dims.iter_mut() {
            r.read_exact(&mut b4)?;
            *v = u32::from_le_bytes(b4) as usize;
        }
        r.read_exact(&mut b8)?;
        let t = f64::from_le_bytes(b8);
        let grid = GridSpec::new(head[1] as usize, n, half_len).map_err(fmt)?;
        let psg = PhaseSpaceGrid::new(grid, eps, dims[0], dims[1], dims[2]).map_err(fmt)?;
        let mut payload = vec![0u8; 8 * psg.x_len() * psg.xi_len()];
        r.read_exact(&mut payload)?;
        let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after payload".into()));
        }
        Ok(Self { psg, kind, t, values, truncation: 0.0 })
    }
}

/// In-place unnormalised transform of an `m^d` row-major block.
fn fft_block(data: &mut [Complex64], m: usize, d: usize, fft: &Arc<dyn Fft<f64>>, line: &mut Vec<Complex64>) {
    line.resize(m, Complex64::new(0.0, 0.0));
    for axis in 0..d {
        let stride = m.pow((d - 1 - axis) as u32);
        let outer = data.len() / (m * stride);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * m * stride + s;
                for (k, z) in line.iter_mut().enumerate() {
                    *z = data[base + k * stride];
                }
                fft.process(line);
                for (k, z) in line.iter().enumerate() {
                    data[base + k * stride] = *z;
                }
            }
        }
    }
}

/// Signed index of position `j` in a length-`m` window, `-m/2 .. m/2`.
fn signed(j: usize, m: usize) -> i64 {
    j as i64 - (m / 2) as i64
}

fn check_field(u: &ComplexField, psg: &PhaseSpaceGrid, eps: f64) -> Result<()> {
    if *u.grid() != psg.grid {
        return Err(Error::GridMismatch);
    }
    if (eps - psg.eps).abs() > 1e-14 * eps {
        return Err(Error::InvalidParameter(format!("slice grid built for eps = {}, got {eps}", psg.eps)));
    }
    Ok(())
}

/// `w(x, xi) = (2 pi)^-d ∫ u(x - eps eta/2) conj(u(x + eps eta/2)) e^{i eta·xi} d eta`
/// as a discrete Fourier transform over the eta window.
///
/// Shifts are half-cell multiples; the odd ones use a Fourier half-cell
/// translate of `u`.
pub fn wigner_transform(u: &ComplexField, eps: f64, psg: &PhaseSpaceGrid, t: f64) -> Result<WignerSlice> {
    check_field(u, psg, eps)?;
    let d = psg.dim();
    let n = psg.grid.n();
    let (m, s) = (psg.m, psg.stride);
    // halves[mask] = u translated by +dx/2 along the axes in `mask`
    let dx = psg.grid.dx();
    let halves: Vec<ComplexField> = (0..1usize << d)
        .map(|mask| {
            if mask == 0 {
                u.clone()
            } else {
                let shift: Vec<f64> = (0..d).map(|a| if mask >> a & 1 == 1 { 0.5 * dx } else { 0.0 }).collect();
                translate(u, &shift)
            }
        })
        .collect();
    // u(x + h dx/2) for integer half-steps h per axis, x a fine index
    let sample = |x: &[usize; 3], h: &[i64; 3]| -> Complex64 {
        let mut mask = 0;
        let mut idx = [0usize; 3];
        for a in 0..d {
            // x + h dx/2 = (x + ceil(h/2)) dx - (h odd) dx/2
            let whole = h[a].div_euclid(2) + h[a].rem_euclid(2);
            if h[a].rem_euclid(2) == 1 {
                mask |= 1 << a;
            }
            idx[a] = (x[a] as i64 + whole).rem_euclid(n as i64) as usize;
        }
        halves[mask].data()[psg.grid.flatten(&idx)]
    };
    let fft = FftPlanner::new().plan_fft_inverse(m);
    let norm = (psg.deta() / (2.0 * std::f64::consts::PI)).powi(d as i32);
    let xi_len = psg.xi_len();
    let rows: Vec<(Vec<f64>, f64, f64)> = (0..psg.x_len())
        .into_par_iter()
        .map_init(Vec::new, |line, i| {
            let xc = psg.x_index(i);
            let mut x = [0usize; 3];
            for a in 0..d {
                x[a] = xc[a] * psg.coarse;
            }
            let mut buf = vec![Complex64::new(0.0, 0.0); xi_len];
            let (mut edge, mut all) = (0.0, 0.0);
            for j in 0..xi_len {
                let jj = psg.xi_index(j);
                let mut h_minus = [0i64; 3];
                let mut h_plus = [0i64; 3];
                let mut sign = 1.0;
                let mut dest = [0usize; 3];
                let mut outer = false;
                for a in 0..d {
                    let e = signed(jj[a], m);
                    h_minus[a] = -e * s as i64;
                    h_plus[a] = e * s as i64;
                    if e.rem_euclid(2) == 1 {
                        sign = -sign;
                    }
                    dest[a] = e.rem_euclid(m as i64) as usize;
                    outer |= e.unsigned_abs() as usize >= 3 * m / 8;
                }
                let r = sample(&x, &h_minus) * sample(&x, &h_plus).conj();
                all += r.norm_sqr();
                if outer {
                    edge += r.norm_sqr();
                }
                let flat = dest[..d].iter().fold(0, |acc, &v| acc * m + v);
                buf[flat] = r * sign;
            }
            fft_block(&mut buf, m, d, &fft, line);
            (buf.iter().map(|z| z.re * norm).collect(), edge, all)
        })
        .collect();
    let (edge, all) = rows.iter().fold((0.0, 0.0), |acc, r| (acc.0 + r.1, acc.1 + r.2));
    // a full eta period is exact on the torus
    let full = m * s == 2 * n;
    let truncation = if all > 0.0 && !full { edge / all } else { 0.0 };
    if truncation > TRUNCATION_WARN {
        log::warn!("eta window truncation energy {truncation:.2e} exceeds {TRUNCATION_WARN:e}");
    }
    let values = rows.into_iter().flat_map(|r| r.0).collect();
    Ok(WignerSlice { psg: *psg, kind: SliceKind::Wigner, t, values, truncation })
}

/// Zeroth and first `xi` moments on the coarse grid.
pub fn moments(slice: &WignerSlice) -> (RealField, Vec<RealField>) {
    let p = &slice.psg;
    let d = p.dim();
    let vol = p.dxi().powi(d as i32);
    let xg = p.x_grid();
    let xi_len = p.xi_len();
    let mut density = vec![0.0; p.x_len()];
    let mut current = vec![vec![0.0; p.x_len()]; d];
    for i in 0..p.x_len() {
        let row = &slice.values[i * xi_len..(i + 1) * xi_len];
        for (j, v) in row.iter().enumerate() {
            density[i] += v * vol;
            let idx = p.xi_index(j);
            for a in 0..d {
                current[a][i] += p.xi(idx[a]) * v * vol;
            }
        }
    }
    (
        RealField::from_vec(xg, density).expect("coarse grid"),
        current.into_iter().map(|c| RealField::from_vec(xg, c).expect("coarse grid")).collect(),
    )
}

/// Samples a fine-grid field at the coarse points.
pub fn coarsen(f: &RealField, psg: &PhaseSpaceGrid) -> RealField {
    let d = psg.dim();
    let data = (0..psg.x_len())
        .map(|i| {
            let xc = psg.x_index(i);
            let mut x = [0usize; 3];
            for a in 0..d {
                x[a] = xc[a] * psg.coarse;
            }
            f.data()[psg.grid.flatten(&x)]
        })
        .collect();
    RealField::from_vec(psg.x_grid(), data).expect("coarse grid")
}

/// `Im(eps conj(u) ∇u)`, spectrally, on the fine grid.
pub fn current_density(u: &ComplexField, eps: f64) -> Vec<RealField> {
    spectral_gradient(u)
        .iter()
        .map(|g| {
            let data = u.data().iter().zip(g.data()).map(|(a, b)| eps * (a.conj() * b).im).collect();
            RealField::from_vec(*u.grid(), data).expect("same grid")
        })
        .collect()
}

/// Husimi function `(2 pi eps)^-d |<u, phi_{x,xi}>|^2` with the coherent
/// states `phi_{x,xi}(y) = (pi sigma^2)^{-d/4} exp(-|y-x|^2/(2 sigma^2) + i xi·(y-x)/eps)`,
/// i.e. the Wigner function smoothed by a Gaussian of variances
/// `sigma^2/2` in `x` and `eps^2/(2 sigma^2)` in `xi`. `sigma` defaults to `sqrt(eps)`.
pub fn husimi(u: &ComplexField, eps: f64, psg: &PhaseSpaceGrid, sigma: Option<f64>, t: f64) -> Result<WignerSlice> {
    check_field(u, psg, eps)?;
    let sigma = sigma.unwrap_or(eps.sqrt());
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let d = psg.dim();
    let n = psg.grid.n() as i64;
    let m = psg.m;
    // a window of P fine cells gives frequency spacing dxi; longer windows
    // (P times a power of two) hold the Gaussian out to 7 sigma
    let dx = psg.grid.dx();
    let reach = ((7.0 * sigma / dx).ceil() as usize).min(psg.grid.n() / 2);
    let mut p_len = m * psg.stride;
    while p_len < 2 * reach + 1 {
        p_len *= 2;
    }
    let step = p_len / (m * psg.stride);
    let fft = FftPlanner::new().plan_fft_forward(p_len);
    let weights: Vec<f64> =
        (0..p_len).map(|q| (-((q as f64 - (p_len / 2) as f64) * dx).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let pref = (2.0 * std::f64::consts::PI * eps).powi(-(d as i32))
        * (std::f64::consts::PI * sigma * sigma).powf(-(d as f64) / 2.0)
        * dx.powi(2 * d as i32);
    let xi_len = psg.xi_len();
    let block = p_len.pow(d as u32);
    let values: Vec<f64> = (0..psg.x_len())
        .into_par_iter()
        .map_init(Vec::new, |line, i| {
            let xc = psg.x_index(i);
            let mut g = vec![Complex64::new(0.0, 0.0); block];
            let lo = p_len / 2 - reach;
            let hi = (p_len / 2 + reach).min(p_len - 1);
            let span = hi - lo + 1;
            for q in 0..span.pow(d as u32) {
                let mut local = [0usize; 3];
                let mut rem = q;
                for a in (0..d).rev() {
                    local[a] = lo + rem % span;
                    rem /= span;
                }
                let mut w = 1.0;
                let mut idx = [0usize; 3];
                for a in 0..d {
                    w *= weights[local[a]];
                    let off = local[a] as i64 - (p_len / 2) as i64;
                    idx[a] = ((xc[a] * psg.coarse) as i64 + off).rem_euclid(n) as usize;
                }
                let flat = local[..d].iter().fold(0, |acc, &v| acc * p_len + v);
                g[flat] = u.data()[psg.grid.flatten(&idx)] * w;
            }
            fft_block(&mut g, p_len, d, &fft, line);
            (0..xi_len)
                .map(|j| {
                    let jj = psg.xi_index(j);
                    let mut src = [0usize; 3];
                    for a in 0..d {
                        src[a] = (signed(jj[a], m) * step as i64).rem_euclid(p_len as i64) as usize;
                    }
                    let flat = src[..d].iter().fold(0, |acc, &v| acc * p_len + v);
                    // the window offset of -P/2 cells only contributes a phase
                    pref * g[flat].norm_sqr()
                })
                .collect::<Vec<f64>>()
        })
        .flatten()
        .collect();
    Ok(WignerSlice { psg: *psg, kind: SliceKind::Husimi, t, values, truncation: 0.0 })
}

/// Columns `t` and `ridge<j>` holding the slice mass near each wavevector.
pub fn write_ridge_csv<W: Write>(mut w: W, slices: &[WignerSlice], ks: &[Vec<f64>], radius: f64) -> Result<()> {
    let header: Vec<String> = (0..ks.len()).map(|j| format!("ridge{j}")).collect();
    writeln!(w, "t,total,{}", header.join(","))?;
    for s in slices {
        let row: Vec<String> = s.ridge_masses(ks, radius).iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{},{:e},{}", s.t, s.total_mass(), row.join(","))?;
    }
    Ok(())
}

/// `||u||^2` for comparison with [`WignerSlice::total_mass`].
pub fn field_mass(u: &ComplexField) -> f64 {
    mass(u)
}
