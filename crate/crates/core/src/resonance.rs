//! Weakly nonlinear geometric optics for linear phases: resonant wavevector
//! quadruples, the closed-form two-mode amplitudes, the resonant transport
//! system and the counterexample to the superposition principle.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::convergence::{ConvergenceReport, SweepEntry};
use crate::error::{Error, Result};
use crate::field::{bump, ComplexField, RealField};
use crate::grid::GridSpec;
use crate::multiphase::{sample_times, ModeSpec, MultiphaseConfig};
use crate::nls::{evolve_visit, NlsParams, PotentialSpec};
use crate::norms::{l2, linf, mass};
use crate::spectral::{resample, translate, translate_real};

const TOL: f64 = 1e-10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn close(a: &[f64], b: &[f64], scale: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= TOL * scale)
}

/// Wavevectors `k_1 .. k_N` of the linear phases `k_j·x`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavevectorSet {
    dim: usize,
    k: Vec<Vec<f64>>,
}

impl WavevectorSet {
    /// Rejects empty sets, mixed dimensions and duplicates.
    pub fn new(k: Vec<Vec<f64>>) -> Result<Self> {
        let dim = k.first().map(Vec::len).ok_or_else(|| Error::InvalidParameter("no wavevectors".into()))?;
        if !(1..=3).contains(&dim) || k.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidParameter("wavevectors must be finite and share a dimension 1..=3".into()));
        }
        let set = Self { dim, k };
        for i in 0..set.len() {
            for j in i + 1..set.len() {
                if close(&set.k[i], &set.k[j], set.scale()) {
                    return Err(Error::InvalidParameter(format!("wavevectors {i} and {j} coincide")));
                }
            }
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.k[i]
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.k
    }

    fn scale(&self) -> f64 {
        1.0 + self.k.iter().map(|v| dot(v, v)).fold(0.0, f64::max)
    }

    fn position(&self, v: &[f64]) -> Option<usize> {
        let s = self.scale().max(1.0 + dot(v, v));
        self.k.iter().position(|w| close(w, v, s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadrupleKind {
    /// `k_j = k_n, k_m = k_l` or `k_j = k_l, k_m = k_n`.
    Degenerate,
    Rectangle,
}

/// `(j, l, m, n)` with `k_j - k_l + k_m = k_n` and `|k_j|^2 - |k_l|^2 + |k_m|^2 = |k_n|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResonanceQuadruple {
    pub j: usize,
    pub l: usize,
    pub m: usize,
    pub n: usize,
    pub kind: QuadrupleKind,
}

/// The algebraic resonance conditions.
pub fn rectangle_check(kj: &[f64], kl: &[f64], km: &[f64], kn: &[f64]) -> bool {
    let scale = 1.0 + [kj, kl, km, kn].iter().map(|v| dot(v, v)).fold(0.0, f64::max);
    let momentum: Vec<f64> = (0..kj.len()).map(|a| kj[a] - kl[a] + km[a]).collect();
    let energy = dot(kj, kj) - dot(kl, kl) + dot(km, km) - dot(kn, kn);
    close(&momentum, kn, scale) && energy.abs() <= TOL * scale
}

/// Geometric form: `k_j, k_l, k_m, k_n` are the consecutive corners of a
/// (possibly degenerate) rectangle, i.e. a parallelogram with equal diagonals.
pub fn rectangle_geometric(kj: &[f64], kl: &[f64], km: &[f64], kn: &[f64]) -> bool {
    let scale = 1.0 + [kj, kl, km, kn].iter().map(|v| dot(v, v)).fold(0.0, f64::max);
    let mid1: Vec<f64> = kj.iter().zip(km).map(|(a, b)| a + b).collect();
    let mid2: Vec<f64> = kl.iter().zip(kn).map(|(a, b)| a + b).collect();
    let d1: f64 = kj.iter().zip(km).map(|(a, b)| (a - b).powi(2)).sum();
    let d2: f64 = kl.iter().zip(kn).map(|(a, b)| (a - b).powi(2)).sum();
    close(&mid1, &mid2, scale) && (d1 - d2).abs() <= TOL * scale
}

fn classify(kj: &[f64], kl: &[f64], km: &[f64], kn: &[f64]) -> QuadrupleKind {
    let s = 1.0 + [kj, kl, km, kn].iter().map(|v| dot(v, v)).fold(0.0, f64::max);
    if (close(kj, kn, s) && close(km, kl, s)) || (close(kj, kl, s) && close(km, kn, s)) {
        QuadrupleKind::Degenerate
    } else {
        QuadrupleKind::Rectangle
    }
}

/// All `(j, l, m)` resonant with `n`, in lexicographic order.
pub fn resonance_set(k: &WavevectorSet, n: usize) -> Vec<ResonanceQuadruple> {
    let kn = k.get(n);
    let mut out = Vec::new();
    for j in 0..k.len() {
        for l in 0..k.len() {
            for m in 0..k.len() {
                let (kj, kl, km) = (k.get(j), k.get(l), k.get(m));
                if rectangle_check(kj, kl, km, kn) {
                    out.push(ResonanceQuadruple { j, l, m, n, kind: classify(kj, kl, km, kn) });
                }
            }
        }
    }
    out
}

/// Exact-arithmetic resonance set for integer wavevectors.
pub fn resonance_set_integer(k: &[Vec<i64>], n: usize) -> Vec<(usize, usize, usize)> {
    let sq = |v: &[i64]| v.iter().map(|x| x * x).sum::<i64>();
    let kn = &k[n];
    let mut out = Vec::new();
    for j in 0..k.len() {
        for l in 0..k.len() {
            for m in 0..k.len() {
                let momentum = (0..kn.len()).all(|a| k[j][a] - k[l][a] + k[m][a] == kn[a]);
                if momentum && sq(&k[j]) - sq(&k[l]) + sq(&k[m]) == sq(kn) {
                    out.push((j, l, m));
                }
            }
        }
    }
    out
}

/// Appends every wavevector `k_j - k_l + k_m` created by a rectangle among
/// the given ones. One pass only: errors if the enlarged set would create
/// further modes.
pub fn complete_resonances(k: &WavevectorSet) -> Result<WavevectorSet> {
    let created = |set: &WavevectorSet| -> Vec<Vec<f64>> {
        let mut new: Vec<Vec<f64>> = Vec::new();
        let len = set.len();
        for j in 0..len {
            for l in 0..len {
                for m in 0..len {
                    let (kj, kl, km) = (set.get(j), set.get(l), set.get(m));
                    let kn: Vec<f64> = (0..set.dim()).map(|a| kj[a] - kl[a] + km[a]).collect();
                    let energy = dot(kj, kj) - dot(kl, kl) + dot(km, km) - dot(&kn, &kn);
                    let seen = set.position(&kn).is_some() || new.iter().any(|w| close(w, &kn, set.scale()));
                    if !seen && energy.abs() <= TOL * set.scale().max(1.0 + dot(&kn, &kn)) {
                        new.push(kn);
                    }
                }
            }
        }
        new
    };
    let first = created(k);
    if first.is_empty() {
        return Ok(k.clone());
    }
    let mut all = k.k.clone();
    all.extend(first);
    let enlarged = WavevectorSet::new(all)?;
    let second = created(&enlarged);
    if let Some(v) = second.first() {
        return Err(Error::ResonanceClosure(format!("{} further wavevectors, e.g. {v:?}", second.len())));
    }
    Ok(enlarged)
}

/// Composite Simpson over `[0, t]` of a field-valued integrand, doubling the
/// panel count until the sup-norm change is at most `tol`.
fn simpson_fields(t: f64, tol: f64, f: impl Fn(f64) -> RealField + Sync) -> RealField {
    let mut panels = 8usize;
    let rule = |p: usize, cache: &mut Vec<(f64, RealField)>| -> RealField {
        let h = t / p as f64;
        let needed: Vec<f64> = (0..=p).map(|i| i as f64 * h).collect();
        let missing: Vec<f64> =
            needed.iter().copied().filter(|x| !cache.iter().any(|(y, _)| (y - x).abs() < 1e-14 * (1.0 + t))).collect();
        let fresh: Vec<(f64, RealField)> = missing.into_par_iter().map(|x| (x, f(x))).collect();
        cache.extend(fresh);
        let get = |x: f64| &cache.iter().find(|(y, _)| (y - x).abs() < 1e-14 * (1.0 + t)).expect("cached").1;
        let mut acc = get(0.0).clone();
        acc = acc.add(get(t)).expect("same grid");
        for (i, &x) in needed.iter().enumerate().skip(1).take(p - 1) {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc = acc.add(&get(x).scale(w)).expect("same grid");
        }
        acc.scale(h / 3.0)
    };
    if t == 0.0 {
        return f(0.0).scale(0.0);
    }
    let mut cache = Vec::new();
    let mut prev = rule(panels, &mut cache);
    loop {
        panels *= 2;
        let next = rule(panels, &mut cache);
        let change = next.sub(&prev).expect("same grid").data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if change <= tol || panels >= 1 << 14 {
            return next;
        }
        prev = next;
    }
}

/// Line integral `∫_0^t |alpha(x + tau s - shift)|^2 dtau` for every `x`,
/// i.e. `∫_0^t |alpha|^2 translated by `shift - tau s`.
fn swept_density(alpha_sq: &RealField, s: &[f64], shift: &[f64], t: f64) -> RealField {
    simpson_fields(t, 1e-10, |tau| {
        let by: Vec<f64> = shift.iter().zip(s).map(|(c, v)| c - tau * v).collect();
        translate_real(alpha_sq, &by)
    })
}

/// Closed-form amplitudes of two interacting linear-phase modes:
/// `a_1(t, x) = alpha_1(x - t k_1) exp(-i (2 ∫_0^t |alpha_2(x + (tau - t) k_1 - tau k_2)|^2 dtau + t |alpha_1(x - t k_1)|^2))`
/// and symmetrically for `a_2`. Translations are periodic Fourier shifts.
pub fn two_mode_amplitudes(
    alpha1: &ComplexField,
    alpha2: &ComplexField,
    k1: &[f64],
    k2: &[f64],
    t: f64,
) -> Result<(ComplexField, ComplexField)> {
    if alpha1.grid() != alpha2.grid() {
        return Err(Error::GridMismatch);
    }
    let d = alpha1.grid().dim();
    if k1.len() != d || k2.len() != d || !(t >= 0.0) {
        return Err(Error::InvalidParameter("wavevector dimension or time invalid".into()));
    }
    let one = |own: &ComplexField, other: &ComplexField, ka: &[f64], kb: &[f64]| -> Result<ComplexField> {
        let moved: Vec<f64> = ka.iter().map(|k| t * k).collect();
        let transported = translate(own, &moved);
        // the argument x + (tau - t) ka - tau kb is x - (t ka + tau (kb - ka))
        let rel: Vec<f64> = ka.iter().zip(kb).map(|(a, b)| -(b - a)).collect();
        let swept = swept_density(&other.modulus_sq(), &rel, &moved, t);
        let data = transported
            .data()
            .iter()
            .zip(swept.data())
            .map(|(a, s)| a * Complex64::from_polar(1.0, -(2.0 * s + t * a.norm_sqr())))
            .collect();
        ComplexField::from_vec(*own.grid(), data)
    };
    Ok((one(alpha1, alpha2, k1, k2)?, one(alpha2, alpha1, k2, k1)?))
}

/// Per-mode amplitudes of the resonant system in the lab frame.
#[derive(Debug, Clone)]
pub struct ResonantAmplitudes {
    pub k: WavevectorSet,
    pub times: Vec<f64>,
    /// `amps[i][n]` is mode `n` at `times[i]`.
    pub amps: Vec<Vec<ComplexField>>,
}

impl ResonantAmplitudes {
    pub fn l2_history(&self, n: usize) -> Vec<f64> {
        self.amps.iter().map(|a| l2(&a[n])).collect()
    }

    pub fn total_mass(&self, i: usize) -> f64 {
        self.amps[i].iter().map(mass).sum()
    }

    /// `Σ a_n(t) exp(i (k_n·x - |k_n|^2 t / 2) / eps)` at sample `i`.
    pub fn approximant(&self, i: usize, eps: f64) -> Result<ComplexField> {
        self.approximant_on(i, eps, self.amps[i][0].grid().n())
    }

    /// [`Self::approximant`] with the amplitudes spectrally resampled to `n` points per axis.
    pub fn approximant_on(&self, i: usize, eps: f64, n_points: usize) -> Result<ComplexField> {
        let grid = self.amps[i][0].grid().with_n(n_points)?;
        let t = self.times[i];
        let d = grid.dim();
        let mut out = ComplexField::zeros(grid);
        for (n, a) in self.amps[i].iter().enumerate() {
            let a = resample(a, n_points)?;
            let k = self.k.get(n);
            let k2 = dot(k, k);
            let wave = ComplexField::from_fn(grid, |x| Complex64::from_polar(1.0, (dot(k, &x[..d]) - 0.5 * k2 * t) / eps));
            out = out.add(&a.zip_with(&wave, |x, y| x * y)?)?;
        }
        Ok(out)
    }

    /// Columns `t` and `a<n>_l2` per mode.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.k.len()).map(|n| format!("a{n}_l2")).collect();
        writeln!(w, "t,{}", header.join(","))?;
        for (i, t) in self.times.iter().enumerate() {
            let row: Vec<String> = self.amps[i].iter().map(|a| format!("{:e}", l2(a))).collect();
            writeln!(w, "{t},{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Text table of a resonance set.
pub fn format_resonance_table(k: &WavevectorSet, n: usize) -> String {
    let mut s = format!("# Res({n}) for k_{n} = {:?}\nj l m kind\n", k.get(n));
    for q in resonance_set(k, n) {
        s.push_str(&format!("{} {} {} {:?}\n", q.j, q.l, q.m, q.kind));
    }
    s
}

/// Integrates `∂_t a_n + k_n·∇a_n = -i Σ_{Res(n)} a_j conj(a_l) a_m` for the
/// resonance completion of `k`; created modes start from zero.
///
/// Works in the moving frames `b_n(t, y) = a_n(t, y + t k_n)` with exact
/// Fourier shifts and RK4 steps of at most `dt` landing on `times`.
pub fn evolve_resonant_system(
    alphas: &[ComplexField],
    k: &WavevectorSet,
    times: &[f64],
    dt: f64,
) -> Result<ResonantAmplitudes> {
    if alphas.len() != k.len() {
        return Err(Error::InvalidParameter(format!("{} amplitudes for {} wavevectors", alphas.len(), k.len())));
    }
    let grid = *alphas[0].grid();
    if alphas.iter().any(|a| *a.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    if k.dim() != grid.dim() {
        return Err(Error::InvalidParameter("wavevector dimension differs from grid".into()));
    }
    if !(dt > 0.0) || times.iter().any(|t| *t < 0.0) || times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("need dt > 0 and sorted nonnegative times".into()));
    }
    let full = complete_resonances(k)?;
    let nmodes = full.len();
    let sets: Vec<Vec<ResonanceQuadruple>> = (0..nmodes).map(|n| resonance_set(&full, n)).collect();
    let mut b: Vec<ComplexField> = alphas.to_vec();
    b.resize(nmodes, ComplexField::zeros(grid));

    // a_j(t, y + t k_n) = b_j(t, y + t (k_n - k_j))
    let shifted = |b: &[ComplexField], t: f64, n: usize, j: usize| -> ComplexField {
        let s: Vec<f64> = (0..grid.dim()).map(|a| -t * (full.get(n)[a] - full.get(j)[a])).collect();
        if s.iter().all(|v| *v == 0.0) {
            b[j].clone()
        } else {
            translate(&b[j], &s)
        }
    };
    let rhs = |b: &[ComplexField], t: f64| -> Vec<ComplexField> {
        (0..nmodes)
            .into_par_iter()
            .map(|n| {
                let mut acc = vec![Complex64::new(0.0, 0.0); grid.len()];
                if sets[n].is_empty() {
                    return ComplexField::from_vec(grid, acc).expect("grid");
                }
                let views: Vec<Option<ComplexField>> = (0..nmodes)
                    .map(|j| sets[n].iter().any(|q| q.j == j || q.l == j || q.m == j).then(|| shifted(b, t, n, j)))
                    .collect();
                for q in &sets[n] {
                    let (aj, al, am) = (
                        views[q.j].as_ref().expect("view"),
                        views[q.l].as_ref().expect("view"),
                        views[q.m].as_ref().expect("view"),
                    );
                    for (i, z) in acc.iter_mut().enumerate() {
                        *z += aj.data()[i] * al.data()[i].conj() * am.data()[i];
                    }
                }
                let minus_i = Complex64::new(0.0, -1.0);
                ComplexField::from_vec(grid, acc.into_iter().map(|z| minus_i * z).collect()).expect("grid")
            })
            .collect()
    };
    let axpy = |x: &[ComplexField], h: f64, k: &[ComplexField]| -> Vec<ComplexField> {
        x.iter().zip(k).map(|(a, b)| a.add(&b.scale(h)).expect("grid")).collect()
    };
    let lab = |b: &[ComplexField], t: f64| -> Vec<ComplexField> {
        (0..nmodes)
            .map(|n| {
                let s: Vec<f64> = full.get(n).iter().map(|k| t * k).collect();
                translate(&b[n], &s)
            })
            .collect()
    };
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    for &ts in times {
        let (steps, h) = crate::nls::steps_between(t, ts, dt);
        for s in 0..steps {
            let t0 = t + s as f64 * h;
            let k1 = rhs(&b, t0);
            let k2 = rhs(&axpy(&b, 0.5 * h, &k1), t0 + 0.5 * h);
            let k3 = rhs(&axpy(&b, 0.5 * h, &k2), t0 + 0.5 * h);
            let k4 = rhs(&axpy(&b, h, &k3), t0 + h);
            for n in 0..nmodes {
                let inc = k1[n].add(&k2[n].scale(2.0))?.add(&k3[n].scale(2.0))?.add(&k4[n])?;
                b[n] = b[n].add(&inc.scale(h / 6.0))?;
                if !b[n].is_finite() {
                    return Err(Error::NonFinite { time: t0 + h });
                }
            }
        }
        t = ts;
        out.push(lab(&b, t));
    }
    Ok(ResonantAmplitudes { k: full, times: times.to_vec(), amps: out })
}

/// The counterexample configuration and the predicted size of the
/// interaction.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub config: MultiphaseConfig,
    pub lambda: f64,
    /// `sup_{t <= T} || alpha_1 sin(∫_0^t |alpha_2(. + tau (k_1 - k_2))|^2 dtau) ||_L2`.
    pub predicted: f64,
    pub threshold: f64,
}

/// Ladder of relative speeds tried by [`wnl_counterexample`].
pub const LAMBDA_LADDER: [f64; 10] = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0];

/// The sine functional for `alpha_1` at rest and `alpha_2` moving with
/// relative velocity `lambda e_1`, maximised over `samples` times in `[0, T]`.
pub fn predicted_interaction(alpha1: &RealField, alpha2: &RealField, lambda: f64, t: f64, samples: usize) -> f64 {
    let d = alpha1.grid().dim();
    let mut s = vec![0.0; d];
    s[0] = -lambda;
    let sq = alpha2.map(|v| v * v);
    sample_times(t, samples)
        .into_iter()
        .map(|ti| {
            // ∫_0^ti |alpha_2(x - tau lambda e_1)|^2 dtau: shift by +tau lambda e_1
            let swept = simpson_fields(ti, 1e-10, |tau| {
                let by: Vec<f64> = s.iter().map(|v| -tau * v).collect();
                translate_real(&sq, &by)
            });
            let f = alpha1.zip_with(&swept, |a, w| a * w.sin()).expect("grid");
            mass(&f.to_complex()).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Two bumps of radius 1 at `0` and `-3 e_1` with `k_1 = 0`, `k_2 = lambda e_1`,
/// `lambda` the first ladder value whose predicted interaction reaches
/// `0.1 ||alpha_1||`.
pub fn wnl_counterexample(grid: GridSpec, height: f64, t: f64, eps_list: Vec<f64>) -> Result<Counterexample> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    let d = grid.dim();
    let mut c2 = vec![0.0; d];
    c2[0] = -3.0;
    let alpha1 = bump(&grid, &vec![0.0; d], 1.0, height)?;
    let alpha2 = bump(&grid, &c2, 1.0, height)?;
    let threshold = 0.1 * mass(&alpha1.to_complex()).sqrt();
    let mut best = 0.0f64;
    for &lambda in &LAMBDA_LADDER {
        // the moving bump must not wrap around the periodic box
        if 1.0 - 3.0 + lambda * t > grid.half_len() - 4.0 * grid.dx() {
            break;
        }
        let predicted = predicted_interaction(&alpha1, &alpha2, lambda, t, 40);
        best = best.max(predicted);
        if predicted >= threshold {
            let mut k2 = vec![0.0; d];
            k2[0] = lambda;
            let mut config = MultiphaseConfig::new(
                grid,
                vec![
                    ModeSpec::linear(&vec![0.0; d], 1.0, height, &vec![0.0; d], 0.5),
                    ModeSpec::linear(&c2, 1.0, height, &k2, 0.5),
                ],
                eps_list,
                1,
                t,
            );
            config.fixed_horizon = Some(t);
            return Ok(Counterexample { config, lambda, predicted, threshold });
        }
    }
    Err(Error::CounterexampleSearch { cap: LAMBDA_LADDER[LAMBDA_LADDER.len() - 1], threshold, best })
}

/// Errors of the geometric-optics approximant built from
/// [`evolve_resonant_system`] against the weakly nonlinear NLS, over the eps sweep.
///
/// The resonant system is solved once on the base grid and resampled to each
/// eps grid.
pub fn wnl_residual_sweep(config: &MultiphaseConfig, rk_dt: f64) -> Result<ConvergenceReport> {
    config.validate()?;
    if config.kappa != 1 || !config.potential.is_zero() {
        return Err(Error::InvalidParameter("the residual sweep needs kappa = 1 and no potential".into()));
    }
    let mut ks = Vec::new();
    for m in &config.modes {
        match &m.phase {
            crate::multiphase::ModePhase::Linear(k) => ks.push(k.clone()),
            _ => return Err(Error::InvalidParameter("the residual sweep needs linear phases".into())),
        }
    }
    let k = WavevectorSet::new(ks)?;
    let t_end = config.fixed_horizon.unwrap_or(config.t_request);
    let times = sample_times(t_end, config.samples);
    let base = config.grid;
    let alphas: Vec<ComplexField> =
        config.modes.iter().map(|m| m.amplitude(&base).map(|a| a.to_complex())).collect::<Result<_>>()?;
    let amps = evolve_resonant_system(&alphas, &k, &times, rk_dt)?;
    let entries = config
        .eps_list
        .par_iter()
        .map(|&eps| {
            let grid = config.grid_for(eps)?;
            let dt = config.dt_for(eps).min(t_end);
            let u0 = amps.approximant_on(0, eps, grid.n())?;
            let m0 = mass(&u0);
            let params = NlsParams { eps, kappa: 1, potential: PotentialSpec::Zero, dt, t_final: t_end, instability_factor: 10.0 };
            let mut entry = SweepEntry {
                eps,
                e_l2: 0.0,
                e_linf: 0.0,
                t_star: t_end,
                n_grid: grid.n(),
                dt,
                mass_drift: 0.0,
                failure: None,
            };
            let mut i = 0;
            evolve_visit(&u0, &params, &times, |_, u| {
                let diff = u.sub(&amps.approximant_on(i, eps, grid.n())?)?;
                entry.e_l2 = entry.e_l2.max(mass(&diff).sqrt());
                entry.e_linf = entry.e_linf.max(linf(&diff));
                entry.mass_drift = entry.mass_drift.max((mass(u) / m0 - 1.0).abs());
                i += 1;
                Ok(())
            })?;
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport::from_entries(entries))
}
