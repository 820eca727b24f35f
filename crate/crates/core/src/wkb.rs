//! Grenier's system, its `eps -> 0` limit and the first corrector, integrated
//! by the method of lines (spectral derivatives, RK4, exponential filter).
//!
//! With an external potential the wave is written `a exp(i (phi_eik + phi) / eps)`
//! where `phi_eik` is the (quadratic) eikonal phase of [`AffineFlow`]; the
//! unknowns `(phi, a)` are then transported by `∇phi_eik` as well.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{mass_outside, ComplexField, RealField, SupportBox};
use crate::flow::{AffineFlow, AffineSnapshot, TrajectoryBundle, DEFAULT_J_MIN};
use crate::grid::{GridSpec, Point};
use crate::convergence::{ConvergenceReport, SweepEntry};
use crate::nls::{evolve, steps_between, NlsParams, PotentialSpec};
use crate::norms::{l2, linf, mass};
use crate::spectral::{eval_at, ExpFilter, Spectral};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Phase, amplitude and (optionally) first corrector at one time.
#[derive(Debug, Clone)]
pub struct WkbState {
    pub t: f64,
    pub phi: RealField,
    pub amp: ComplexField,
    pub phi1: Option<RealField>,
    pub amp1: Option<ComplexField>,
    /// `Some(eps)` for solutions of the eps-system, `None` for the limit.
    pub eps: Option<f64>,
}

/// The unknown `(Re a, Im a, v = ∇phi)` of the symmetric hyperbolic form.
#[derive(Debug, Clone)]
pub struct SymmetrizedState {
    pub re_a: RealField,
    pub im_a: RealField,
    pub v: Vec<RealField>,
}

impl SymmetrizedState {
    pub fn from_state(state: &WkbState) -> Self {
        let v = crate::spectral::spectral_gradient_real(&state.phi);
        Self { re_a: state.amp.real(), im_a: state.amp.imag(), v }
    }

    /// Largest `|kappa_i v_j - kappa_j v_i|` over Fourier modes, relative to
    /// the largest `|kappa| |v|`; zero for gradients.
    pub fn curl_residual(&self) -> f64 {
        let grid = *self.re_a.grid();
        let d = grid.dim();
        if d == 1 {
            return 0.0;
        }
        let sp = Spectral::for_grid(&grid);
        let hats: Vec<Vec<Complex64>> = self.v.iter().map(|f| sp.forward_real(f)).collect();
        let (mut curl, mut scale) = (0.0f64, 0.0f64);
        for flat in 0..grid.len() {
            let idx = grid.unflatten(flat);
            let k: Vec<f64> = (0..d).map(|a| if sp.is_nyquist(idx[a]) { 0.0 } else { sp.kappa(idx[a]) }).collect();
            for i in 0..d {
                scale = scale.max(k[i].abs() * hats[i][flat].norm());
                for j in i + 1..d {
                    curl = curl.max((k[i] * hats[j][flat] - k[j] * hats[i][flat]).norm());
                }
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            curl / scale
        }
    }
}

/// Symbol `A(U, xi)` of the hyperbolic part at one point, row-major of size
/// `(2 + d)^2`.
pub fn symbol_matrix(re_a: f64, im_a: f64, v: &[f64], xi: &[f64]) -> Vec<f64> {
    let d = v.len();
    let n = 2 + d;
    let vx: f64 = v.iter().zip(xi).map(|(a, b)| a * b).sum();
    let mut m = vec![0.0; n * n];
    m[0] = vx;
    m[n + 1] = vx;
    for j in 0..d {
        m[2 + j] = 0.5 * re_a * xi[j];
        m[n + 2 + j] = 0.5 * im_a * xi[j];
        m[(2 + j) * n] = 2.0 * re_a * xi[j];
        m[(2 + j) * n + 1] = 2.0 * im_a * xi[j];
        m[(2 + j) * n + 2 + j] = vx;
    }
    m
}

/// Constant symmetrizer `diag(1, 1, 1/4, ..)`.
pub fn symmetrizer(d: usize) -> Vec<f64> {
    let n = 2 + d;
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        s[i * n + i] = if i < 2 { 1.0 } else { 0.25 };
    }
    s
}

/// Integrator settings shared by all method-of-lines solves.
#[derive(Debug, Clone, Copy)]
pub struct MolOptions {
    pub dt: f64,
    /// `None` disables filtering. Only `(phi, a)` are filtered; the correctors
    /// are linear and driven, and filtering them leaks mass off the support.
    pub filter: Option<ExpFilter>,
    /// Blow-up when `max |∂_i ∂_j phi|` exceeds this.
    pub grad_cap: f64,
    /// Blow-up when the filter band holds more than this energy fraction.
    pub band_cap: f64,
}

impl MolOptions {
    pub fn new(dt: f64) -> Self {
        Self { dt, filter: Some(ExpFilter::default()), grad_cap: 50.0, band_cap: 1e-3 }
    }

    /// Conservative RK4 step for transport speed `speed` and dispersion `eps`.
    pub fn stable_dt(grid: &GridSpec, eps: f64, speed: f64) -> f64 {
        let kmax = std::f64::consts::PI / grid.dx();
        let adv = if speed > 0.0 { 0.5 / (speed * kmax) } else { f64::INFINITY };
        let disp = if eps > 0.0 { 2.0 / (0.5 * eps * kmax * kmax) } else { f64::INFINITY };
        adv.min(disp)
    }
}

/// Per-step detector readings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub t: f64,
    /// `max |∂_i ∂_j phi|`, i.e. `|∇v|_inf`.
    pub grad_v_inf: f64,
    pub band_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct WkbSeries {
    pub states: Vec<WkbState>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl WkbSeries {
    pub fn max_grad_v(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.grad_v_inf).fold(0.0, f64::max)
    }

    pub fn symmetrized(&self) -> Vec<SymmetrizedState> {
        self.states.iter().map(SymmetrizedState::from_state).collect()
    }

    /// One row per output time: detector readings of the last step at or
    /// before `t`, amplitude leak outside `support` (empty when absent) and
    /// the curl residual.
    pub fn write_diagnostics_csv<W: Write>(&self, support: Option<&SupportBox>, mut w: W) -> Result<()> {
        writeln!(w, "t,grad_v_inf,band_fraction,support_leak,curl_residual")?;
        for st in &self.states {
            let last = self.diagnostics.iter().take_while(|d| d.t <= st.t + 1e-12).last();
            let (gv, band) = last.map_or((0.0, 0.0), |d| (d.grad_v_inf, d.band_fraction));
            let leak = support.map_or(String::new(), |k| format!("{:e}", mass_outside(&st.amp, k)));
            let curl = SymmetrizedState::from_state(st).curl_residual();
            writeln!(w, "{},{:e},{:e},{},{:e}", st.t, gv, band, leak, curl)?;
        }
        Ok(())
    }
}

type Fields = Vec<Vec<Complex64>>;

const PHI: usize = 0;
const AMP: usize = 1;
const PHI1: usize = 2;
const AMP1: usize = 3;

struct MolSolver {
    grid: GridSpec,
    sp: Arc<Spectral>,
    eps: f64,
    flow: Option<AffineFlow>,
    corrector: bool,
    opts: MolOptions,
}

struct Derivs {
    grad: Vec<Vec<Complex64>>,
    lap: Vec<Complex64>,
}

impl MolSolver {
    fn new(
        grid: GridSpec,
        eps: f64,
        potential: &PotentialSpec,
        t_final: f64,
        corrector: bool,
        opts: MolOptions,
    ) -> Result<Self> {
        if !(opts.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {}", opts.dt)));
        }
        potential.validate(grid.dim())?;
        let flow = if potential.is_zero() {
            None
        } else {
            let f = AffineFlow::new(potential, grid.dim(), t_final, 1e-3, DEFAULT_J_MIN)?;
            if f.horizon() < t_final {
                return Err(Error::PastHorizon { requested: t_final, horizon: f.horizon() });
            }
            Some(f)
        };
        Ok(Self { grid, sp: Spectral::for_grid(&grid), eps, flow, corrector, opts })
    }

    fn derivs(&self, f: &[Complex64], want_lap: bool) -> Derivs {
        let mut hat = f.to_vec();
        self.sp.forward(&mut hat);
        let grad = (0..self.grid.dim())
            .map(|a| {
                let mut g = self.sp.derivative_hat(&hat, a);
                self.sp.inverse(&mut g);
                g
            })
            .collect();
        let lap = if want_lap {
            let mut l = self.sp.laplacian_hat(&hat);
            self.sp.inverse(&mut l);
            l
        } else {
            Vec::new()
        };
        Derivs { grad, lap }
    }

    fn eikonal(&self, t: f64) -> Result<Option<AffineSnapshot>> {
        self.flow.as_ref().map(|f| f.at(t)).transpose()
    }

    fn rhs(&self, st: &Fields, t: f64) -> Result<Fields> {
        let d = self.grid.dim();
        let eik = self.eikonal(t)?;
        let lap_eik = eik.map_or(0.0, |e| e.laplacian());
        let dphi = self.derivs(&st[PHI], true);
        let need_lap_a = self.eps > 0.0 || self.corrector;
        let da = self.derivs(&st[AMP], need_lap_a);
        let grid = self.grid;
        let half_ie = Complex64::new(0.0, 0.5 * self.eps);
        let drift = |i: usize| -> Point {
            let mut g = [0.0; 3];
            if let Some(e) = &eik {
                g = e.gradient(&grid.point(i));
            }
            g
        };
        let dot = |g: &Point, v: &[Vec<Complex64>], i: usize| -> Complex64 {
            (0..d).map(|a| v[a][i] * g[a]).sum()
        };
        let dot2 = |u: &[Vec<Complex64>], v: &[Vec<Complex64>], i: usize| -> Complex64 {
            (0..d).map(|a| u[a][i] * v[a][i]).sum()
        };
        let n = grid.len();
        let mut out_phi = vec![ZERO; n];
        let mut out_a = vec![ZERO; n];
        out_phi.par_iter_mut().zip(out_a.par_iter_mut()).enumerate().for_each(|(i, (fp, fa))| {
            let g = drift(i);
            let a = st[AMP][i];
            let gv2: f64 = (0..d).map(|k| dphi.grad[k][i].re * dphi.grad[k][i].re).sum();
            *fp = Complex64::new(-dot(&g, &dphi.grad, i).re - 0.5 * gv2 - a.norm_sqr(), 0.0);
            let mut r = -dot(&g, &da.grad, i) - dot2(&dphi.grad, &da.grad, i)
                - 0.5 * a * (lap_eik + dphi.lap[i].re);
            if self.eps > 0.0 {
                r += half_ie * da.lap[i];
            }
            *fa = r;
        });
        let mut out = vec![out_phi, out_a];
        if self.corrector {
            let dphi1 = self.derivs(&st[PHI1], true);
            let da1 = self.derivs(&st[AMP1], false);
            let mut o_phi1 = vec![ZERO; n];
            let mut o_a1 = vec![ZERO; n];
            let half_i = Complex64::new(0.0, 0.5);
            o_phi1.par_iter_mut().zip(o_a1.par_iter_mut()).enumerate().for_each(|(i, (fp, fa))| {
                let g = drift(i);
                let a = st[AMP][i];
                let a1 = st[AMP1][i];
                let p = -dot(&g, &dphi1.grad, i).re - dot2(&dphi.grad, &dphi1.grad, i).re
                    - 2.0 * (a.conj() * a1).re;
                *fp = Complex64::new(p, 0.0);
                *fa = -dot(&g, &da1.grad, i) - 0.5 * a1 * lap_eik - dot2(&dphi.grad, &da1.grad, i)
                    - dot2(&dphi1.grad, &da.grad, i)
                    - 0.5 * a1 * dphi.lap[i].re
                    - 0.5 * a * dphi1.lap[i].re
                    + half_i * da.lap[i];
            });
            out.push(o_phi1);
            out.push(o_a1);
        }
        Ok(out)
    }

    fn rk4(&self, st: &Fields, t: f64, h: f64) -> Result<Fields> {
        let k1 = self.rhs(st, t)?;
        let k2 = self.rhs(&axpy(st, 0.5 * h, &k1), t + 0.5 * h)?;
        let k3 = self.rhs(&axpy(st, 0.5 * h, &k2), t + 0.5 * h)?;
        let k4 = self.rhs(&axpy(st, h, &k3), t + h)?;
        let mut out = st.clone();
        for (f, slot) in out.iter_mut().enumerate() {
            slot.par_iter_mut().enumerate().for_each(|(i, z)| {
                *z += h / 6.0 * (k1[f][i] + 2.0 * k2[f][i] + 2.0 * k3[f][i] + k4[f][i]);
            });
        }
        Ok(out)
    }

    /// Filters every field, keeps phases real and returns the detector readings.
    fn post_step(&self, st: &mut Fields, t: f64) -> Result<StepDiagnostics> {
        let d = self.grid.dim();
        let mut band = 0.0f64;
        let mut grad_v = 0.0f64;
        for (f, slot) in st.iter_mut().enumerate() {
            if slot.iter().any(|z| !z.is_finite()) {
                return Err(Error::NonFinite { time: t });
            }
            let is_phase = f == PHI || f == PHI1;
            if is_phase {
                slot.iter_mut().for_each(|z| z.im = 0.0);
            }
            let mut hat = slot.clone();
            self.sp.forward(&mut hat);
            if let Some(filter) = &self.opts.filter {
                if f == PHI {
                    let grads: Vec<Vec<Complex64>> = (0..d).map(|a| self.sp.derivative_hat(&hat, a)).collect();
                    for g in &grads {
                        band = band.max(filter.band_fraction(&self.grid, g));
                    }
                } else if f == AMP {
                    band = band.max(filter.band_fraction(&self.grid, &hat));
                }
                if f < PHI1 {
                    filter.apply(&self.grid, &mut hat);
                }
            }
            if f == PHI {
                for a in 0..d {
                    for b in a..d {
                        let mut h = self.sp.second_derivative_hat(&hat, a, b);
                        self.sp.inverse(&mut h);
                        grad_v = grad_v.max(h.iter().map(|z| z.re.abs()).fold(0.0, f64::max));
                    }
                }
            }
            if self.opts.filter.is_some() && f < PHI1 {
                self.sp.inverse(&mut hat);
                if is_phase {
                    hat.iter_mut().for_each(|z| z.im = 0.0);
                }
                *slot = hat;
            }
        }
        let diag = StepDiagnostics { t, grad_v_inf: grad_v, band_fraction: band };
        if grad_v > self.opts.grad_cap || band > self.opts.band_cap {
            return Err(Error::BlowUp { time: t, grad_norm: grad_v, band_fraction: band });
        }
        Ok(diag)
    }

    fn state_at(&self, st: &Fields, t: f64) -> WkbState {
        let real = |v: &[Complex64]| RealField::from_vec(self.grid, v.iter().map(|z| z.re).collect()).expect("grid");
        let cplx = |v: &[Complex64]| ComplexField::from_vec(self.grid, v.to_vec()).expect("grid");
        WkbState {
            t,
            phi: real(&st[PHI]),
            amp: cplx(&st[AMP]),
            phi1: self.corrector.then(|| real(&st[PHI1])),
            amp1: self.corrector.then(|| cplx(&st[AMP1])),
            eps: (self.eps > 0.0).then_some(self.eps),
        }
    }

    fn run(&self, mut st: Fields, times: &[f64]) -> Result<WkbSeries> {
        let mut states = Vec::with_capacity(times.len());
        let mut diagnostics = Vec::new();
        let mut t = 0.0;
        for &ts in times {
            let (steps, h) = steps_between(t, ts, self.opts.dt);
            for k in 0..steps {
                let t0 = t + k as f64 * h;
                st = self.rk4(&st, t0, h)?;
                diagnostics.push(self.post_step(&mut st, t0 + h)?);
            }
            t = ts;
            states.push(self.state_at(&st, t));
        }
        Ok(WkbSeries { states, diagnostics })
    }
}

fn axpy(x: &Fields, h: f64, k: &Fields) -> Fields {
    x.iter()
        .zip(k)
        .map(|(a, b)| a.par_iter().zip(b.par_iter()).map(|(u, v)| u + h * v).collect())
        .collect()
}

fn check_inputs(phi0: &RealField, a0: &ComplexField, times: &[f64]) -> Result<f64> {
    if phi0.grid() != a0.grid() {
        return Err(Error::GridMismatch);
    }
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("output times must be sorted and nonnegative".into()));
    }
    if !phi0.is_finite() || !a0.is_finite() {
        return Err(Error::NonFinite { time: 0.0 });
    }
    Ok(*times.last().expect("nonempty"))
}

fn initial_fields(phi0: &RealField, a0: &ComplexField, corrector: bool) -> Fields {
    let mut st = vec![phi0.to_complex().into_vec(), a0.data().to_vec()];
    if corrector {
        st.push(vec![ZERO; a0.data().len()]);
        st.push(vec![ZERO; a0.data().len()]);
    }
    st
}

/// Grenier's system at fixed `eps` (with the eikonal splitting when `V ≠ 0`).
pub fn solve_grenier(
    phi0: &RealField,
    a0: &ComplexField,
    eps: f64,
    potential: &PotentialSpec,
    times: &[f64],
    opts: MolOptions,
) -> Result<WkbSeries> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1], got {eps}")));
    }
    let t_final = check_inputs(phi0, a0, times)?;
    let solver = MolSolver::new(*phi0.grid(), eps, potential, t_final, false, opts)?;
    solver.run(initial_fields(phi0, a0, false), times)
}

/// The `eps -> 0` limit system.
pub fn solve_limit_system(
    phi0: &RealField,
    a0: &ComplexField,
    potential: &PotentialSpec,
    times: &[f64],
    opts: MolOptions,
) -> Result<WkbSeries> {
    let t_final = check_inputs(phi0, a0, times)?;
    let solver = MolSolver::new(*phi0.grid(), 0.0, potential, t_final, false, opts)?;
    solver.run(initial_fields(phi0, a0, false), times)
}

/// Limit system together with the first corrector (zero initial data).
pub fn solve_with_corrector(
    phi0: &RealField,
    a0: &ComplexField,
    potential: &PotentialSpec,
    times: &[f64],
    opts: MolOptions,
) -> Result<WkbSeries> {
    let t_final = check_inputs(phi0, a0, times)?;
    let solver = MolSolver::new(*phi0.grid(), 0.0, potential, t_final, true, opts)?;
    solver.run(initial_fields(phi0, a0, true), times)
}

/// First corrector along a computed limit solution.
///
/// The corrector equations are linear in `(phi1, a1)` with coefficients taken
/// from the limit solution at every RK stage, so the limit system is
/// re-integrated jointly from `limit.states[0]` with the same step and output
/// times.
pub fn solve_corrector1(limit: &WkbSeries, potential: &PotentialSpec, opts: MolOptions) -> Result<WkbSeries> {
    let first = limit.states.first().ok_or_else(|| Error::InvalidParameter("empty limit series".into()))?;
    if first.t != 0.0 {
        return Err(Error::InvalidParameter("limit series must start at t = 0".into()));
    }
    let times: Vec<f64> = limit.states.iter().map(|s| s.t).collect();
    solve_with_corrector(&first.phi, &first.amp, potential, &times, opts)
}

/// Which terms of the expansion enter the reconstructed wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WkbOrder {
    /// `a exp(i (phi_eik + phi) / eps)`.
    Leading,
    /// `a exp(i (phi_eik + phi + eps phi1) / eps)`.
    FirstCorrector,
}

/// Reconstructs the wave from a hierarchy state on its own grid.
///
/// `eikonal` is required when the state was computed with a potential. The
/// grid must resolve the total phase at scale `eps`.
pub fn assemble_wkb(
    state: &WkbState,
    eps: f64,
    eikonal: Option<&AffineSnapshot>,
    order: WkbOrder,
) -> Result<ComplexField> {
    let grid = *state.phi.grid();
    let d = grid.dim();
    let mut phase = state.phi.clone();
    if order == WkbOrder::FirstCorrector {
        let phi1 = state
            .phi1
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("first-order assembly needs the corrector".into()))?;
        phase = phase.add(&phi1.scale(eps))?;
    }
    // resolution check on the total phase gradient
    let grads = crate::spectral::spectral_gradient_real(&phase);
    let mut big = 0.0f64;
    for i in 0..grid.len() {
        let mut g = [0.0; 3];
        if let Some(e) = eikonal {
            g = e.gradient(&grid.point(i));
        }
        let s: f64 = (0..d).map(|a| (g[a] + grads[a].data()[i]).powi(2)).sum();
        big = big.max(s.sqrt());
    }
    grid.check_resolution(eps, big)?;
    let data = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let total = phase.data()[i] + eikonal.map_or(0.0, |e| e.value(&grid.point(i)));
            state.amp.data()[i] * Complex64::from_polar(1.0, total / eps)
        })
        .collect();
    ComplexField::from_vec(grid, data)
}

/// Fields composed with the classical flow: `psi(y) = phi(t, x(t, y))`,
/// `A(y) = sqrt(J_t(y)) a(t, x(t, y))`, and likewise for the correctors.
#[derive(Debug, Clone)]
pub struct PulledBack {
    pub psi: RealField,
    pub amp: ComplexField,
    pub psi1: Option<RealField>,
    pub amp1: Option<ComplexField>,
}

pub fn pull_back(state: &WkbState, bundle: &TrajectoryBundle) -> Result<PulledBack> {
    if state.t > bundle.horizon {
        return Err(Error::PastHorizon { requested: state.t, horizon: bundle.horizon });
    }
    let k = bundle.time_index(state.t).ok_or_else(|| {
        Error::InvalidParameter(format!("t = {} is not a sample time of the bundle", state.t))
    })?;
    if bundle.grid != *state.phi.grid() {
        return Err(Error::GridMismatch);
    }
    let d = bundle.dim();
    let pts: Vec<Point> = bundle.states[k].iter().map(|r| r.x).collect();
    let root_j: Vec<f64> = bundle.states[k].iter().map(|r| r.jacobian(d).sqrt()).collect();
    let grid = bundle.grid;
    let compose_real = |f: &RealField| {
        let v = eval_at(&f.to_complex(), &pts);
        RealField::from_vec(grid, v.into_iter().map(|z| z.re).collect()).expect("grid")
    };
    let compose_amp = |f: &ComplexField| {
        let v = eval_at(f, &pts);
        ComplexField::from_vec(grid, v.into_iter().zip(&root_j).map(|(z, j)| z * j).collect()).expect("grid")
    };
    Ok(PulledBack {
        psi: compose_real(&state.phi),
        amp: compose_amp(&state.amp),
        psi1: state.phi1.as_ref().map(compose_real),
        amp1: state.amp1.as_ref().map(compose_amp),
    })
}

/// Error of the first-order WKB wave against the split-step solution of the
/// supercritical equation (`kappa = 0`, `V = 0`), for every `eps`.
///
/// The hierarchy is solved once on the grid of `phi0`; the errors are
/// `max_t` over `samples` equispaced times in `(0, t]`. The grid must resolve
/// the smallest `eps`.
pub fn accuracy_sweep(
    phi0: &RealField,
    a0: &ComplexField,
    eps_list: &[f64],
    t: f64,
    samples: usize,
    opts: MolOptions,
) -> Result<ConvergenceReport> {
    if eps_list.is_empty() {
        return Err(Error::InvalidParameter("empty eps list".into()));
    }
    let times: Vec<f64> = (0..=samples.max(1)).map(|k| t * k as f64 / samples.max(1) as f64).collect();
    let series = solve_with_corrector(phi0, a0, &PotentialSpec::Zero, &times, opts)?;
    let grid = *phi0.grid();
    let entries = eps_list
        .par_iter()
        .map(|&eps| {
            let mut entry = SweepEntry {
                eps,
                e_l2: f64::NAN,
                e_linf: f64::NAN,
                t_star: t,
                n_grid: grid.n(),
                dt: eps / 100.0,
                mass_drift: 0.0,
                failure: None,
            };
            let run = || -> Result<(f64, f64, f64)> {
                let u0 = assemble_wkb(&series.states[0], eps, None, WkbOrder::Leading)?;
                let p = NlsParams::new(eps, 0, PotentialSpec::Zero, t, &grid).with_dt(entry.dt);
                let snaps = evolve(&u0, &p, &times[1..])?;
                let m0 = mass(&u0);
                let (mut el2, mut einf, mut drift) = (0.0f64, 0.0f64, 0.0f64);
                for (snap, state) in snaps.iter().zip(&series.states[1..]) {
                    let d = snap.field.sub(&assemble_wkb(state, eps, None, WkbOrder::FirstCorrector)?)?;
                    el2 = el2.max(l2(&d));
                    einf = einf.max(linf(&d));
                    drift = drift.max((snap.mass / m0 - 1.0).abs());
                }
                Ok((el2, einf, drift))
            };
            match run() {
                Ok((el2, einf, drift)) => {
                    entry.e_l2 = el2;
                    entry.e_linf = einf;
                    entry.mass_drift = drift;
                }
                Err(e) => entry.failure = Some(e.to_string()),
            }
            entry
        })
        .collect();
    Ok(ConvergenceReport::from_entries(entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::bump;
    use crate::grid::make_grid;

    #[test]
    fn symmetrizer_makes_symbol_symmetric() {
        let (re, im) = (0.7, -0.3);
        let v = [0.4, -1.1];
        let xi = [0.9, 0.25];
        let a = symbol_matrix(re, im, &v, &xi);
        let s = symmetrizer(2);
        let n = 4;
        let mut sa = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                sa[i * n + j] = (0..n).map(|k| s[i * n + k] * a[k * n + j]).sum();
            }
        }
        for i in 0..n {
            for j in 0..n {
                assert!((sa[i * n + j] - sa[j * n + i]).abs() < 1e-15);
            }
        }
        // without the symmetrizer the symbol is not symmetric
        assert!((a[2] - a[2 * n]).abs() > 0.1);
    }

    #[test]
    fn zero_amplitude_decouples() {
        let g = make_grid(1, 128, 4.0).unwrap();
        let phi0 = bump(&g, &[0.0], 1.5, 0.5).unwrap();
        let a0 = ComplexField::zeros(g);
        let s = solve_grenier(&phi0, &a0, 0.1, &PotentialSpec::Zero, &[0.0, 0.2], MolOptions::new(1e-3)).unwrap();
        assert!(s.states[1].amp.data().iter().all(|z| z.norm() == 0.0));
        let c = solve_with_corrector(&phi0, &a0, &PotentialSpec::Zero, &[0.0, 0.2], MolOptions::new(1e-3)).unwrap();
        let last = c.states.last().unwrap();
        assert!(last.amp1.as_ref().unwrap().data().iter().all(|z| z.norm() == 0.0));
        assert!(last.phi1.as_ref().unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn blow_up_is_detected() {
        // a steep phase well past the Burgers crossing time
        let g = make_grid(1, 256, 4.0).unwrap();
        let phi0 = bump(&g, &[0.0], 1.0, -8.0).unwrap();
        let a0 = ComplexField::zeros(g);
        let err = solve_limit_system(&phi0, &a0, &PotentialSpec::Zero, &[2.0], MolOptions::new(1e-3)).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }), "{err}");
    }

    #[test]
    fn leading_order_modulus() {
        let g = make_grid(1, 256, 4.0).unwrap();
        let phi0 = bump(&g, &[0.0], 1.0, 1.0).unwrap();
        let a0 = bump(&g, &[0.0], 1.0, 1.0).unwrap().to_complex();
        let state = WkbState { t: 0.0, phi: phi0, amp: a0.clone(), phi1: None, amp1: None, eps: None };
        let u = assemble_wkb(&state, 0.25, None, WkbOrder::Leading).unwrap();
        for (z, a) in u.data().iter().zip(a0.data()) {
            assert!((z.norm() - a.norm()).abs() < 1e-15);
        }
        assert!(assemble_wkb(&state, 0.25, None, WkbOrder::FirstCorrector).is_err());
        // a zero corrector reproduces the leading-order wave
        let with_zero = WkbState { phi1: Some(RealField::zeros(g)), ..state.clone() };
        assert_eq!(
            assemble_wkb(&with_zero, 0.25, None, WkbOrder::FirstCorrector).unwrap(),
            assemble_wkb(&state, 0.25, None, WkbOrder::Leading).unwrap()
        );
        assert!(matches!(assemble_wkb(&state, 1e-3, None, WkbOrder::Leading), Err(Error::Underresolved { .. })));
    }
}
