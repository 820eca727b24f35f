//! Classical trajectories `x' = xi, xi' = -∇V(x)` launched with momenta
//! `∇phi0(y)`, their deformation matrices, and the eikonal phase obtained by
//! inverting the flow.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{bump_profile, RealField};
use crate::grid::{GridSpec, Point};
use crate::nls::{PotentialSpec, QuadraticForm};

/// Default flow step.
pub const DEFAULT_DT_ODE: f64 = 1e-3;
/// Jacobi determinant below which the flow is no longer trusted.
pub const DEFAULT_J_MIN: f64 = 0.05;
const NEWTON_MAX_ITER: usize = 20;

/// Initial phase with closed-form derivatives.
pub trait PhaseFunction: Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> [f64; 3];
    /// Row-major Hessian with stride 3.
    fn hessian(&self, x: &[f64]) -> [f64; 9];
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPhase;

impl PhaseFunction for ZeroPhase {
    fn value(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn gradient(&self, _: &[f64]) -> [f64; 3] {
        [0.0; 3]
    }
    fn hessian(&self, _: &[f64]) -> [f64; 9] {
        [0.0; 9]
    }
}

/// `k·x`.
#[derive(Debug, Clone)]
pub struct LinearPhase {
    pub k: Vec<f64>,
}

impl PhaseFunction for LinearPhase {
    fn value(&self, x: &[f64]) -> f64 {
        self.k.iter().zip(x).map(|(k, x)| k * x).sum()
    }
    fn gradient(&self, _: &[f64]) -> [f64; 3] {
        let mut g = [0.0; 3];
        g[..self.k.len()].copy_from_slice(&self.k);
        g
    }
    fn hessian(&self, _: &[f64]) -> [f64; 9] {
        [0.0; 9]
    }
}

/// `c |x|^2 / 2`.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticPhase {
    pub dim: usize,
    pub c: f64,
}

impl PhaseFunction for QuadraticPhase {
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.c * x[..self.dim].iter().map(|v| v * v).sum::<f64>()
    }
    fn gradient(&self, x: &[f64]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for a in 0..self.dim {
            g[a] = self.c * x[a];
        }
        g
    }
    fn hessian(&self, _: &[f64]) -> [f64; 9] {
        let mut h = [0.0; 9];
        for a in 0..self.dim {
            h[4 * a] = self.c;
        }
        h
    }
}

/// `height * exp(-1/(1 - r^2))`, `r = |x - center| / radius`.
#[derive(Debug, Clone)]
pub struct BumpPhase {
    pub center: Vec<f64>,
    pub radius: f64,
    pub height: f64,
}

impl BumpPhase {
    /// `(s, g(s), g'(s), g''(s))` for `g = exp(-1/(1-s))`, `s = r^2`.
    fn profile(&self, x: &[f64]) -> (f64, f64, f64, f64) {
        let r2 = self.radius * self.radius;
        let s: f64 = self.center.iter().zip(x).map(|(c, x)| (x - c).powi(2)).sum::<f64>() / r2;
        if s >= 1.0 {
            return (s, 0.0, 0.0, 0.0);
        }
        let g = bump_profile(s);
        let w = 1.0 - s;
        (s, g, -g / (w * w), g * (2.0 * s - 1.0) / w.powi(4))
    }
}

impl PhaseFunction for BumpPhase {
    fn value(&self, x: &[f64]) -> f64 {
        self.height * self.profile(x).1
    }
    fn gradient(&self, x: &[f64]) -> [f64; 3] {
        let (_, _, g1, _) = self.profile(x);
        let r2 = self.radius * self.radius;
        let mut out = [0.0; 3];
        for (a, c) in self.center.iter().enumerate() {
            out[a] = self.height * g1 * 2.0 * (x[a] - c) / r2;
        }
        out
    }
    fn hessian(&self, x: &[f64]) -> [f64; 9] {
        let (_, _, g1, g2) = self.profile(x);
        let r2 = self.radius * self.radius;
        let d = self.center.len();
        let mut h = [0.0; 9];
        for a in 0..d {
            let da = x[a] - self.center[a];
            for b in 0..d {
                let db = x[b] - self.center[b];
                let delta = if a == b { 1.0 } else { 0.0 };
                h[3 * a + b] = self.height * (g2 * 4.0 * da * db / (r2 * r2) + g1 * 2.0 * delta / r2);
            }
        }
        h
    }
}

/// Position, momentum, `M = ∇_y x`, `P = ∇_y xi` and action along one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayState {
    pub x: [f64; 3],
    pub xi: [f64; 3],
    pub m: [f64; 9],
    pub p: [f64; 9],
    pub s: f64,
}

impl RayState {
    pub fn launch(y: &[f64], dim: usize, phase: &dyn PhaseFunction) -> Self {
        let mut x = [0.0; 3];
        x[..dim].copy_from_slice(&y[..dim]);
        let mut m = [0.0; 9];
        for a in 0..dim {
            m[4 * a] = 1.0;
        }
        Self { x, xi: phase.gradient(&x), m, p: phase.hessian(&x), s: phase.value(&x) }
    }

    pub fn jacobian(&self, dim: usize) -> f64 {
        det(&self.m, dim)
    }

    /// `Δphi_eik` at the ray position: `tr(P M^-1)`.
    pub fn phase_laplacian(&self, dim: usize) -> f64 {
        let inv = inverse(&self.m, dim);
        let pm = matmul(&self.p, &inv, dim);
        (0..dim).map(|a| pm[4 * a]).sum()
    }

    fn axpy(&self, h: f64, k: &RayState) -> RayState {
        let mut out = *self;
        for i in 0..3 {
            out.x[i] += h * k.x[i];
            out.xi[i] += h * k.xi[i];
        }
        for i in 0..9 {
            out.m[i] += h * k.m[i];
            out.p[i] += h * k.p[i];
        }
        out.s += h * k.s;
        out
    }

    fn rhs(&self, v: &QuadraticForm) -> RayState {
        let d = v.dim;
        let grad = v.gradient(&self.x);
        let mut dxi = [0.0; 3];
        for a in 0..d {
            dxi[a] = -grad[a];
        }
        let mut dp = [0.0; 9];
        for a in 0..d {
            for b in 0..d {
                dp[3 * a + b] = -(0..d).map(|c| v.q[a * d + c] * self.m[3 * c + b]).sum::<f64>();
            }
        }
        let kinetic: f64 = self.xi[..d].iter().map(|v| v * v).sum::<f64>() * 0.5;
        RayState { x: self.xi, xi: dxi, m: self.p, p: dp, s: kinetic - v.value(&self.x) }
    }

    pub fn rk4_step(&self, v: &QuadraticForm, h: f64) -> RayState {
        let k1 = self.rhs(v);
        let k2 = self.axpy(0.5 * h, &k1).rhs(v);
        let k3 = self.axpy(0.5 * h, &k2).rhs(v);
        let k4 = self.axpy(h, &k3).rhs(v);
        let mut out = self.axpy(h / 6.0, &k1);
        out = out.axpy(h / 3.0, &k2);
        out = out.axpy(h / 3.0, &k3);
        out.axpy(h / 6.0, &k4)
    }
}

pub(crate) fn det(m: &[f64; 9], d: usize) -> f64 {
    match d {
        1 => m[0],
        2 => m[0] * m[4] - m[1] * m[3],
        _ => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
    }
}

pub(crate) fn inverse(m: &[f64; 9], d: usize) -> [f64; 9] {
    let det = det(m, d);
    let mut out = [0.0; 9];
    match d {
        1 => out[0] = 1.0 / m[0],
        2 => {
            out[0] = m[4] / det;
            out[1] = -m[1] / det;
            out[3] = -m[3] / det;
            out[4] = m[0] / det;
        }
        _ => {
            for r in 0..3 {
                for c in 0..3 {
                    // cofactor of (c, r)
                    let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
                    let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
                    out[3 * r + c] = (m[3 * r1 + c1] * m[3 * r2 + c2] - m[3 * r1 + c2] * m[3 * r2 + c1]) / det;
                }
            }
        }
    }
    out
}

pub(crate) fn matmul(a: &[f64; 9], b: &[f64; 9], d: usize) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..d {
        for j in 0..d {
            out[3 * i + j] = (0..d).map(|k| a[3 * i + k] * b[3 * k + j]).sum();
        }
    }
    out
}

/// Integrates one ray from `t = 0` to `t` with steps of at most `dt`.
pub fn integrate_ray(start: RayState, v: &QuadraticForm, t: f64, dt: f64) -> RayState {
    let (steps, h) = crate::nls::steps_between(0.0, t, dt);
    (0..steps).fold(start, |s, _| s.rk4_step(v, h))
}

/// Rays launched from every grid point, sampled at `times`.
#[derive(Debug, Clone)]
pub struct TrajectoryBundle {
    pub grid: GridSpec,
    pub times: Vec<f64>,
    /// `states[k][i]`: ray from grid point `i` at `times[k]`.
    pub states: Vec<Vec<RayState>>,
    /// First time with `min J <= j_min`, or the final time.
    pub horizon: f64,
    pub j_min: f64,
    pub dt_ode: f64,
    pub potential: QuadraticForm,
    /// Whether `j_min` was reached before the requested final time.
    pub truncated: bool,
}

/// Integrates rays launched with momenta `∇phi0(y)` from every grid point.
///
/// Integration stops at the first step where `min_y J <= j_min`; only samples
/// at or before that time are kept.
pub fn integrate_flow(
    potential: &PotentialSpec,
    phase: &dyn PhaseFunction,
    grid: &GridSpec,
    sample_times: &[f64],
    dt_ode: f64,
    j_min: f64,
) -> Result<TrajectoryBundle> {
    let d = grid.dim();
    potential.validate(d)?;
    if !(dt_ode > 0.0) || sample_times.is_empty() || sample_times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("need dt_ode > 0 and sorted sample times".into()));
    }
    if sample_times[0] < 0.0 {
        return Err(Error::InvalidParameter("sample times must be nonnegative".into()));
    }
    let v = potential.quadratic_form(d);
    let mut rays: Vec<RayState> =
        (0..grid.len()).into_par_iter().map(|i| RayState::launch(&grid.point(i), d, phase)).collect();
    let min_j = |rays: &[RayState]| rays.iter().map(|r| r.jacobian(d)).fold(f64::INFINITY, f64::min);
    let mut states = Vec::with_capacity(sample_times.len());
    let mut times = Vec::with_capacity(sample_times.len());
    let mut t = 0.0;
    let mut horizon = *sample_times.last().expect("nonempty");
    let mut truncated = false;
    let mut prev_j = min_j(&rays);
    'outer: for &ts in sample_times {
        let (steps, h) = crate::nls::steps_between(t, ts, dt_ode);
        for k in 0..steps {
            let next: Vec<RayState> = rays.par_iter().map(|r| r.rk4_step(&v, h)).collect();
            let j = min_j(&next);
            if j <= j_min {
                // linear interpolation of the crossing inside the step
                let t0 = t + k as f64 * h;
                horizon = t0 + h * ((prev_j - j_min) / (prev_j - j)).clamp(0.0, 1.0);
                truncated = true;
                break 'outer;
            }
            prev_j = j;
            rays = next;
        }
        t = ts;
        times.push(ts);
        states.push(rays.clone());
    }
    if times.is_empty() {
        // the horizon precedes the first requested sample
        times.push(0.0);
        states.push((0..grid.len()).map(|i| RayState::launch(&grid.point(i), d, phase)).collect());
    }
    Ok(TrajectoryBundle { grid: *grid, times, states, horizon, j_min, dt_ode, potential: v, truncated })
}

impl TrajectoryBundle {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn jacobian_at(&self, k: usize) -> RealField {
        let d = self.dim();
        RealField::from_vec(self.grid, self.states[k].iter().map(|r| r.jacobian(d)).collect())
            .expect("one ray per grid point")
    }

    /// Index of `t` among the stored sample times.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
    }

    /// Rows `t, y.., x.., xi.., J` for every stored sample and launch point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dim();
        let axes = ["0", "1", "2"];
        let mut header = vec!["t".to_string()];
        for prefix in ["y", "x", "xi"] {
            header.extend(axes[..d].iter().map(|a| format!("{prefix}{a}")));
        }
        header.push("J".into());
        writeln!(w, "{}", header.join(","))?;
        for (k, &t) in self.times.iter().enumerate() {
            for (i, r) in self.states[k].iter().enumerate() {
                let y = self.grid.point(i);
                let mut row = vec![format!("{t}")];
                row.extend(y[..d].iter().map(|v| format!("{v}")));
                row.extend(r.x[..d].iter().map(|v| format!("{v}")));
                row.extend(r.xi[..d].iter().map(|v| format!("{v}")));
                row.push(format!("{}", r.jacobian(d)));
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

/// Measured `(min J, max J, horizon)` over all stored samples.
pub fn jacobian_bounds(bundle: &TrajectoryBundle) -> (f64, f64, f64) {
    let d = bundle.dim();
    let (lo, hi) = bundle
        .states
        .iter()
        .flatten()
        .map(|r| r.jacobian(d))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), j| (lo.min(j), hi.max(j)));
    (lo, hi, bundle.horizon)
}

/// `phi_eik` sampled on the launch grid at the bundle times.
#[derive(Debug, Clone)]
pub struct EikonalPhase {
    pub times: Vec<f64>,
    pub values: Vec<RealField>,
    pub horizon: f64,
}

/// Inverts the flow at every grid point by Newton iteration on fresh rays and
/// evaluates the action there.
pub fn eikonal_phase(bundle: &TrajectoryBundle, phase: &dyn PhaseFunction) -> Result<EikonalPhase> {
    let values = bundle
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| eikonal_at(bundle, phase, k, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(EikonalPhase { times: bundle.times.clone(), values, horizon: bundle.horizon })
}

/// Launch point `y` with `x(t, y) = target`, and the ray reaching it.
pub fn invert_flow(
    bundle: &TrajectoryBundle,
    phase: &dyn PhaseFunction,
    k: usize,
    target: &Point,
) -> Result<(Point, RayState)> {
    let d = bundle.dim();
    let t = bundle.times[k];
    let seed_idx = nearest_launch(bundle, k, target);
    let seed = &bundle.states[k][seed_idx];
    // one Newton step on the stored ray gives the starting guess
    let mut y = bundle.grid.point(seed_idx);
    newton_update(&mut y, seed, target, d);
    let scale = 1.0 + target[..d].iter().map(|v| v.abs()).fold(0.0, f64::max);
    for _ in 0..NEWTON_MAX_ITER {
        let ray = integrate_ray(RayState::launch(&y, d, phase), &bundle.potential, t, bundle.dt_ode);
        let miss = (0..d).map(|a| (ray.x[a] - target[a]).abs()).fold(0.0, f64::max);
        if miss <= 1e-12 * scale {
            return Ok((y, ray));
        }
        if !ray.jacobian(d).is_finite() || ray.jacobian(d).abs() < 1e-300 {
            break;
        }
        newton_update(&mut y, &ray, target, d);
    }
    Err(Error::NewtonFailure { time: t, target: target[..d].to_vec() })
}

fn newton_update(y: &mut Point, ray: &RayState, target: &Point, d: usize) {
    let inv = inverse(&ray.m, d);
    for a in 0..d {
        let step: f64 = (0..d).map(|b| inv[3 * a + b] * (ray.x[b] - target[b])).sum();
        y[a] -= step;
    }
}

fn nearest_launch(bundle: &TrajectoryBundle, k: usize, target: &Point) -> usize {
    let grid = &bundle.grid;
    let d = grid.dim();
    let rays = &bundle.states[k];
    let dist = |i: usize| (0..d).map(|a| (rays[i].x[a] - target[a]).powi(2)).sum::<f64>();
    if d == 1 {
        // x(t, .) is increasing while J > 0
        let i = rays.partition_point(|r| r.x[0] < target[0]);
        return match i {
            0 => 0,
            i if i >= rays.len() => rays.len() - 1,
            i if dist(i - 1) < dist(i) => i - 1,
            i => i,
        };
    }
    // greedy descent over grid neighbours, starting from the target's own index
    let n = grid.n() as isize;
    let mut idx = [0usize; 3];
    for a in 0..d {
        let i = ((target[a] + grid.half_len()) / grid.dx()).round() as isize;
        idx[a] = i.clamp(0, n - 1) as usize;
    }
    let mut cur = grid.flatten(&idx);
    let mut best = dist(cur);
    loop {
        let base = grid.unflatten(cur);
        let mut moved = false;
        for a in 0..d {
            for delta in [-1isize, 1] {
                let j = base[a] as isize + delta;
                if j < 0 || j >= n {
                    continue;
                }
                let mut cand = base;
                cand[a] = j as usize;
                let f = grid.flatten(&cand);
                let df = dist(f);
                if df < best {
                    best = df;
                    cur = f;
                    moved = true;
                }
            }
        }
        if !moved {
            return cur;
        }
    }
}

fn eikonal_at(bundle: &TrajectoryBundle, phase: &dyn PhaseFunction, k: usize, t: f64) -> Result<RealField> {
    let grid = bundle.grid;
    if t == 0.0 {
        return Ok(RealField::from_fn(grid, |p| phase.value(p)));
    }
    let vals = (0..grid.len())
        .into_par_iter()
        .map(|i| invert_flow(bundle, phase, k, &grid.point(i)).map(|(_, ray)| ray.s))
        .collect::<Result<Vec<f64>>>()?;
    RealField::from_vec(grid, vals)
}

/// Flow generated by a quadratic potential from zero initial momentum.
///
/// Rays are affine in the launch point: `x = A y + c`, `xi = B y + e`, and the
/// action is `S = y·P y / 2 + p·y + s`, so `phi_eik` is quadratic in `x`.
#[derive(Debug, Clone)]
pub struct AffineFlow {
    dim: usize,
    v: QuadraticForm,
    h: f64,
    states: Vec<AffineState>,
    horizon: f64,
}

#[derive(Debug, Clone, Copy)]
struct AffineState {
    a: [f64; 9],
    b: [f64; 9],
    c: [f64; 3],
    e: [f64; 3],
    pm: [f64; 9],
    pv: [f64; 3],
    s: f64,
}

impl AffineState {
    fn initial(d: usize) -> Self {
        let mut a = [0.0; 9];
        for i in 0..d {
            a[4 * i] = 1.0;
        }
        Self { a, b: [0.0; 9], c: [0.0; 3], e: [0.0; 3], pm: [0.0; 9], pv: [0.0; 3], s: 0.0 }
    }

    fn rhs(&self, v: &QuadraticForm) -> Self {
        let d = v.dim;
        let mut q = [0.0; 9];
        for i in 0..d {
            for j in 0..d {
                q[3 * i + j] = v.q[i * d + j];
            }
        }
        let qa = matmul(&q, &self.a, d);
        let mut db = [0.0; 9];
        for i in 0..9 {
            db[i] = -qa[i];
        }
        // force at the reference ray: Q c + b
        let mut f = [0.0; 3];
        for i in 0..d {
            f[i] = v.b[i] + (0..d).map(|j| q[3 * i + j] * self.c[j]).sum::<f64>();
        }
        let mut de = [0.0; 3];
        for i in 0..d {
            de[i] = -f[i];
        }
        let t = |m: &[f64; 9]| {
            let mut o = [0.0; 9];
            for i in 0..d {
                for j in 0..d {
                    o[3 * i + j] = m[3 * j + i];
                }
            }
            o
        };
        let btb = matmul(&t(&self.b), &self.b, d);
        let atqa = matmul(&t(&self.a), &qa, d);
        let mut dpm = [0.0; 9];
        for i in 0..9 {
            dpm[i] = btb[i] - atqa[i];
        }
        let mut dpv = [0.0; 3];
        for i in 0..d {
            dpv[i] = (0..d).map(|j| self.b[3 * j + i] * self.e[j] - self.a[3 * j + i] * f[j]).sum();
        }
        let e2: f64 = self.e[..d].iter().map(|x| x * x).sum();
        let cqc: f64 = (0..d).map(|i| self.c[i] * (0..d).map(|j| q[3 * i + j] * self.c[j]).sum::<f64>()).sum();
        let bc: f64 = (0..d).map(|i| v.b[i] * self.c[i]).sum();
        let ds = 0.5 * e2 - 0.5 * cqc - bc - v.c;
        Self { a: self.b, b: db, c: self.e, e: de, pm: dpm, pv: dpv, s: ds }
    }

    fn axpy(&self, h: f64, k: &Self) -> Self {
        let mut o = *self;
        for i in 0..9 {
            o.a[i] += h * k.a[i];
            o.b[i] += h * k.b[i];
            o.pm[i] += h * k.pm[i];
        }
        for i in 0..3 {
            o.c[i] += h * k.c[i];
            o.e[i] += h * k.e[i];
            o.pv[i] += h * k.pv[i];
        }
        o.s += h * k.s;
        o
    }

    fn rk4(&self, v: &QuadraticForm, h: f64) -> Self {
        let k1 = self.rhs(v);
        let k2 = self.axpy(0.5 * h, &k1).rhs(v);
        let k3 = self.axpy(0.5 * h, &k2).rhs(v);
        let k4 = self.axpy(h, &k3).rhs(v);
        self.axpy(h / 6.0, &k1).axpy(h / 3.0, &k2).axpy(h / 3.0, &k3).axpy(h / 6.0, &k4)
    }
}

/// `phi_eik(t, .)` in closed quadratic form at one instant.
#[derive(Debug, Clone, Copy)]
pub struct AffineSnapshot {
    dim: usize,
    /// `B A^-1`, the Hessian of `phi_eik`.
    hess: [f64; 9],
    c: [f64; 3],
    e: [f64; 3],
    a_inv: [f64; 9],
    pm: [f64; 9],
    pv: [f64; 3],
    s: f64,
    jac: f64,
}

impl AffineSnapshot {
    pub fn gradient(&self, x: &[f64]) -> [f64; 3] {
        let d = self.dim;
        let mut g = self.e;
        for i in 0..d {
            g[i] += (0..d).map(|j| self.hess[3 * i + j] * (x[j] - self.c[j])).sum::<f64>();
        }
        g
    }

    pub fn laplacian(&self) -> f64 {
        (0..self.dim).map(|i| self.hess[4 * i]).sum()
    }

    pub fn hessian(&self) -> [f64; 9] {
        self.hess
    }

    /// `det ∇_y x`, independent of `y` for affine flows.
    pub fn jacobian(&self) -> f64 {
        self.jac
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut y = [0.0; 3];
        for i in 0..d {
            y[i] = (0..d).map(|j| self.a_inv[3 * i + j] * (x[j] - self.c[j])).sum();
        }
        let quad: f64 = (0..d).map(|i| y[i] * (0..d).map(|j| self.pm[3 * i + j] * y[j]).sum::<f64>()).sum();
        0.5 * quad + (0..d).map(|i| self.pv[i] * y[i]).sum::<f64>() + self.s
    }

    /// Launch point of the ray through `x`.
    pub fn launch_point(&self, x: &[f64]) -> Point {
        let mut y = [0.0; 3];
        for i in 0..self.dim {
            y[i] = (0..self.dim).map(|j| self.a_inv[3 * i + j] * (x[j] - self.c[j])).sum();
        }
        y
    }

    /// Position at this instant of the ray launched from `y`.
    pub fn position(&self, y: &[f64]) -> Point {
        let d = self.dim;
        let a = inverse(&self.a_inv, d);
        let mut x = [0.0; 3];
        for i in 0..d {
            x[i] = self.c[i] + (0..d).map(|j| a[3 * i + j] * y[j]).sum::<f64>();
        }
        x
    }

    pub fn sample(&self, grid: &GridSpec) -> RealField {
        RealField::from_fn(*grid, |p| self.value(p))
    }

    pub fn sample_gradient(&self, grid: &GridSpec) -> Vec<RealField> {
        (0..grid.dim())
            .map(|a| RealField::from_fn(*grid, |p| self.gradient(p)[a]))
            .collect()
    }
}

impl AffineFlow {
    /// Tabulates the flow on `[0, t_final]` with step `h` and finds where
    /// `J = det A` first drops to `j_min`.
    pub fn new(potential: &PotentialSpec, dim: usize, t_final: f64, h: f64, j_min: f64) -> Result<Self> {
        potential.validate(dim)?;
        let v = potential.quadratic_form(dim);
        let steps = (t_final / h).ceil() as usize;
        let mut states = vec![AffineState::initial(dim)];
        let mut horizon = f64::INFINITY;
        for k in 0..steps {
            let next = states[k].rk4(&v, h);
            let j = det(&next.a, dim);
            if j <= j_min && horizon.is_infinite() {
                let j0 = det(&states[k].a, dim);
                horizon = (k as f64 + ((j0 - j_min) / (j0 - j)).clamp(0.0, 1.0)) * h;
            }
            states.push(next);
        }
        Ok(Self { dim, v, h, states, horizon })
    }

    pub fn is_trivial(&self) -> bool {
        self.v.is_zero()
    }

    /// First time `J <= j_min` (infinite if not reached within the table).
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn at(&self, t: f64) -> Result<AffineSnapshot> {
        let last = (self.states.len() - 1) as f64 * self.h;
        if t < 0.0 || t > last * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!("flow tabulated on [0, {last}], asked t = {t}")));
        }
        if t > self.horizon {
            return Err(Error::PastHorizon { requested: t, horizon: self.horizon });
        }
        let k = ((t / self.h).floor() as usize).min(self.states.len() - 1);
        let rest = t - k as f64 * self.h;
        let st = if rest > 0.0 { self.states[k].rk4(&self.v, rest) } else { self.states[k] };
        let d = self.dim;
        let a_inv = inverse(&st.a, d);
        Ok(AffineSnapshot {
            dim: d,
            hess: matmul(&st.b, &a_inv, d),
            c: st.c,
            e: st.e,
            a_inv,
            pm: st.pm,
            pv: st.pv,
            s: st.s,
            jac: det(&st.a, d),
        })
    }
}
