//! Split-step integration of `i eps u_t + eps^2/2 Δu = V u + eps^kappa |u|^2 u`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::grid::{GridSpec, Point};
use crate::norms;
use crate::spectral::Spectral;

/// External potentials of at most quadratic growth.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    Zero,
    /// `V(x) = E·x`.
    Linear { e: Vec<f64> },
    /// `V(x) = ±omega^2 |x|^2 / 2`; `attractive = false` gives the minus sign.
    Harmonic { omega: f64, attractive: bool },
    /// `V(x) = x·Qx/2 + b·x + c` with symmetric `Q` (row-major `d x d`).
    Quadratic { q: Vec<f64>, b: Vec<f64>, c: f64 },
}

/// Quadratic normal form `(Q, b, c)` shared by every potential variant.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub dim: usize,
    pub q: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
}

impl QuadraticForm {
    pub fn value(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut v = self.c;
        for i in 0..d {
            v += self.b[i] * x[i];
            for j in 0..d {
                v += 0.5 * x[i] * self.q[i * d + j] * x[j];
            }
        }
        v
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d).map(|i| self.b[i] + (0..d).map(|j| self.q[i * d + j] * x[j]).sum::<f64>()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.c == 0.0 && self.b.iter().all(|&v| v == 0.0) && self.q.iter().all(|&v| v == 0.0)
    }
}

impl PotentialSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match self {
            PotentialSpec::Zero => Ok(()),
            PotentialSpec::Linear { e } if e.len() != dim => {
                bad(format!("linear potential needs {dim} components, got {}", e.len()))
            }
            PotentialSpec::Harmonic { omega, .. } if !(omega.is_finite() && *omega > 0.0) => {
                bad(format!("harmonic frequency must be positive, got {omega}"))
            }
            PotentialSpec::Quadratic { q, b, c } => {
                if q.len() != dim * dim || b.len() != dim || !c.is_finite() {
                    return bad(format!("quadratic potential needs a {dim}x{dim} matrix and {dim}-vector"));
                }
                for i in 0..dim {
                    for j in 0..dim {
                        if (q[i * dim + j] - q[j * dim + i]).abs() > 1e-14 * (1.0 + q[i * dim + j].abs()) {
                            return bad("quadratic potential matrix must be symmetric".into());
                        }
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn quadratic_form(&self, dim: usize) -> QuadraticForm {
        let mut q = vec![0.0; dim * dim];
        let mut b = vec![0.0; dim];
        let mut c = 0.0;
        match self {
            PotentialSpec::Zero => {}
            PotentialSpec::Linear { e } => b.copy_from_slice(&e[..dim]),
            PotentialSpec::Harmonic { omega, attractive } => {
                let s = if *attractive { 1.0 } else { -1.0 };
                for i in 0..dim {
                    q[i * dim + i] = s * omega * omega;
                }
            }
            PotentialSpec::Quadratic { q: qq, b: bb, c: cc } => {
                q.copy_from_slice(qq);
                b.copy_from_slice(bb);
                c = *cc;
            }
        }
        QuadraticForm { dim, q, b, c }
    }

    pub fn value(&self, x: &[f64], dim: usize) -> f64 {
        match self {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::Linear { e } => (0..dim).map(|i| e[i] * x[i]).sum(),
            PotentialSpec::Harmonic { omega, attractive } => {
                let r2: f64 = x[..dim].iter().map(|v| v * v).sum();
                let s = if *attractive { 1.0 } else { -1.0 };
                s * 0.5 * omega * omega * r2
            }
            PotentialSpec::Quadratic { .. } => self.quadratic_form(dim).value(x),
        }
    }

    pub fn gradient(&self, x: &[f64], dim: usize) -> Vec<f64> {
        match self {
            PotentialSpec::Zero => vec![0.0; dim],
            PotentialSpec::Linear { e } => e[..dim].to_vec(),
            PotentialSpec::Harmonic { omega, attractive } => {
                let s = if *attractive { 1.0 } else { -1.0 };
                x[..dim].iter().map(|v| s * omega * omega * v).collect()
            }
            PotentialSpec::Quadratic { .. } => self.quadratic_form(dim).gradient(x),
        }
    }

    /// Constant Hessian, row-major.
    pub fn hessian(&self, dim: usize) -> Vec<f64> {
        self.quadratic_form(dim).q
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, PotentialSpec::Zero)
    }

    pub fn sample(&self, grid: &GridSpec) -> RealField {
        let d = grid.dim();
        RealField::from_fn(*grid, |p: &Point| self.value(p, d))
    }

    /// `max |V|` over the grid points.
    pub fn sup_on_grid(&self, grid: &GridSpec) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        self.sample(grid).data().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlsParams {
    pub eps: f64,
    /// Coupling exponent: the nonlinearity is `eps^kappa |u|^2 u`.
    pub kappa: u32,
    pub potential: PotentialSpec,
    pub dt: f64,
    pub t_final: f64,
    /// Largest allowed one-step growth of the sup norm.
    pub instability_factor: f64,
}

impl NlsParams {
    /// Parameters with the default step `min(0.1 eps, 0.5 eps / max|V|)`.
    pub fn new(eps: f64, kappa: u32, potential: PotentialSpec, t_final: f64, grid: &GridSpec) -> Self {
        let dt = default_dt(eps, potential.sup_on_grid(grid)).min(t_final);
        Self { eps, kappa, potential, dt, t_final, instability_factor: 10.0 }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn coupling(&self) -> f64 {
        self.eps.powi(self.kappa as i32)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return bad(format!("eps must lie in (0, 1], got {}", self.eps));
        }
        if self.kappa > 1 {
            return bad(format!("kappa must be 0 or 1, got {}", self.kappa));
        }
        if !(self.dt > 0.0 && self.t_final > 0.0 && self.dt <= self.t_final) {
            return bad(format!("need 0 < dt <= T, got dt = {}, T = {}", self.dt, self.t_final));
        }
        if !(self.instability_factor > 1.0) {
            return bad("instability factor must exceed 1".into());
        }
        self.potential.validate(dim)
    }
}

pub fn default_dt(eps: f64, v_sup: f64) -> f64 {
    if v_sup > 0.0 {
        (0.1 * eps).min(0.5 * eps / v_sup)
    } else {
        0.1 * eps
    }
}

/// Strang stepper with cached potential samples and kinetic multipliers.
pub struct SplitStepper {
    sp: std::sync::Arc<Spectral>,
    eps: f64,
    coupling: f64,
    potential: Option<Vec<f64>>,
    kinetic: Vec<Complex64>,
    kinetic_dt: f64,
}

impl SplitStepper {
    pub fn new(grid: &GridSpec, params: &NlsParams) -> Self {
        let potential = (!params.potential.is_zero()).then(|| params.potential.sample(grid).into_vec());
        Self {
            sp: Spectral::for_grid(grid),
            eps: params.eps,
            coupling: params.coupling(),
            potential,
            kinetic: Vec::new(),
            kinetic_dt: f64::NAN,
        }
    }

    fn multiplicative(&self, u: &mut [Complex64], h: f64) {
        let (eps, g) = (self.eps, self.coupling);
        let scale = -h / eps;
        match &self.potential {
            Some(v) => u.par_iter_mut().zip(v.par_iter()).for_each(|(z, &vx)| {
                *z *= Complex64::from_polar(1.0, scale * (vx + g * z.norm_sqr()));
            }),
            None => u.par_iter_mut().for_each(|z| {
                *z *= Complex64::from_polar(1.0, scale * g * z.norm_sqr());
            }),
        }
    }

    fn kinetic_factors(&mut self, dt: f64) {
        if self.kinetic_dt != dt {
            let eps = self.eps;
            self.kinetic =
                self.sp.ksq().iter().map(|&k2| Complex64::from_polar(1.0, -0.5 * eps * dt * k2)).collect();
            self.kinetic_dt = dt;
        }
    }

    /// One Strang step of size `dt` (negative `dt` runs the scheme backwards).
    pub fn step(&mut self, u: &mut [Complex64], dt: f64) {
        self.multiplicative(u, 0.5 * dt);
        self.kinetic_factors(dt);
        self.sp.forward(u);
        u.par_iter_mut().zip(self.kinetic.par_iter()).for_each(|(z, k)| *z *= k);
        self.sp.inverse(u);
        self.multiplicative(u, 0.5 * dt);
    }
}

fn sup(u: &[Complex64]) -> f64 {
    u.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max).sqrt()
}

/// One guarded Strang step.
pub fn strang_step(u: &ComplexField, p: &NlsParams) -> Result<ComplexField> {
    let mut stepper = SplitStepper::new(u.grid(), p);
    let mut data = u.data().to_vec();
    let before = sup(&data);
    stepper.step(&mut data, p.dt);
    check_step(&data, before, p.instability_factor, p.dt)?;
    ComplexField::from_vec(*u.grid(), data)
}

fn check_step(u: &[Complex64], before: f64, factor: f64, time: f64) -> Result<()> {
    let after = sup(u);
    if !after.is_finite() {
        return Err(Error::NonFinite { time });
    }
    if before > 0.0 && after > factor * before {
        return Err(Error::Instability { time, growth: after / before });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub field: ComplexField,
    pub mass: f64,
    pub energy: f64,
}

/// Steps from `t0` to `t1` with at most `dt` per step, landing exactly on `t1`.
pub fn steps_between(t0: f64, t1: f64, dt: f64) -> (usize, f64) {
    let gap = t1 - t0;
    if gap <= 0.0 {
        return (0, 0.0);
    }
    let n = ((gap / dt) - 1e-9).ceil().max(1.0) as usize;
    (n, gap / n as f64)
}

/// Runs the solver and hands every sample to `visit` without storing it.
pub fn evolve_visit(
    u0: &ComplexField,
    p: &NlsParams,
    sample_times: &[f64],
    mut visit: impl FnMut(f64, &ComplexField) -> Result<()>,
) -> Result<()> {
    p.validate(u0.grid().dim())?;
    check_times(sample_times, p.t_final)?;
    let mut stepper = SplitStepper::new(u0.grid(), p);
    let mut u = u0.clone();
    let mut t = 0.0;
    for &ts in sample_times {
        let (steps, h) = steps_between(t, ts, p.dt);
        for k in 0..steps {
            let before = sup(u.data());
            stepper.step(u.data_mut(), h);
            check_step(u.data(), before, p.instability_factor, t + (k + 1) as f64 * h)?;
        }
        t = ts;
        visit(t, &u)?;
    }
    Ok(())
}

/// Evolves several initial data with identical parameters in lockstep and
/// hands all of them to `visit` at every sample time.
pub fn evolve_lockstep(
    u0s: &[ComplexField],
    p: &NlsParams,
    sample_times: &[f64],
    mut visit: impl FnMut(f64, &[ComplexField]) -> Result<()>,
) -> Result<()> {
    let grid = match u0s.first() {
        Some(u) => *u.grid(),
        None => return Ok(()),
    };
    if u0s.iter().any(|u| *u.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    p.validate(grid.dim())?;
    check_times(sample_times, p.t_final)?;
    let mut stepper = SplitStepper::new(&grid, p);
    let mut us = u0s.to_vec();
    let mut t = 0.0;
    for &ts in sample_times {
        let (steps, h) = steps_between(t, ts, p.dt);
        for u in us.iter_mut() {
            for k in 0..steps {
                let before = sup(u.data());
                stepper.step(u.data_mut(), h);
                check_step(u.data(), before, p.instability_factor, t + (k + 1) as f64 * h)?;
            }
        }
        t = ts;
        visit(t, &us)?;
    }
    Ok(())
}

fn check_times(times: &[f64], t_final: f64) -> Result<()> {
    let sorted = times.windows(2).all(|w| w[0] <= w[1]);
    let in_range = times.iter().all(|&t| (0.0..=t_final * (1.0 + 1e-12)).contains(&t));
    if !sorted || !in_range {
        return Err(Error::InvalidParameter(format!("sample times must be sorted inside [0, {t_final}]")));
    }
    Ok(())
}

/// Snapshots at `sample_times`, each with its mass and energy.
pub fn evolve(u0: &ComplexField, p: &NlsParams, sample_times: &[f64]) -> Result<Vec<Snapshot>> {
    let mut out = Vec::with_capacity(sample_times.len());
    evolve_visit(u0, p, sample_times, |t, u| {
        out.push(Snapshot { t, field: u.clone(), mass: norms::mass(u), energy: energy(u, p) });
        Ok(())
    })?;
    Ok(out)
}

/// `∫ eps^2/2 |∇u|^2 + V |u|^2 + eps^kappa/2 |u|^4`.
pub fn energy(u: &ComplexField, p: &NlsParams) -> f64 {
    let grid = u.grid();
    let sp = Spectral::for_grid(grid);
    let hat = sp.forward_field(u);
    let kinetic: f64 = hat.iter().zip(sp.ksq()).map(|(c, &k2)| k2 * c.norm_sqr()).sum::<f64>()
        / grid.len() as f64;
    let d = grid.dim();
    let g = p.coupling();
    let potential: f64 = u
        .data()
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let m = z.norm_sqr();
            let v = if p.potential.is_zero() { 0.0 } else { p.potential.value(&grid.point(i), d) };
            v * m + 0.5 * g * m * m
        })
        .sum();
    (0.5 * p.eps * p.eps * kinetic + potential) * grid.cell_volume()
}
