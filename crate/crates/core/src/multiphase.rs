//! Sums of disjointly supported WKB states: initial data with cut-off phases,
//! a numerical estimate of the common existence time, and the sweep comparing
//! the evolution of the sum with the sum of the evolutions.

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::convergence::{ConvergenceReport, SweepEntry};
use crate::error::{Error, Result};
use crate::field::{bump, bump_profile, mass_outside, ComplexField, RealField, SupportBox};
use crate::flow::{AffineFlow, PhaseFunction, DEFAULT_J_MIN};
use crate::grid::GridSpec;
use crate::nls::{evolve_lockstep, NlsParams, PotentialSpec};
use crate::norms::{linf, mass};
use crate::spectral::spectral_gradient_real;
use crate::wkb::{solve_limit_system, MolOptions};

/// Safety factor applied to the detected existence time.
pub const T_STAR_SAFETY: f64 = 0.8;
/// Minimum number of sample times in `(0, T*]`.
pub const MIN_SAMPLES: usize = 20;

/// Phase carried by one mode.
#[derive(Clone)]
pub enum ModePhase {
    /// `k·x`. Stored relative to the mode center: the constant `k·c` goes
    /// into the amplitude as a unimodular factor, which keeps the cut-off
    /// phase small on the ramp.
    Linear(Vec<f64>),
    /// Any closed-form phase.
    Smooth(Arc<dyn PhaseFunction + Send + Sync>),
}

impl ModePhase {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ModePhase::Linear(k) => k.iter().zip(x).map(|(k, x)| k * x).sum(),
            ModePhase::Smooth(f) => f.value(x),
        }
    }
}

impl fmt::Debug for ModePhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModePhase::Linear(k) => f.debug_tuple("Linear").field(k).finish(),
            ModePhase::Smooth(_) => f.write_str("Smooth(..)"),
        }
    }
}

/// Amplitude `height * bump((x - center) / radius)` with its phase.
#[derive(Debug, Clone)]
pub struct ModeSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    pub height: f64,
    pub phase: ModePhase,
    /// Width of the ramp of the cutoff beyond the amplitude support.
    pub cutoff_margin: f64,
}

impl ModeSpec {
    pub fn linear(center: &[f64], radius: f64, height: f64, k: &[f64], cutoff_margin: f64) -> Self {
        Self {
            center: center.to_vec(),
            radius,
            height,
            phase: ModePhase::Linear(k.to_vec()),
            cutoff_margin,
        }
    }

    pub fn support(&self) -> SupportBox {
        SupportBox::cube(&self.center, self.radius).expect("validated radius")
    }

    pub fn cutoff_support(&self) -> SupportBox {
        self.support().dilate(self.cutoff_margin)
    }

    pub fn amplitude(&self, grid: &GridSpec) -> Result<RealField> {
        bump(grid, &self.center, self.radius, self.height)
    }

    fn validate(&self, grid: &GridSpec, index: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(format!("mode {index}: {m}")));
        if self.center.len() != grid.dim() {
            return bad(format!("center has {} components, grid is {}-dimensional", self.center.len(), grid.dim()));
        }
        if !(self.radius > 0.0 && self.height.is_finite()) {
            return bad("radius must be positive and height finite".into());
        }
        if let ModePhase::Linear(k) = &self.phase {
            if k.len() != grid.dim() {
                return bad(format!("wavevector has {} components", k.len()));
            }
        }
        if self.cutoff_margin < 4.0 * grid.dx() {
            return bad(format!("cutoff margin {} is below 4 dx = {}", self.cutoff_margin, 4.0 * grid.dx()));
        }
        self.cutoff_support().check_inside(grid, 0.0)
    }
}

/// Smallest per-axis gap between two boxes (negative when they overlap on all axes).
fn box_gap(a: &SupportBox, b: &SupportBox) -> f64 {
    (0..a.dim())
        .map(|i| (a.center()[i] - b.center()[i]).abs() - a.radius()[i] - b.radius()[i])
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone)]
pub struct MultiphaseConfig {
    /// Grid for the largest eps; finer grids are derived from it.
    pub grid: GridSpec,
    pub modes: Vec<ModeSpec>,
    /// Strictly decreasing.
    pub eps_list: Vec<f64>,
    pub kappa: u32,
    pub potential: PotentialSpec,
    pub t_request: f64,
    /// Skips the estimator and uses this horizon as is.
    pub fixed_horizon: Option<f64>,
    /// Split-step size as a multiple of eps.
    pub dt_over_eps: f64,
    pub samples: usize,
    /// Refine the grid proportionally to `1/eps`.
    pub scale_grid: bool,
}

impl MultiphaseConfig {
    pub fn new(grid: GridSpec, modes: Vec<ModeSpec>, eps_list: Vec<f64>, kappa: u32, t_request: f64) -> Self {
        Self {
            grid,
            modes,
            eps_list,
            kappa,
            potential: PotentialSpec::Zero,
            t_request,
            fixed_horizon: None,
            dt_over_eps: 0.1,
            samples: MIN_SAMPLES,
            scale_grid: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.modes.is_empty() {
            return bad("at least one mode is required".into());
        }
        if self.eps_list.is_empty() || self.eps_list.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return bad("eps values must lie in (0, 1]".into());
        }
        if self.eps_list.windows(2).any(|w| w[0] <= w[1]) {
            return bad("eps list must be strictly decreasing".into());
        }
        if self.kappa > 1 {
            return bad(format!("kappa must be 0 or 1, got {}", self.kappa));
        }
        if !(self.t_request > 0.0) || self.fixed_horizon.is_some_and(|t| !(t > 0.0)) {
            return bad("horizon must be positive".into());
        }
        if !(self.dt_over_eps > 0.0) {
            return bad("dt_over_eps must be positive".into());
        }
        self.potential.validate(self.grid.dim())?;
        for (i, m) in self.modes.iter().enumerate() {
            m.validate(&self.grid, i)?;
        }
        for i in 0..self.modes.len() {
            for j in i + 1..self.modes.len() {
                let (a, b) = (&self.modes[i], &self.modes[j]);
                if box_gap(&a.support(), &b.support()) < a.cutoff_margin + b.cutoff_margin {
                    return Err(Error::OverlappingModes { first: i, second: j });
                }
            }
        }
        for &eps in &self.eps_list {
            let g = self.grid_for(eps)?;
            build_initial_data(self, eps, &g)?;
        }
        Ok(())
    }

    /// Grid used at `eps`: the base grid refined by `eps_max / eps` (rounded
    /// up to a power of two) and never coarser than the resolution rule allows.
    pub fn grid_for(&self, eps: f64) -> Result<GridSpec> {
        let mut n = self.grid.n();
        if self.scale_grid {
            let factor = (self.eps_list[0] / eps).max(1.0);
            n = ((n as f64 * factor).round() as usize).next_power_of_two();
        }
        let phi_max = amplitude_phase_gradient(self, &self.grid)?;
        n = n.max(GridSpec::min_n_for(eps, phi_max, self.grid.half_len()));
        self.grid.with_n(n)
    }

    pub fn dt_for(&self, eps: f64) -> f64 {
        self.dt_over_eps * eps
    }
}

/// Smooth plateau `1` on the amplitude support, `0` beyond the margin.
pub fn make_cutoff(mode: &ModeSpec, grid: &GridSpec) -> Result<RealField> {
    mode.validate(grid, 0)?;
    let d = grid.dim();
    let (r, m) = (mode.radius, mode.cutoff_margin);
    Ok(RealField::from_fn(*grid, |x| {
        let dist = (0..d).map(|a| (x[a] - mode.center[a]).powi(2)).sum::<f64>().sqrt();
        1.0 - smooth_step((dist - r) / m)
    }))
}

const CDF_PANELS: usize = 4096;

fn ramp_density(s: f64) -> f64 {
    // the canonical bump rescaled to [0, 1]
    bump_profile((2.0 * s - 1.0).powi(2))
}

fn cdf_table() -> &'static (Vec<f64>, f64) {
    static TABLE: OnceLock<(Vec<f64>, f64)> = OnceLock::new();
    TABLE.get_or_init(|| {
        // cumulative Simpson on half-panels; the integrand is smooth on [0, 1]
        let h = 1.0 / CDF_PANELS as f64;
        let mut cum = vec![0.0; CDF_PANELS + 1];
        for i in 0..CDF_PANELS {
            let a = i as f64 * h;
            cum[i + 1] =
                cum[i] + h / 6.0 * (ramp_density(a) + 4.0 * ramp_density(a + 0.5 * h) + ramp_density(a + h));
        }
        let total = cum[CDF_PANELS];
        (cum.into_iter().map(|c| c / total).collect(), total)
    })
}

/// Distribution function of the bump on `[0, 1]`: `0` for `s <= 0`, `1` for
/// `s >= 1`, smooth and monotone in between. Cubic Hermite interpolation of a
/// tabulated integral with exact end slopes.
pub fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let (cum, total) = cdf_table();
    let h = 1.0 / CDF_PANELS as f64;
    let i = ((s / h) as usize).min(CDF_PANELS - 1);
    let (x0, x1) = (i as f64 * h, (i + 1) as f64 * h);
    let t = (s - x0) / h;
    let (y0, y1) = (cum[i], cum[i + 1]);
    let (d0, d1) = (ramp_density(x0) / total * h, ramp_density(x1) / total * h);
    let (t2, t3) = (t * t, t * t * t);
    ((2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * d1)
        .clamp(0.0, 1.0)
}

/// Per-mode pieces of the initial data.
#[derive(Debug, Clone)]
pub struct ModeData {
    pub alpha: RealField,
    /// `chi_j (phi_j - k_j·c_j)` for linear phases, `chi_j phi_j` otherwise.
    pub phase: RealField,
    pub u0: ComplexField,
}

#[derive(Debug, Clone)]
pub struct InitialData {
    pub u0: ComplexField,
    pub phi0: RealField,
    pub a0: ComplexField,
    pub modes: Vec<ModeData>,
}

impl ModeSpec {
    /// Constant split off a linear phase, `k·center`.
    pub fn phase_offset(&self) -> f64 {
        match &self.phase {
            ModePhase::Linear(k) => k.iter().zip(&self.center).map(|(k, c)| k * c).sum(),
            ModePhase::Smooth(_) => 0.0,
        }
    }
}

/// `(alpha_j, chi_j (phi_j - offset_j))`.
fn mode_fields(mode: &ModeSpec, grid: &GridSpec) -> Result<(RealField, RealField)> {
    let alpha = mode.amplitude(grid)?;
    let chi = make_cutoff(mode, grid)?;
    let offset = mode.phase_offset();
    let phase = RealField::from_fn(*grid, |x| mode.phase.value(&x[..grid.dim()]) - offset);
    let cut = phase.zip_with(&chi, |p, c| if c == 0.0 { 0.0 } else { p * c })?;
    Ok((alpha, cut))
}

/// Largest `|∇phi0|` where the amplitude does not vanish.
fn amplitude_phase_gradient(config: &MultiphaseConfig, grid: &GridSpec) -> Result<f64> {
    let mut best = 0.0f64;
    for m in &config.modes {
        let (alpha, phase) = mode_fields(m, grid)?;
        let grads = spectral_gradient_real(&phase);
        for i in 0..grid.len() {
            if alpha.data()[i] != 0.0 {
                let s: f64 = grads.iter().map(|g| g.data()[i].powi(2)).sum();
                best = best.max(s.sqrt());
            }
        }
    }
    Ok(best)
}

/// `u0 = a0 exp(i phi0 / eps)` with `a0 = Σ alpha_j`, `phi0 = Σ chi_j phi_j`.
///
/// Constants split off linear phases are returned inside `a0` as unimodular
/// factors, so that `u0 = alpha_j exp(i k_j·x / eps)` on each support. The
/// resolution rule is applied to `∇phi0` on the amplitude support, where
/// the oscillation of `u0` lives.
pub fn build_initial_data(config: &MultiphaseConfig, eps: f64, grid: &GridSpec) -> Result<InitialData> {
    if grid.dim() != config.grid.dim() || grid.half_len() != config.grid.half_len() {
        return Err(Error::GridMismatch);
    }
    grid.check_resolution(eps, amplitude_phase_gradient(config, grid)?)?;
    let mut phi0 = RealField::zeros(*grid);
    let mut a0 = ComplexField::zeros(*grid);
    let mut modes = Vec::with_capacity(config.modes.len());
    for m in &config.modes {
        let (alpha, phase) = mode_fields(m, grid)?;
        let amp = alpha.to_complex().scale_complex(Complex64::from_polar(1.0, m.phase_offset() / eps));
        phi0 = phi0.add(&phase)?;
        a0 = a0.add(&amp)?;
        let u0 = wkb_state(&amp, &phase, eps)?;
        modes.push(ModeData { alpha, phase, u0 });
    }
    let u0 = wkb_state(&a0, &phi0, eps)?;
    Ok(InitialData { u0, phi0, a0, modes })
}

fn wkb_state(a: &ComplexField, phi: &RealField, eps: f64) -> Result<ComplexField> {
    let data = a.data().iter().zip(phi.data()).map(|(a, p)| a * Complex64::from_polar(1.0, p / eps)).collect();
    ComplexField::from_vec(*a.grid(), data)
}

/// Existence time estimate with the individual run results.
#[derive(Debug, Clone, PartialEq)]
pub struct TStarEstimate {
    pub t_star: f64,
    /// Flow horizon of the potential (infinite without potential).
    pub horizon: f64,
    /// `(label, detector time or None if it never tripped)`.
    pub runs: Vec<(String, Option<f64>)>,
}

/// Runs the limit system for the combined data and for each mode on the base
/// grid and returns `0.8 * min(detector times, flow horizon, T_request)`.
/// Runs whose amplitude vanishes identically are skipped.
pub fn estimate_t_star(config: &MultiphaseConfig) -> Result<TStarEstimate> {
    let grid = config.grid;
    let horizon = if config.potential.is_zero() {
        f64::INFINITY
    } else {
        AffineFlow::new(&config.potential, grid.dim(), config.t_request, 1e-3, DEFAULT_J_MIN)?.horizon()
    };
    let t_end = config.t_request.min(horizon);
    let mut inputs: Vec<(String, RealField, RealField)> = Vec::new();
    let mut phi0 = RealField::zeros(grid);
    let mut a0 = RealField::zeros(grid);
    for (j, m) in config.modes.iter().enumerate() {
        let (alpha, phase) = mode_fields(m, &grid)?;
        phi0 = phi0.add(&phase)?;
        a0 = a0.add(&alpha)?;
        inputs.push((format!("mode{j}"), phase, alpha));
    }
    if config.modes.len() > 1 {
        inputs.insert(0, ("combined".into(), phi0, a0));
    }
    let runs: Vec<(String, Option<f64>)> = inputs
        .into_par_iter()
        .filter(|(_, _, a)| a.data().iter().any(|v| *v != 0.0))
        .map(|(label, phi, a)| {
            let opts = MolOptions::new(limit_dt(&phi, &a, &config.potential, t_end));
            let r = match solve_limit_system(&phi, &a.to_complex(), &config.potential, &[t_end], opts) {
                Ok(_) => Ok(None),
                Err(Error::BlowUp { time, .. }) | Err(Error::NonFinite { time }) => Ok(Some(time)),
                Err(e) => Err(e),
            };
            r.map(|t| (label, t))
        })
        .collect::<Result<_>>()?;
    let detected = runs.iter().filter_map(|r| r.1).fold(f64::INFINITY, f64::min);
    let t_star = T_STAR_SAFETY * t_end.min(detected);
    log::info!("T* estimate {t_star:.4} (horizon {horizon:.4}, detector {detected:.4})");
    Ok(TStarEstimate { t_star, horizon, runs })
}

/// Step for the limit system: half the advective RK4 limit for the initial
/// speed (velocity plus sound speed plus drift), at most `t_end / 50`.
fn limit_dt(phi: &RealField, a: &RealField, potential: &PotentialSpec, t_end: f64) -> f64 {
    let grid = *phi.grid();
    let grads = spectral_gradient_real(phi);
    let v = (0..grid.len())
        .map(|i| grads.iter().map(|g| g.data()[i].powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let c = 2f64.sqrt() * a.data().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let drift = potential.sup_on_grid(&grid).sqrt() * 2.0 * t_end;
    let speed = 2.0 * (v + c + drift) + 1.0;
    (0.5 * MolOptions::stable_dt(&grid, 0.0, speed)).min(t_end / 50.0)
}

/// Uniform samples `k T / m`, `k = 0..=m`, with `m >= 20`.
pub fn sample_times(t: f64, samples: usize) -> Vec<f64> {
    let m = samples.max(MIN_SAMPLES);
    (0..=m).map(|k| t * k as f64 / m as f64).collect()
}

/// Errors `max_t ||u(t) - Σ u_j(t)||` over the eps sweep, with a log-log fit.
pub fn superposition_experiment(config: &MultiphaseConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let t_star = match config.fixed_horizon {
        Some(t) => t,
        None => estimate_t_star(config)?.t_star,
    };
    if !(t_star > 0.0) {
        return Err(Error::InvalidParameter("estimated existence time is zero".into()));
    }
    let times = sample_times(t_star, config.samples);
    let entries: Vec<SweepEntry> = config
        .eps_list
        .par_iter()
        .map(|&eps| sweep_entry(config, eps, t_star, &times))
        .collect::<Result<_>>()?;
    Ok(ConvergenceReport::from_entries(entries))
}

fn sweep_entry(config: &MultiphaseConfig, eps: f64, t_star: f64, times: &[f64]) -> Result<SweepEntry> {
    let grid = config.grid_for(eps)?;
    let dt = config.dt_for(eps).min(t_star);
    let mut entry = SweepEntry {
        eps,
        e_l2: 0.0,
        e_linf: 0.0,
        t_star,
        n_grid: grid.n(),
        dt,
        mass_drift: 0.0,
        failure: None,
    };
    let data = build_initial_data(config, eps, &grid)?;
    let mut inputs = vec![data.u0];
    inputs.extend(data.modes.into_iter().map(|m| m.u0));
    let masses: Vec<f64> = inputs.iter().map(mass).collect();
    let params = NlsParams {
        eps,
        kappa: config.kappa,
        potential: config.potential.clone(),
        dt,
        t_final: t_star,
        instability_factor: 10.0,
    };
    let result = evolve_lockstep(&inputs, &params, times, |_, us| {
        let mut diff = us[0].clone();
        for u in &us[1..] {
            diff = diff.sub(u)?;
        }
        entry.e_l2 = entry.e_l2.max(mass(&diff).sqrt());
        entry.e_linf = entry.e_linf.max(linf(&diff));
        for (u, m0) in us.iter().zip(&masses) {
            if *m0 > 0.0 {
                entry.mass_drift = entry.mass_drift.max((mass(u) / m0 - 1.0).abs());
            }
        }
        Ok(())
    });
    if let Err(e) = result {
        match e {
            Error::Instability { .. } | Error::NonFinite { .. } => {
                log::warn!("eps = {eps}: {e}");
                entry.e_l2 = f64::NAN;
                entry.e_linf = f64::NAN;
                entry.failure = Some(e.to_string());
            }
            other => return Err(other),
        }
    }
    Ok(entry)
}

/// Largest fraction of mode `j`'s amplitude mass outside its cutoff support,
/// over the limit-system runs of each mode up to `t`.
pub fn mode_support_leak(config: &MultiphaseConfig, t: f64) -> Result<f64> {
    let grid = config.grid;
    let mut worst = 0.0f64;
    for m in &config.modes {
        let (alpha, phase) = mode_fields(m, &grid)?;
        if alpha.data().iter().all(|v| *v == 0.0) {
            continue;
        }
        let opts = MolOptions::new(limit_dt(&phase, &alpha, &config.potential, t));
        let s = solve_limit_system(&phase, &alpha.to_complex(), &config.potential, &sample_times(t, 4), opts)?;
        for st in &s.states {
            worst = worst.max(mass_outside(&st.amp, &m.cutoff_support()));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::BumpPhase;
    use crate::grid::make_grid;

    fn two_modes(grid: GridSpec) -> MultiphaseConfig {
        MultiphaseConfig::new(
            grid,
            vec![
                ModeSpec::linear(&[-2.0], 0.5, 1.0, &[1.0], 1.0),
                ModeSpec::linear(&[2.0], 0.5, 1.0, &[-1.0], 1.0),
            ],
            vec![1.0 / 16.0, 1.0 / 32.0],
            0,
            0.5,
        )
    }

    #[test]
    fn smooth_step_shape() {
        assert_eq!(smooth_step(-0.1), 0.0);
        assert_eq!(smooth_step(0.0), 0.0);
        assert_eq!(smooth_step(1.0), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
        let mut prev = 0.0;
        for k in 1..100 {
            let v = smooth_step(k as f64 / 100.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn cutoff_is_one_on_support_and_disjoint() {
        let g = make_grid(1, 1024, 6.0).unwrap();
        let c = two_modes(g);
        let chi0 = make_cutoff(&c.modes[0], &g).unwrap();
        let chi1 = make_cutoff(&c.modes[1], &g).unwrap();
        let alpha = c.modes[0].amplitude(&g).unwrap();
        for i in 0..g.len() {
            if alpha.data()[i] != 0.0 {
                assert_eq!(chi0.data()[i], 1.0);
            }
            assert_eq!(chi0.data()[i] * chi1.data()[i], 0.0);
            assert_eq!(chi0.data()[i] * alpha.data()[i], alpha.data()[i]);
        }
    }

    #[test]
    fn overlapping_modes_are_rejected() {
        let g = make_grid(1, 1024, 6.0).unwrap();
        let mut c = two_modes(g);
        c.modes[1].center = vec![-0.5];
        assert!(matches!(c.validate(), Err(Error::OverlappingModes { first: 0, second: 1 })));
        let mut c = two_modes(g);
        c.modes[0].cutoff_margin = 0.01;
        assert!(c.validate().is_err());
    }

    #[test]
    fn initial_data_structure() {
        let g = make_grid(1, 2048, 6.0).unwrap();
        let c = two_modes(g);
        let eps = 1.0 / 16.0;
        let d = build_initial_data(&c, eps, &g).unwrap();
        let total = d.modes.iter().fold(ComplexField::zeros(g), |acc, m| acc.add(&m.u0).unwrap());
        assert!(linf(&total.sub(&d.u0).unwrap()) <= 1e-15);
        let m1 = mass(&d.modes[0].alpha.to_complex());
        let m2 = mass(&d.modes[1].alpha.to_complex());
        assert!((mass(&d.u0) - m1 - m2).abs() <= 1e-14);
        for i in 0..g.len() {
            let a = d.modes[0].alpha.data()[i];
            if a != 0.0 {
                let expect = Complex64::from_polar(a, g.coord(i) / eps);
                assert!((d.u0.data()[i] - expect).norm() <= 1e-12);
            }
        }
        // too coarse for a tiny eps
        assert!(matches!(build_initial_data(&c, 1e-3, &g), Err(Error::Underresolved { .. })));
    }

    #[test]
    fn grids_scale_with_eps() {
        let g = make_grid(1, 1024, 6.0).unwrap();
        let c = two_modes(g);
        assert_eq!(c.grid_for(1.0 / 16.0).unwrap().n(), 1024);
        assert_eq!(c.grid_for(1.0 / 32.0).unwrap().n(), 2048);
    }

    #[test]
    fn zero_amplitudes_give_the_requested_horizon() {
        let g = make_grid(1, 512, 6.0).unwrap();
        let mut c = two_modes(g);
        for m in &mut c.modes {
            m.height = 0.0;
        }
        let est = estimate_t_star(&c).unwrap();
        assert!(est.runs.is_empty());
        assert!((est.t_star - 0.8 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn small_bump_does_not_trip_the_detector() {
        let g = make_grid(1, 512, 6.0).unwrap();
        let c = MultiphaseConfig::new(g, vec![ModeSpec::linear(&[0.0], 0.5, 0.3, &[0.25], 2.0)], vec![0.0625], 0, 0.5);
        let est = estimate_t_star(&c).unwrap();
        assert!((est.t_star - 0.4).abs() < 1e-15, "{est:?}");
    }

    #[test]
    fn large_bump_trips_the_detector() {
        let g = make_grid(1, 512, 6.0).unwrap();
        let phase = ModePhase::Smooth(Arc::new(BumpPhase { center: vec![0.0], radius: 1.0, height: 1.0 }));
        let c = MultiphaseConfig::new(
            g,
            vec![ModeSpec { center: vec![0.0], radius: 1.0, height: 5.0, phase, cutoff_margin: 1.0 }],
            vec![0.0625],
            0,
            2.0,
        );
        let est = estimate_t_star(&c).unwrap();
        assert!(est.t_star < 2.0 && est.runs[0].1.is_some(), "{est:?}");
    }

    #[test]
    fn single_mode_experiment_is_self_comparing() {
        let g = make_grid(1, 512, 6.0).unwrap();
        let mut c = MultiphaseConfig::new(
            g,
            vec![ModeSpec::linear(&[0.0], 1.0, 1.0, &[0.5], 1.0)],
            vec![0.125, 0.0625, 0.03125],
            0,
            0.2,
        );
        c.fixed_horizon = Some(0.1);
        let r = superposition_experiment(&c).unwrap();
        assert!(r.max_error() <= 1e-12);
        assert!(r.max_mass_drift() <= 1e-10);
    }
}
