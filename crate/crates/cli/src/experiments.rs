//! Turning a parsed config into validated inputs, and running them.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use wkb_core::convergence::ConvergenceReport;
use wkb_core::flow::{integrate_flow, jacobian_bounds, BumpPhase, PhaseFunction, QuadraticPhase, ZeroPhase};
use wkb_core::io::{save_field, write_real_field};
use wkb_core::multiphase::{
    build_initial_data, sample_times, superposition_experiment, ModeSpec, MultiphaseConfig,
};
use wkb_core::nls::{evolve, NlsParams, PotentialSpec};
use wkb_core::norms::mass;
use wkb_core::resonance::{
    complete_resonances, evolve_resonant_system, format_resonance_table, wnl_counterexample, wnl_residual_sweep,
    WavevectorSet,
};
use wkb_core::wigner::{husimi, moments, wigner_transform, write_ridge_csv, PhaseSpaceGrid, SliceKind, WignerSlice};
use wkb_core::wkb::{accuracy_sweep, MolOptions};
use wkb_core::{bump, ComplexField, Error, GridSpec, RealField};

use crate::config::{Experiment, ExperimentConfig, PhaseConfig, SliceChoice};

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum Failure {
    /// The configuration is invalid; nothing was computed.
    Config(anyhow::Error),
    /// A solver went unstable.
    Instability(anyhow::Error),
    /// Anything else (I/O, unexpected solver errors).
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Instability(_) => 3,
            Failure::Runtime(_) => 1,
        }
    }

    fn from_solver(e: Error) -> Self {
        match e {
            Error::Instability { .. } | Error::NonFinite { .. } | Error::BlowUp { .. } => {
                Failure::Instability(e.into())
            }
            other => Failure::Runtime(other.into()),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (kind, e) = match self {
            Failure::Config(e) => ("config error", e),
            Failure::Instability(e) => ("solver instability", e),
            Failure::Runtime(e) => ("error", e),
        };
        write!(f, "{kind}: {e:#}")
    }
}

/// Validated inputs of one experiment.
pub enum Plan {
    Superposition(MultiphaseConfig),
    Wnl {
        config: MultiphaseConfig,
        /// `(lambda, lower bound)` of the counterexample.
        bound: Option<(f64, f64)>,
        residual_dt: Option<f64>,
    },
    Resonance {
        k: WavevectorSet,
        alphas: Vec<ComplexField>,
        times: Vec<f64>,
        dt: f64,
    },
    Flow {
        potential: PotentialSpec,
        phase: Arc<dyn PhaseFunction + Send>,
        grid: GridSpec,
        times: Vec<f64>,
        dt_ode: f64,
        j_min: f64,
    },
    WkbAccuracy {
        phi0: RealField,
        a0: ComplexField,
        eps: Vec<f64>,
        t: f64,
        samples: usize,
        dt: f64,
    },
    Wigner {
        u0: ComplexField,
        params: NlsParams,
        times: Vec<f64>,
        psg: PhaseSpaceGrid,
        ks: Vec<Vec<f64>>,
        slice: SliceChoice,
        sigma: Option<f64>,
        ridge_radius: f64,
    },
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn grid_of(cfg: &ExperimentConfig) -> Result<GridSpec, Failure> {
    GridSpec::new(cfg.grid.dim, cfg.grid.n, cfg.grid.half_len).map_err(config_err)
}

fn modes_of(cfg: &ExperimentConfig) -> Vec<ModeSpec> {
    cfg.modes.iter().map(|m| ModeSpec::linear(&m.center, m.radius, m.height, &m.k, m.margin)).collect()
}

fn multiphase_of(cfg: &ExperimentConfig, grid: GridSpec) -> Result<MultiphaseConfig, Failure> {
    let sweep = cfg.sweep.as_ref().expect("checked when parsing");
    let mut mc = MultiphaseConfig::new(grid, modes_of(cfg), sweep.eps.clone(), sweep.kappa, sweep.t);
    mc.potential = cfg.potential.spec();
    mc.fixed_horizon = sweep.fixed_horizon.then_some(sweep.t);
    mc.samples = sweep.samples;
    mc.dt_over_eps = sweep.dt_over_eps;
    mc.scale_grid = sweep.scale_grid;
    Ok(mc)
}

/// Every check that does not need a time evolution.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Plan, Failure> {
    let grid = grid_of(cfg)?;
    cfg.potential.spec().validate(grid.dim()).map_err(config_err)?;
    let no_modes = |what: &str| -> Result<(), Failure> {
        if cfg.modes.is_empty() {
            Ok(())
        } else {
            Err(config_err(anyhow!("[[modes]] is not used by {what}")))
        }
    };
    match cfg.experiment {
        Experiment::Superposition => {
            let mc = multiphase_of(cfg, grid)?;
            mc.validate().map_err(config_err)?;
            Ok(Plan::Superposition(mc))
        }
        Experiment::WnlSweep => {
            let wnl = cfg.wnl.as_ref().expect("checked when parsing");
            let sweep = cfg.sweep.as_ref().expect("checked when parsing");
            let (mc, bound) = if wnl.counterexample {
                no_modes("the counterexample")?;
                if sweep.kappa != 1 {
                    return Err(config_err(anyhow!("the counterexample needs kappa = 1")));
                }
                let ce = wnl_counterexample(grid, wnl.height, sweep.t, sweep.eps.clone()).map_err(config_err)?;
                let mut mc = ce.config;
                mc.samples = sweep.samples;
                mc.dt_over_eps = sweep.dt_over_eps;
                mc.scale_grid = sweep.scale_grid;
                (mc, Some((ce.lambda, 2.0 * ce.predicted)))
            } else {
                (multiphase_of(cfg, grid)?, None)
            };
            mc.validate().map_err(config_err)?;
            if wnl.residual && (mc.kappa != 1 || !mc.potential.is_zero()) {
                return Err(config_err(anyhow!("the residual comparison needs kappa = 1 and no potential")));
            }
            if wnl.residual {
                let ks = WavevectorSet::new(mc.modes.iter().map(linear_k).collect()).map_err(config_err)?;
                complete_resonances(&ks).map_err(config_err)?;
            }
            Ok(Plan::Wnl { config: mc, bound, residual_dt: wnl.residual.then_some(wnl.rk_dt) })
        }
        Experiment::ResonanceDemo => {
            let r = cfg.resonance.as_ref().expect("checked when parsing");
            if cfg.modes.is_empty() {
                return Err(config_err(anyhow!("resonance-demo needs at least one [[modes]] entry")));
            }
            if !(r.t > 0.0 && r.dt > 0.0) {
                return Err(config_err(anyhow!("[resonance] t and dt must be positive")));
            }
            let k = WavevectorSet::new(cfg.modes.iter().map(|m| m.k.clone()).collect()).map_err(config_err)?;
            if k.dim() != grid.dim() {
                return Err(config_err(anyhow!("wavevectors are {}-dimensional, grid is {}", k.dim(), grid.dim())));
            }
            complete_resonances(&k).map_err(config_err)?;
            let alphas = cfg
                .modes
                .iter()
                .map(|m| bump(&grid, &m.center, m.radius, m.height).map(|a| a.to_complex()))
                .collect::<wkb_core::Result<_>>()
                .map_err(config_err)?;
            Ok(Plan::Resonance { k, alphas, times: sample_times(r.t, r.samples), dt: r.dt })
        }
        Experiment::FlowDemo => {
            no_modes("flow-demo")?;
            let f = cfg.flow.as_ref().expect("checked when parsing");
            if !(f.t > 0.0 && f.dt_ode > 0.0 && f.samples > 0) {
                return Err(config_err(anyhow!("[flow] t, dt_ode and samples must be positive")));
            }
            let phase: Arc<dyn PhaseFunction + Send> = match &f.phase {
                PhaseConfig::Zero => Arc::new(ZeroPhase),
                PhaseConfig::Quadratic { c } => Arc::new(QuadraticPhase { dim: grid.dim(), c: *c }),
                PhaseConfig::Bump { center, radius, height } => {
                    if center.len() != grid.dim() || !(*radius > 0.0) {
                        return Err(config_err(anyhow!("bump phase needs a {}-dimensional center and radius > 0", grid.dim())));
                    }
                    Arc::new(BumpPhase { center: center.clone(), radius: *radius, height: *height })
                }
            };
            let times = (0..=f.samples).map(|k| f.t * k as f64 / f.samples as f64).collect();
            Ok(Plan::Flow {
                potential: cfg.potential.spec(),
                phase,
                grid,
                times,
                dt_ode: f.dt_ode,
                j_min: f.j_min,
            })
        }
        Experiment::WkbAccuracy => {
            no_modes("wkb-accuracy")?;
            let w = cfg.wkb.as_ref().expect("checked when parsing");
            if !cfg.potential.spec().is_zero() {
                return Err(config_err(anyhow!("wkb-accuracy runs without a potential")));
            }
            if w.eps.is_empty() || w.eps.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
                return Err(config_err(anyhow!("[wkb] eps values must lie in (0, 1]")));
            }
            if !(w.t > 0.0 && w.dt > 0.0 && w.samples > 0) {
                return Err(config_err(anyhow!("[wkb] t, dt and samples must be positive")));
            }
            let phi0 = bump(&grid, &w.phase.center, w.phase.radius, w.phase.height).map_err(config_err)?;
            let a0 = bump(&grid, &w.amplitude.center, w.amplitude.radius, w.amplitude.height)
                .map_err(config_err)?
                .to_complex();
            let slope = wkb_core::spectral::spectral_gradient_real(&phi0)
                .iter()
                .flat_map(|g| g.data().iter().map(|v| v.abs()))
                .fold(0.0, f64::max);
            let smallest = w.eps.iter().cloned().fold(f64::INFINITY, f64::min);
            grid.check_resolution(smallest, slope).map_err(config_err)?;
            Ok(Plan::WkbAccuracy { phi0, a0, eps: w.eps.clone(), t: w.t, samples: w.samples, dt: w.dt })
        }
        Experiment::WignerDemo => {
            let w = cfg.wigner.as_ref().expect("checked when parsing");
            if cfg.modes.is_empty() {
                return Err(config_err(anyhow!("wigner-demo needs at least one [[modes]] entry")));
            }
            if !(w.t >= 0.0 && w.samples > 0 && w.ridge_radius > 0.0) {
                return Err(config_err(anyhow!("[wigner] t must be nonnegative, samples and ridge_radius positive")));
            }
            let mut mc = MultiphaseConfig::new(grid, modes_of(cfg), vec![w.eps], w.kappa, w.t.max(f64::MIN_POSITIVE));
            mc.potential = cfg.potential.spec();
            mc.validate().map_err(config_err)?;
            let g = mc.grid_for(w.eps).map_err(config_err)?;
            let u0 = build_initial_data(&mc, w.eps, &g).map_err(config_err)?.u0;
            let ks: Vec<Vec<f64>> = cfg.modes.iter().map(|m| m.k.clone()).collect();
            let psg = PhaseSpaceGrid::for_wavevectors(g, w.eps, w.coarse, &ks, w.max_m).map_err(config_err)?;
            let mut params = NlsParams::new(w.eps, w.kappa, mc.potential.clone(), w.t, &g);
            params.dt = (w.dt_over_eps * w.eps).min(params.dt);
            params.validate(g.dim()).map_err(config_err)?;
            let times = (0..=w.samples).map(|k| w.t * k as f64 / w.samples as f64).collect();
            Ok(Plan::Wigner {
                u0,
                params,
                times,
                psg,
                ks,
                slice: w.slice,
                sigma: w.sigma,
                ridge_radius: w.ridge_radius,
            })
        }
    }
}

fn linear_k(m: &ModeSpec) -> Vec<f64> {
    match &m.phase {
        wkb_core::multiphase::ModePhase::Linear(k) => k.clone(),
        wkb_core::multiphase::ModePhase::Smooth(_) => unreachable!("config modes carry linear phases"),
    }
}

/// One-paragraph description printed by `validate`.
pub fn describe(cfg: &ExperimentConfig, plan: &Plan) -> String {
    let mut s = format!("experiment {} ok\n", cfg.experiment.name());
    match plan {
        Plan::Superposition(mc) | Plan::Wnl { config: mc, .. } => {
            for &eps in &mc.eps_list {
                if let Ok(g) = mc.grid_for(eps) {
                    let _ = writeln!(s, "eps = {eps}: n = {}, dt = {:e}", g.n(), mc.dt_for(eps));
                }
            }
            if let Plan::Wnl { bound: Some((lambda, lb)), .. } = plan {
                let _ = writeln!(s, "counterexample lambda = {lambda}, lower bound = {lb:.6e}");
            }
        }
        Plan::Resonance { k, .. } => {
            let _ = writeln!(s, "{} modes, {} after completion", k.len(), complete_resonances(k).map_or(0, |c| c.len()));
        }
        Plan::Flow { grid, times, .. } => {
            let _ = writeln!(s, "{} rays, {} samples", grid.len(), times.len());
        }
        Plan::WkbAccuracy { phi0, eps, .. } => {
            let _ = writeln!(s, "n = {}, {} eps values", phi0.grid().n(), eps.len());
        }
        Plan::Wigner { psg, .. } => {
            let _ = writeln!(
                s,
                "n = {}, coarse x points = {}, xi points = {}, xi_max = {:.4}",
                psg.grid().n(),
                psg.x_len(),
                psg.xi_len(),
                psg.xi_max()
            );
        }
    }
    s
}

/// Paths of the output tree.
struct Out {
    dir: PathBuf,
    dump: bool,
}

impl Out {
    fn create(dir: &Path, dump: bool) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        if dump {
            fs::create_dir_all(dir.join("fields"))?;
        }
        Ok(Self { dir: dir.to_path_buf(), dump })
    }

    fn file(&self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = self.dir.join(name);
        Ok(BufWriter::new(File::create(&path).with_context(|| format!("cannot write {}", path.display()))?))
    }

    fn field(&self, name: &str, f: &ComplexField) -> anyhow::Result<()> {
        if self.dump {
            save_field(self.dir.join("fields").join(format!("{name}.wkbf")), f)?;
        }
        Ok(())
    }

    fn real_field(&self, name: &str, f: &RealField) -> anyhow::Result<()> {
        if self.dump {
            let mut w = self.file(&format!("fields/{name}.wkbf"))?;
            write_real_field(&mut w, f)?;
            w.flush()?;
        }
        Ok(())
    }

    fn text(&self, name: &str, body: &str) -> anyhow::Result<()> {
        let mut w = self.file(name)?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    }
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

/// Runs the plan and writes `report.csv`, `summary.txt` and (optionally) `fields/`.
pub fn execute(cfg: &ExperimentConfig, plan: Plan) -> Result<(), Failure> {
    let out = Out::create(&cfg.output.dir, cfg.output.dump_fields).map_err(runtime)?;
    let header = format!("experiment = {}\n", cfg.experiment.name());
    match plan {
        Plan::Superposition(mc) => {
            let mut report = superposition_experiment(&mc).map_err(Failure::from_solver)?;
            superposition_verdicts(&mut report);
            dump_initial_data(&out, &mc)?;
            finish_sweep(&out, &header, &report)
        }
        Plan::Wnl { config, bound, residual_dt } => {
            let mut report = superposition_experiment(&config).map_err(Failure::from_solver)?;
            wnl_verdicts(&mut report, bound);
            dump_initial_data(&out, &config)?;
            let mut summary = header.clone();
            if let Some((lambda, lb)) = bound {
                let _ = writeln!(summary, "lambda = {lambda}\nlower_bound = {lb:.6e}");
            }
            if let Some(dt) = residual_dt {
                let mut res = wnl_residual_sweep(&config, dt).map_err(Failure::from_solver)?;
                let pass = res.slope().is_some_and(|s| (0.8..=1.3).contains(&s));
                let detail = format!("slope {}, window [0.8, 1.3]", fmt_slope(res.slope()));
                res.add_verdict("residual_slope", pass, detail);
                let mut w = out.file("residual.csv").map_err(runtime)?;
                res.write_csv(&mut w).map_err(runtime)?;
                w.flush().map_err(runtime)?;
                summary.push_str("[residual]\n");
                summary.push_str(&res.summary());
                summary.push_str("[superposition]\n");
                check_failures(&res)?;
            }
            finish_sweep(&out, &summary, &report)
        }
        Plan::Resonance { k, alphas, times, dt } => {
            let res = evolve_resonant_system(&alphas, &k, &times, dt).map_err(Failure::from_solver)?;
            let mut w = out.file("report.csv").map_err(runtime)?;
            res.write_csv(&mut w).map_err(runtime)?;
            w.flush().map_err(runtime)?;
            let mut table = String::new();
            for n in 0..res.k.len() {
                table.push_str(&format_resonance_table(&res.k, n));
            }
            out.text("resonances.txt", &table).map_err(runtime)?;
            let last = res.times.len() - 1;
            let m0 = res.total_mass(0);
            let drift = (0..res.times.len()).map(|i| (res.total_mass(i) / m0 - 1.0).abs()).fold(0.0, f64::max);
            let mut s = header;
            let _ = writeln!(s, "modes = {}\ncreated = {}", k.len(), res.k.len() - k.len());
            for n in 0..res.k.len() {
                let _ = writeln!(s, "mode {n} k = {:?} final_l2 = {:.6e}", res.k.get(n), res.l2_history(n)[last]);
                out.field(&format!("mode{n}"), &res.amps[last][n]).map_err(runtime)?;
            }
            let _ = writeln!(s, "max_mass_drift = {drift:.3e}");
            let _ = writeln!(s, "verdict mass = {} (relative drift <= 1e-6)", pass_str(drift <= 1e-6));
            out.text("summary.txt", &s).map_err(runtime)
        }
        Plan::Flow { potential, phase, grid, times, dt_ode, j_min } => {
            let bundle = integrate_flow(&potential, phase.as_ref(), &grid, &times, dt_ode, j_min)
                .map_err(Failure::from_solver)?;
            let mut w = out.file("report.csv").map_err(runtime)?;
            bundle.write_csv(&mut w).map_err(runtime)?;
            w.flush().map_err(runtime)?;
            let (jmin, jmax, horizon) = jacobian_bounds(&bundle);
            let mut s = header;
            let _ = writeln!(s, "min_J = {jmin:.10}\nmax_J = {jmax:.10}\nhorizon = {horizon}");
            let _ = writeln!(s, "truncated = {}", bundle.truncated);
            for (k, &t) in bundle.times.iter().enumerate() {
                out.real_field(&format!("jacobian_{k:03}"), &bundle.jacobian_at(k)).map_err(runtime)?;
                let _ = writeln!(s, "sample {k} t = {t}");
            }
            out.text("summary.txt", &s).map_err(runtime)
        }
        Plan::WkbAccuracy { phi0, a0, eps, t, samples, dt } => {
            let mut report =
                accuracy_sweep(&phi0, &a0, &eps, t, samples, MolOptions::new(dt)).map_err(Failure::from_solver)?;
            let pass = report.slope().is_some_and(|s| (0.8..=1.3).contains(&s));
            let detail = format!("slope {}, window [0.8, 1.3]", fmt_slope(report.slope()));
            report.add_verdict("first_order_slope", pass, detail);
            let drift = report.max_mass_drift();
            report.add_verdict("mass", drift <= 1e-10, format!("drift {drift:.3e} <= 1e-10"));
            out.real_field("phi0", &phi0).map_err(runtime)?;
            out.field("a0", &a0).map_err(runtime)?;
            finish_sweep(&out, &header, &report)
        }
        Plan::Wigner { u0, params, times, psg, ks, slice, sigma, ridge_radius } => {
            let snaps = evolve(&u0, &params, &times).map_err(Failure::from_solver)?;
            let mut slices = Vec::with_capacity(snaps.len());
            let mut s = header;
            for (i, snap) in snaps.iter().enumerate() {
                let sl = match slice {
                    SliceChoice::Husimi => husimi(&snap.field, params.eps, &psg, sigma, snap.t),
                    SliceChoice::Wigner => wigner_transform(&snap.field, params.eps, &psg, snap.t),
                }
                .map_err(Failure::from_solver)?;
                if i == 0 {
                    wigner_checks(&mut s, &snap.field, params.eps, &psg).map_err(Failure::from_solver)?;
                }
                out.field(&format!("u_{i:03}"), &snap.field).map_err(runtime)?;
                if out.dump {
                    let mut w = out.file(&format!("fields/slice_{i:03}.wkbw")).map_err(runtime)?;
                    sl.write(&mut w).map_err(runtime)?;
                    w.flush().map_err(runtime)?;
                }
                slices.push(sl);
            }
            let mut w = out.file("report.csv").map_err(runtime)?;
            write_ridge_csv(&mut w, &slices, &ks, ridge_radius).map_err(runtime)?;
            w.flush().map_err(runtime)?;
            let last = slices.last().expect("at least one sample");
            let total = last.total_mass();
            let ridges = last.ridge_masses(&ks, ridge_radius);
            let _ = writeln!(s, "final_total = {total:.6e}\nfinal_field_mass = {:.6e}", mass(&snaps[snaps.len() - 1].field));
            for (j, r) in ridges.iter().enumerate() {
                let _ = writeln!(s, "ridge {j} k = {:?} fraction = {:.6}", ks[j], r / total);
            }
            out.text("summary.txt", &s).map_err(runtime)
        }
    }
}

fn fmt_slope(s: Option<f64>) -> String {
    s.map_or_else(|| "none".into(), |v| format!("{v:.4}"))
}

fn pass_str(p: bool) -> &'static str {
    if p {
        "PASS"
    } else {
        "FAIL"
    }
}

fn wigner_checks(s: &mut String, u: &ComplexField, eps: f64, psg: &PhaseSpaceGrid) -> wkb_core::Result<()> {
    let w: WignerSlice = wigner_transform(u, eps, psg, 0.0)?;
    debug_assert_eq!(w.kind, SliceKind::Wigner);
    let (rho, _) = moments(&w);
    let oracle = wkb_core::wigner::coarsen(&u.modulus_sq(), psg);
    let num: f64 = rho.data().iter().zip(oracle.data()).map(|(a, b)| (a - b).abs()).sum();
    let den: f64 = oracle.data().iter().map(|b| b.abs()).sum();
    let rel = if den > 0.0 { num / den } else { 0.0 };
    let _ = writeln!(s, "density_identity_error = {rel:.3e}\ntruncation = {:.3e}", w.truncation);
    let _ = writeln!(s, "verdict density_identity = {} (relative L1 <= 1e-6)", pass_str(rel <= 1e-6));
    Ok(())
}

fn superposition_verdicts(report: &mut ConvergenceReport) {
    let slope = report.slope();
    let pass = slope.is_some_and(|s| s >= 2.0) || report.max_error() <= 1e-6;
    report.add_verdict("superposition", pass, format!("slope {} >= 2 or max error <= 1e-6", fmt_slope(slope)));
    let drift = report.max_mass_drift();
    report.add_verdict("mass", drift <= 1e-10, format!("drift {drift:.3e} <= 1e-10"));
}

fn wnl_verdicts(report: &mut ConvergenceReport, bound: Option<(f64, f64)>) {
    let ratio = report.min_error() / report.max_error();
    report.add_verdict("error_persists", ratio >= 0.3, format!("min/max error {ratio:.4} >= 0.3"));
    if let Some((_, lb)) = bound {
        let smallest = report.entries.iter().rev().find(|e| e.failure.is_none()).map(|e| e.e_l2);
        if let Some(e) = smallest {
            let q = e / lb;
            report.add_verdict("lower_bound", (0.5..=2.0).contains(&q), format!("E/LB = {q:.4} within a factor 2"));
        }
    }
}

fn dump_initial_data(out: &Out, mc: &MultiphaseConfig) -> Result<(), Failure> {
    if !out.dump {
        return Ok(());
    }
    for (i, &eps) in mc.eps_list.iter().enumerate() {
        let g = mc.grid_for(eps).map_err(Failure::from_solver)?;
        let data = build_initial_data(mc, eps, &g).map_err(Failure::from_solver)?;
        out.field(&format!("u0_{i:02}"), &data.u0).map_err(runtime)?;
    }
    Ok(())
}

fn check_failures(report: &ConvergenceReport) -> Result<(), Failure> {
    if let Some(e) = report.entries.iter().find(|e| e.failure.is_some()) {
        return Err(Failure::Instability(anyhow!(
            "eps = {}: {}",
            e.eps,
            e.failure.as_deref().unwrap_or("unknown")
        )));
    }
    Ok(())
}

fn finish_sweep(out: &Out, header: &str, report: &ConvergenceReport) -> Result<(), Failure> {
    let mut w = out.file("report.csv").map_err(runtime)?;
    report.write_csv(&mut w).map_err(runtime)?;
    w.flush().map_err(runtime)?;
    let mut s = header.to_string();
    s.push_str(&report.summary());
    out.text("summary.txt", &s).map_err(runtime)?;
    // artifacts are written first so that failed runs can be inspected
    check_failures(report)
}

/// `prepare` followed by `execute`.
pub fn run(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let plan = prepare(cfg)?;
    execute(cfg, plan)
}

pub fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(path).map_err(config_err)
}
