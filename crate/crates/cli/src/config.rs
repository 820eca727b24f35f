//! TOML experiment configuration. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use wkb_core::nls::PotentialSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Superposition,
    WnlSweep,
    ResonanceDemo,
    FlowDemo,
    WkbAccuracy,
    WignerDemo,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Superposition => "superposition",
            Experiment::WnlSweep => "wnl-sweep",
            Experiment::ResonanceDemo => "resonance-demo",
            Experiment::FlowDemo => "flow-demo",
            Experiment::WkbAccuracy => "wkb-accuracy",
            Experiment::WignerDemo => "wigner-demo",
        }
    }

    /// The experiment-specific section this experiment reads, if any.
    fn section(self) -> Option<&'static str> {
        match self {
            Experiment::Superposition => None,
            Experiment::WnlSweep => Some("wnl"),
            Experiment::ResonanceDemo => Some("resonance"),
            Experiment::FlowDemo => Some("flow"),
            Experiment::WkbAccuracy => Some("wkb"),
            Experiment::WignerDemo => Some("wigner"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub grid: GridConfig,
    pub output: OutputConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub modes: Vec<ModeConfig>,
    pub sweep: Option<SweepConfig>,
    pub wnl: Option<WnlConfig>,
    pub resonance: Option<ResonanceConfig>,
    pub flow: Option<FlowConfig>,
    pub wkb: Option<WkbConfig>,
    pub wigner: Option<WignerConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
    pub half_len: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Relative paths are taken from the directory of the config file.
    pub dir: PathBuf,
    #[serde(default)]
    pub dump_fields: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialConfig {
    #[default]
    Zero,
    Linear {
        e: Vec<f64>,
    },
    Harmonic {
        omega: f64,
        #[serde(default = "yes")]
        attractive: bool,
    },
    Quadratic {
        q: Vec<f64>,
        b: Vec<f64>,
        #[serde(default)]
        c: f64,
    },
}

impl PotentialConfig {
    pub fn spec(&self) -> PotentialSpec {
        match self {
            PotentialConfig::Zero => PotentialSpec::Zero,
            PotentialConfig::Linear { e } => PotentialSpec::Linear { e: e.clone() },
            PotentialConfig::Harmonic { omega, attractive } => {
                PotentialSpec::Harmonic { omega: *omega, attractive: *attractive }
            }
            PotentialConfig::Quadratic { q, b, c } => PotentialSpec::Quadratic { q: q.clone(), b: b.clone(), c: *c },
        }
    }
}

/// A bump amplitude carrying the linear phase `k·x`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub center: Vec<f64>,
    pub radius: f64,
    pub height: f64,
    pub k: Vec<f64>,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eps: Vec<f64>,
    #[serde(default)]
    pub kappa: u32,
    /// Requested horizon; the existence-time estimate may shorten it.
    pub t: f64,
    /// Use `t` as is, skipping the estimator.
    #[serde(default)]
    pub fixed_horizon: bool,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_dt_over_eps")]
    pub dt_over_eps: f64,
    #[serde(default = "yes")]
    pub scale_grid: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WnlConfig {
    /// Build the two-bump counterexample instead of reading `[[modes]]`.
    #[serde(default)]
    pub counterexample: bool,
    #[serde(default = "default_height")]
    pub height: f64,
    /// Also compare with the resonant geometric-optics approximant.
    #[serde(default)]
    pub residual: bool,
    #[serde(default = "default_rk_dt")]
    pub rk_dt: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonanceConfig {
    pub t: f64,
    #[serde(default = "default_rk_dt")]
    pub dt: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PhaseConfig {
    Zero,
    /// `c |x|^2 / 2`.
    Quadratic { c: f64 },
    Bump { center: Vec<f64>, radius: f64, height: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub phase: PhaseConfig,
    pub t: f64,
    #[serde(default = "default_flow_samples")]
    pub samples: usize,
    #[serde(default = "default_dt_ode")]
    pub dt_ode: f64,
    #[serde(default = "default_j_min")]
    pub j_min: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    pub center: Vec<f64>,
    pub radius: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WkbConfig {
    pub phase: BumpConfig,
    pub amplitude: BumpConfig,
    pub eps: Vec<f64>,
    pub t: f64,
    #[serde(default = "default_flow_samples")]
    pub samples: usize,
    #[serde(default = "default_mol_dt")]
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceChoice {
    Wigner,
    Husimi,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerConfig {
    pub eps: f64,
    #[serde(default)]
    pub kappa: u32,
    pub t: f64,
    #[serde(default = "default_flow_samples")]
    pub samples: usize,
    #[serde(default = "default_coarse")]
    pub coarse: usize,
    #[serde(default = "default_max_m")]
    pub max_m: usize,
    #[serde(default = "default_slice")]
    pub slice: SliceChoice,
    pub sigma: Option<f64>,
    #[serde(default = "default_ridge_radius")]
    pub ridge_radius: f64,
    #[serde(default = "default_dt_over_eps")]
    pub dt_over_eps: f64,
}

fn yes() -> bool {
    true
}
fn default_margin() -> f64 {
    0.25
}
fn default_samples() -> usize {
    20
}
fn default_flow_samples() -> usize {
    4
}
fn default_dt_over_eps() -> f64 {
    0.1
}
fn default_height() -> f64 {
    std::f64::consts::E
}
fn default_rk_dt() -> f64 {
    0.01
}
fn default_dt_ode() -> f64 {
    1e-3
}
fn default_j_min() -> f64 {
    wkb_core::flow::DEFAULT_J_MIN
}
fn default_mol_dt() -> f64 {
    1e-3
}
fn default_coarse() -> usize {
    4
}
fn default_max_m() -> usize {
    256
}
fn default_slice() -> SliceChoice {
    SliceChoice::Husimi
}
fn default_ridge_radius() -> f64 {
    0.5
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.check_sections()?;
        Ok(cfg)
    }

    /// Reads the file and resolves the output directory against its location.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        if cfg.output.dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }

    fn check_sections(&self) -> anyhow::Result<()> {
        let present = [
            ("wnl", self.wnl.is_some()),
            ("resonance", self.resonance.is_some()),
            ("flow", self.flow.is_some()),
            ("wkb", self.wkb.is_some()),
            ("wigner", self.wigner.is_some()),
        ];
        let wanted = self.experiment.section();
        for (name, there) in present {
            if there && wanted != Some(name) {
                bail!("section [{name}] is not used by experiment {}", self.experiment.name());
            }
        }
        if let Some(name) = wanted {
            if !present.iter().any(|(n, there)| *n == name && *there) {
                bail!("experiment {} needs a [{name}] section", self.experiment.name());
            }
        }
        let needs_sweep = matches!(self.experiment, Experiment::Superposition | Experiment::WnlSweep);
        if needs_sweep != self.sweep.is_some() {
            if needs_sweep {
                bail!("experiment {} needs a [sweep] section", self.experiment.name());
            }
            bail!("section [sweep] is not used by experiment {}", self.experiment.name());
        }
        Ok(())
    }
}
