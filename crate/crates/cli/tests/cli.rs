use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wkb_cli::{prepare, Experiment, ExperimentConfig};

const BIN: &str = env!("CARGO_BIN_EXE_wkblab");

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn wkblab(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("WKB_THREADS");
    if let Some(t) = threads {
        cmd.env("WKB_THREADS", t);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_SUPERPOSITION: &str = r#"
experiment = "superposition"

[grid]
dim = 1
n = 256
half_len = 6.0

[output]
dir = "out"
dump_fields = true

[sweep]
eps = [0.125, 0.0625, 0.03125]
t = 0.1
fixed_horizon = true
samples = 20

[[modes]]
center = [-2.0]
radius = 0.5
height = 1.0
k = [1.0]
margin = 1.5

[[modes]]
center = [2.0]
radius = 0.5
height = 1.0
k = [-1.0]
margin = 1.5
"#;

#[test]
fn version_prints_the_crate_version() {
    let o = wkblab(&["version"], None);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn superposition_run_writes_the_output_tree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", SMALL_SUPERPOSITION);
    let o = wkblab(&["run", cfg.to_str().unwrap()], Some("1"));
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("eps,E_L2,E_Linf,E_combined,T_star_used,n_grid,dt\n"));
    assert_eq!(report.lines().count(), 4);
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("slope = "));
    assert!(summary.contains("verdict superposition = PASS"));
    let dumps: Vec<_> = fs::read_dir(out.join("fields")).unwrap().collect();
    assert_eq!(dumps.len(), 3);
    let u0 = wkb_core::io::load_field(out.join("fields/u0_00.wkbf")).unwrap();
    assert_eq!(u0.grid().n(), 256);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.toml", &SMALL_SUPERPOSITION.replace("dir = \"out\"", "dir = \"a\""));
    let b = write_config(dir.path(), "b.toml", &SMALL_SUPERPOSITION.replace("dir = \"out\"", "dir = \"b\""));
    assert!(wkblab(&["run", a.to_str().unwrap()], Some("1")).status.success());
    assert!(wkblab(&["run", b.to_str().unwrap()], Some("2")).status.success());
    for f in ["report.csv", "summary.txt", "fields/u0_02.wkbf"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn overlapping_modes_exit_with_status_2() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL_SUPERPOSITION.replace("center = [2.0]", "center = [0.5]");
    let cfg = write_config(dir.path(), "o.toml", &body);
    for cmd in ["validate", "run"] {
        let o = wkblab(&[cmd, cfg.to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        assert!(stderr(&o).contains("modes 0 and 1"), "{}", stderr(&o));
    }
    assert!(!dir.path().join("out").exists());
}

#[test]
fn grid_size_must_be_a_power_of_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n.toml", &SMALL_SUPERPOSITION.replace("n = 256", "n = 300"));
    let o = wkblab(&["validate", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("power of two"), "{}", stderr(&o));
}

fn bump_slope_max(height: f64, radius: f64) -> f64 {
    // max over r of |d/dr height exp(-1 / (1 - (r / radius)^2))|
    (1..100_000)
        .map(|i| {
            let s = i as f64 / 100_000.0;
            let q = 1.0 - s * s;
            (-1.0 / q).exp() * 2.0 * s / (q * q)
        })
        .fold(0.0, f64::max)
        * height
        / radius
}

#[test]
fn underresolved_run_names_the_minimal_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.toml",
        r#"
experiment = "wkb-accuracy"
[grid]
dim = 1
n = 256
half_len = 4.0
[output]
dir = "r"
[wkb]
eps = [0.0625, 0.0078125]
t = 0.2
phase = { center = [0.0], radius = 2.0, height = 1.5 }
amplitude = { center = [0.0], radius = 2.0, height = 2.5 }
"#,
    );
    let o = wkblab(&["validate", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    // dx <= 2 pi eps / (8 max|phi'|) on [-4, 4)
    let dx_max = 2.0 * std::f64::consts::PI * 0.0078125 / (8.0 * bump_slope_max(1.5, 2.0));
    let min_n = ((8.0 / dx_max).ceil() as usize).next_power_of_two();
    let err = stderr(&o);
    assert!(err.contains("eps-resolution"), "{err}");
    assert!(err.contains(&format!("minimal admissible n = {min_n}")), "{err}");
    let fixed = fs::read_to_string(&cfg).unwrap().replace("n = 256", &format!("n = {min_n}"));
    fs::write(&cfg, fixed).unwrap();
    assert!(wkblab(&["validate", cfg.to_str().unwrap()], None).status.success());
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "u.toml", &SMALL_SUPERPOSITION.replace("t = 0.1", "t = 0.1\nkapa = 0"));
    let o = wkblab(&["validate", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kapa"), "{}", stderr(&o));
    let misplaced = SMALL_SUPERPOSITION.to_string() + "\n[flow]\nt = 1.0\nphase = { kind = \"zero\" }\n";
    assert!(ExperimentConfig::parse(&misplaced).unwrap_err().to_string().contains("[flow]"));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", SMALL_SUPERPOSITION);
    let o = wkblab(&["validate", cfg.to_str().unwrap()], Some("zero"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("WKB_THREADS"));
}

#[test]
fn flow_demo_reports_the_doubled_jacobian() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "f.toml",
        r#"
experiment = "flow-demo"
[grid]
dim = 1
n = 16
half_len = 2.0
[output]
dir = "flow"
[flow]
t = 1.0
samples = 2
phase = { kind = "quadratic", c = 1.0 }
"#,
    );
    let o = wkblab(&["run", cfg.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("flow/report.csv")).unwrap();
    let rows: Vec<Vec<f64>> = report
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .filter(|r: &Vec<f64>| r[0] == 1.0)
        .collect();
    assert_eq!(rows.len(), 16);
    for r in rows {
        // x(1, y) = 2 y and J = 2
        assert!((r[2] - 2.0 * r[1]).abs() <= 1e-8);
        assert!((r[4] - 2.0).abs() <= 1e-8);
    }
}

#[test]
fn phase_blow_up_exits_with_status_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "b.toml",
        r#"
experiment = "wkb-accuracy"
[grid]
dim = 1
n = 256
half_len = 4.0
[output]
dir = "b"
[wkb]
eps = [0.5]
t = 1.0
phase = { center = [0.0], radius = 1.0, height = -8.0 }
amplitude = { center = [0.0], radius = 1.0, height = 1.0 }
"#,
    );
    assert!(wkblab(&["validate", cfg.to_str().unwrap()], None).status.success());
    let o = wkblab(&["run", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("blow-up"));
}

#[test]
fn resonance_demo_lists_the_created_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.toml",
        r#"
experiment = "resonance-demo"
[grid]
dim = 2
n = 32
half_len = 2.0
[output]
dir = "res"
dump_fields = true
[resonance]
t = 1.0
dt = 0.02
samples = 5
[[modes]]
center = [-1.0, -1.0]
radius = 0.5
height = 4.0
k = [2.0, 2.0]
[[modes]]
center = [-1.0, 0.0]
radius = 0.5
height = 4.0
k = [2.0, 0.0]
[[modes]]
center = [0.0, -1.0]
radius = 0.5
height = 4.0
k = [0.0, 2.0]
"#,
    );
    let o = wkblab(&["run", cfg.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("res");
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("t,a0_l2,a1_l2,a2_l2,a3_l2\n"));
    assert!(fs::read_to_string(out.join("summary.txt")).unwrap().contains("created = 1"));
    assert!(fs::read_to_string(out.join("resonances.txt")).unwrap().contains("Rectangle"));
    assert!(out.join("fields/mode3.wkbf").exists());
}

#[test]
fn shipped_configs_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap();
            prepare(&cfg).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert_eq!(seen, 6);
}

#[test]
fn experiment_names_round_trip() {
    for e in [
        Experiment::Superposition,
        Experiment::WnlSweep,
        Experiment::ResonanceDemo,
        Experiment::FlowDemo,
        Experiment::WkbAccuracy,
        Experiment::WignerDemo,
    ] {
        let text = format!("experiment = \"{}\"\n[grid]\ndim = 1\nn = 16\nhalf_len = 1.0\n[output]\ndir = \"x\"\n", e.name());
        let parsed: Result<ExperimentConfig, _> = ExperimentConfig::parse(&text);
        // either parses or complains about a missing section, never about the name
        if let Err(err) = parsed {
            assert!(err.to_string().contains("section"), "{err}");
        }
    }
}

mod validate_matches_run {
    use super::*;
    use proptest::prelude::*;
    use wkb_cli::{run, Failure};

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn config_errors_are_caught_by_validation(
            c2 in -5.0f64..5.0,
            margin in 0.05f64..2.0,
            n in prop::sample::select(vec![16usize, 32, 48, 64]),
            eps in 0.02f64..0.5,
        ) {
            let dir = tempfile::tempdir().unwrap();
            let body = format!(
                "experiment = \"superposition\"\n[grid]\ndim = 1\nn = {n}\nhalf_len = 6.0\n[output]\ndir = \"o\"\n\
                 [sweep]\neps = [{eps}]\nt = 0.01\nfixed_horizon = true\n\
                 [[modes]]\ncenter = [-2.0]\nradius = 0.5\nheight = 1.0\nk = [1.0]\nmargin = {margin}\n\
                 [[modes]]\ncenter = [{c2}]\nradius = 0.5\nheight = 1.0\nk = [-1.0]\nmargin = {margin}\n"
            );
            let path = write_config(dir.path(), "p.toml", &body);
            let cfg = ExperimentConfig::load(&path);
            prop_assume!(cfg.is_ok());
            let cfg = cfg.unwrap();
            let validated = prepare(&cfg).is_ok();
            let ran = run(&cfg);
            prop_assert_eq!(validated, !matches!(ran, Err(Failure::Config(_))));
        }
    }
}
