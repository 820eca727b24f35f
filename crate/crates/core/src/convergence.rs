//! Error-versus-eps sweeps and their log-log slope fits.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::Result;

/// Least-squares line through `(log x, log y)` over the entries with `y > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
    pub points: usize,
}

/// Needs at least three positive samples; returns `None` otherwise.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Option<LogLogFit> {
    let pts: Vec<(f64, f64)> =
        x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / nf).sqrt();
    Some(LogLogFit { slope, intercept, residual, points: n })
}

/// A named pass/fail check recorded in a report.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub eps: f64,
    pub e_l2: f64,
    pub e_linf: f64,
    pub t_star: f64,
    pub n_grid: usize,
    pub dt: f64,
    /// Largest relative mass drift over all runs of this entry.
    pub mass_drift: f64,
    /// Set when the solver failed for this eps; the errors are then NaN.
    pub failure: Option<String>,
}

impl SweepEntry {
    /// `max(L2, Linf)`, the norm of `L2 ∩ Linf`.
    pub fn e_combined(&self) -> f64 {
        self.e_l2.max(self.e_linf)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub entries: Vec<SweepEntry>,
    pub fit: Option<LogLogFit>,
    pub verdicts: Vec<Verdict>,
}

impl ConvergenceReport {
    /// Fits the combined error of the successful entries.
    pub fn from_entries(entries: Vec<SweepEntry>) -> Self {
        let ok: Vec<&SweepEntry> = entries.iter().filter(|e| e.failure.is_none()).collect();
        let x: Vec<f64> = ok.iter().map(|e| e.eps).collect();
        let y: Vec<f64> = ok.iter().map(|e| e.e_combined()).collect();
        Self { fit: fit_loglog(&x, &y), entries, verdicts: Vec::new() }
    }

    pub fn eps_list(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.eps).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.entries.iter().map(SweepEntry::e_combined).collect()
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn max_error(&self) -> f64 {
        self.successful().map(SweepEntry::e_combined).fold(0.0, f64::max)
    }

    pub fn min_error(&self) -> f64 {
        self.successful().map(SweepEntry::e_combined).fold(f64::INFINITY, f64::min)
    }

    pub fn max_mass_drift(&self) -> f64 {
        self.successful().map(|e| e.mass_drift).fold(0.0, f64::max)
    }

    fn successful(&self) -> impl Iterator<Item = &SweepEntry> {
        self.entries.iter().filter(|e| e.failure.is_none())
    }

    pub fn add_verdict(&mut self, name: &str, pass: bool, detail: String) {
        self.verdicts.push(Verdict { name: name.to_string(), pass, detail });
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// Columns `eps,E_L2,E_Linf,E_combined,T_star_used,n_grid,dt`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "eps,E_L2,E_Linf,E_combined,T_star_used,n_grid,dt")?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{},{},{:e}",
                e.eps,
                e.e_l2,
                e.e_linf,
                e.e_combined(),
                e.t_star,
                e.n_grid,
                e.dt
            )?;
        }
        Ok(())
    }

    /// `key = value` summary with fit results and verdicts.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        match self.fit {
            Some(f) => {
                let _ = writeln!(s, "slope = {:.6}", f.slope);
                let _ = writeln!(s, "intercept = {:.6}", f.intercept);
                let _ = writeln!(s, "fit_residual = {:.3e}", f.residual);
            }
            None => {
                let _ = writeln!(s, "slope = none");
            }
        }
        let _ = writeln!(s, "max_error = {:.6e}", self.max_error());
        let _ = writeln!(s, "max_mass_drift = {:.3e}", self.max_mass_drift());
        for e in self.entries.iter().filter(|e| e.failure.is_some()) {
            let _ = writeln!(s, "failed eps {} : {}", e.eps, e.failure.as_deref().unwrap_or(""));
        }
        for v in &self.verdicts {
            let _ = writeln!(s, "verdict {} = {} ({})", v.name, if v.pass { "PASS" } else { "FAIL" }, v.detail);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_power_law() {
        let x = [0.1, 0.05, 0.025, 0.0125];
        let y: Vec<f64> = x.iter().map(|e: &f64| 3.0 * e.powf(1.5)).collect();
        let f = fit_loglog(&x, &y).unwrap();
        assert!((f.slope - 1.5).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(f.residual < 1e-12);
    }

    #[test]
    fn too_few_points() {
        assert!(fit_loglog(&[0.1, 0.2], &[1.0, 2.0]).is_none());
        assert!(fit_loglog(&[0.1, 0.2, 0.3], &[1.0, 0.0, 2.0]).is_none());
    }

    #[test]
    fn csv_header_and_failures() {
        let entry = |eps: f64, e: f64, failure: Option<String>| SweepEntry {
            eps,
            e_l2: e,
            e_linf: 2.0 * e,
            t_star: 0.2,
            n_grid: 256,
            dt: 1e-3,
            mass_drift: 1e-12,
            failure,
        };
        let r = ConvergenceReport::from_entries(vec![
            entry(0.1, 0.01, None),
            entry(0.05, 0.005, None),
            entry(0.025, f64::NAN, Some("instability".into())),
            entry(0.0125, 0.00125, None),
        ]);
        assert!((r.slope().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.max_error(), 0.02);
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("eps,E_L2,E_Linf,E_combined,T_star_used,n_grid,dt\n"));
        assert_eq!(text.lines().count(), 5);
        assert!(r.summary().contains("failed eps 0.025"));
    }

    proptest! {
        #[test]
        fn slope_ignores_scaling(c in 1e-6f64..1e6, p in 0.5f64..4.0) {
            let x = [0.0625, 0.03125, 0.015625, 0.0078125];
            let y: Vec<f64> = x.iter().map(|e: &f64| e.powf(p) * (1.0 + 0.1 * e.sin())).collect();
            let scaled: Vec<f64> = y.iter().map(|v| c * v).collect();
            let a = fit_loglog(&x, &y).unwrap();
            let b = fit_loglog(&x, &scaled).unwrap();
            prop_assert!((a.slope - b.slope).abs() <= 1e-9);
            prop_assert!((b.intercept - a.intercept - c.ln()).abs() <= 1e-9);
        }
    }
}
