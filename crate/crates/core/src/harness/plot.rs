//! Two-column series for external plotting.

use std::io::Write;
use std::path::Path;

use super::HarnessError;
use crate::certifier::{
    comparison_function, default_t_grid_inf, default_t_grid_zero, default_u_grid, estimate_fstar, fit_envelope, penalized_infimum,
    residual_function, scan_value_function, CertifyError, RunOptions,
};
use crate::constraint::FeasibleSet;
use crate::penalty::{PenaltySpec, ResidualSpec};
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlotKind {
    /// `f* - inf P_c` against `c` for one penalty form.
    CSweep(PenaltySpec),
    /// `ln mu(t)` against `ln t`.
    LogLogEnvelope,
    /// `V(u)` against `|u|`, including `u = 0`.
    Calmness,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub kind: PlotKind,
    pub x_label: &'static str,
    pub y_label: &'static str,
    pub points: Vec<(f64, f64)>,
}

/// Weights for the c sweep, 1e-2 to 1e2 at four per decade.
fn c_grid() -> Vec<f64> {
    (0..=16).map(|k| 10f64.powf(-2.0 + k as f64 / 4.0)).collect()
}

pub fn plot_series(problem: &Problem, kind: PlotKind, opts: &RunOptions) -> Result<Series, HarnessError> {
    let points = match kind {
        PlotKind::CSweep(spec) => {
            let fs = estimate_fstar(problem, opts)?;
            let residual = ResidualSpec::default_for(&problem.feasible);
            let mut points = Vec::new();
            for c in c_grid() {
                let pen = penalized_infimum(problem, spec.with_c(c), &residual, Some(&fs.point), opts)?;
                let gap = if pen.is_unbounded() { f64::INFINITY } else { fs.value - pen.value };
                points.push((c, gap));
            }
            points
        }
        PlotKind::LogLogEnvelope => {
            let fs = estimate_fstar(problem, opts)?;
            let phi = comparison_function(problem, fs.value);
            let psi = residual_function(&problem.feasible, problem.n)?;
            let fit = fit_envelope(&phi, &psi, &problem.domain, &default_t_grid_zero(), &default_t_grid_inf(), opts.budget, opts.seed);
            let mut points: Vec<(f64, f64)> = fit
                .samples
                .iter()
                .filter(|s| s.t > 0.0 && s.mu > 0.0 && s.mu.is_finite())
                .map(|s| (s.t.ln(), s.mu.ln()))
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            points
        }
        PlotKind::Calmness => {
            let m = match &problem.feasible {
                FeasibleSet::Cone { g, .. } => g.len(),
                FeasibleSet::Residual { .. } => return Err(CertifyError::Unsupported("calmness needs a cone-form problem".into()).into()),
            };
            let scan = scan_value_function(problem, &default_u_grid(m), opts)?;
            let mut points = vec![(0.0, scan.v0)];
            points.extend(scan.points.iter().filter_map(|p| p.value.map(|v| (p.norm, v))));
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            points
        }
    };
    let (x_label, y_label) = match kind {
        PlotKind::CSweep(_) => ("c", "fstar - penalized_inf"),
        PlotKind::LogLogEnvelope => ("ln t", "ln mu"),
        PlotKind::Calmness => ("|u|", "V(u)"),
    };
    Ok(Series {
        kind,
        x_label,
        y_label,
        points,
    })
}

/// Writes `# x_label y_label` then one whitespace-separated pair per line.
pub fn emit_plotdata(series: &Series, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# {}\t{}", series.x_label, series.y_label)?;
    for (x, y) in &series.points {
        writeln!(out, "{x:e}\t{y:e}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Budget;

    #[test]
    fn c_sweep_gap_closes_past_threshold() {
        let p = Problem::from_text(include_str!("../../corpus/ex4iii.problem")).unwrap();
        let opts = RunOptions {
            budget: Budget::preset("quick").unwrap(),
            seed: 3,
            tol: 1e-6,
        };
        let s = plot_series(&p, PlotKind::CSweep(PenaltySpec::Plain { c: 1.0 }), &opts).unwrap();
        assert_eq!(s.points.len(), 17);
        for (c, gap) in &s.points {
            if *c >= 1.1 {
                assert!(gap.abs() <= 1e-6, "c = {c}: {gap}");
            } else if *c <= 0.9 {
                assert!(*gap > 1.0, "c = {c}: {gap}");
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.dat");
        emit_plotdata(&s, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 18);
    }
}
