//! Asymptotic critical values: limits of `f` along paths leaving every
//! bounded set with `|x| nu(x) -> 0` and `dist(g(x), C) -> 0`.

use serde::Serialize;

use super::{nu_estimate, ProbeOptions, VariationalError, NORMAL_INTERPRETATION};
use crate::certifier::{shell_minimize, RunOptions};
use crate::problem::Problem;

/// Terminal iterates must reach at least this norm.
pub const KINF_MIN_NORM: f64 = 1e3;
pub const KINF_NU_TOL: f64 = 1e-2;
pub const KINF_DIST_TOL: f64 = 1e-3;
pub const KINF_VALUE_TOL: f64 = 1e-2;
/// A cluster value at most `f* + KINF_MARGIN` violates the inclusion.
pub const KINF_MARGIN: f64 = 1e-3;
/// Shell radii for the automatic search.
const SHELLS: [f64; 4] = [1e1, 1e2, 1e3, 1e4];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub x: Vec<f64>,
    pub norm: f64,
    pub nu_hat: f64,
    /// `|x| * nu_hat`.
    pub scaled_nu: f64,
    /// `dist(g(x), C)`.
    pub dist: f64,
    pub f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KPathSource {
    /// A declared path, by index.
    Declared(usize),
    /// Minimizers of the composite score on norm shells.
    Shells,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KPath {
    pub source: KPathSource,
    pub iterates: Vec<Diagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterValue {
    pub t: f64,
    pub path: usize,
    pub terminal: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum C2Verdict {
    HoldsOnProbes,
    ViolatedWithWitness(f64),
}

impl C2Verdict {
    pub fn name(self) -> &'static str {
        match self {
            C2Verdict::HoldsOnProbes => "HoldsOnProbes",
            C2Verdict::ViolatedWithWitness(_) => "ViolatedWithWitness",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KInfinityReport {
    pub interpretation: &'static str,
    pub fstar: f64,
    pub paths: Vec<KPath>,
    pub cluster_values: Vec<ClusterValue>,
    pub verdict: C2Verdict,
}

/// Diagnostics at `x`, or `None` where any quantity is not finite.
pub fn diagnose(problem: &Problem, x: &[f64], opts: &ProbeOptions) -> Option<Diagnostics> {
    let f = problem.objective.eval(x).ok()?.as_finite()?;
    let dist = problem.feasible.violation(x).ok()?.as_finite()?;
    let nu = nu_estimate(problem, x, opts).ok()?;
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    Some(Diagnostics {
        x: x.to_vec(),
        norm,
        nu_hat: nu.nu_hat,
        scaled_nu: norm * nu.nu_hat,
        dist,
        f,
    })
}

/// Terminal iterate of a path qualifies as a cluster witness.
fn qualifies(d: &Diagnostics) -> bool {
    d.norm >= KINF_MIN_NORM && d.scaled_nu <= KINF_NU_TOL && d.dist <= KINF_DIST_TOL && d.dist > 0.0
}

fn declared_path(problem: &Problem, index: usize, opts: &ProbeOptions) -> KPath {
    let coords = &problem.kinf_paths[index];
    let escape = problem.domain.escape_scale;
    let mut iterates = Vec::new();
    for j in 1..=8 {
        let k = 10f64.powi(j);
        let x: Option<Vec<f64>> = coords.iter().map(|c| c.eval(&[k]).ok().and_then(|v| v.as_finite())).collect();
        let Some(x) = x else { continue };
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > SHELLS[SHELLS.len() - 1] * 1.5 || x.iter().any(|v| v.abs() > escape) {
            break;
        }
        if let Some(d) = diagnose(problem, &x, opts) {
            iterates.push(d);
        }
    }
    KPath {
        source: KPathSource::Declared(index),
        iterates,
    }
}

fn shell_path(problem: &Problem, fstar: f64, run: &RunOptions, opts: &ProbeOptions) -> KPath {
    let level = fstar + KINF_MARGIN;
    // the plus-part is the distance from f(x) to the nearest admissible level t <= f* + margin
    let score = |x: &[f64]| match diagnose(problem, x, opts) {
        Some(d) if d.dist > 0.0 => d.scaled_nu + d.dist + (d.f - level).max(0.0),
        _ => f64::INFINITY,
    };
    let n = problem.n;
    let budget = crate::solver::Budget {
        samples: run.budget.samples.min(512),
        iters: run.budget.iters.min(800),
        ..run.budget
    };
    let iterates = SHELLS
        .iter()
        .filter(|r| **r <= problem.domain.escape_scale * (1.0 + 1e-12))
        .enumerate()
        .filter_map(|(k, &r)| {
            let (x, v) = shell_minimize(&score, n, r, budget, run.seed, 0x4b1f + k as u64);
            if v.is_finite() {
                diagnose(problem, &x, opts)
            } else {
                None
            }
        })
        .collect();
    KPath {
        source: KPathSource::Shells,
        iterates,
    }
}

/// Follows the declared paths and an automatic shell search, and reports
/// every terminal value meeting the witness tolerances.
pub fn k_infinity_probe(problem: &Problem, fstar: f64, run: &RunOptions) -> Result<KInfinityReport, VariationalError> {
    if !matches!(problem.feasible, crate::constraint::FeasibleSet::Cone { .. }) {
        return Err(VariationalError::NeedsConeForm);
    }
    let opts = ProbeOptions {
        seed: run.seed,
        ..ProbeOptions::default()
    };
    let mut paths: Vec<KPath> = (0..problem.kinf_paths.len()).map(|i| declared_path(problem, i, &opts)).collect();
    paths.push(shell_path(problem, fstar, run, &opts));

    let cluster_values: Vec<ClusterValue> = paths
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let last = p.iterates.last()?;
            qualifies(last).then(|| ClusterValue {
                t: last.f,
                path: i,
                terminal: last.clone(),
            })
        })
        .filter(|c| (c.terminal.f - c.t).abs() <= KINF_VALUE_TOL)
        .collect();
    let verdict = cluster_values
        .iter()
        .find(|c| c.t <= fstar + KINF_MARGIN)
        .map_or(C2Verdict::HoldsOnProbes, |c| C2Verdict::ViolatedWithWitness(c.t));
    Ok(KInfinityReport {
        interpretation: NORMAL_INTERPRETATION,
        fstar,
        paths,
        cluster_values,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Budget;

    fn run() -> RunOptions {
        RunOptions {
            budget: Budget::preset("quick").unwrap(),
            seed: 11,
            tol: 1e-6,
        }
    }

    #[test]
    fn exponential_example_violates_inclusion() {
        let p = Problem::from_text(include_str!("../../corpus/ex4ii.problem")).unwrap();
        let r = k_infinity_probe(&p, 1.0, &run()).unwrap();
        let C2Verdict::ViolatedWithWitness(t) = r.verdict else {
            panic!("{r:?}")
        };
        assert!((t - (-1f64).exp()).abs() <= 0.05);
        let c = &r.cluster_values[0];
        assert!(c.terminal.scaled_nu <= 1e-2);
        // stored diagnostics are reproducible
        let again = diagnose(&p, &c.terminal.x, &ProbeOptions { seed: 11, ..Default::default() }).unwrap();
        assert!((again.nu_hat - c.terminal.nu_hat).abs() <= 1e-9);
        assert!((again.dist - c.terminal.dist).abs() <= 1e-9);
    }

    #[test]
    fn regular_examples_hold() {
        for text in [include_str!("../../corpus/ex4iv.problem"), include_str!("../../corpus/ex4i.problem")] {
            let p = Problem::from_text(text).unwrap();
            let r = k_infinity_probe(&p, 0.0, &run()).unwrap();
            assert_eq!(r.verdict, C2Verdict::HoldsOnProbes, "{}", p.name);
        }
    }

    #[test]
    fn whole_space_has_no_points_outside() {
        let p = Problem::from_text("name = all\nn = 2\nobjective = x0\nconstraint.0.expr = 0*x0\nconstraint.0.cone = zero\n").unwrap();
        let r = k_infinity_probe(&p, -10.0, &run()).unwrap();
        assert_eq!(r.verdict, C2Verdict::HoldsOnProbes);
        assert!(r.cluster_values.is_empty());
    }
}
