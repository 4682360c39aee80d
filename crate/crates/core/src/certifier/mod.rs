//! Exactness verdicts on a searched domain: infimum comparison, the ratio
//! threshold, value-function calmness, envelope exponents, sequence types
//! and distance conditions.

mod calmness;
mod cstar;
mod distance;
mod envelope;
mod sequences;

use serde::Serialize;
use thiserror::Error;

pub use calmness::{default_u_grid, scan_value_function, CalmnessPoint, CalmnessScan, CALMNESS_DIVERGENCE};
pub use cstar::{estimate_cstar, CStarEstimate, Ratio, ScaleBest, RATIO_PSI_FLOOR, RATIO_UNBOUNDED, REFINED_SAMPLES, RATIO_FINE_FLOOR, FLOOR_BLOWUP};
pub use distance::{probe_distance_conditions, DistanceEstimator, DistanceReport};
pub use envelope::{
    default_t_grid_inf, default_t_grid_zero, fit_envelope, single_exponent_verdicts, validate_envelope, EnvelopeFit, EnvelopeValidation,
    EnvelopeSample, ExponentVerdict, UnboundedEnd, SHELL_WIDTH,
};
pub use sequences::{probe_sequence_types, PathPoint, SequenceOptions, SequenceVerdict};
pub(crate) use sequences::shell_minimize;

use crate::constraint::FeasibleSet;
use crate::expr::{ExtReal, FnScalar, ScalarFn};
use crate::penalty::{Penalized, PenaltyError, PenaltySpec, ResidualSpec};
use crate::problem::Problem;
use crate::solver::{minimize_feasible, minimize_with, Budget, MinStatus, MinimizeOptions, MinimizeResult, SearchDomain};

/// Default agreement tolerance between the constrained and penalized infima.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Feasibility tolerance for penalized minimizers in the argmin check.
pub const ARGMIN_FEAS_TOL: f64 = 1e-6;
/// Value tolerance for penalized minimizers in the argmin check.
pub const ARGMIN_VALUE_TOL: f64 = 1e-4;
/// The argmin check runs only when `c >= c_hat * (1 + ARGMIN_MARGIN)`.
pub const ARGMIN_MARGIN: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("feasible set is empty on the searched domain")]
    Infeasible,
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
    #[error("{0}")]
    Unsupported(String),
}

/// Budget, seed and tolerance shared by the probes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunOptions {
    pub budget: Budget,
    pub seed: u64,
    pub tol: f64,
}

impl RunOptions {
    pub fn for_problem(p: &Problem) -> Self {
        RunOptions {
            budget: p.budget,
            seed: p.seed,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CertStatus {
    CertifiedExactOnDomain,
    CounterexampleFound,
    UnboundedPenalized,
    Inconclusive,
}

impl CertStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CertStatus::CertifiedExactOnDomain => "CertifiedExactOnDomain",
            CertStatus::CounterexampleFound => "CounterexampleFound",
            CertStatus::UnboundedPenalized => "UnboundedPenalized",
            CertStatus::Inconclusive => "Inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ArgminCheck {
    Passed,
    Failed,
    /// `c` is not clearly above the estimated threshold.
    SkippedBoundary,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub problem: String,
    pub penalty: String,
    pub status: CertStatus,
    pub fstar: f64,
    pub fstar_point: Vec<f64>,
    /// Best penalized value; below the unbounded threshold when unbounded.
    pub penalized_inf: f64,
    pub penalized_unbounded: bool,
    pub penalized_point: Vec<f64>,
    pub cstar: Option<CStarEstimate>,
    pub witness: Option<Vec<f64>>,
    /// Ratio `[f* - f]_+ / eff` at the witness, when it comes from the ratio test.
    pub witness_ratio: Option<f64>,
    pub argmin: ArgminCheck,
    pub tol: f64,
    pub domain: SearchDomain,
    pub seed: u64,
}

/// Minimum of `f` over the feasible set on the problem's domain.
pub fn estimate_fstar(problem: &Problem, opts: &RunOptions) -> Result<MinimizeResult, CertifyError> {
    let r = minimize_feasible(&problem.objective, &problem.feasible, &problem.domain, opts.budget, opts.seed);
    if r.status == MinStatus::Infeasible {
        return Err(CertifyError::Infeasible);
    }
    Ok(r)
}

/// Infimum of the penalized function, started from the `f*` witness too.
pub fn penalized_infimum(
    problem: &Problem,
    spec: PenaltySpec,
    residual: &ResidualSpec,
    fstar_point: Option<&[f64]>,
    opts: &RunOptions,
) -> Result<MinimizeResult, CertifyError> {
    let r = residual.resolve(&problem.feasible, problem.n)?;
    let p = Penalized {
        objective: &problem.objective,
        residual: &r,
        spec,
    };
    let mopts = MinimizeOptions {
        extra_starts: fstar_point.into_iter().map(<[f64]>::to_vec).collect(),
        ray_probes: true,
        restore: None,
    };
    Ok(minimize_with(&p, &problem.domain, opts.budget, opts.seed, &mopts))
}

/// Ratio threshold for the effective residual of `form` (plain when `None`).
pub fn cstar_for(
    problem: &Problem,
    form: Option<PenaltySpec>,
    residual: &ResidualSpec,
    fstar: f64,
    opts: &RunOptions,
) -> Result<CStarEstimate, CertifyError> {
    let r = residual.resolve(&problem.feasible, problem.n)?;
    let ratio = Ratio {
        objective: &problem.objective,
        residual: &r,
        form: form.unwrap_or(PenaltySpec::Plain { c: 1.0 }),
        fstar,
    };
    Ok(estimate_cstar(&ratio, &problem.domain, opts.budget, opts.seed))
}

/// Compares the constrained infimum with the penalized infimum and runs
/// the ratio test for the chosen penalty form.
pub fn certify_exactness(
    problem: &Problem,
    spec: PenaltySpec,
    residual: &ResidualSpec,
    opts: &RunOptions,
) -> Result<Certificate, CertifyError> {
    let spec = spec.validate()?;
    let fs = estimate_fstar(problem, opts)?;
    let pen = penalized_infimum(problem, spec, residual, Some(&fs.point), opts)?;
    let mut cert = Certificate {
        problem: problem.name.clone(),
        penalty: spec.to_string(),
        status: CertStatus::Inconclusive,
        fstar: fs.value,
        fstar_point: fs.point.clone(),
        penalized_inf: pen.value,
        penalized_unbounded: pen.is_unbounded(),
        penalized_point: pen.point.clone(),
        cstar: None,
        witness: None,
        witness_ratio: None,
        argmin: ArgminCheck::NotRun,
        tol: opts.tol,
        domain: problem.domain.clone(),
        seed: opts.seed,
    };
    if pen.is_unbounded() {
        cert.status = CertStatus::UnboundedPenalized;
        cert.witness = Some(pen.point);
        return Ok(cert);
    }
    if fs.status == MinStatus::Unbounded {
        // f* itself is below the unbounded threshold; nothing to compare
        return Ok(cert);
    }

    let r = residual.resolve(&problem.feasible, problem.n)?;
    let ratio = Ratio {
        objective: &problem.objective,
        residual: &r,
        form: spec,
        fstar: fs.value,
    };
    let cs = estimate_cstar(&ratio, &problem.domain, opts.budget, opts.seed);
    let c = spec.c();

    // a ratio witness must also show a penalized value below f* - tol
    let ratio_witness = cs
        .path
        .iter()
        .filter(|s| s.ratio > c * (1.0 + 1e-6))
        .filter(|s| ratio.penalized(&s.point).is_some_and(|v| v < fs.value - opts.tol))
        .max_by(|a, b| a.ratio.total_cmp(&b.ratio));
    if let Some(w) = ratio_witness {
        cert.status = CertStatus::CounterexampleFound;
        cert.witness = Some(w.point.clone());
        cert.witness_ratio = Some(w.ratio);
    } else if pen.value < fs.value - opts.tol {
        cert.status = CertStatus::CounterexampleFound;
        cert.witness_ratio = ratio.at(&pen.point);
        cert.witness = Some(pen.point.clone());
    } else if (pen.value - fs.value).abs() <= opts.tol {
        cert.argmin = match cs.finite_value() {
            Some(chat) if c >= chat * (1.0 + ARGMIN_MARGIN) => {
                if argmin_transfers(problem, &pen.point, fs.value) {
                    ArgminCheck::Passed
                } else {
                    ArgminCheck::Failed
                }
            }
            _ => ArgminCheck::SkippedBoundary,
        };
        cert.status = match cert.argmin {
            ArgminCheck::Failed => CertStatus::Inconclusive,
            _ => CertStatus::CertifiedExactOnDomain,
        };
    }
    cert.cstar = Some(cs);
    Ok(cert)
}

/// Penalized minimizer is feasible and attains `f*`.
fn argmin_transfers(problem: &Problem, x: &[f64], fstar: f64) -> bool {
    let feasible = problem.feasible.violation(x).map(|v| v.get() <= ARGMIN_FEAS_TOL).unwrap_or(false);
    let value = problem
        .objective
        .eval(x)
        .ok()
        .and_then(ExtReal::as_finite)
        .is_some_and(|f| (f - fstar).abs() <= ARGMIN_VALUE_TOL);
    feasible && value
}

/// `[f* - f]_+` as a scalar function.
pub fn gap_function(problem: &Problem, fstar: f64) -> impl ScalarFn + '_ {
    FnScalar::new(problem.n, move |x: &[f64]| match problem.objective.eval(x) {
        Ok(f) if f.is_finite() => (fstar - f.get()).max(0.0),
        Ok(_) => 0.0,
        Err(_) => f64::INFINITY,
    })
}

/// The comparison function for envelope and sequence probes: the
/// problem's `phi` if declared, else `[f* - f]_+`.
pub fn comparison_function<'a>(problem: &'a Problem, fstar: f64) -> Box<dyn ScalarFn + 'a> {
    match &problem.phi {
        Some(phi) => Box::new(phi),
        None => Box::new(gap_function(problem, fstar)),
    }
}

/// Residual of the feasible set as a scalar function.
pub fn residual_function(set: &FeasibleSet, n: usize) -> Result<crate::penalty::Residual, CertifyError> {
    Ok(ResidualSpec::default_for(set).resolve(set, n)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Problem {
        Problem::from_text(text).unwrap()
    }

    fn certify(p: &Problem, spec: &str) -> Certificate {
        let spec: PenaltySpec = spec.parse().unwrap();
        certify_exactness(p, spec, &ResidualSpec::default_for(&p.feasible), &RunOptions::for_problem(p)).unwrap()
    }

    #[test]
    fn diagonal_threshold_is_one() {
        let p = load(include_str!("../../corpus/ex4iii.problem"));
        let c = certify(&p, "plain(1.5)");
        assert_eq!(c.status, CertStatus::CertifiedExactOnDomain, "{c:?}");
        assert!(c.penalized_inf.abs() <= 1e-6);
        assert_eq!(c.argmin, ArgminCheck::Passed);
        let cs = c.cstar.unwrap();
        assert!((cs.value - 1.0).abs() < 1e-3, "{}", cs.value);
        let c = certify(&p, "plain(0.5)");
        assert_eq!(c.status, CertStatus::CounterexampleFound);
        assert!(c.witness_ratio.unwrap() > 0.99);
    }

    #[test]
    fn cubic_on_double_root_is_unbounded() {
        let p = load(include_str!("../../corpus/ex4i.problem"));
        for c in ["plain(1)", "plain(100)"] {
            let cert = certify(&p, c);
            assert_eq!(cert.status, CertStatus::UnboundedPenalized);
            assert!(cert.penalized_inf < -1e6);
        }
    }

    #[test]
    fn exponential_example_has_counterexample() {
        let p = load(include_str!("../../corpus/ex4ii.problem"));
        let c = certify(&p, "plain(100)");
        assert_eq!(c.status, CertStatus::CounterexampleFound, "{c:?}");
        assert!((c.fstar - 1.0).abs() < 1e-6);
        assert!(c.penalized_inf <= 0.1);
    }

    #[test]
    fn two_power_form_is_exact() {
        let mut p = load(include_str!("../../corpus/ex5final.problem"));
        p.budget.samples = 8192;
        let c = certify(&p, "twopower(2,0.5,1)");
        assert_eq!(c.status, CertStatus::CertifiedExactOnDomain, "{c:?}");
        assert!(c.penalized_inf.abs() <= 1e-6);
    }

    #[test]
    fn clipped_residual_ratio_is_unbounded() {
        let p = load(include_str!("../../corpus/vd42ii.problem"));
        let opts = RunOptions::for_problem(&p);
        let r = ResidualSpec::default_for(&p.feasible);
        for alpha in [0.25, 0.5, 1.0] {
            let cs = cstar_for(&p, Some(PenaltySpec::Power { c: 1.0, alpha }), &r, 0.0, &opts).unwrap();
            assert!(cs.unbounded, "alpha {alpha}: {}", cs.value);
        }
    }

    #[test]
    fn curvature_form_certified_at_boundary() {
        let p = load(include_str!("../../corpus/vd42i.problem"));
        let c = certify(&p, "curvature(1,1)");
        assert_eq!(c.status, CertStatus::CertifiedExactOnDomain, "{c:?}");
        assert_eq!(c.argmin, ArgminCheck::SkippedBoundary);
    }
}
