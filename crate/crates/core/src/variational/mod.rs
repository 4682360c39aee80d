//! Sampled surrogates for the regularity quantities: the stationarity
//! measure `nu(x)`, the constraint qualification at feasible points, and
//! asymptotic critical values along diverging paths.

mod kinf;

use serde::Serialize;
use thiserror::Error;

pub use kinf::{k_infinity_probe, C2Verdict, ClusterValue, KInfinityReport, KPath, KPathSource, Diagnostics, KINF_MIN_NORM, KINF_NU_TOL, KINF_DIST_TOL, KINF_VALUE_TOL, KINF_MARGIN};

use crate::constraint::{ConeSet, FeasibleSet, DEFAULT_RESOLUTION};
use crate::expr::{fd_gradient, sample_subgradients, Expression, GradError};
use crate::problem::Problem;

/// How normal directions are chosen off the feasible set; printed in reports.
pub const NORMAL_INTERPRETATION: &str =
    "normal directions are taken at the projection of g(x) onto C, plus (g(x) - P(g(x)))/dist when g(x) is outside C";

/// Default radius of the gradient clouds.
pub const DEFAULT_CLOUD_RADIUS: f64 = 1e-6;
pub const DEFAULT_CLOUD_COUNT: usize = 16;
pub const DEFAULT_LAMBDA_GRID: usize = 63;
pub const DEFAULT_MFCQ_THRESHOLD: f64 = 1e-3;
/// Largest violation at which a point counts as feasible for the MFCQ test.
pub const MFCQ_FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum VariationalError {
    #[error("the problem must be given in cone form")]
    NeedsConeForm,
    #[error("point has {got} coordinates, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("point is not feasible (violation {0:e})")]
    Infeasible(f64),
    #[error("constraint values are not finite at the point")]
    NonFinite,
    #[error(transparent)]
    Gradient(#[from] GradError),
}

/// Cloud size, normal-direction resolution and lambda grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeOptions {
    pub radius: f64,
    pub count: usize,
    pub resolution: usize,
    pub lambda_grid: usize,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            radius: DEFAULT_CLOUD_RADIUS,
            count: DEFAULT_CLOUD_COUNT,
            resolution: DEFAULT_RESOLUTION,
            lambda_grid: DEFAULT_LAMBDA_GRID,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuMinimizer {
    pub lambda: f64,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuProbe {
    pub x: Vec<f64>,
    /// `+inf` when no normal direction exists.
    pub nu_hat: f64,
    pub minimizer: Option<NuMinimizer>,
    pub interpretation: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MfcqReport {
    pub x: Vec<f64>,
    /// `+inf` when the normal cone is `{0}`.
    pub min_norm: f64,
    pub threshold: f64,
    pub holds: bool,
}

fn cone_parts(problem: &Problem) -> Result<(&[Expression], &ConeSet), VariationalError> {
    match &problem.feasible {
        FeasibleSet::Cone { g, cone } => Ok((g, cone)),
        FeasibleSet::Residual { .. } => Err(VariationalError::NeedsConeForm),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Gradients of `f` and Jacobians of `g` at the same sampled points.
struct Clouds {
    f: Vec<Vec<f64>>,
    jac: Vec<Vec<Vec<f64>>>,
}

fn clouds(problem: &Problem, g: &[Expression], x: &[f64], opts: &ProbeOptions, with_f: bool) -> Result<Clouds, VariationalError> {
    // sample around x using the objective when needed, else the first constraint
    let sampler: &Expression = if with_f { &problem.objective } else { &g[0] };
    let cloud = sample_subgradients(sampler, x, opts.radius, opts.count, opts.seed)?;
    let h = crate::expr::DEFAULT_FD_STEP.min(opts.radius / 10.0);
    let mut f = Vec::with_capacity(cloud.points.len());
    let mut jac = Vec::with_capacity(cloud.points.len());
    for (p, s) in cloud.points.iter().zip(&cloud.samples) {
        let rows: Result<Vec<Vec<f64>>, GradError> = g.iter().map(|gi| fd_gradient(gi, p, h)).collect();
        let Ok(rows) = rows else { continue };
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            continue;
        }
        f.push(s.clone());
        jac.push(rows);
    }
    if f.is_empty() {
        return Err(GradError::TooFewSamples { wanted: opts.count, got: 0 }.into());
    }
    Ok(Clouds { f, jac })
}

/// `J^T w`.
fn scalarized(jac: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let n = jac.first().map_or(0, Vec::len);
    let mut v = vec![0.0; n];
    for (row, wi) in jac.iter().zip(w) {
        for (vj, r) in v.iter_mut().zip(row) {
            *vj += wi * r;
        }
    }
    v
}

/// Minimum of `|lambda u + (1 - lambda) v|` over `lambda` in `(0, 1)`.
///
/// Grid search, golden-section refinement around the best grid point, and
/// the closed-form minimizer of the quadratic; the smallest wins.
fn min_over_lambda(u: &[f64], v: &[f64], grid: usize) -> (f64, f64) {
    const EDGE: f64 = 1e-12;
    let at = |l: f64| -> f64 { u.iter().zip(v).map(|(a, b)| (l * a + (1.0 - l) * b).powi(2)).sum::<f64>().sqrt() };
    let k = grid.max(1);
    let mut best = (f64::INFINITY, 0.5);
    let mut best_j = 1;
    for j in 1..=k {
        let l = j as f64 / (k + 1) as f64;
        let val = at(l);
        if val < best.0 {
            best = (val, l);
            best_j = j;
        }
    }
    let step = 1.0 / (k + 1) as f64;
    let (mut a, mut b) = (((best_j as f64 - 1.0) * step).max(EDGE), ((best_j as f64 + 1.0) * step).min(1.0 - EDGE));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (at(c), at(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = at(d);
        }
    }
    for (val, l) in [(fc, c), (fd, d)] {
        if val < best.0 {
            best = (val, l);
        }
    }
    let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    let dd: f64 = diff.iter().map(|x| x * x).sum();
    if dd > 0.0 {
        let l = (-v.iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>() / dd).clamp(EDGE, 1.0 - EDGE);
        let val = at(l);
        if val < best.0 {
            best = (val, l);
        }
    }
    best
}

/// Unit normal directions used for `nu` at a point with constraint values `y`.
fn normal_directions(cone: &ConeSet, y: &[f64], resolution: usize) -> Vec<Vec<f64>> {
    let p = cone.project(y);
    let mut dirs = cone.normal_cone(&p).map(|nc| nc.directions(resolution)).unwrap_or_default();
    let r: Vec<f64> = y.iter().zip(&p).map(|(a, b)| a - b).collect();
    let d = norm(&r);
    if d > 0.0 {
        let unit: Vec<f64> = r.iter().map(|v| v / d).collect();
        if !dirs.iter().any(|w| w.iter().zip(&unit).all(|(a, b)| (a - b).abs() < 1e-12)) {
            dirs.push(unit);
        }
    }
    dirs
}

/// Upper estimate of `nu(x)` over the sampled clouds, the normal
/// directions and `lambda`.
pub fn nu_estimate(problem: &Problem, x: &[f64], opts: &ProbeOptions) -> Result<NuProbe, VariationalError> {
    let (g, cone) = cone_parts(problem)?;
    if x.len() != problem.n {
        return Err(VariationalError::Dimension {
            expected: problem.n,
            got: x.len(),
        });
    }
    let y = problem.feasible.constraint_values(x).map_err(|_| VariationalError::NonFinite)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(VariationalError::NonFinite);
    }
    let dirs = normal_directions(cone, &y, opts.resolution);
    if dirs.is_empty() {
        return Ok(NuProbe {
            x: x.to_vec(),
            nu_hat: f64::INFINITY,
            minimizer: None,
            interpretation: NORMAL_INTERPRETATION,
        });
    }
    let cl = clouds(problem, g, x, opts, true)?;
    let mut best: Option<(f64, NuMinimizer)> = None;
    for w in &dirs {
        for (u, jac) in cl.f.iter().zip(&cl.jac) {
            let v = scalarized(jac, w);
            let (val, lambda) = min_over_lambda(u, &v, opts.lambda_grid);
            if best.as_ref().is_none_or(|b| val < b.0) {
                best = Some((
                    val,
                    NuMinimizer {
                        lambda,
                        w: w.clone(),
                        u: u.clone(),
                        v,
                    },
                ));
            }
        }
    }
    let (nu_hat, m) = best.expect("nonempty clouds and directions");
    Ok(NuProbe {
        x: x.to_vec(),
        nu_hat,
        minimizer: Some(m),
        interpretation: NORMAL_INTERPRETATION,
    })
}

/// Smallest norm of `J^T w` over unit normals `w` at `g(x)` and the cloud.
pub fn mfcq_check(problem: &Problem, x: &[f64], threshold: f64, opts: &ProbeOptions) -> Result<MfcqReport, VariationalError> {
    let (g, cone) = cone_parts(problem)?;
    if x.len() != problem.n {
        return Err(VariationalError::Dimension {
            expected: problem.n,
            got: x.len(),
        });
    }
    let viol = problem.feasible.violation(x).map_err(|_| VariationalError::NonFinite)?.get();
    if !(viol <= MFCQ_FEAS_TOL) {
        return Err(VariationalError::Infeasible(viol));
    }
    let y = problem.feasible.constraint_values(x).map_err(|_| VariationalError::NonFinite)?;
    let p = cone.project(&y);
    let dirs = cone.normal_cone(&p).map(|nc| nc.directions(opts.resolution)).unwrap_or_default();
    let min_norm = if dirs.is_empty() {
        f64::INFINITY
    } else {
        let cl = clouds(problem, g, x, opts, false)?;
        dirs.iter()
            .flat_map(|w| cl.jac.iter().map(move |j| norm(&scalarized(j, w))))
            .fold(f64::INFINITY, f64::min)
    };
    Ok(MfcqReport {
        x: x.to_vec(),
        min_norm,
        threshold,
        holds: min_norm > threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Problem {
        Problem::from_text(text).unwrap()
    }

    #[test]
    fn nu_at_double_root_vanishes() {
        let p = load(include_str!("../../corpus/ex4i.problem"));
        let r = nu_estimate(&p, &[0.0], &ProbeOptions::default()).unwrap();
        assert!(r.nu_hat <= 1e-6, "{}", r.nu_hat);
    }

    #[test]
    fn nu_on_diagonal_cancels_at_half() {
        let p = load(include_str!("../../corpus/ex4iii.problem"));
        let r = nu_estimate(&p, &[1.0, 0.0], &ProbeOptions::default()).unwrap();
        assert!(r.nu_hat <= 1e-3);
        let m = r.minimizer.unwrap();
        assert!((m.lambda - 0.5).abs() < 1e-3);
        assert!((m.w[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn nu_along_exponential_path_scales_like_inverse_square() {
        let p = load(include_str!("../../corpus/ex4ii.problem"));
        let k = 32.0;
        let r = nu_estimate(&p, &[1.0 / k, -k], &ProbeOptions::default()).unwrap();
        assert!(r.nu_hat <= 1e-2, "{}", r.nu_hat);
        assert!(r.nu_hat <= 2.0 / (k * k));
        let m = r.minimizer.unwrap();
        let combo: Vec<f64> = m.u.iter().zip(&m.v).map(|(a, b)| m.lambda * a + (1.0 - m.lambda) * b).collect();
        assert!((norm(&combo) - r.nu_hat).abs() <= 1e-12);
    }

    #[test]
    fn mfcq_examples() {
        let p = load(include_str!("../../corpus/ex4i.problem"));
        let r = mfcq_check(&p, &[0.0], DEFAULT_MFCQ_THRESHOLD, &ProbeOptions::default()).unwrap();
        assert!(!r.holds && r.min_norm <= 1e-3);
        let p = load(include_str!("../../corpus/ex4iv.problem"));
        let r = mfcq_check(&p, &[0.0, 0.0], DEFAULT_MFCQ_THRESHOLD, &ProbeOptions::default()).unwrap();
        assert!(r.holds && (r.min_norm - 1.0).abs() < 1e-3);
        let p = load(include_str!("../../corpus/ex4iii.problem"));
        let r = mfcq_check(&p, &[0.0, 0.0], DEFAULT_MFCQ_THRESHOLD, &ProbeOptions::default()).unwrap();
        assert!(r.holds && (r.min_norm - 2f64.sqrt()).abs() < 1e-3);
        assert!(matches!(
            mfcq_check(&p, &[1.0, 0.0], DEFAULT_MFCQ_THRESHOLD, &ProbeOptions::default()),
            Err(VariationalError::Infeasible(_))
        ));
    }

    #[test]
    fn lambda_minimum_matches_closed_form() {
        let (val, l) = min_over_lambda(&[1.0, -1.0], &[-1.0, 1.0], 63);
        assert!(val < 1e-12 && (l - 0.5).abs() < 1e-9);
        let (val, _) = min_over_lambda(&[1.0, 0.0], &[2.0, 0.0], 63);
        assert!((val - 1.0).abs() < 1e-9);
    }

    #[test]
    fn refinement_never_increases_nu() {
        let p = load(include_str!("../../corpus/ex4ii.problem"));
        let x = [0.1, -7.0];
        let base = ProbeOptions::default();
        let a = nu_estimate(&p, &x, &base).unwrap().nu_hat;
        let more = ProbeOptions {
            count: 2 * base.count,
            resolution: 2 * base.resolution,
            lambda_grid: 127,
            ..base
        };
        let b = nu_estimate(&p, &x, &more).unwrap().nu_hat;
        assert!(b <= a, "{b} > {a}");
    }
}
