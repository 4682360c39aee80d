//! Value function `V(u) = inf { f(x) : g(x) in C + u }` on a perturbation
//! grid, and the calmness quotient `(V(0) - V(u)) / |u|`.

use serde::Serialize;

use super::{CertifyError, RunOptions};
use crate::constraint::FeasibleSet;
use crate::problem::Problem;
use crate::solver::{minimize_feasible, MinStatus};

/// Quotients above this that keep growing as `|u|` shrinks count as diverging.
pub const CALMNESS_DIVERGENCE: f64 = 1e3;

/// `+-10^-k e_i` for `k = 0..=6` on every perturbation axis.
pub fn default_u_grid(m: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..m {
        for s in [1.0, -1.0] {
            for k in 0..=6 {
                let mut u = vec![0.0; m];
                u[i] = s * 10f64.powi(-k);
                out.push(u);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalmnessPoint {
    pub u: Vec<f64>,
    pub norm: f64,
    /// `None` when the perturbed problem is infeasible on the domain.
    pub value: Option<f64>,
    pub quotient: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalmnessScan {
    pub v0: f64,
    pub points: Vec<CalmnessPoint>,
    pub modulus_estimate: Option<f64>,
    pub diverging: bool,
}

impl CalmnessScan {
    pub fn u_grid(&self) -> impl Iterator<Item = &[f64]> {
        self.points.iter().map(|p| p.u.as_slice())
    }

    /// Largest quotient over grid points with `|u| <= radius`.
    pub fn modulus_within(&self, radius: f64) -> Option<f64> {
        self.points
            .iter()
            .filter(|p| p.norm <= radius * (1.0 + 1e-12))
            .filter_map(|p| p.quotient)
            .reduce(f64::max)
    }
}

/// Unit direction of `u`, rounded so grid points on one ray compare equal.
fn ray_key(u: &[f64], norm: f64) -> Vec<i64> {
    u.iter().map(|v| (v / norm * 1e9).round() as i64).collect()
}

/// Ray key with its `(norm, quotient)` pairs.
type Ray = (Vec<i64>, Vec<(f64, f64)>);

fn is_diverging(points: &[CalmnessPoint]) -> bool {
    let mut rays: Vec<Ray> = Vec::new();
    for p in points {
        let Some(q) = p.quotient else { continue };
        let key = ray_key(&p.u, p.norm);
        match rays.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push((p.norm, q)),
            None => rays.push((key, vec![(p.norm, q)])),
        }
    }
    rays.into_iter().any(|(_, mut v)| {
        v.sort_by(|a, b| b.0.total_cmp(&a.0));
        v.len() >= 2 && v.windows(2).all(|w| w[1].1 > w[0].1) && v.last().is_some_and(|l| l.1 > CALMNESS_DIVERGENCE)
    })
}

pub fn scan_value_function(problem: &Problem, u_grid: &[Vec<f64>], opts: &RunOptions) -> Result<CalmnessScan, CertifyError> {
    if !matches!(problem.feasible, FeasibleSet::Cone { .. }) {
        return Err(CertifyError::Unsupported("calmness scan needs a cone-form problem".into()));
    }
    let value = |set: &FeasibleSet| {
        let r = minimize_feasible(&problem.objective, set, &problem.domain, opts.budget, opts.seed);
        (r.status != MinStatus::Infeasible).then_some(r.value)
    };
    let v0 = value(&problem.feasible).ok_or(CertifyError::Infeasible)?;
    let mut points = Vec::with_capacity(u_grid.len());
    for u in u_grid {
        let shifted = problem
            .feasible
            .shifted(u)
            .map_err(|e| CertifyError::Unsupported(e.to_string()))?;
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let value = value(&shifted);
        let quotient = value.filter(|_| norm > 0.0).map(|v| (v0 - v) / norm);
        points.push(CalmnessPoint {
            u: u.clone(),
            norm,
            value,
            quotient,
        });
    }
    let modulus_estimate = points.iter().filter_map(|p| p.quotient).reduce(f64::max);
    let diverging = is_diverging(&points);
    Ok(CalmnessScan {
        v0,
        points,
        modulus_estimate,
        diverging,
    })
}
