//! Minimization of `f` over the feasible set: drive the violation to zero,
//! then descend on `f` through restored trial points.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{by_value_then_index, latin_hypercube, stream_rng, Budget, LocalSearch, MinStatus, MinimizeResult, SearchDomain, UNBOUNDED_THRESHOLD};
use crate::constraint::{ConeSet, FeasibleSet};
use crate::expr::{fd_gradient, Expression, ScalarFn};

/// Violation accepted as feasible during descent.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Violation above which the set is declared empty on the domain.
pub const INFEASIBLE_TOL: f64 = 1e-4;

/// Maps a trial point to a nearby feasible point, or gives up.
pub type Restorer<'a> = dyn Fn(&[f64]) -> Option<Vec<f64>> + Sync + 'a;

/// Least-norm Gauss-Newton steps on the violated rows of `g(x) - P_C(g(x))`.
fn gauss_newton(g: &[Expression], cone: &ConeSet, x0: &[f64]) -> Option<Vec<f64>> {
    let gap = |x: &[f64]| -> Option<(Vec<f64>, f64)> {
        let y: Vec<f64> = g.iter().map(|gi| gi.eval(x).ok().and_then(|v| v.as_finite())).collect::<Option<_>>()?;
        let p = cone.project(&y);
        let r: Vec<f64> = y.iter().zip(&p).map(|(a, b)| a - b).collect();
        let d = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        Some((r, d))
    };
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut r, mut d) = gap(&x)?;
    for _ in 0..80 {
        if d <= 1e-12 {
            break;
        }
        let rows: Vec<usize> = (0..r.len()).filter(|&i| r[i] != 0.0).collect();
        let mut jac = DMatrix::zeros(rows.len(), n);
        for (k, &i) in rows.iter().enumerate() {
            let grad = fd_gradient(&g[i], &x, 1e-7).ok()?;
            for j in 0..n {
                jac[(k, j)] = grad[j];
            }
        }
        let rhs = DVector::from_iterator(rows.len(), rows.iter().map(|&i| r[i]));
        let dx = jac.pseudo_inverse(1e-14).ok()? * rhs;
        let mut s = 1.0;
        let mut moved = false;
        for _ in 0..20 {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a - s * b).collect();
            if let Some((rt, dt)) = gap(&trial) {
                if dt < d {
                    x = trial;
                    r = rt;
                    d = dt;
                    moved = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (d <= FEASIBILITY_TOL).then_some(x)
}

/// Local minimization of the violation from `x`.
fn descend_violation(set: &FeasibleSet, x: &[f64], lo: &[f64], hi: &[f64], iters: usize) -> (Vec<f64>, f64) {
    let eval = |y: &[f64]| set.violation(y).map(|v| v.get()).unwrap_or(f64::INFINITY);
    let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut rng = stream_rng(x.iter().fold(0u64, |h, v| h.rotate_left(7) ^ v.to_bits()), 7);
    let search = LocalSearch {
        lo,
        hi,
        iters,
        initial_step: 1e-2 * scale,
        restore: None,
    };
    search.run(&eval, x.to_vec(), eval(x), &mut rng)
}

/// Moves `x` onto the feasible set (violation at most [`FEASIBILITY_TOL`]).
///
/// Cone form tries Gauss-Newton first; both forms fall back to a short
/// pattern search on the violation inside `[lo, hi]`.
pub fn restore_point(set: &FeasibleSet, x: &[f64], lo: &[f64], hi: &[f64]) -> Option<Vec<f64>> {
    let v = set.violation(x).ok()?.get();
    match set {
        FeasibleSet::Cone { g, cone } => {
            if let Some(y) = gauss_newton(g, cone, x) {
                return Some(y);
            }
        }
        FeasibleSet::Residual { .. } if v <= FEASIBILITY_TOL => return Some(x.to_vec()),
        FeasibleSet::Residual { .. } => {}
    }
    let (y, v) = descend_violation(set, x, lo, hi, 120);
    (v <= FEASIBILITY_TOL).then_some(y)
}

/// Drives the violation at a feasible point as close to zero as the local
/// search allows, so the reported value does not exploit the tolerance.
fn polish(set: &FeasibleSet, x: Vec<f64>, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let v0 = set.violation(&x).map(|v| v.get()).unwrap_or(f64::INFINITY);
    if v0 == 0.0 {
        return x;
    }
    let y = match set {
        FeasibleSet::Cone { g, cone } => gauss_newton(g, cone, &x),
        FeasibleSet::Residual { .. } => Some(descend_violation(set, &x, lo, hi, 400).0),
    };
    match y {
        Some(y) if set.violation(&y).map(|v| v.get()).unwrap_or(f64::INFINITY) <= v0 => y,
        _ => x,
    }
}

/// Approximate `inf { f(x) : x in S }` over the domain box.
///
/// Each start is pushed onto `S`, then refined by pattern search whose
/// trials are restored onto `S` and accepted only if they stay within
/// [`FEASIBILITY_TOL`]. Returns `Infeasible` when no start gets the
/// violation below [`INFEASIBLE_TOL`].
pub fn minimize_feasible(objective: &impl ScalarFn, set: &FeasibleSet, domain: &SearchDomain, budget: Budget, seed: u64) -> MinimizeResult {
    let n = domain.dim();
    let viol = |x: &[f64]| set.violation(x).map(|v| v.get()).unwrap_or(f64::INFINITY);
    let mut rng = stream_rng(seed, 0);
    let samples = latin_hypercube(&domain.lo, &domain.hi, budget.samples, &mut rng);
    let values: Vec<f64> = samples.par_iter().map(|x| viol(x)).collect();
    let mut ranked: Vec<usize> = (0..samples.len()).filter(|&i| values[i].is_finite()).collect();
    ranked.sort_by(|&a, &b| by_value_then_index((values[a], a), (values[b], b)));
    ranked.truncate(budget.starts);

    let (lo, hi) = (&domain.lo[..], &domain.hi[..]);
    let restorer = |x: &[f64]| restore_point(set, x, lo, hi);
    let gated = |x: &[f64]| {
        if viol(x) <= FEASIBILITY_TOL {
            objective.value_or_inf(x)
        } else {
            f64::INFINITY
        }
    };
    let search = LocalSearch {
        lo,
        hi,
        iters: (budget.iters / 4).max(100),
        initial_step: 0.1 * domain.max_width().max(1e-3),
        restore: Some(&restorer),
    };

    // (strictly feasible?, value, point) per start
    let runs: Vec<(bool, f64, Vec<f64>)> = ranked
        .par_iter()
        .enumerate()
        .map(|(k, &i)| {
            let x = &samples[i];
            let start = match restorer(x) {
                Some(y) => Some(y),
                None => {
                    let (y, v) = descend_violation(set, x, lo, hi, budget.iters);
                    if v <= FEASIBILITY_TOL {
                        Some(y)
                    } else if v <= INFEASIBLE_TOL {
                        return (false, objective.value_or_inf(&y), y);
                    } else {
                        return (false, f64::INFINITY, y);
                    }
                }
            };
            let y = start.expect("checked above");
            let fy = gated(&y);
            if !fy.is_finite() {
                return (true, fy, y);
            }
            let mut rng = stream_rng(seed, k as u64 + 1);
            let (z, fz) = search.run(&gated, y, fy, &mut rng);
            let zp = polish(set, z.clone(), lo, hi);
            let fp = gated(&zp);
            if fp.is_finite() {
                (true, fp, zp)
            } else {
                (true, fz, z)
            }
        })
        .collect();

    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.1.is_finite())
        .min_by(|(i, a), (j, b)| match (a.0, b.0) {
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => by_value_then_index((a.1, *i), (b.1, *j)),
        });
    match best {
        None => MinimizeResult {
            status: MinStatus::Infeasible,
            value: f64::INFINITY,
            point: vec![f64::NAN; n],
            starts_used: runs.len(),
            seed,
        },
        Some((_, (_, value, point))) => MinimizeResult {
            status: if *value < UNBOUNDED_THRESHOLD {
                MinStatus::Unbounded
            } else {
                MinStatus::Finite
            },
            value: *value,
            point: point.clone(),
            starts_used: runs.len(),
            seed,
        },
    }
}
