//! Searches for diverging sequences of the first type (`psi -> 0` with `phi`
//! bounded away from zero) and of the second type (`psi` bounded with
//! `phi -> inf`) on norm shells `10, 100, ...` up to the escape scale.

use rayon::prelude::*;
use serde::Serialize;

use crate::expr::ScalarFn;
use crate::solver::{by_value_then_index, latin_hypercube, random_unit, stream_rng, Budget, LocalSearch, SearchDomain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SequenceOptions {
    /// First-type threshold; defaults to a tenth of the sampled spread of `phi`.
    pub epsilon: Option<f64>,
    /// Residual bound for the second type.
    pub bound: f64,
    /// Weight of the `[eps - phi]_+` term in the first-type objective.
    pub penalty: f64,
    /// Second-type success level for `phi`.
    pub phi_threshold: f64,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        SequenceOptions {
            epsilon: None,
            bound: 1.0,
            penalty: 1e6,
            phi_threshold: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathPoint {
    pub x: Vec<f64>,
    pub norm: f64,
    pub phi: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceVerdict {
    pub first_type: Option<Vec<PathPoint>>,
    pub second_type: Option<Vec<PathPoint>>,
    pub epsilon_used: f64,
    /// Best point per shell for each search, innermost first.
    pub first_shells: Vec<PathPoint>,
    pub second_shells: Vec<PathPoint>,
    pub nonnegative_on_sample: bool,
    pub non_semialgebraic_warning: bool,
}

/// Shell radii `10^k`, `k >= 1`, not exceeding the escape scale (at least one).
pub(crate) fn shell_radii(escape: f64) -> Vec<f64> {
    let mut out = vec![10.0];
    let mut r = 100.0;
    while r <= escape * (1.0 + 1e-12) {
        out.push(r);
        r *= 10.0;
    }
    out
}

/// Minimizes `obj` over the sphere of the given radius.
pub(crate) fn shell_minimize(
    obj: &(dyn Fn(&[f64]) -> f64 + Sync),
    n: usize,
    radius: f64,
    budget: Budget,
    seed: u64,
    stream: u64,
) -> (Vec<f64>, f64) {
    if n == 1 {
        let (a, b) = (obj(&[radius]), obj(&[-radius]));
        return if b < a { (vec![-radius], b) } else { (vec![radius], a) };
    }
    let to_shell = |y: &[f64]| -> Vec<f64> {
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        y.iter().map(|v| radius * v / norm).collect()
    };
    let mut rng = stream_rng(seed, stream);
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = s;
            dirs.push(e);
        }
    }
    let extra = (budget.samples / 8).clamp(64, 1024);
    dirs.extend((0..extra).map(|_| random_unit(&mut rng, n)));
    let values: Vec<f64> = dirs.par_iter().map(|d| obj(&to_shell(d))).collect();
    let mut ranked: Vec<usize> = (0..dirs.len()).collect();
    ranked.sort_by(|&a, &b| by_value_then_index((values[a], a), (values[b], b)));
    ranked.truncate(4);

    let lo = vec![-2.0; n];
    let hi = vec![2.0; n];
    let search = LocalSearch {
        lo: &lo,
        hi: &hi,
        iters: (budget.iters / 8).max(100),
        initial_step: 0.1,
        restore: None,
    };
    let eval = |y: &[f64]| obj(&to_shell(y));
    let refined: Vec<(Vec<f64>, f64)> = ranked
        .par_iter()
        .enumerate()
        .map(|(k, &i)| {
            let mut rng = stream_rng(seed, stream ^ ((k as u64 + 1) << 48));
            search.run(&eval, dirs[i].clone(), values[i], &mut rng)
        })
        .collect();
    let (y, v) = refined
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| by_value_then_index((a.1, *i), (b.1, *j)))
        .map(|(_, r)| r)
        .expect("at least one start");
    (to_shell(&y), v)
}

fn path_point(phi: &dyn ScalarFn, psi: &dyn ScalarFn, x: Vec<f64>) -> PathPoint {
    PathPoint {
        norm: x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        phi: phi.value_or_inf(&x),
        psi: psi.value_or_inf(&x),
        x,
    }
}

fn norm_ratio(run: &[PathPoint]) -> f64 {
    run.last().map_or(0.0, |l| l.norm) / run.first().map_or(1.0, |f| f.norm.max(1e-300))
}

/// Longest run of consecutive shells with `phi >= eps` and `psi` strictly
/// decreasing (or already zero), accepted when it spans three shells, two
/// decades of norm and a tenfold drop in `psi`.
fn first_type_run(shells: &[PathPoint], eps: f64) -> Option<Vec<PathPoint>> {
    let mut best: Option<&[PathPoint]> = None;
    let mut start = 0;
    while start < shells.len() {
        if !(shells[start].phi >= eps && shells[start].psi.is_finite()) {
            start += 1;
            continue;
        }
        let mut end = start + 1;
        while end < shells.len() {
            let (prev, cur) = (&shells[end - 1], &shells[end]);
            let decreasing = cur.psi < prev.psi || cur.psi == 0.0;
            if !(cur.phi >= eps && decreasing) {
                break;
            }
            end += 1;
        }
        let run = &shells[start..end];
        if best.is_none_or(|b| run.len() > b.len()) {
            best = Some(run);
        }
        start = end;
    }
    let run = best?;
    let (first, last) = (run.first()?, run.last()?);
    let accepted = run.len() >= 3 && norm_ratio(run) >= 1e2 && (last.psi <= 0.1 * first.psi || last.psi == 0.0);
    accepted.then(|| run.to_vec())
}

/// First run of shells with `psi <= bound` and strictly increasing `phi`
/// that ends above the threshold and spans two decades of norm.
fn second_type_run(shells: &[PathPoint], bound: f64, threshold: f64) -> Option<Vec<PathPoint>> {
    let mut start = 0;
    while start < shells.len() {
        if !(shells[start].psi <= bound && shells[start].phi.is_finite()) {
            start += 1;
            continue;
        }
        let mut end = start + 1;
        while end < shells.len() && shells[end].psi <= bound && shells[end].phi > shells[end - 1].phi {
            end += 1;
        }
        let run = &shells[start..end];
        if let Some(k) = run.iter().position(|p| p.phi > threshold) {
            // extend past the crossing only as far as needed for the norm span
            let stop = (k..run.len()).find(|&j| norm_ratio(&run[..=j]) >= 1e2);
            if let Some(j) = stop {
                return Some(run[..=j].to_vec());
            }
        }
        start = end;
    }
    None
}

/// Sampled spread `max phi - min phi` over the box.
pub(crate) fn sampled_spread(phi: &dyn ScalarFn, domain: &SearchDomain, count: usize, seed: u64) -> (f64, bool) {
    let mut rng = stream_rng(seed, 0x5e9);
    let samples = latin_hypercube(&domain.lo, &domain.hi, count, &mut rng);
    let values: Vec<f64> = samples.par_iter().map(|x| phi.value_or_inf(x)).filter(|v| v.is_finite()).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        (0.0, true)
    } else {
        (hi - lo, lo >= 0.0)
    }
}

pub fn probe_sequence_types(
    phi: &dyn ScalarFn,
    psi: &dyn ScalarFn,
    domain: &SearchDomain,
    opts: SequenceOptions,
    budget: Budget,
    seed: u64,
) -> SequenceVerdict {
    let n = domain.dim();
    let (spread, phi_nonneg) = sampled_spread(phi, domain, budget.samples, seed);
    let (_, psi_nonneg) = sampled_spread(psi, domain, budget.samples, seed);
    let eps = opts.epsilon.unwrap_or(0.1 * spread);
    let radii = shell_radii(domain.escape_scale);

    let first_obj = |x: &[f64]| {
        let p = psi.value_or_inf(x);
        let f = phi.value(x).map(|v| v.get()).unwrap_or(f64::NEG_INFINITY);
        p + opts.penalty * (eps - f).max(0.0)
    };
    let second_obj = |x: &[f64]| {
        let p = psi.value_or_inf(x);
        let f = phi.value(x).map(|v| v.get()).unwrap_or(f64::NEG_INFINITY);
        if !f.is_finite() {
            return f64::INFINITY;
        }
        -f + opts.penalty * (p - opts.bound).max(0.0)
    };

    let first_shells: Vec<PathPoint> = radii
        .iter()
        .enumerate()
        .map(|(k, &r)| path_point(phi, psi, shell_minimize(&first_obj, n, r, budget, seed, 2 * k as u64 + 1).0))
        .collect();
    let second_shells: Vec<PathPoint> = radii
        .iter()
        .enumerate()
        .map(|(k, &r)| path_point(phi, psi, shell_minimize(&second_obj, n, r, budget, seed, 2 * k as u64 + 2).0))
        .collect();

    let first_type = if eps > 0.0 { first_type_run(&first_shells, eps) } else { None };
    SequenceVerdict {
        first_type,
        second_type: second_type_run(&second_shells, opts.bound, opts.phi_threshold),
        epsilon_used: eps,
        first_shells,
        second_shells,
        nonnegative_on_sample: phi_nonneg && psi_nonneg,
        non_semialgebraic_warning: !(phi.is_semialgebraic() && psi.is_semialgebraic()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn verdict(phi: &str, psi: &str, n: usize, box_r: f64, escape: f64) -> SequenceVerdict {
        let d = SearchDomain::cube(n, box_r, escape).unwrap();
        let phi = parse(phi, n).unwrap();
        let psi = parse(psi, n).unwrap();
        probe_sequence_types(&phi, &psi, &d, SequenceOptions::default(), Budget::preset("quick").unwrap(), 3)
    }

    #[test]
    fn curvature_example_has_both_types() {
        let v = verdict("max(0, -x0)", "abs(x0) / (1 + x0^2)", 1, 1e3, 1e7);
        let first = v.first_type.expect("first type");
        let last = first.last().unwrap();
        assert!(last.psi <= 1e-2 && last.phi >= 10.0);
        assert!(last.x[0] < 0.0);
        let second = v.second_type.expect("second type");
        assert!(second.last().unwrap().phi > 1e6);
        assert!(second.iter().all(|p| p.psi <= 0.5 + 1e-12));
    }

    #[test]
    fn matching_functions_have_neither() {
        let v = verdict("x0^2", "x0^2", 2, 10.0, 1e5);
        assert!(v.first_type.is_none());
        assert!(v.second_type.is_none());
        let v = verdict("x0^2", "x0^2", 1, 10.0, 1e5);
        assert!(v.first_type.is_none() && v.second_type.is_none());
    }

    #[test]
    fn radii_stop_at_escape() {
        assert_eq!(shell_radii(1e3), vec![10.0, 100.0, 1000.0]);
        assert_eq!(shell_radii(5.0), vec![10.0]);
    }
}
