//! Derivative-free multistart minimization over a box, with escape probes
//! for unboundedness and a feasibility-preserving variant.

mod feasible;
mod local;

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::ScalarFn;

pub use feasible::{minimize_feasible, restore_point, Restorer, FEASIBILITY_TOL, INFEASIBLE_TOL};
pub use local::{pattern_search, random_unit, LocalSearch};

/// Values below this count as evidence of an unbounded infimum.
pub const UNBOUNDED_THRESHOLD: f64 = -1e6;
pub const DEFAULT_ESCAPE_SCALE: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("box bounds have lengths {lo} and {hi}")]
    BoundsLength { lo: usize, hi: usize },
    #[error("empty box along coordinate {0}")]
    EmptyBox(usize),
    #[error("escape scale {escape} is below the box half-width {half_width}")]
    EscapeScale { escape: f64, half_width: f64 },
}

/// A box plus the radius explored by escape probes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub escape_scale: f64,
}

impl SearchDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, escape_scale: f64) -> Result<Self, SolverError> {
        if lo.len() != hi.len() {
            return Err(SolverError::BoundsLength {
                lo: lo.len(),
                hi: hi.len(),
            });
        }
        for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite() && a <= b) {
                return Err(SolverError::EmptyBox(i));
            }
        }
        let half_width = lo.iter().zip(&hi).map(|(a, b)| a.abs().max(b.abs())).fold(0.0, f64::max);
        if !(escape_scale >= half_width) {
            return Err(SolverError::EscapeScale { escape: escape_scale, half_width });
        }
        Ok(SearchDomain { lo, hi, escape_scale })
    }

    /// The cube `[-r, r]^n`.
    pub fn cube(n: usize, r: f64, escape_scale: f64) -> Result<Self, SolverError> {
        SearchDomain::new(vec![-r; n], vec![r; n], escape_scale)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn max_width(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).fold(0.0, f64::max)
    }

    /// The cube `[-escape_scale, escape_scale]^n`.
    pub fn escape_box(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-self.escape_scale; self.dim()], vec![self.escape_scale; self.dim()])
    }

    /// Copy of the domain with the box scaled about the origin, capped at
    /// the escape scale.
    pub fn scaled(&self, factor: f64) -> SearchDomain {
        let cap = |v: f64| (v * factor).clamp(-self.escape_scale, self.escape_scale);
        SearchDomain {
            lo: self.lo.iter().map(|&v| cap(v)).collect(),
            hi: self.hi.iter().map(|&v| cap(v)).collect(),
            escape_scale: self.escape_scale,
        }
    }
}

/// Work limits for one minimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Budget {
    /// Local refinements launched from the best presamples.
    pub starts: usize,
    /// Poll limit per local refinement.
    pub iters: usize,
    /// Latin-hypercube presamples.
    pub samples: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            starts: 16,
            iters: 2000,
            samples: 4096,
        }
    }
}

impl Budget {
    /// `quick`, `default` or `thorough`.
    pub fn preset(name: &str) -> Option<Budget> {
        match name {
            "quick" => Some(Budget {
                starts: 6,
                iters: 600,
                samples: 1024,
            }),
            "default" => Some(Budget::default()),
            "thorough" => Some(Budget {
                starts: 48,
                iters: 6000,
                samples: 16384,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MinStatus {
    Finite,
    /// A point with value below [`UNBOUNDED_THRESHOLD`] was found.
    Unbounded,
    /// No finite value anywhere in the search.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizeResult {
    pub status: MinStatus,
    /// Objective at `point`; `+inf` when infeasible.
    pub value: f64,
    pub point: Vec<f64>,
    pub starts_used: usize,
    pub seed: u64,
}

impl MinimizeResult {
    pub fn is_unbounded(&self) -> bool {
        self.status == MinStatus::Unbounded
    }

    fn infeasible(n: usize, seed: u64) -> Self {
        MinimizeResult {
            status: MinStatus::Infeasible,
            value: f64::INFINITY,
            point: vec![f64::NAN; n],
            starts_used: 0,
            seed,
        }
    }
}

/// Optional extras for [`minimize_with`].
#[derive(Default)]
pub struct MinimizeOptions<'a> {
    /// Always refined, ahead of the presample starts.
    pub extra_starts: Vec<Vec<f64>>,
    /// Escape probes along rays out to the escape scale.
    pub ray_probes: bool,
    /// Applied to every trial point of the local search.
    pub restore: Option<&'a Restorer<'a>>,
}

/// Total order on values with ties broken by index.
pub(crate) fn by_value_then_index(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Per-task generator: one stream per work item, all derived from `seed`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Latin-hypercube sample of the box, preceded by its center.
pub fn latin_hypercube(lo: &[f64], hi: &[f64], count: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = lo.len();
    let mut points = vec![vec![0.0; n]; count];
    let mut perm: Vec<usize> = (0..count).collect();
    for d in 0..n {
        perm.shuffle(rng);
        for (i, p) in points.iter_mut().enumerate() {
            let cell = perm[i] as f64 + rng.random::<f64>();
            p[d] = lo[d] + (hi[d] - lo[d]) * cell / count as f64;
        }
    }
    let center: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
    points.insert(0, center);
    points
}

pub fn minimize_unconstrained(f: &impl ScalarFn, domain: &SearchDomain, budget: Budget, seed: u64) -> MinimizeResult {
    let opts = MinimizeOptions {
        ray_probes: true,
        ..Default::default()
    };
    minimize_with(f, domain, budget, seed, &opts)
}

/// Multistart pattern search.
///
/// The `samples` presamples use stream 0, start `i` uses stream `i + 1`
/// and the probes use a dedicated stream, so a larger `starts` budget only
/// ever adds candidates.
pub fn minimize_with(
    f: &impl ScalarFn,
    domain: &SearchDomain,
    budget: Budget,
    seed: u64,
    opts: &MinimizeOptions<'_>,
) -> MinimizeResult {
    let n = domain.dim();
    let eval = |x: &[f64]| f.value_or_inf(x);
    let mut rng = stream_rng(seed, 0);
    let samples = latin_hypercube(&domain.lo, &domain.hi, budget.samples, &mut rng);
    let values: Vec<f64> = samples.par_iter().map(|x| eval(x)).collect();

    let mut ranked: Vec<usize> = (0..samples.len()).filter(|&i| values[i].is_finite()).collect();
    ranked.sort_by(|&a, &b| by_value_then_index((values[a], a), (values[b], b)));

    let mut starts: Vec<(Vec<f64>, f64)> = Vec::new();
    for x in &opts.extra_starts {
        let v = eval(x);
        if v.is_finite() {
            starts.push((x.clone(), v));
        }
    }
    starts.extend(ranked.iter().take(budget.starts).map(|&i| (samples[i].clone(), values[i])));
    if starts.is_empty() {
        return MinimizeResult::infeasible(n, seed);
    }

    let search = LocalSearch {
        lo: &domain.lo,
        hi: &domain.hi,
        iters: budget.iters,
        initial_step: 0.1 * domain.max_width().max(1e-3),
        restore: opts.restore,
    };
    let refined: Vec<(Vec<f64>, f64)> = starts
        .par_iter()
        .enumerate()
        .map(|(i, (x, v))| {
            let mut rng = stream_rng(seed, i as u64 + 1);
            search.run(&eval, x.clone(), *v, &mut rng)
        })
        .collect();

    let mut best_index = 0;
    for i in 1..refined.len() {
        if by_value_then_index((refined[i].1, i), (refined[best_index].1, best_index)) == Ordering::Less {
            best_index = i;
        }
    }
    let (mut point, mut value) = refined[best_index].clone();

    if opts.ray_probes {
        let mut bases = vec![domain.center()];
        if let Some(&i) = ranked.first() {
            bases.push(samples[i].clone());
        }
        let mut probe_rng = stream_rng(seed, u64::MAX);
        if let Some((p, v)) = ray_probes(&eval, &bases, domain.escape_scale, &mut probe_rng) {
            if v < value {
                point = p;
                value = v;
            }
        }
    }

    let status = if value < UNBOUNDED_THRESHOLD {
        MinStatus::Unbounded
    } else if value.is_finite() {
        MinStatus::Finite
    } else {
        MinStatus::Infeasible
    };
    MinimizeResult {
        status,
        value,
        point,
        starts_used: starts.len(),
        seed,
    }
}

/// Evaluates along rays `base + t d` with geometrically growing `t` until a
/// coordinate reaches `escape`. Directions are `+-e_i` and `2n + 8` random
/// unit vectors. Returns the lowest finite value seen.
pub fn ray_probes(
    eval: &(dyn Fn(&[f64]) -> f64 + Sync),
    bases: &[Vec<f64>],
    escape: f64,
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<f64>, f64)> {
    let n = bases.first()?.len();
    if n == 0 {
        return None;
    }
    let mut dirs = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = s;
            dirs.push(e);
        }
    }
    for _ in 0..2 * n + 8 {
        dirs.push(random_unit(rng, n));
    }
    let jobs: Vec<(&Vec<f64>, &Vec<f64>)> = bases.iter().flat_map(|b| dirs.iter().map(move |d| (b, d))).collect();
    jobs.par_iter()
        .enumerate()
        .filter_map(|(j, (base, dir))| {
            let mut best: Option<(Vec<f64>, f64)> = None;
            let mut t = 1.0;
            loop {
                let mut x: Vec<f64> = base.iter().zip(dir.iter()).map(|(b, d)| b + t * d).collect();
                let last = x.iter().any(|v| v.abs() >= escape);
                if last {
                    x.iter_mut().for_each(|v| *v = v.clamp(-escape, escape));
                }
                let v = eval(&x);
                if v.is_finite() && best.as_ref().is_none_or(|(_, bv)| v < *bv) {
                    best = Some((x, v));
                }
                if last {
                    break;
                }
                t *= 2.0;
            }
            best.map(|(x, v)| (j, x, v))
        })
        .min_by(|a, b| by_value_then_index((a.2, a.0), (b.2, b.0)))
        .map(|(_, x, v)| (x, v))
}
