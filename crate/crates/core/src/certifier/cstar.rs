//! Estimating the smallest weight `c` with `c * eff(x) >= [f* - f(x)]_+`.

use rayon::prelude::*;
use serde::Serialize;

use crate::expr::Expression;
use crate::penalty::{PenaltySpec, Residual};
use crate::solver::{by_value_then_index, latin_hypercube, stream_rng, Budget, LocalSearch, SearchDomain};

/// Points with a smaller residual are treated as feasible by the ratio.
pub const RATIO_PSI_FLOOR: f64 = 1e-8;
/// A ratio above this along the scale path is reported as unbounded.
pub const RATIO_UNBOUNDED: f64 = 1e6;
/// Number of best samples refined per scale.
pub const REFINED_SAMPLES: usize = 32;
/// Floor used to re-examine a maximizer sitting near [`RATIO_PSI_FLOOR`].
pub const RATIO_FINE_FLOOR: f64 = 1e-14;
/// Growth under the finer floor that marks the ratio as unbounded.
pub const FLOOR_BLOWUP: f64 = 10.0;

/// `x -> [f* - f(x)]_+ / eff(x)` for a penalty form's effective residual.
pub struct Ratio<'a> {
    pub objective: &'a Expression,
    pub residual: &'a Residual,
    pub form: PenaltySpec,
    pub fstar: f64,
}

impl Ratio<'_> {
    /// Ratio at `x`, or `None` where `psi <= RATIO_PSI_FLOOR` or a value is
    /// not finite.
    pub fn at(&self, x: &[f64]) -> Option<f64> {
        self.at_floor(x, RATIO_PSI_FLOOR)
    }

    /// Ratio with a custom residual floor.
    pub fn at_floor(&self, x: &[f64], floor: f64) -> Option<f64> {
        let f = self.objective.eval(x).ok()?.as_finite()?;
        let psi = self.residual.eval(x).ok()?.as_finite()?;
        if psi <= floor {
            return None;
        }
        let eff = self.form.effective_residual(f, psi);
        if !(eff > 0.0 && eff.is_finite()) {
            return None;
        }
        Some((self.fstar - f).max(0.0) / eff)
    }

    /// Penalized value `f + c * eff` at `x` for the form's own weight.
    pub fn penalized(&self, x: &[f64]) -> Option<f64> {
        let f = self.objective.eval(x).ok()?.as_finite()?;
        let psi = self.residual.eval(x).ok()?.as_finite()?;
        Some(f + self.form.c() * self.form.effective_residual(f, psi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleBest {
    /// Half-width of the searched box.
    pub scale: f64,
    pub point: Vec<f64>,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CStarEstimate {
    /// Largest ratio found (a lower bound for the true threshold).
    pub value: f64,
    pub unbounded: bool,
    /// No sampled point had a residual above the floor.
    pub inconclusive: bool,
    pub witness: Option<Vec<f64>>,
    /// Best point per nested scale, innermost first.
    pub path: Vec<ScaleBest>,
}

impl CStarEstimate {
    pub fn finite_value(&self) -> Option<f64> {
        (!self.unbounded && !self.inconclusive).then_some(self.value)
    }
}

/// Maximizes the ratio over the box scaled by `10^k`, `k = 0, 1, ...`, up
/// to the escape scale. Each scale samples the box, refines the
/// [`REFINED_SAMPLES`] best points by pattern search, and also refines the
/// previous scale's best point.
pub fn estimate_cstar(ratio: &Ratio<'_>, domain: &SearchDomain, budget: Budget, seed: u64) -> CStarEstimate {
    let eval = |x: &[f64]| ratio.at(x).unwrap_or(0.0);
    let mut path: Vec<ScaleBest> = Vec::new();
    let mut any_valid = false;
    let mut factor = 1.0;
    for level in 0u64.. {
        let d = domain.scaled(factor);
        let half = d.lo.iter().chain(&d.hi).fold(0.0f64, |m, v| m.max(v.abs()));
        let mut rng = stream_rng(seed ^ 0x5eed_c0de, level << 32);
        let samples = latin_hypercube(&d.lo, &d.hi, budget.samples, &mut rng);
        let values: Vec<Option<f64>> = samples.par_iter().map(|x| ratio.at(x)).collect();
        any_valid |= values.iter().any(Option::is_some);
        let mut ranked: Vec<usize> = (0..samples.len()).filter(|&i| values[i].is_some_and(|v| v > 0.0)).collect();
        ranked.sort_by(|&a, &b| by_value_then_index((-values[a].unwrap(), a), (-values[b].unwrap(), b)));
        ranked.truncate(REFINED_SAMPLES);
        let mut starts: Vec<Vec<f64>> = ranked.iter().map(|&i| samples[i].clone()).collect();
        if let Some(prev) = path.last() {
            starts.push(prev.point.clone());
        }
        let search = LocalSearch {
            lo: &d.lo,
            hi: &d.hi,
            iters: (budget.iters / 4).max(200),
            initial_step: 0.1 * d.max_width().max(1e-3),
            restore: None,
        };
        let neg = |x: &[f64]| -eval(x);
        let refined: Vec<(Vec<f64>, f64)> = starts
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let mut rng = stream_rng(seed ^ 0x5eed_c0de, (level << 32) + i as u64 + 1);
                let (y, v) = search.run(&neg, x.clone(), neg(x), &mut rng);
                (y, -v)
            })
            .collect();
        let best = refined
            .iter()
            .enumerate()
            .filter(|(_, r)| r.1 > 0.0)
            .min_by(|(i, a), (j, b)| by_value_then_index((-a.1, *i), (-b.1, *j)));
        if let Some((_, (p, r))) = best {
            path.push(ScaleBest {
                scale: half,
                point: p.clone(),
                ratio: *r,
            });
        }
        if half >= domain.escape_scale || factor > 1e30 {
            break;
        }
        factor *= 10.0;
    }

    let best = path
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.ratio.total_cmp(&b.ratio).then(j.cmp(i)))
        .map(|(_, s)| s.clone());
    let mut value = best.as_ref().map_or(0.0, |b| b.ratio);
    let mut witness = best.as_ref().map(|b| b.point.clone());
    let mut unbounded = value > RATIO_UNBOUNDED;
    if let (false, Some(b)) = (unbounded, &best) {
        // a maximizer pressed against the floor may hide a blow-up as psi -> 0
        let near_floor = ratio.residual.eval(&b.point).ok().and_then(|v| v.as_finite()).is_some_and(|p| p <= 1e3 * RATIO_PSI_FLOOR);
        if near_floor {
            let (p, r) = refine_below_floor(ratio, domain, &b.point, budget, seed);
            if r >= FLOOR_BLOWUP * b.ratio.max(f64::MIN_POSITIVE) {
                unbounded = true;
                value = r;
                witness = Some(p);
            }
        }
    }
    CStarEstimate {
        value,
        unbounded,
        inconclusive: !any_valid,
        witness,
        path,
    }
}

fn refine_below_floor(ratio: &Ratio<'_>, domain: &SearchDomain, x: &[f64], budget: Budget, seed: u64) -> (Vec<f64>, f64) {
    let (lo, hi) = domain.escape_box();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
    let search = LocalSearch {
        lo: &lo,
        hi: &hi,
        iters: budget.iters.max(400),
        initial_step: 0.5 * scale,
        restore: None,
    };
    let neg = |y: &[f64]| -ratio.at_floor(y, RATIO_FINE_FLOOR).unwrap_or(0.0);
    let mut rng = stream_rng(seed ^ 0x5eed_c0de, u64::MAX);
    let (y, v) = search.run(&neg, x.to_vec(), neg(x), &mut rng);
    (y, -v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::ResidualSpec;
    use crate::problem::Problem;

    fn estimate(text: &str, form: PenaltySpec, fstar: f64) -> CStarEstimate {
        let p = Problem::from_text(text).unwrap();
        let r = ResidualSpec::default_for(&p.feasible).resolve(&p.feasible, p.n).unwrap();
        let ratio = Ratio {
            objective: &p.objective,
            residual: &r,
            form,
            fstar,
        };
        estimate_cstar(&ratio, &p.domain, Budget::preset("quick").unwrap(), 5)
    }

    #[test]
    fn linear_ratio_is_one() {
        let e = estimate(include_str!("../../corpus/ex4iii.problem"), PenaltySpec::Plain { c: 1.0 }, 0.0);
        assert!(!e.unbounded && (e.value - 1.0).abs() < 1e-2, "{}", e.value);
    }

    #[test]
    fn blow_up_at_the_floor_is_unbounded() {
        // (x0^2 + x1^2) / (x0^2 + x1^4) grows like 1 / x1^2 along x0 = 0
        let text = "name = q\nn = 2\nobjective = -(x0^2 + x1^2)\nresidual = x0^2 + x1^4\nbox.lo = -10\nbox.hi = 10\n";
        let e = estimate(text, PenaltySpec::Plain { c: 1.0 }, 0.0);
        assert!(e.unbounded, "{}", e.value);
        let e = estimate(text, PenaltySpec::TwoPower { c: 1.0, alpha: 0.5, beta: 1.0 }, 0.0);
        assert!(!e.unbounded && e.value <= 1.01, "{}", e.value);
    }
}
