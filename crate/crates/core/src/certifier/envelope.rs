//! Envelope `mu(t) = sup { phi(x) : psi(x) = t }` on level shells, with
//! log-log slopes as the exponents near zero and near infinity.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::expr::ScalarFn;
use crate::solver::{by_value_then_index, minimize_unconstrained, random_unit, stream_rng, Budget, LocalSearch, SearchDomain};

/// Relative half-width of a level shell.
pub const SHELL_WIDTH: f64 = 1e-2;
/// Margin on the fitted exponents before a single exponent is ruled out.
const EXPONENT_MARGIN: f64 = 0.05;

pub fn default_t_grid_zero() -> Vec<f64> {
    (1..=6).map(|k| 10f64.powi(-k)).collect()
}

pub fn default_t_grid_inf() -> Vec<f64> {
    (1..=6).map(|k| 10f64.powi(k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeSample {
    pub t: f64,
    pub mu: f64,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeFit {
    /// Shell maxima, sorted by `t`.
    pub samples: Vec<EnvelopeSample>,
    pub alpha_hat: Option<f64>,
    pub beta_hat: Option<f64>,
    /// RMS residual of the log-log fit near zero.
    pub residual_zero: Option<f64>,
    pub residual_inf: Option<f64>,
    /// Levels where no shell point was found or `mu` was not positive.
    pub dropped: Vec<f64>,
    /// Point from which the level rays start.
    pub base: Vec<f64>,
    pub non_semialgebraic_warning: bool,
}

impl EnvelopeFit {
    pub fn zero_side(&self) -> impl Iterator<Item = &EnvelopeSample> {
        self.samples.iter().filter(|s| s.t < 1.0)
    }

    pub fn inf_side(&self) -> impl Iterator<Item = &EnvelopeSample> {
        self.samples.iter().filter(|s| s.t > 1.0)
    }
}

/// Bisects `s -> psi(base + s * dir)` for the level `t`, starting the
/// bracket search at `hint`. Assumes `psi(base) < t`.
fn hit_level(psi: &dyn ScalarFn, base: &[f64], dir: &[f64], t: f64, hint: f64, s_max: f64) -> Option<Vec<f64>> {
    let at = |s: f64| -> Vec<f64> { base.iter().zip(dir).map(|(b, d)| b + s * d).collect() };
    let val = |s: f64| psi.value(&at(s)).map(|v| v.get()).unwrap_or(f64::INFINITY);
    let mut s = hint.clamp(1e-12, s_max);
    let (mut lo, mut hi);
    if val(s) < t {
        lo = s;
        loop {
            s = (2.0 * s).min(s_max);
            if val(s) >= t {
                hi = s;
                break;
            }
            lo = s;
            if s >= s_max {
                return None;
            }
        }
    } else {
        hi = s;
        loop {
            s *= 0.5;
            if s < 1e-14 {
                lo = 0.0;
                break;
            }
            if val(s) < t {
                lo = s;
                break;
            }
            hi = s;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = val(mid);
        if (v - t).abs() <= 1e-4 * t {
            return Some(at(mid));
        }
        if v < t {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let x = at(hi);
    ((val(hi) - t).abs() <= SHELL_WIDTH * t).then_some(x)
}

/// Maximum of `phi` over the shell `|psi - t| <= SHELL_WIDTH * t`.
fn shell_max(
    phi: &dyn ScalarFn,
    psi: &dyn ScalarFn,
    base: &[f64],
    t: f64,
    domain: &SearchDomain,
    budget: Budget,
    rng: &mut impl Rng,
) -> Option<(Vec<f64>, f64)> {
    let n = base.len();
    let (lo, hi) = domain.escape_box();
    let s_max = 2.0 * domain.escape_scale * (n as f64).sqrt();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = s;
            dirs.push(e);
        }
    }
    let extra = (budget.samples / 16).clamp(32, 512);
    dirs.extend((0..extra).map(|_| random_unit(rng, n)));
    let in_shell = |x: &[f64]| psi.value_or_inf(x).is_finite() && (psi.value_or_inf(x) - t).abs() <= SHELL_WIDTH * t;
    let gated = |x: &[f64]| {
        if in_shell(x) {
            -phi.value(x).map(|v| v.get()).unwrap_or(f64::NEG_INFINITY)
        } else {
            f64::INFINITY
        }
    };
    let hits: Vec<(Vec<f64>, f64)> = dirs
        .iter()
        .filter_map(|d| hit_level(psi, base, d, t, 1.0, s_max))
        .map(|x| {
            let v = gated(&x);
            (x, v)
        })
        .filter(|(_, v)| v.is_finite())
        .collect();
    if hits.is_empty() {
        return None;
    }
    let mut ranked: Vec<usize> = (0..hits.len()).collect();
    ranked.sort_by(|&a, &b| by_value_then_index((hits[a].1, a), (hits[b].1, b)));
    ranked.truncate(8);

    // radial projection back onto the level set
    let restore = |y: &[f64]| -> Option<Vec<f64>> {
        let d: Vec<f64> = y.iter().zip(base).map(|(a, b)| a - b).collect();
        let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r == 0.0 {
            return None;
        }
        let unit: Vec<f64> = d.iter().map(|v| v / r).collect();
        hit_level(psi, base, &unit, t, r, s_max)
    };
    let seeds: Vec<u64> = ranked.iter().map(|_| rng.random()).collect();
    let refined: Vec<(Vec<f64>, f64)> = ranked
        .par_iter()
        .zip(&seeds)
        .map(|(&i, &s)| {
            let (x, v) = &hits[i];
            let radius = x.iter().zip(base).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let search = LocalSearch {
                lo: &lo,
                hi: &hi,
                iters: (budget.iters / 4).max(200),
                initial_step: 0.1 * radius.max(1e-12),
                restore: Some(&restore),
            };
            let mut r = stream_rng(s, 0);
            search.run(&gated, x.clone(), *v, &mut r)
        })
        .collect();
    refined
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| by_value_then_index((a.1, *i), (b.1, *j)))
        .map(|(_, (x, v))| (x, -v))
}

/// Slope and RMS residual of the least-squares line through `(ln t, ln mu)`.
fn loglog_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 3 {
        return None;
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|(t, m)| (t.ln(), m.ln())).collect();
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rms = (xy.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum::<f64>() / k).sqrt();
    Some((slope, rms))
}

/// Base of the level rays: the origin or box center if `psi` vanishes
/// there, else the best unconstrained minimizer of `psi`.
fn ray_base(psi: &dyn ScalarFn, domain: &SearchDomain, budget: Budget, seed: u64) -> Vec<f64> {
    let n = domain.dim();
    let mut candidates = vec![vec![0.0; n], domain.center()];
    let found = minimize_unconstrained(&psi, domain, budget, seed);
    if found.value.is_finite() {
        candidates.push(found.point);
    }
    candidates
        .into_iter()
        .enumerate()
        .map(|(i, x)| (psi.value_or_inf(&x), i, x))
        .min_by(|a, b| by_value_then_index((a.0, a.1), (b.0, b.1)))
        .map(|(_, _, x)| x)
        .expect("nonempty")
}

pub fn fit_envelope(
    phi: &dyn ScalarFn,
    psi: &dyn ScalarFn,
    domain: &SearchDomain,
    t_zero: &[f64],
    t_inf: &[f64],
    budget: Budget,
    seed: u64,
) -> EnvelopeFit {
    let base = ray_base(psi, domain, budget, seed);
    let psi_base = psi.value_or_inf(&base);
    let mut levels: Vec<f64> = t_zero.iter().chain(t_inf).copied().filter(|t| *t > 0.0 && t.is_finite()).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    let found: Vec<Option<(Vec<f64>, f64)>> = levels
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            if !(psi_base < t) {
                return None;
            }
            let mut rng = stream_rng(seed ^ 0xe4e1_0be0, i as u64);
            shell_max(phi, psi, &base, t, domain, budget, &mut rng)
        })
        .collect();

    let mut samples = Vec::new();
    let mut dropped = Vec::new();
    for (t, f) in levels.iter().zip(found) {
        match f {
            Some((point, mu)) if mu > 0.0 && mu.is_finite() => samples.push(EnvelopeSample { t: *t, mu, point }),
            _ => dropped.push(*t),
        }
    }
    let side = |zero: bool| -> Vec<(f64, f64)> {
        let set: &[f64] = if zero { t_zero } else { t_inf };
        samples.iter().filter(|s| set.contains(&s.t)).map(|s| (s.t, s.mu)).collect()
    };
    let fz = loglog_fit(&side(true));
    let fi = loglog_fit(&side(false));
    EnvelopeFit {
        samples,
        alpha_hat: fz.map(|f| f.0),
        beta_hat: fi.map(|f| f.0),
        residual_zero: fz.map(|f| f.1),
        residual_inf: fi.map(|f| f.1),
        dropped,
        base,
        non_semialgebraic_warning: !(phi.is_semialgebraic() && psi.is_semialgebraic()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeValidation {
    pub alpha: f64,
    pub beta: f64,
    /// Largest `phi / (psi^alpha + psi^beta)` on the first sample.
    pub c_hat: f64,
    /// Points of a fresh sample where `2 c_hat (psi^alpha + psi^beta) < phi`.
    pub violations: usize,
    pub samples: usize,
    pub radius: f64,
}

fn uniform_ball(rng: &mut impl Rng, n: usize, radius: f64) -> Vec<f64> {
    let u = random_unit(rng, n);
    let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
    u.into_iter().map(|v| v * r).collect()
}

/// Estimates the constant in `c (psi^alpha + psi^beta) >= phi` on a uniform
/// sample of the ball of the given radius, then checks twice that constant
/// on an independent sample of the same size.
pub fn validate_envelope(
    phi: &dyn ScalarFn,
    psi: &dyn ScalarFn,
    alpha: f64,
    beta: f64,
    radius: f64,
    count: usize,
    seed: u64,
) -> EnvelopeValidation {
    let n = phi.dim();
    let weight = |x: &[f64]| -> Option<(f64, f64)> {
        let f = phi.value(x).ok()?.as_finite()?;
        let p = psi.value(x).ok()?.as_finite()?;
        Some((f, p.powf(alpha) + p.powf(beta)))
    };
    let sample = |stream: u64| -> Vec<Vec<f64>> {
        let mut rng = stream_rng(seed ^ 0x7a11_da7e, stream);
        (0..count).map(|_| uniform_ball(&mut rng, n, radius)).collect()
    };
    let c_hat = sample(0)
        .par_iter()
        .filter_map(|x| weight(x))
        .map(|(f, w)| if f <= 0.0 { 0.0 } else if w > 0.0 { f / w } else { f64::INFINITY })
        .reduce(|| 0.0, f64::max);
    let violations = sample(1)
        .par_iter()
        .filter_map(|x| weight(x))
        .filter(|(f, w)| 2.0 * c_hat * w < *f)
        .count();
    EnvelopeValidation {
        alpha,
        beta,
        c_hat,
        violations,
        samples: count,
        radius,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UnboundedEnd {
    Zero,
    Infinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentVerdict {
    pub alpha: f64,
    /// End at which `phi / psi^alpha` grows without bound, if any.
    pub unbounded_at: Option<UnboundedEnd>,
}

/// For each single exponent, whether `phi / psi^alpha` is unbounded at one
/// end according to the fitted envelope slopes.
pub fn single_exponent_verdicts(fit: &EnvelopeFit, grid: &[f64]) -> Vec<ExponentVerdict> {
    grid.iter()
        .map(|&alpha| {
            let unbounded_at = if fit.alpha_hat.is_some_and(|a| a < alpha - EXPONENT_MARGIN) {
                Some(UnboundedEnd::Zero)
            } else if fit.beta_hat.is_some_and(|b| b > alpha + EXPONENT_MARGIN) {
                Some(UnboundedEnd::Infinity)
            } else {
                None
            };
            ExponentVerdict { alpha, unbounded_at }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn fit(phi: &str, psi: &str, n: usize) -> EnvelopeFit {
        let d = SearchDomain::cube(n, 1e3, 1e4).unwrap();
        let phi = parse(phi, n).unwrap();
        let psi = parse(psi, n).unwrap();
        fit_envelope(&phi, &psi, &d, &default_t_grid_zero(), &default_t_grid_inf(), Budget::preset("quick").unwrap(), 5)
    }

    #[test]
    fn quartic_residual_exponents() {
        let f = fit("x0^2 + x1^2", "x0^2 + x1^4", 2);
        let a = f.alpha_hat.unwrap();
        let b = f.beta_hat.unwrap();
        assert!((a - 0.5).abs() < 0.05, "alpha {a}");
        assert!((b - 1.0).abs() < 0.05, "beta {b}");
        for s in &f.samples {
            // closed form: sqrt(t) below 1/4, t + 1/4 above
            let exact = if s.t < 0.25 { s.t.sqrt() } else { s.t + 0.25 };
            assert!((s.mu - exact).abs() <= 0.03 * exact, "t={} mu={} exact={exact}", s.t, s.mu);
        }
        let v = single_exponent_verdicts(&f, &[0.25, 0.5, 0.75, 1.0]);
        assert!(v.iter().all(|e| e.unbounded_at.is_some()));
    }

    #[test]
    fn identical_functions_have_unit_slopes() {
        let f = fit("x0^2 + x1^2", "x0^2 + x1^2", 2);
        assert!((f.alpha_hat.unwrap() - 1.0).abs() < 0.02);
        assert!((f.beta_hat.unwrap() - 1.0).abs() < 0.02);
        let f = fit("max(0, x1 - x0)", "abs(x0 - x1)", 2);
        assert!((f.alpha_hat.unwrap() - 1.0).abs() < 0.02);
        assert!((f.beta_hat.unwrap() - 1.0).abs() < 0.02);
    }

    #[test]
    fn too_few_levels_leave_exponent_absent() {
        let d = SearchDomain::cube(1, 10.0, 10.0).unwrap();
        let x = parse("x0^2", 1).unwrap();
        let f = fit_envelope(&x, &x, &d, &[0.1, 0.01], &[], Budget::preset("quick").unwrap(), 1);
        assert!(f.alpha_hat.is_none() && f.beta_hat.is_none());
        assert_eq!(f.samples.len(), 2);
    }

    #[test]
    fn validation_constant() {
        let phi = parse("x0^2 + x1^2", 2).unwrap();
        let psi = parse("x0^2 + x1^4", 2).unwrap();
        let v = validate_envelope(&phi, &psi, 0.5, 1.0, 1e3, 20_000, 2);
        assert!(v.c_hat <= 1.0 + 1e-9 && v.c_hat > 0.5);
        assert_eq!(v.violations, 0);
    }

    #[test]
    fn slope_of_exact_monomial() {
        let pts: Vec<(f64, f64)> = [1e-1, 1e-2, 1e-3].iter().map(|t: &f64| (*t, 3.0 * t.powf(0.7))).collect();
        let (s, r) = loglog_fit(&pts).unwrap();
        assert!((s - 0.7).abs() < 1e-12 && r < 1e-12);
    }
}
