#![allow(dead_code)]

use penaltylab::certifier::{CertStatus, RunOptions};
use penaltylab::constraint::{ConeFactor, ConeSet, FeasibleSet};
use penaltylab::expr::{fd_gradient, parse, Expression, ScalarFn, DEFAULT_FD_STEP};
use penaltylab::harness::{corpus, run_command, run_corpus, Command};
use penaltylab::penalty::{Penalized, PenaltySpec, ResidualSpec};
use penaltylab::problem::Problem;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

/// `coef * x0^a * x1^b * x2^c`, total degree at most 3.
#[derive(Debug, Clone)]
pub struct Monomial {
    pub coef: f64,
    pub powers: [u32; 3],
}

pub fn monomial() -> impl Strategy<Value = Monomial> {
    (-5.0..5.0f64, 0u32..=3, 0u32..=3, 0u32..=3)
        .prop_filter("degree at most 3", |(_, a, b, c)| a + b + c <= 3)
        .prop_map(|(coef, a, b, c)| Monomial { coef, powers: [a, b, c] })
}

/// A point of the ball of radius 10 in three dimensions.
pub fn ball_point() -> impl Strategy<Value = [f64; 3]> {
    [-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64].prop_map(|x| {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 10.0 {
            x.map(|v| v * 10.0 / norm)
        } else {
            x
        }
    })
}

pub fn polynomial_text(terms: &[Monomial]) -> String {
    let parts: Vec<String> = terms
        .iter()
        .map(|t| {
            let mut s = format!("({:?})", t.coef);
            for (i, p) in t.powers.iter().enumerate() {
                if *p > 0 {
                    s.push_str(&format!("*x{i}^{p}"));
                }
            }
            s
        })
        .collect();
    parts.join(" + ")
}

/// Exact gradient of the polynomial, term by term.
pub fn polynomial_gradient(terms: &[Monomial], x: &[f64; 3]) -> [f64; 3] {
    let mut g = [0.0; 3];
    for t in terms {
        for (i, gi) in g.iter_mut().enumerate() {
            let p = t.powers[i];
            if p == 0 {
                continue;
            }
            let mut v = t.coef * p as f64 * x[i].powi(p as i32 - 1);
            for j in (0..3).filter(|&j| j != i) {
                v *= x[j].powi(t.powers[j] as i32);
            }
            *gi += v;
        }
    }
    g
}

pub const GRADIENT_TOL: f64 = 1e-4;

pub fn check_gradient(terms: &[Monomial], x: &[f64; 3]) -> Result<(), TestCaseError> {
    let e = parse(&polynomial_text(terms), 3).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let fd = fd_gradient(&e, x, DEFAULT_FD_STEP).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let exact = polynomial_gradient(terms, x);
    for i in 0..3 {
        prop_assert!((fd[i] - exact[i]).abs() <= GRADIENT_TOL, "component {}: fd {} vs exact {}", i, fd[i], exact[i]);
    }
    Ok(())
}

pub fn cone_factor() -> impl Strategy<Value = ConeFactor> {
    prop_oneof![
        Just(ConeFactor::Zero),
        Just(ConeFactor::NonPos),
        Just(ConeFactor::NonNeg),
        Just(ConeFactor::Line),
        (-5.0..5.0f64, 0.0..5.0f64).prop_map(|(a, w)| ConeFactor::Interval(a, a + w)),
    ]
}

/// Factors, a point to project, and a point of the product built directly
/// from each factor's description.
pub fn projection_case() -> impl Strategy<Value = (Vec<ConeFactor>, Vec<f64>, Vec<f64>)> {
    (1usize..=4).prop_flat_map(|m| {
        (
            prop::collection::vec(cone_factor(), m),
            prop::collection::vec(-10.0..10.0f64, m),
            prop::collection::vec((-10.0..10.0f64, 0.0..=1.0f64), m),
        )
            .prop_map(|(factors, y, raw)| {
                let z = factors
                    .iter()
                    .zip(raw)
                    .map(|(f, (r, t))| match *f {
                        ConeFactor::Zero => 0.0,
                        ConeFactor::NonPos => -r.abs(),
                        ConeFactor::NonNeg => r.abs(),
                        ConeFactor::Line => r,
                        ConeFactor::Interval(a, b) => a + t * (b - a),
                    })
                    .collect();
                (factors, y, z)
            })
    })
}

fn in_factor(f: ConeFactor, v: f64) -> bool {
    match f {
        ConeFactor::Zero => v == 0.0,
        ConeFactor::NonPos => v <= 0.0,
        ConeFactor::NonNeg => v >= 0.0,
        ConeFactor::Line => v.is_finite(),
        ConeFactor::Interval(a, b) => a <= v && v <= b,
    }
}

/// The projection lies in C, is no farther than any point of C, and
/// satisfies the obtuse-angle condition.
pub fn check_projection(factors: &[ConeFactor], y: &[f64], z: &[f64]) -> Result<(), TestCaseError> {
    let cone = ConeSet::new(factors.to_vec()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let p = cone.project(y);
    for (f, v) in factors.iter().zip(&p) {
        prop_assert!(in_factor(*f, *v), "{:?} does not contain {}", f, v);
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    prop_assert!(dist(y, &p) <= dist(y, z) + 1e-12);
    prop_assert!((cone.dist(y) - dist(y, &p)).abs() <= 1e-12);
    let angle: f64 = y.iter().zip(&p).zip(z).map(|((yi, pi), zi)| (yi - pi) * (zi - pi)).sum();
    prop_assert!(angle <= 1e-9, "<y - P(y), z - P(y)> = {}", angle);
    Ok(())
}

/// Penalized values dominate `f` and grow with `c`.
pub fn check_penalty_monotone(spec: PenaltySpec, x: &[f64; 2], c_lo: f64, c_hi: f64) -> Result<(), TestCaseError> {
    let f = parse("x0 - x1^2", 2).unwrap();
    let set = FeasibleSet::cone(vec![parse("x0 + x1", 2).unwrap()], ConeSet::new(vec![ConeFactor::NonPos]).unwrap()).unwrap();
    let r = ResidualSpec::DistToCone.resolve(&set, 2).unwrap();
    let at = |c: f64| {
        Penalized {
            objective: &f,
            residual: &r,
            spec: spec.with_c(c),
        }
        .value_or_inf(x)
    };
    let fx = f.value_or_inf(x);
    let (lo, hi) = (at(c_lo), at(c_hi));
    prop_assert!(lo >= fx - 1e-12 * fx.abs().max(1.0), "P_c(x) = {} < f(x) = {}", lo, fx);
    prop_assert!(hi >= lo - 1e-12 * lo.abs().max(1.0), "c = {}: {} vs c = {}: {}", c_lo, lo, c_hi, hi);
    Ok(())
}

pub fn penalty_form() -> impl Strategy<Value = PenaltySpec> {
    prop_oneof![
        Just(PenaltySpec::Plain { c: 1.0 }),
        (0.05..=1.0f64).prop_map(|alpha| PenaltySpec::Power { c: 1.0, alpha }),
        (0.05..=1.0f64, 1.0..4.0f64).prop_map(|(alpha, beta)| PenaltySpec::TwoPower { c: 1.0, alpha, beta }),
        (0.05..=1.0f64).prop_map(|alpha| PenaltySpec::Curvature { c: 1.0, alpha }),
    ]
}

/// Every expression of every bundled problem prints and reparses to the
/// same tree, and every problem file survives a save and reload.
pub fn corpus_roundtrip_failures() -> Vec<String> {
    let mut failures = Vec::new();
    for entry in corpus() {
        let p = Problem::from_text(&entry.text).expect("bundled problem parses");
        let mut exprs: Vec<&Expression> = p.expressions();
        exprs.extend(p.phi.iter());
        for e in exprs {
            let text = e.to_string();
            match parse(&text, e.dim()) {
                Ok(again) if again == *e => {}
                Ok(again) => failures.push(format!("{}: `{text}` reparsed as `{again}`", p.name)),
                Err(err) => failures.push(format!("{}: `{text}`: {err}", p.name)),
            }
        }
        match Problem::from_text(&p.to_text()) {
            Ok(again) if again == p => {}
            _ => failures.push(format!("{}: save and reload differ", p.name)),
        }
    }
    failures
}

/// Cross-checks between the ratio threshold, the certificate and the
/// calmness scan over the bundled problems.
///
/// A finite threshold `c_hat` must make the plain penalty with weight
/// `2 c_hat` certify; a diverging calmness quotient must rule out
/// certification for every plain weight up to `1e3`.
pub fn consistency_failures() -> Vec<String> {
    let mut failures = Vec::new();
    for entry in corpus() {
        let p = Problem::from_text(&entry.text).expect("bundled problem parses");
        let opts = RunOptions::for_problem(&p);
        let status = |c: f64| {
            run_command(&p, &Command::Certify(PenaltySpec::Plain { c }), &opts)
                .ok()
                .and_then(|o| o.text("status").map(str::to_string))
        };

        let cstar = run_command(&p, &Command::CStar(None), &opts).expect("cstar runs");
        let bounded = cstar.text("unbounded") == Some("false") && cstar.text("inconclusive") == Some("false");
        if let (true, Some(chat)) = (bounded, cstar.num("value")) {
            let c = (2.0 * chat).max(1e-3);
            let got = status(c);
            if got.as_deref() != Some(CertStatus::CertifiedExactOnDomain.as_str()) {
                failures.push(format!("{}: c_hat = {chat} but plain({c}) gave {got:?}", p.name));
            }
        }

        if matches!(p.feasible, FeasibleSet::Cone { .. }) {
            let calm = run_command(&p, &Command::Calmness(None), &opts).expect("calmness runs");
            if calm.text("diverging") == Some("true") {
                for c in [1.0, 10.0, 100.0, 1e3] {
                    let got = status(c);
                    if got.as_deref() == Some(CertStatus::CertifiedExactOnDomain.as_str()) {
                        failures.push(format!("{}: calmness diverges but plain({c}) certified", p.name));
                    }
                }
            }
        }
    }
    failures
}

/// Two full corpus runs with timing off render identically.
pub fn reports_identical() -> bool {
    let a = run_corpus(&corpus(), None, None, None, false).expect("corpus runs");
    let b = run_corpus(&corpus(), None, None, None, false).expect("corpus runs");
    a.to_json() == b.to_json() && a.to_csv().unwrap() == b.to_csv().unwrap()
}
