//! Residual functions and the four penalty forms built on them.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::constraint::{clamp_residual, ConeSet, FeasibleSet};
use crate::expr::{EvalError, ExtReal, Expression, ScalarFn};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PenaltyError {
    #[error("invalid penalty parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot parse penalty `{0}` (expected plain(c), power(c,alpha), twopower(c,alpha,beta) or curvature(c,alpha))")]
    Syntax(String),
    #[error("residual `{0}` needs a cone-form feasible set")]
    NeedsConeForm(&'static str),
}

/// Which residual to build for a feasible set.
#[derive(Debug, Clone, PartialEq)]
pub enum ResidualSpec {
    DistToCone,
    /// `max{g_1, ..., g_m, 0}` for inequality systems.
    MaxPlus,
    Custom(Expression),
}

impl ResidualSpec {
    /// The natural residual of `set`: the cone distance or its own `psi`.
    pub fn default_for(set: &FeasibleSet) -> Self {
        match set {
            FeasibleSet::Cone { .. } => ResidualSpec::DistToCone,
            FeasibleSet::Residual { psi } => ResidualSpec::Custom(psi.clone()),
        }
    }

    pub fn resolve(&self, set: &FeasibleSet, n: usize) -> Result<Residual, PenaltyError> {
        let kind = match (self, set) {
            (ResidualSpec::DistToCone, FeasibleSet::Cone { g, cone }) => ResidualKind::DistToCone {
                g: g.clone(),
                cone: cone.clone(),
            },
            (ResidualSpec::DistToCone, FeasibleSet::Residual { psi }) => ResidualKind::Custom(psi.clone()),
            (ResidualSpec::MaxPlus, FeasibleSet::Cone { g, .. }) => ResidualKind::MaxPlus(g.clone()),
            (ResidualSpec::MaxPlus, FeasibleSet::Residual { .. }) => return Err(PenaltyError::NeedsConeForm("maxplus")),
            (ResidualSpec::Custom(e), _) => ResidualKind::Custom(e.clone()),
        };
        Ok(Residual { n, kind })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ResidualKind {
    DistToCone { g: Vec<Expression>, cone: ConeSet },
    MaxPlus(Vec<Expression>),
    Custom(Expression),
}

/// A residual bound to concrete data; evaluates to a value in `[0, inf]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    n: usize,
    kind: ResidualKind,
}

impl Residual {
    pub fn eval(&self, x: &[f64]) -> Result<ExtReal, EvalError> {
        match &self.kind {
            ResidualKind::DistToCone { g, cone } => {
                let mut y = Vec::with_capacity(g.len());
                for gi in g {
                    let v = gi.eval(x)?;
                    if v.is_infinite() {
                        return Ok(ExtReal::INFINITY);
                    }
                    y.push(v.get());
                }
                ExtReal::new(cone.dist(&y))
            }
            ResidualKind::MaxPlus(g) => {
                let mut acc = ExtReal::ZERO;
                for gi in g {
                    acc = acc.max(gi.eval(x)?);
                }
                Ok(acc)
            }
            ResidualKind::Custom(psi) => clamp_residual(psi.eval(x)?),
        }
    }

    pub fn is_semialgebraic(&self) -> bool {
        match &self.kind {
            ResidualKind::DistToCone { g, .. } | ResidualKind::MaxPlus(g) => g.iter().all(Expression::is_semialgebraic),
            ResidualKind::Custom(psi) => psi.is_semialgebraic(),
        }
    }
}

impl ScalarFn for Residual {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> Result<ExtReal, EvalError> {
        self.eval(x)
    }

    fn is_semialgebraic(&self) -> bool {
        Residual::is_semialgebraic(self)
    }
}

/// A penalty form with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltySpec {
    /// `f + c psi`
    Plain { c: f64 },
    /// `f + c psi^alpha`
    Power { c: f64, alpha: f64 },
    /// `f + c (psi^alpha + psi^beta)`
    TwoPower { c: f64, alpha: f64, beta: f64 },
    /// `f + c (1 + f^2) psi^alpha`
    Curvature { c: f64, alpha: f64 },
}

impl PenaltySpec {
    pub fn validate(self) -> Result<Self, PenaltyError> {
        let c = self.c();
        if !(c > 0.0 && c.is_finite()) {
            return Err(PenaltyError::InvalidParameter(format!("c must be positive, got {c}")));
        }
        let alpha = self.alpha();
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(PenaltyError::InvalidParameter(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if let Some(beta) = self.beta() {
            if !(beta >= 1.0 && beta.is_finite()) {
                return Err(PenaltyError::InvalidParameter(format!("beta must be at least 1, got {beta}")));
            }
        }
        Ok(self)
    }

    pub fn form_name(self) -> &'static str {
        match self {
            PenaltySpec::Plain { .. } => "plain",
            PenaltySpec::Power { .. } => "power",
            PenaltySpec::TwoPower { .. } => "twopower",
            PenaltySpec::Curvature { .. } => "curvature",
        }
    }

    pub fn c(self) -> f64 {
        match self {
            PenaltySpec::Plain { c }
            | PenaltySpec::Power { c, .. }
            | PenaltySpec::TwoPower { c, .. }
            | PenaltySpec::Curvature { c, .. } => c,
        }
    }

    pub fn alpha(self) -> f64 {
        match self {
            PenaltySpec::Plain { .. } => 1.0,
            PenaltySpec::Power { alpha, .. } | PenaltySpec::TwoPower { alpha, .. } | PenaltySpec::Curvature { alpha, .. } => {
                alpha
            }
        }
    }

    pub fn beta(self) -> Option<f64> {
        match self {
            PenaltySpec::TwoPower { beta, .. } => Some(beta),
            _ => None,
        }
    }

    /// Same form with a different weight.
    pub fn with_c(self, c: f64) -> Self {
        match self {
            PenaltySpec::Plain { .. } => PenaltySpec::Plain { c },
            PenaltySpec::Power { alpha, .. } => PenaltySpec::Power { c, alpha },
            PenaltySpec::TwoPower { alpha, beta, .. } => PenaltySpec::TwoPower { c, alpha, beta },
            PenaltySpec::Curvature { alpha, .. } => PenaltySpec::Curvature { c, alpha },
        }
    }

    /// The term multiplied by `c`, given `f(x)` and `psi(x)`; `+inf` when
    /// either input is infinite and the term depends on it.
    pub fn effective_residual(self, f: f64, psi: f64) -> f64 {
        let power = |p: f64| if psi == 0.0 { 0.0 } else { psi.powf(p) };
        match self {
            PenaltySpec::Plain { .. } => psi,
            PenaltySpec::Power { alpha, .. } => power(alpha),
            PenaltySpec::TwoPower { alpha, beta, .. } => power(alpha) + power(beta),
            PenaltySpec::Curvature { alpha, .. } => {
                let w = power(alpha);
                if w == 0.0 {
                    0.0
                } else {
                    (1.0 + f * f) * w
                }
            }
        }
    }

    /// `f + c * effective_residual` in extended reals.
    pub fn combine(self, f: ExtReal, psi: ExtReal) -> ExtReal {
        if f.is_infinite() {
            return ExtReal::INFINITY;
        }
        let term = self.effective_residual(f.get(), psi.get());
        if term.is_infinite() {
            return ExtReal::INFINITY;
        }
        let v = f.get() + self.c() * term;
        ExtReal::new(v).unwrap_or(ExtReal::INFINITY)
    }
}

impl fmt::Display for PenaltySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PenaltySpec::Plain { c } => write!(f, "plain({c})"),
            PenaltySpec::Power { c, alpha } => write!(f, "power({c},{alpha})"),
            PenaltySpec::TwoPower { c, alpha, beta } => write!(f, "twopower({c},{alpha},{beta})"),
            PenaltySpec::Curvature { c, alpha } => write!(f, "curvature({c},{alpha})"),
        }
    }
}

impl FromStr for PenaltySpec {
    type Err = PenaltyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PenaltyError::Syntax(s.to_string());
        let t = s.trim();
        let open = t.find('(').ok_or_else(bad)?;
        let args = t[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let args: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        let spec = match (t[..open].trim(), args.as_slice()) {
            ("plain", &[c]) => PenaltySpec::Plain { c },
            ("power", &[c, alpha]) => PenaltySpec::Power { c, alpha },
            ("twopower", &[c, alpha, beta]) => PenaltySpec::TwoPower { c, alpha, beta },
            ("curvature", &[c, alpha]) => PenaltySpec::Curvature { c, alpha },
            _ => return Err(bad()),
        };
        spec.validate()
    }
}

/// `x -> f(x) + c * effective_residual(x)`.
pub struct Penalized<'a> {
    pub objective: &'a Expression,
    pub residual: &'a Residual,
    pub spec: PenaltySpec,
}

impl ScalarFn for Penalized<'_> {
    fn dim(&self) -> usize {
        self.objective.dim()
    }

    fn value(&self, x: &[f64]) -> Result<ExtReal, EvalError> {
        let f = self.objective.eval(x)?;
        if f.is_infinite() {
            return Ok(ExtReal::INFINITY);
        }
        let psi = self.residual.eval(x)?;
        Ok(self.spec.combine(f, psi))
    }

    fn is_semialgebraic(&self) -> bool {
        self.objective.is_semialgebraic() && self.residual.is_semialgebraic()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::ConeFactor;
    use crate::expr::parse;
    use approx::assert_abs_diff_eq;

    fn zero_cone(g: &str, n: usize) -> FeasibleSet {
        FeasibleSet::cone(vec![parse(g, n).unwrap()], ConeSet::new(vec![ConeFactor::Zero]).unwrap()).unwrap()
    }

    #[test]
    fn residual_examples() {
        let s = zero_cone("x0", 2);
        let r = ResidualSpec::DistToCone.resolve(&s, 2).unwrap();
        assert_eq!(r.eval(&[1.5, 7.0]).unwrap().get(), 1.5);

        let s = zero_cone("x0 - 1", 1);
        let r = ResidualSpec::MaxPlus.resolve(&s, 1).unwrap();
        assert_eq!(r.eval(&[0.2]).unwrap().get(), 0.0);
        assert_abs_diff_eq!(r.eval(&[1.5]).unwrap().get(), 0.5);

        let psi = parse("x0^2 + x1^4", 2).unwrap();
        let s = FeasibleSet::Residual { psi: psi.clone() };
        let r = ResidualSpec::default_for(&s).resolve(&s, 2).unwrap();
        assert_eq!(r.eval(&[1.0, 1.0]).unwrap().get(), 2.0);
    }

    #[test]
    fn negative_custom_residual_rejected() {
        let s = FeasibleSet::Residual {
            psi: parse("x0", 1).unwrap(),
        };
        let r = ResidualSpec::default_for(&s).resolve(&s, 1).unwrap();
        assert!(matches!(r.eval(&[-1.0]), Err(EvalError::NegativeResidual(_))));
    }

    #[test]
    fn penalized_examples() {
        let f = parse("x0 - x1", 2).unwrap();
        let s = FeasibleSet::Residual {
            psi: parse("abs(x0 - x1)", 2).unwrap(),
        };
        let r = ResidualSpec::default_for(&s).resolve(&s, 2).unwrap();
        let p = Penalized {
            objective: &f,
            residual: &r,
            spec: PenaltySpec::Plain { c: 2.0 },
        };
        assert_eq!(p.value(&[3.0, 1.0]).unwrap().get(), 6.0);

        let f = parse("-(x0^2 + x1^2)", 2).unwrap();
        let s = FeasibleSet::Residual {
            psi: parse("x0^2 + x1^4", 2).unwrap(),
        };
        let r = ResidualSpec::default_for(&s).resolve(&s, 2).unwrap();
        let p = Penalized {
            objective: &f,
            residual: &r,
            spec: PenaltySpec::TwoPower {
                c: 2.0,
                alpha: 0.5,
                beta: 1.0,
            },
        };
        assert_eq!(p.value(&[0.0, 1.0]).unwrap().get(), 3.0);

        let f = parse("x0", 1).unwrap();
        let s = FeasibleSet::Residual {
            psi: parse("abs(x0)/(1 + x0^2)", 1).unwrap(),
        };
        let r = ResidualSpec::default_for(&s).resolve(&s, 1).unwrap();
        let p = Penalized {
            objective: &f,
            residual: &r,
            spec: PenaltySpec::Curvature { c: 1.0, alpha: 1.0 },
        };
        assert_abs_diff_eq!(p.value(&[-3.0]).unwrap().get(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn infinite_objective_stays_infinite() {
        let spec = PenaltySpec::Curvature { c: 1.0, alpha: 0.5 };
        assert!(spec.combine(ExtReal::INFINITY, ExtReal::ZERO).is_infinite());
        assert!(PenaltySpec::Plain { c: 1.0 }
            .combine(ExtReal::finite(1.0), ExtReal::INFINITY)
            .is_infinite());
        assert_eq!(
            PenaltySpec::Power { c: 3.0, alpha: 0.5 }.combine(ExtReal::finite(-1.0), ExtReal::ZERO),
            ExtReal::finite(-1.0)
        );
    }

    #[test]
    fn spec_syntax_and_validation() {
        for s in ["plain(1.5)", "power(2,0.5)", "twopower(2,0.5,1)", "curvature(1,1)"] {
            let p: PenaltySpec = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!("plain(0)".parse::<PenaltySpec>().is_err());
        assert!("power(1,1.5)".parse::<PenaltySpec>().is_err());
        assert!("twopower(1,0.5,0.5)".parse::<PenaltySpec>().is_err());
        assert!("quadratic(1)".parse::<PenaltySpec>().is_err());
        assert!("plain(1,2)".parse::<PenaltySpec>().is_err());
    }
}
