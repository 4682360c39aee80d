//! Target sets `C` built from one-dimensional factors, and the feasible set
//! `S` they induce.

mod cone;

use thiserror::Error;

pub use cone::{ConeFactor, ConeSet, NormalCone, NormalFactor, ACTIVE_TOL, DEFAULT_RESOLUTION};

use crate::expr::{EvalError, ExtReal, Expression, Node, ScalarFn};

/// Default absolute membership tolerance.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Custom residual values in `[-NEGATIVE_BAND, 0)` are treated as zero.
pub const NEGATIVE_BAND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstraintError {
    #[error("empty interval [{a}, {b}]")]
    EmptyInterval { a: f64, b: f64 },
    #[error("unknown cone factor `{0}` (expected zero, nonpos, nonneg, interval(a,b) or line)")]
    UnknownFactor(String),
    #[error("a cone needs at least one factor")]
    NoFactors,
    #[error("point has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point is at distance {dist} from the cone")]
    NotInCone { dist: f64 },
    #[error("{constraints} constraint expressions but {factors} cone factors")]
    FactorCount { constraints: usize, factors: usize },
    #[error("operation needs a cone-form feasible set")]
    NotConeForm,
}

/// Clamps a residual value into `[0, inf]`, rejecting values below the
/// negativity band.
pub fn clamp_residual(v: ExtReal) -> Result<ExtReal, EvalError> {
    let x = v.get();
    if x < -NEGATIVE_BAND {
        Err(EvalError::NegativeResidual(x))
    } else if x < 0.0 {
        Ok(ExtReal::ZERO)
    } else {
        Ok(v)
    }
}

/// The feasible set `S`.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    /// `S = {x : g(x) in C}`.
    Cone { g: Vec<Expression>, cone: ConeSet },
    /// `S = {x : psi(x) = 0}` for a nonnegative `psi`.
    Residual { psi: Expression },
}

impl FeasibleSet {
    pub fn cone(g: Vec<Expression>, cone: ConeSet) -> Result<Self, ConstraintError> {
        if g.len() != cone.dim() {
            return Err(ConstraintError::FactorCount {
                constraints: g.len(),
                factors: cone.dim(),
            });
        }
        Ok(FeasibleSet::Cone { g, cone })
    }

    /// Constraint values `g(x)`; `+inf` components are kept.
    pub fn constraint_values(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        match self {
            FeasibleSet::Cone { g, .. } => g.iter().map(|gi| gi.eval(x).map(ExtReal::get)).collect(),
            FeasibleSet::Residual { .. } => Ok(Vec::new()),
        }
    }

    /// `dist(g(x), C)` in cone form, the clamped residual otherwise.
    pub fn violation(&self, x: &[f64]) -> Result<ExtReal, EvalError> {
        match self {
            FeasibleSet::Cone { cone, .. } => {
                let y = self.constraint_values(x)?;
                if y.iter().any(|v| v.is_infinite()) {
                    return Ok(ExtReal::INFINITY);
                }
                ExtReal::new(cone.dist(&y))
            }
            FeasibleSet::Residual { psi } => clamp_residual(psi.eval(x)?),
        }
    }

    pub fn is_member(&self, x: &[f64], tol: f64) -> Result<bool, EvalError> {
        Ok(self.violation(x)?.get() <= tol)
    }

    /// The set `{x : g(x) in C + u}`, written as `g(x) - u in C`.
    pub fn shifted(&self, u: &[f64]) -> Result<FeasibleSet, ConstraintError> {
        let FeasibleSet::Cone { g, cone } = self else {
            return Err(ConstraintError::NotConeForm);
        };
        if u.len() != g.len() {
            return Err(ConstraintError::DimensionMismatch {
                expected: g.len(),
                got: u.len(),
            });
        }
        let g = g
            .iter()
            .zip(u)
            .map(|(gi, &ui)| {
                if ui == 0.0 {
                    gi.clone()
                } else {
                    let root = Node::Sub(Box::new(gi.root().clone()), Box::new(Node::Const(ui)));
                    Expression::new(gi.dim(), root).expect("shift keeps variable indices")
                }
            })
            .collect();
        Ok(FeasibleSet::Cone { g, cone: cone.clone() })
    }

    pub fn expressions(&self) -> Vec<&Expression> {
        match self {
            FeasibleSet::Cone { g, .. } => g.iter().collect(),
            FeasibleSet::Residual { psi } => vec![psi],
        }
    }
}

/// The violation `x -> dist(g(x), C)` or `psi(x)` as a scalar function.
pub struct Violation<'a> {
    pub set: &'a FeasibleSet,
    pub n: usize,
}

impl ScalarFn for Violation<'_> {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> Result<ExtReal, EvalError> {
        self.set.violation(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn diagonal() -> FeasibleSet {
        FeasibleSet::cone(vec![parse("x0 - x1", 2).unwrap()], ConeSet::new(vec![ConeFactor::Zero]).unwrap()).unwrap()
    }

    #[test]
    fn membership_examples() {
        let s = diagonal();
        assert!(s.is_member(&[1.0, 1.0], MEMBERSHIP_TOL).unwrap());
        assert!(!s.is_member(&[1.0, 0.0], 1e-9).unwrap());
        let r = FeasibleSet::Residual {
            psi: parse("abs(x0)", 1).unwrap(),
        };
        assert!(r.is_member(&[0.0], MEMBERSHIP_TOL).unwrap());
    }

    #[test]
    fn shift_moves_the_target() {
        let s = diagonal().shifted(&[0.5]).unwrap();
        assert!(s.is_member(&[1.5, 1.0], 1e-12).unwrap());
        assert!(!s.is_member(&[1.0, 1.0], 1e-12).unwrap());
        let r = FeasibleSet::Residual {
            psi: parse("abs(x0)", 1).unwrap(),
        };
        assert_eq!(r.shifted(&[1.0]), Err(ConstraintError::NotConeForm));
    }

    #[test]
    fn residual_clamp_band() {
        assert_eq!(clamp_residual(ExtReal::finite(-1e-13)).unwrap(), ExtReal::ZERO);
        assert!(matches!(
            clamp_residual(ExtReal::finite(-1e-6)),
            Err(EvalError::NegativeResidual(_))
        ));
    }

    #[test]
    fn factor_count_checked() {
        let err = FeasibleSet::cone(vec![], ConeSet::new(vec![ConeFactor::Zero]).unwrap());
        assert!(matches!(err, Err(ConstraintError::FactorCount { .. })));
    }
}
