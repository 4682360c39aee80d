//! Real numbers extended by `+∞`.

use std::cmp::Ordering;
use std::fmt;

use super::EvalError;

/// A real number or `+∞`. `-∞` and NaN are never stored.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
pub struct ExtReal(f64);

impl ExtReal {
    pub const INFINITY: ExtReal = ExtReal(f64::INFINITY);
    pub const ZERO: ExtReal = ExtReal(0.0);

    /// Wraps a float. `+inf` maps to [`ExtReal::INFINITY`]; `-inf` and NaN are errors.
    pub fn new(v: f64) -> Result<Self, EvalError> {
        if v.is_nan() {
            Err(EvalError::NotANumber)
        } else if v == f64::NEG_INFINITY {
            Err(EvalError::NegativeInfinity)
        } else {
            Ok(ExtReal(v))
        }
    }

    /// Panics on non-finite input; for literals known to be finite.
    pub fn finite(v: f64) -> Self {
        assert!(v.is_finite(), "ExtReal::finite called with {v}");
        ExtReal(v)
    }

    pub fn is_infinite(self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// The raw value; `f64::INFINITY` for `+∞`.
    pub fn get(self) -> f64 {
        self.0
    }

    pub fn as_finite(self) -> Option<f64> {
        self.is_finite().then_some(self.0)
    }

    /// `+∞` absorbs finite values; finite overflow towards `-∞` is an error.
    pub fn add(self, rhs: ExtReal) -> Result<ExtReal, EvalError> {
        ExtReal::new(self.0 + rhs.0)
    }

    pub fn sub(self, rhs: ExtReal) -> Result<ExtReal, EvalError> {
        match (self.is_infinite(), rhs.is_infinite()) {
            (true, true) => Err(EvalError::Indeterminate("inf - inf")),
            (false, true) => Err(EvalError::NegativeInfinity),
            (true, false) => Ok(ExtReal::INFINITY),
            (false, false) => ExtReal::new(self.0 - rhs.0),
        }
    }

    pub fn neg(self) -> Result<ExtReal, EvalError> {
        if self.is_infinite() {
            Err(EvalError::NegativeInfinity)
        } else {
            Ok(ExtReal(-self.0))
        }
    }

    /// `0·∞ = 0`, `c·∞ = ∞` for `c > 0`, negative times `∞` is an error.
    pub fn mul(self, rhs: ExtReal) -> Result<ExtReal, EvalError> {
        let (inf, other) = match (self.is_infinite(), rhs.is_infinite()) {
            (false, false) => return ExtReal::new(self.0 * rhs.0),
            (true, _) => (self, rhs),
            (false, true) => (rhs, self),
        };
        debug_assert!(inf.is_infinite());
        match other.0.partial_cmp(&0.0) {
            Some(Ordering::Greater) => Ok(ExtReal::INFINITY),
            Some(Ordering::Equal) => Ok(ExtReal::ZERO),
            _ => Err(EvalError::NegativeInfinity),
        }
    }

    pub fn div(self, rhs: ExtReal) -> Result<ExtReal, EvalError> {
        if rhs.0 == 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        match (self.is_infinite(), rhs.is_infinite()) {
            (true, true) => Err(EvalError::Indeterminate("inf / inf")),
            (false, true) => Ok(ExtReal::ZERO),
            (true, false) => {
                if rhs.0 > 0.0 {
                    Ok(ExtReal::INFINITY)
                } else {
                    Err(EvalError::NegativeInfinity)
                }
            }
            (false, false) => ExtReal::new(self.0 / rhs.0),
        }
    }

    pub fn abs(self) -> ExtReal {
        ExtReal(self.0.abs())
    }

    /// `[r]_+ = max{r, 0}`.
    pub fn pos(self) -> ExtReal {
        ExtReal(self.0.max(0.0))
    }

    pub fn max(self, rhs: ExtReal) -> ExtReal {
        if self >= rhs {
            self
        } else {
            rhs
        }
    }

    pub fn min(self, rhs: ExtReal) -> ExtReal {
        if self <= rhs {
            self
        } else {
            rhs
        }
    }

    pub fn exp(self) -> ExtReal {
        ExtReal(self.0.exp())
    }
}

impl fmt::Debug for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "+inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl From<ExtReal> for f64 {
    fn from(v: ExtReal) -> f64 {
        v.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinity_arithmetic() {
        let inf = ExtReal::INFINITY;
        let two = ExtReal::finite(2.0);
        assert!(two.add(inf).unwrap().is_infinite());
        assert!(ExtReal::finite(-1e308).add(ExtReal::finite(-1e308)).is_err());
        assert!(two.mul(inf).unwrap().is_infinite());
        assert_eq!(ExtReal::ZERO.mul(inf).unwrap(), ExtReal::ZERO);
        assert_eq!(two.min(inf), two);
        assert!(inf.neg().is_err());
        assert!(two.sub(inf).is_err());
        assert!(inf.sub(inf).is_err());
        assert!(ExtReal::finite(-1.0).mul(inf).is_err());
        assert_eq!(two.div(inf).unwrap(), ExtReal::ZERO);
        assert!(two.div(ExtReal::ZERO).is_err());
    }

    #[test]
    fn rejects_negative_infinity_and_nan() {
        assert_eq!(ExtReal::new(f64::NEG_INFINITY), Err(EvalError::NegativeInfinity));
        assert_eq!(ExtReal::new(f64::NAN), Err(EvalError::NotANumber));
        assert!(ExtReal::new(f64::INFINITY).unwrap().is_infinite());
    }
}
