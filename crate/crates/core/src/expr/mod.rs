//! Extended-real scalar expressions over `n` variables.
//!
//! Expressions are parsed from a small ASCII grammar (see [`parse`]),
//! evaluated into [`ExtReal`], and differentiated by central differences.
//! The grammar is closed under printing: `parse(e.to_string())` rebuilds
//! the same tree.

mod eval;
mod ext_real;
mod grad;
mod parse;
mod print;

use thiserror::Error;

pub use ext_real::ExtReal;
pub use grad::{fd_gradient, fd_jacobian, sample_subgradients, uniform_in_ball, GradError, GradientCloud, DEFAULT_FD_STEP};
pub use parse::{parse, ParseError};

/// Failure while evaluating an expression.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("even root of a negative number")]
    EvenRootOfNegative,
    #[error("expression evaluates to -inf")]
    NegativeInfinity,
    #[error("indeterminate form {0}")]
    Indeterminate(&'static str),
    #[error("expression evaluates to NaN")]
    NotANumber,
    #[error("point has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("residual is negative ({0})")]
    NegativeResidual(f64),
}

/// Rational exponent `num/den` in lowest terms with `den > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exponent {
    num: i64,
    den: u64,
}

impl Exponent {
    pub fn new(num: i64, den: u64) -> Option<Self> {
        if den == 0 {
            return None;
        }
        let g = gcd(num.unsigned_abs(), den).max(1);
        Some(Exponent {
            num: num / g as i64,
            den: den / g,
        })
    }

    pub fn integer(num: i64) -> Self {
        Exponent { num, den: 1 }
    }

    pub fn num(self) -> i64 {
        self.num
    }

    pub fn den(self) -> u64 {
        self.den
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Le,
    Lt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
        }
    }
}

/// One comparison `lhs op rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub lhs: Node,
    pub op: CmpOp,
    pub rhs: Node,
}

/// Conjunction of comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub atoms: Vec<Atom>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Exponent),
    Abs(Box<Node>),
    /// Plus-part `[e]_+`.
    Pos(Box<Node>),
    Max(Vec<Node>),
    Min(Vec<Node>),
    Exp(Box<Node>),
    /// `0` where the guard holds, `+∞` elsewhere.
    Ind(Guard),
    /// First arm whose guard holds, else `default`.
    Piecewise {
        arms: Vec<(Guard, Node)>,
        default: Box<Node>,
    },
}

impl Node {
    /// Visits this node and all descendants, guards included.
    pub fn walk(&self, visit: &mut impl FnMut(&Node)) {
        visit(self);
        match self {
            Node::Const(_) | Node::Var(_) => {}
            Node::Neg(a) | Node::Abs(a) | Node::Pos(a) | Node::Exp(a) | Node::Pow(a, _) => a.walk(visit),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.walk(visit);
                b.walk(visit);
            }
            Node::Max(items) | Node::Min(items) => items.iter().for_each(|c| c.walk(visit)),
            Node::Ind(g) => g.walk(visit),
            Node::Piecewise { arms, default } => {
                for (g, e) in arms {
                    g.walk(visit);
                    e.walk(visit);
                }
                default.walk(visit);
            }
        }
    }
}

impl Guard {
    fn walk(&self, visit: &mut impl FnMut(&Node)) {
        for a in &self.atoms {
            a.lhs.walk(visit);
            a.rhs.walk(visit);
        }
    }
}

/// A parsed expression bound to its dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    n: usize,
    root: Node,
}

impl Expression {
    /// Wraps a tree; fails if a variable index is `>= n`.
    pub fn new(n: usize, root: Node) -> Result<Self, ParseError> {
        let mut bad = None;
        root.walk(&mut |node| {
            if let Node::Var(i) = node {
                if *i >= n && bad.is_none() {
                    bad = Some(*i);
                }
            }
        });
        match bad {
            Some(index) => Err(ParseError::VariableOutOfRange { index, n, offset: 0 }),
            None => Ok(Expression { n, root }),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Expression { n, root: Node::Const(c) }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Evaluates at `x`; `x.len()` must equal `n`.
    pub fn eval(&self, x: &[f64]) -> Result<ExtReal, EvalError> {
        if x.len() != self.n {
            return Err(EvalError::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        eval::eval_node(&self.root, x)
    }

    /// False when the tree contains `exp`, the only non-semi-algebraic primitive.
    pub fn is_semialgebraic(&self) -> bool {
        let mut ok = true;
        self.root.walk(&mut |node| {
            if matches!(node, Node::Exp(_)) {
                ok = false;
            }
        });
        ok
    }

    /// True when every node is a constant, variable, `+`, `-`, `*` or a
    /// nonnegative integer power.
    pub fn is_polynomial(&self) -> bool {
        let mut ok = true;
        self.root.walk(&mut |node| match node {
            Node::Const(_) | Node::Var(_) | Node::Neg(_) | Node::Add(..) | Node::Sub(..) | Node::Mul(..) => {}
            Node::Pow(_, e) if e.den() == 1 && e.num() >= 0 => {}
            _ => ok = false,
        });
        ok
    }
}

/// Anything that maps points of `R^n` to extended reals.
///
/// Implemented by [`Expression`] and by the derived objectives built in the
/// penalty and certifier modules.
pub trait ScalarFn: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<ExtReal, EvalError>;

    fn is_semialgebraic(&self) -> bool {
        true
    }

    /// Value as a float, with evaluation failures mapped to `+∞`.
    fn value_or_inf(&self, x: &[f64]) -> f64 {
        self.value(x).map(ExtReal::get).unwrap_or(f64::INFINITY)
    }
}

impl ScalarFn for Expression {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> Result<ExtReal, EvalError> {
        self.eval(x)
    }

    fn is_semialgebraic(&self) -> bool {
        Expression::is_semialgebraic(self)
    }
}

impl<T: ScalarFn + ?Sized> ScalarFn for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, x: &[f64]) -> Result<ExtReal, EvalError> {
        (**self).value(x)
    }

    fn is_semialgebraic(&self) -> bool {
        (**self).is_semialgebraic()
    }
}

impl<T: ScalarFn + ?Sized> ScalarFn for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, x: &[f64]) -> Result<ExtReal, EvalError> {
        (**self).value(x)
    }

    fn is_semialgebraic(&self) -> bool {
        (**self).is_semialgebraic()
    }
}

/// Adapts a closure returning a float (`+inf` allowed) into a [`ScalarFn`].
pub struct FnScalar<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnScalar<F> {
    pub fn new(n: usize, f: F) -> Self {
        FnScalar { n, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarFn for FnScalar<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> Result<ExtReal, EvalError> {
        ExtReal::new((self.f)(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_is_reduced() {
        let e = Exponent::new(2, 6).unwrap();
        assert_eq!((e.num(), e.den()), (1, 3));
        let e = Exponent::new(-4, 2).unwrap();
        assert_eq!((e.num(), e.den()), (-2, 1));
        assert!(Exponent::new(1, 0).is_none());
    }

    #[test]
    fn semialgebraic_flag() {
        assert!(!parse("exp(x0*x1)", 2).unwrap().is_semialgebraic());
        assert!(parse("abs(x0) + ind(x0 != 0)", 1).unwrap().is_semialgebraic());
    }

    #[test]
    fn polynomial_flag() {
        assert!(parse("x0^3 - 2*x1 + x0*x1", 2).unwrap().is_polynomial());
        assert!(!parse("abs(x0)", 1).unwrap().is_polynomial());
        assert!(!parse("x0^(1/2)", 1).unwrap().is_polynomial());
    }
}
