use super::{Atom, CmpOp, EvalError, Exponent, ExtReal, Guard, Node};

pub(super) fn eval_node(node: &Node, x: &[f64]) -> Result<ExtReal, EvalError> {
    Ok(match node {
        Node::Const(c) => ExtReal::new(*c)?,
        Node::Var(i) => ExtReal::new(x[*i])?,
        Node::Neg(a) => eval_node(a, x)?.neg()?,
        Node::Add(a, b) => eval_node(a, x)?.add(eval_node(b, x)?)?,
        Node::Sub(a, b) => eval_node(a, x)?.sub(eval_node(b, x)?)?,
        Node::Mul(a, b) => eval_node(a, x)?.mul(eval_node(b, x)?)?,
        Node::Div(a, b) => eval_node(a, x)?.div(eval_node(b, x)?)?,
        Node::Pow(a, e) => pow(eval_node(a, x)?, *e)?,
        Node::Abs(a) => eval_node(a, x)?.abs(),
        Node::Pos(a) => eval_node(a, x)?.pos(),
        Node::Exp(a) => eval_node(a, x)?.exp(),
        Node::Max(items) => fold(items, x, ExtReal::max)?,
        Node::Min(items) => fold(items, x, ExtReal::min)?,
        Node::Ind(g) => {
            if guard_holds(g, x)? {
                ExtReal::ZERO
            } else {
                ExtReal::INFINITY
            }
        }
        Node::Piecewise { arms, default } => {
            for (g, branch) in arms {
                if guard_holds(g, x)? {
                    return eval_node(branch, x);
                }
            }
            eval_node(default, x)?
        }
    })
}

fn fold(items: &[Node], x: &[f64], op: fn(ExtReal, ExtReal) -> ExtReal) -> Result<ExtReal, EvalError> {
    let mut acc = eval_node(&items[0], x)?;
    for item in &items[1..] {
        acc = op(acc, eval_node(item, x)?);
    }
    Ok(acc)
}

fn guard_holds(g: &Guard, x: &[f64]) -> Result<bool, EvalError> {
    for atom in &g.atoms {
        if !atom_holds(atom, x)? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn atom_holds(a: &Atom, x: &[f64]) -> Result<bool, EvalError> {
    let l = eval_node(&a.lhs, x)?;
    let r = eval_node(&a.rhs, x)?;
    Ok(match a.op {
        CmpOp::Eq => l == r,
        CmpOp::Ne => l != r,
        CmpOp::Le => l <= r,
        CmpOp::Lt => l < r,
    })
}

/// Real power with sign-aware odd roots.
fn pow(base: ExtReal, e: Exponent) -> Result<ExtReal, EvalError> {
    let (p, q) = (e.num(), e.den());
    if base.is_infinite() {
        return Ok(match p.signum() {
            1 => ExtReal::INFINITY,
            0 => ExtReal::finite(1.0),
            _ => ExtReal::ZERO,
        });
    }
    let b = base.get();
    if b == 0.0 && p < 0 {
        return Err(EvalError::DivisionByZero);
    }
    if q == 1 {
        let v = match i32::try_from(p) {
            Ok(k) => b.powi(k),
            Err(_) => b.powf(p as f64),
        };
        return ExtReal::new(v);
    }
    if b < 0.0 {
        if q % 2 == 0 {
            return Err(EvalError::EvenRootOfNegative);
        }
        let magnitude = (-b).powf(e.as_f64());
        let v = if p % 2 == 0 { magnitude } else { -magnitude };
        return ExtReal::new(v);
    }
    ExtReal::new(b.powf(e.as_f64()))
}

#[cfg(test)]
mod tests {
    use crate::expr::{parse, EvalError};

    fn ev(src: &str, x: &[f64]) -> Result<f64, EvalError> {
        parse(src, x.len()).unwrap().eval(x).map(|v| v.get())
    }

    #[test]
    fn operation_examples() {
        assert_eq!(ev("x0^3", &[2.0]).unwrap(), 8.0);
        assert_eq!(ev("abs(x0) + ind(x0 != 0)", &[0.0]).unwrap(), f64::INFINITY);
        assert_eq!(ev("abs(x0) + ind(x0 != 0)", &[-0.25]).unwrap(), 0.25);
        assert_eq!(ev("exp(x0*x1)", &[1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn rational_powers() {
        assert!((ev("x0^(1/3)", &[-8.0]).unwrap() + 2.0).abs() < 1e-12);
        assert!((ev("x0^(2/3)", &[-8.0]).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(ev("x0^(1/2)", &[-4.0]), Err(EvalError::EvenRootOfNegative));
        assert_eq!(ev("x0^(1/2)", &[0.0]).unwrap(), 0.0);
        assert_eq!(ev("x0^(-1)", &[0.0]), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn error_paths() {
        assert_eq!(ev("1/x0", &[0.0]), Err(EvalError::DivisionByZero));
        assert_eq!(ev("-ind(x0 < 0)", &[1.0]), Err(EvalError::NegativeInfinity));
        assert_eq!(ev("0 - ind(x0 < 0)", &[1.0]), Err(EvalError::NegativeInfinity));
        assert_eq!(ev("ind(x0 < 0) - ind(x0 < 0)", &[1.0]), Err(EvalError::Indeterminate("inf - inf")));
    }

    #[test]
    fn piecewise_picks_first_matching_arm() {
        let src = "pw((x0 - 1 != 0: pos(x0 - 1)), default: 1)";
        assert_eq!(ev(src, &[1.0]).unwrap(), 1.0);
        assert_eq!(ev(src, &[3.0]).unwrap(), 2.0);
        assert_eq!(ev(src, &[0.5]).unwrap(), 0.0);
        // branches that are not selected are never evaluated
        assert_eq!(ev("pw((x0 != 0: 1/x0), default: 7)", &[0.0]).unwrap(), 7.0);
        let two = "pw((x0 < 0: 1), (x0 < 1: 2), default: 3)";
        assert_eq!(ev(two, &[-1.0]).unwrap(), 1.0);
        assert_eq!(ev(two, &[0.5]).unwrap(), 2.0);
        assert_eq!(ev(two, &[4.0]).unwrap(), 3.0);
    }

    #[test]
    fn extended_max_min() {
        assert_eq!(ev("max(x0, ind(x0 < 0))", &[1.0]).unwrap(), f64::INFINITY);
        assert_eq!(ev("min(x0, ind(x0 < 0))", &[1.0]).unwrap(), 1.0);
        assert_eq!(ev("max(x0, x1, -3)", &[-5.0, -4.0]).unwrap(), -3.0);
    }

    #[test]
    fn conjunction_guard() {
        let src = "ind(x0 <= 0 && x1 == 0)";
        assert_eq!(ev(src, &[-1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(ev(src, &[-1.0, 1.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn dimension_checked() {
        let e = parse("x0", 2).unwrap();
        assert_eq!(e.eval(&[1.0]), Err(EvalError::DimensionMismatch { expected: 2, got: 1 }));
    }
}
