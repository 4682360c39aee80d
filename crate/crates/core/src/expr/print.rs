//! Printing in the input grammar, with the minimum parentheses needed to
//! re-parse to the same tree.

use std::fmt::{self, Display, Formatter};

use super::{Atom, Expression, Guard, Node};

const ADD: u8 = 1;
const MUL: u8 = 2;
const NEG: u8 = 3;
const POW: u8 = 4;
const ATOM: u8 = 5;

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Add(..) | Node::Sub(..) => ADD,
        Node::Mul(..) | Node::Div(..) => MUL,
        Node::Neg(_) => NEG,
        Node::Pow(..) => POW,
        _ => ATOM,
    }
}

fn child(f: &mut Formatter<'_>, node: &Node, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({node})")
    } else {
        write!(f, "{node}")
    }
}

fn binary(f: &mut Formatter<'_>, prec: u8, a: &Node, op: &str, b: &Node) -> fmt::Result {
    child(f, a, precedence(a) < prec)?;
    write!(f, " {op} ")?;
    child(f, b, precedence(b) <= prec)
}

fn list(f: &mut Formatter<'_>, name: &str, items: &[Node]) -> fmt::Result {
    write!(f, "{name}(")?;
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{item}")?;
    }
    write!(f, ")")
}

impl Display for Node {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) if *c < 0.0 || c.is_sign_negative() => write!(f, "({c})"),
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(i) => write!(f, "x{i}"),
            Node::Neg(a) => {
                write!(f, "-")?;
                let parens = matches!(**a, Node::Const(_)) || precedence(a) < POW;
                child(f, a, parens)
            }
            Node::Add(a, b) => binary(f, ADD, a, "+", b),
            Node::Sub(a, b) => binary(f, ADD, a, "-", b),
            Node::Mul(a, b) => binary(f, MUL, a, "*", b),
            Node::Div(a, b) => binary(f, MUL, a, "/", b),
            Node::Pow(a, e) => {
                child(f, a, precedence(a) <= POW)?;
                match (e.num(), e.den()) {
                    (p, 1) if p >= 0 => write!(f, "^{p}"),
                    (p, 1) => write!(f, "^({p})"),
                    (p, q) => write!(f, "^({p}/{q})"),
                }
            }
            Node::Abs(a) => write!(f, "abs({a})"),
            Node::Pos(a) => write!(f, "pos({a})"),
            Node::Exp(a) => write!(f, "exp({a})"),
            Node::Max(items) => list(f, "max", items),
            Node::Min(items) => list(f, "min", items),
            Node::Ind(g) => write!(f, "ind({g})"),
            Node::Piecewise { arms, default } => {
                write!(f, "pw(")?;
                for (g, e) in arms {
                    write!(f, "({g}: {e}), ")?;
                }
                write!(f, "default: {default})")
            }
        }
    }
}

impl Display for Atom {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op.symbol(), self.rhs)
    }
}

impl Display for Guard {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, " && ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

impl Display for Expression {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::parse;

    fn round_trip(src: &str, n: usize) {
        let e = parse(src, n).unwrap();
        let printed = e.to_string();
        let again = parse(&printed, n).unwrap_or_else(|err| panic!("{printed}: {err}"));
        assert_eq!(e, again, "{src} printed as {printed}");
    }

    #[test]
    fn round_trips() {
        for src in [
            "x0^3",
            "-x0^2",
            "-2^2",
            "-(2)",
            "-(-2)",
            "x0 - (x1 - 1)",
            "x0 - -x1",
            "(x0^2)^3",
            "(-x0)^2",
            "x0^(-1) + x1^(2/3) - x0^(-1/3)",
            "2 * (x0 + x1) / (x0 * x1)",
            "x0 / (x1 / 2)",
            "-(x0 * x1)",
            "max(x0, -x1, 3) - min(x0)",
            "pw((x0 - 1 != 0: pos(x0 - 1)), default: 1)",
            "pw((abs(x0) - 1 <= 0: abs(x0)), default: 1)",
            "ind(x0 <= 0 && x1 == 0) + exp(x0 * x1)",
            "1.5e-7 * x0 + 1e300",
        ] {
            round_trip(src, 2);
        }
    }

    #[test]
    fn minimal_parentheses() {
        assert_eq!(parse("(x0 + x1) + x0", 2).unwrap().to_string(), "x0 + x1 + x0");
        assert_eq!(parse("x0 + (x1 + x0)", 2).unwrap().to_string(), "x0 + (x1 + x0)");
        assert_eq!(parse("-2", 1).unwrap().to_string(), "(-2)");
    }
}
