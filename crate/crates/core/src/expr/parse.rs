//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | power
//! power    := atom ('^' exponent)?
//! exponent := INT | '(' ['-'] INT ['/' INT] ')'
//! atom     := NUMBER | 'x' INT | '(' expr ')'
//!           | ('abs' | 'pos' | 'exp') '(' expr ')'
//!           | ('max' | 'min') '(' expr (',' expr)* ')'
//!           | 'ind' '(' guard ')'
//!           | 'pw' '(' ('(' guard ':' expr ')' ',')* 'default' ':' expr ')'
//! guard    := cmp ('&&' cmp)*
//! cmp      := expr ('==' | '!=' | '<=' | '<') expr
//! ```
//!
//! A `-` directly followed by a numeric literal (and no `^`) folds into a
//! negative constant.

use thiserror::Error;

use super::{Atom, CmpOp, Exponent, Expression, Guard, Node};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("variable x{index} at byte {offset} is out of range for n = {n}")]
    VariableOutOfRange { index: usize, n: usize, offset: usize },
}

/// Parses `text` as an expression over `n` variables.
pub fn parse(text: &str, n: usize) -> Result<Expression, ParseError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, n };
    let root = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(Expression { n, root })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n: usize,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn peek_str(&mut self, s: &str) -> bool {
        self.skip_ws();
        self.src[self.pos..].starts_with(s.as_bytes())
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.peek_str(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat(s) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{s}`")))
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat("+") {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.peek() == Some(b'-') {
                self.pos += 1;
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat("*") {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat("/") {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.peek() != Some(b'-') {
            return self.power();
        }
        self.pos += 1;
        if matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == b'.') {
            let save = self.pos;
            let v = self.number()?;
            if self.peek() != Some(b'^') {
                return Ok(Node::Const(-v));
            }
            self.pos = save;
        }
        Ok(Node::Neg(Box::new(self.unary()?)))
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if !self.eat("^") {
            return Ok(base);
        }
        let e = if self.eat("(") {
            let neg = self.eat("-");
            let num = self.integer()? as i64;
            let den = if self.eat("/") { self.integer()? } else { 1 };
            self.expect(")")?;
            Exponent::new(if neg { -num } else { num }, den).ok_or_else(|| self.error("zero exponent denominator"))?
        } else if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            Exponent::integer(self.integer()? as i64)
        } else {
            return Err(self.error("exponent must be an integer or `(p/q)`"));
        };
        Ok(Node::Pow(Box::new(base), e))
    }

    fn integer(&mut self) -> Result<u64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected integer"));
        }
        if self.src.get(self.pos) == Some(&b'.') {
            return Err(self.error("rational exponents are written `(p/q)`"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| ParseError::Syntax {
                offset: start,
                message: "integer out of range".into(),
            })
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut count = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            count += digits(self);
        }
        if count == 0 {
            self.pos = start;
            return Err(self.error("expected number"));
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse().map_err(|_| ParseError::Syntax {
            offset: start,
            message: format!("bad number `{text}`"),
        })
    }

    fn ident(&mut self) -> (usize, &str) {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        (start, std::str::from_utf8(&self.src[start..self.pos]).unwrap())
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Node::Const(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() => {
                let (start, name) = self.ident();
                let name = name.to_string();
                if let Some(idx) = name.strip_prefix('x').filter(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())) {
                    let index: usize = idx.parse().map_err(|_| ParseError::Syntax {
                        offset: start,
                        message: "bad variable index".into(),
                    })?;
                    if index >= self.n {
                        return Err(ParseError::VariableOutOfRange { index, n: self.n, offset: start });
                    }
                    return Ok(Node::Var(index));
                }
                self.function(start, &name)
            }
            Some(c) => Err(self.error(format!("unexpected character `{}`", c as char))),
        }
    }

    fn function(&mut self, start: usize, name: &str) -> Result<Node, ParseError> {
        let unary = |p: &mut Self| -> Result<Box<Node>, ParseError> {
            let e = p.expr()?;
            p.expect(")")?;
            Ok(Box::new(e))
        };
        if !matches!(name, "abs" | "pos" | "exp" | "max" | "min" | "ind" | "pw") {
            return Err(ParseError::UnknownFunction {
                name: name.to_string(),
                offset: start,
            });
        }
        self.expect("(")?;
        match name {
            "abs" => Ok(Node::Abs(unary(self)?)),
            "pos" => Ok(Node::Pos(unary(self)?)),
            "exp" => Ok(Node::Exp(unary(self)?)),
            "max" | "min" => {
                let mut items = vec![self.expr()?];
                while self.eat(",") {
                    items.push(self.expr()?);
                }
                self.expect(")")?;
                Ok(if name == "max" { Node::Max(items) } else { Node::Min(items) })
            }
            "ind" => {
                let g = self.guard()?;
                self.expect(")")?;
                Ok(Node::Ind(g))
            }
            "pw" => self.piecewise(),
            _ => unreachable!(),
        }
    }

    fn piecewise(&mut self) -> Result<Node, ParseError> {
        let mut arms = Vec::new();
        loop {
            if self.peek_str("default") {
                let (_, _) = self.ident();
                self.expect(":")?;
                let default = Box::new(self.expr()?);
                self.expect(")")?;
                return Ok(Node::Piecewise { arms, default });
            }
            self.expect("(")?;
            let g = self.guard()?;
            self.expect(":")?;
            let e = self.expr()?;
            self.expect(")")?;
            self.expect(",")?;
            arms.push((g, e));
        }
    }

    fn guard(&mut self) -> Result<Guard, ParseError> {
        let mut atoms = vec![self.comparison()?];
        while self.eat("&&") {
            atoms.push(self.comparison()?);
        }
        Ok(Guard { atoms })
    }

    fn comparison(&mut self) -> Result<Atom, ParseError> {
        let lhs = self.expr()?;
        let op = if self.eat("==") {
            CmpOp::Eq
        } else if self.eat("!=") {
            CmpOp::Ne
        } else if self.eat("<=") {
            CmpOp::Le
        } else if self.eat("<") {
            CmpOp::Lt
        } else {
            return Err(self.error("expected one of `==`, `!=`, `<=`, `<`"));
        };
        let rhs = self.expr()?;
        Ok(Atom { lhs, op, rhs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(i: usize) -> Box<Node> {
        Box::new(Node::Var(i))
    }

    #[test]
    fn grammar_examples() {
        let e = parse("x0^3", 1).unwrap();
        assert_eq!(e.root(), &Node::Pow(var(0), Exponent::integer(3)));

        let e = parse("abs(x0) + ind(x0 != 0)", 1).unwrap();
        let expected = Node::Add(
            Box::new(Node::Abs(var(0))),
            Box::new(Node::Ind(Guard {
                atoms: vec![Atom {
                    lhs: Node::Var(0),
                    op: CmpOp::Ne,
                    rhs: Node::Const(0.0),
                }],
            })),
        );
        assert_eq!(e.root(), &expected);

        let e = parse("exp(x0*x1)", 2).unwrap();
        assert_eq!(e.root(), &Node::Exp(Box::new(Node::Mul(var(0), var(1)))));
    }

    #[test]
    fn whitespace_insensitive() {
        assert_eq!(parse("x0+x1*2", 2).unwrap(), parse("  x0 +\tx1 * 2 ", 2).unwrap());
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let e = parse("-x0^2", 1).unwrap();
        assert_eq!(e.root(), &Node::Neg(Box::new(Node::Pow(var(0), Exponent::integer(2)))));
        let e = parse("-2^2", 1).unwrap();
        assert_eq!(
            e.root(),
            &Node::Neg(Box::new(Node::Pow(Box::new(Node::Const(2.0)), Exponent::integer(2))))
        );
        assert_eq!(parse("-2", 1).unwrap().root(), &Node::Const(-2.0));
        assert_eq!(parse("-(2)", 1).unwrap().root(), &Node::Neg(Box::new(Node::Const(2.0))));
    }

    #[test]
    fn error_reporting() {
        match parse("x0 + ", 1) {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("sin(x0)", 1), Err(ParseError::UnknownFunction { name, .. }) if name == "sin"));
        assert!(matches!(
            parse("x0 + x3", 2),
            Err(ParseError::VariableOutOfRange { index: 3, n: 2, offset: 5 })
        ));
        assert!(parse("x0^0.5", 1).is_err());
        assert!(parse("x0 x1", 2).is_err());
        assert!(parse("ind(x0)", 1).is_err());
    }

    #[test]
    fn numbers() {
        assert_eq!(parse("1.5e-3", 0).unwrap().root(), &Node::Const(1.5e-3));
        assert_eq!(parse(".25", 0).unwrap().root(), &Node::Const(0.25));
        assert_eq!(parse("2E3", 0).unwrap().root(), &Node::Const(2000.0));
    }
}
