//! Problems and their line-oriented text format.
//!
//! ```text
//! # comment
//! name = ex4iii
//! n = 2
//! objective = x0 - x1
//! constraint.0.expr = x0 - x1
//! constraint.0.cone = zero
//! box.lo = -1000
//! box.hi = 1000
//! expect.certify[plain(1.5)].status = CertifiedExactOnDomain
//! ```
//!
//! Either `constraint.<i>.expr`/`constraint.<i>.cone` pairs or a single
//! `residual` describe the feasible set. Optional keys: `escape_scale`,
//! `seed`, `budget.starts`, `budget.iters`, `budget.samples`, `phi` (the
//! function compared against the residual by the envelope and sequence
//! probes) and `kinf.path.<i>` (a curve `k -> x(k)` written as
//! `;`-separated coordinate expressions in `x0`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::constraint::{ConeFactor, ConeSet, ConstraintError, FeasibleSet};
use crate::expr::{parse, Expression, ParseError};
use crate::solver::{Budget, SearchDomain, SolverError, DEFAULT_ESCAPE_SCALE};

pub const DEFAULT_BOX: f64 = 10.0;
pub const DEFAULT_SEED: u64 = 20240601;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: key `{key}`: {source}")]
    Expression {
        line: usize,
        key: String,
        #[source]
        source: ParseError,
    },
    #[error("line {line}: {source}")]
    Constraint {
        line: usize,
        #[source]
        source: ConstraintError,
    },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Domain(#[from] SolverError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A declared outcome, checked by the corpus runner.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub command: String,
    pub arg: Option<String>,
    pub field: String,
    pub check: Check,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Check {
    /// Literal match of a status name or boolean.
    Is(String),
    Approx { value: f64, tol: f64 },
    AtMost(f64),
    AtLeast(f64),
    Within(f64, f64),
}

/// A value produced by a command for comparison against a [`Check`].
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Num(f64),
    Text(String),
}

impl Check {
    pub fn holds(&self, v: &FieldValue) -> bool {
        match (self, v) {
            (Check::Is(want), FieldValue::Text(got)) => want == got,
            (Check::Is(want), FieldValue::Num(got)) => want.parse::<f64>().is_ok_and(|w| w == *got),
            (Check::Approx { value, tol }, FieldValue::Num(x)) => (x - value).abs() <= *tol,
            (Check::AtMost(b), FieldValue::Num(x)) => x <= b,
            (Check::AtLeast(b), FieldValue::Num(x)) => x >= b,
            (Check::Within(a, b), FieldValue::Num(x)) => a <= x && x <= b,
            _ => false,
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Check::Is(s) => write!(f, "{s}"),
            Check::Approx { value, tol } => write!(f, "{value} +- {tol}"),
            Check::AtMost(b) => write!(f, "<= {b}"),
            Check::AtLeast(b) => write!(f, ">= {b}"),
            Check::Within(a, b) => write!(f, "in [{a}, {b}]"),
        }
    }
}

impl std::fmt::Display for FieldValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldValue::Num(x) => write!(f, "{x}"),
            FieldValue::Text(s) => write!(f, "{s}"),
        }
    }
}

fn parse_check(text: &str) -> Option<Check> {
    let t = text.trim();
    let num = |s: &str| s.trim().parse::<f64>().ok();
    if let Some(r) = t.strip_prefix("<=") {
        return num(r).map(Check::AtMost);
    }
    if let Some(r) = t.strip_prefix(">=") {
        return num(r).map(Check::AtLeast);
    }
    if let Some(r) = t.strip_prefix("in") {
        let inner = r.trim().strip_prefix('[')?.strip_suffix(']')?;
        let (a, b) = inner.split_once(',')?;
        return Some(Check::Within(num(a)?, num(b)?));
    }
    if let Some((v, tol)) = t.split_once("+-") {
        return Some(Check::Approx {
            value: num(v)?,
            tol: num(tol)?,
        });
    }
    if t.is_empty() {
        None
    } else {
        Some(Check::Is(t.to_string()))
    }
}

/// `expect.<command>[<arg>].<field>` without the `expect.` prefix.
fn parse_expect_key(key: &str) -> Option<(String, Option<String>, String)> {
    match key.find('[') {
        Some(open) => {
            let close = key.rfind(']')?;
            let command = key[..open].to_string();
            let arg = key[open + 1..close].to_string();
            let field = key[close + 1..].strip_prefix('.')?.to_string();
            Some((command, Some(arg), field))
        }
        None => {
            let (command, field) = key.split_once('.')?;
            Some((command.to_string(), None, field.to_string()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub name: String,
    pub n: usize,
    pub objective: Expression,
    pub feasible: FeasibleSet,
    pub domain: SearchDomain,
    pub budget: Budget,
    pub seed: u64,
    pub phi: Option<Expression>,
    pub kinf_paths: Vec<Vec<Expression>>,
    pub expectations: Vec<Expectation>,
}

impl Problem {
    pub fn load(path: impl AsRef<Path>) -> Result<Problem, ProblemError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Problem::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Problem, ProblemError> {
        let mut keys: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut expect_lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| ProblemError::Syntax {
                line,
                message: "expected `key = value`".into(),
            })?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k.is_empty() {
                return Err(ProblemError::Syntax {
                    line,
                    message: "empty key".into(),
                });
            }
            if let Some(rest) = k.strip_prefix("expect.") {
                expect_lines.push((line, rest.to_string(), v));
                continue;
            }
            if keys.insert(k.clone(), (line, v)).is_some() {
                return Err(ProblemError::Syntax {
                    line,
                    message: format!("duplicate key `{k}`"),
                });
            }
        }

        let take = |keys: &mut BTreeMap<String, (usize, String)>, k: &str| keys.remove(k);
        let need = |keys: &mut BTreeMap<String, (usize, String)>, k: &str| {
            keys.remove(k).ok_or_else(|| ProblemError::Missing(k.to_string()))
        };
        let number = |line: usize, k: &str, v: &str| -> Result<f64, ProblemError> {
            v.parse::<f64>().map_err(|_| ProblemError::Syntax {
                line,
                message: format!("`{k}` must be a number, got `{v}`"),
            })
        };
        let integer = |line: usize, k: &str, v: &str| -> Result<u64, ProblemError> {
            v.parse::<u64>().map_err(|_| ProblemError::Syntax {
                line,
                message: format!("`{k}` must be a nonnegative integer, got `{v}`"),
            })
        };

        let (_, name) = need(&mut keys, "name")?;
        let (nline, ntext) = need(&mut keys, "n")?;
        let n = integer(nline, "n", &ntext)? as usize;
        let expr = |line: usize, k: &str, v: &str, dim: usize| {
            parse(v, dim).map_err(|source| ProblemError::Expression {
                line,
                key: k.to_string(),
                source,
            })
        };
        let (oline, otext) = need(&mut keys, "objective")?;
        let objective = expr(oline, "objective", &otext, n)?;

        let mut g = Vec::new();
        let mut factors = Vec::new();
        let mut i = 0;
        while let Some((eline, etext)) = take(&mut keys, &format!("constraint.{i}.expr")) {
            let ckey = format!("constraint.{i}.cone");
            let (cline, ctext) = keys.remove(&ckey).ok_or(ProblemError::Missing(ckey))?;
            g.push(expr(eline, &format!("constraint.{i}.expr"), &etext, n)?);
            factors.push(
                ctext
                    .parse::<ConeFactor>()
                    .map_err(|source| ProblemError::Constraint { line: cline, source })?,
            );
            i += 1;
        }
        let residual = take(&mut keys, "residual");
        let feasible = match (g.is_empty(), residual) {
            (false, None) => {
                let cone = ConeSet::new(factors).map_err(|source| ProblemError::Constraint { line: 0, source })?;
                FeasibleSet::cone(g, cone).map_err(|source| ProblemError::Constraint { line: 0, source })?
            }
            (true, Some((line, text))) => FeasibleSet::Residual {
                psi: expr(line, "residual", &text, n)?,
            },
            (false, Some((line, _))) => {
                return Err(ProblemError::Syntax {
                    line,
                    message: "give either constraints or a residual, not both".into(),
                })
            }
            (true, None) => return Err(ProblemError::Missing("constraint.0.expr or residual".into())),
        };

        let bound = |keys: &mut BTreeMap<String, (usize, String)>, k: &str, default: f64| -> Result<Vec<f64>, ProblemError> {
            let Some((line, text)) = keys.remove(k) else {
                return Ok(vec![default; n]);
            };
            let vals: Vec<f64> = text.split(',').map(|p| number(line, k, p.trim())).collect::<Result<_, _>>()?;
            match vals.len() {
                1 => Ok(vec![vals[0]; n]),
                len if len == n => Ok(vals),
                len => Err(ProblemError::Syntax {
                    line,
                    message: format!("`{k}` has {len} entries, expected 1 or {n}"),
                }),
            }
        };
        let lo = bound(&mut keys, "box.lo", -DEFAULT_BOX)?;
        let hi = bound(&mut keys, "box.hi", DEFAULT_BOX)?;
        let escape_scale = match take(&mut keys, "escape_scale") {
            Some((line, v)) => number(line, "escape_scale", &v)?,
            None => {
                let half = lo.iter().chain(&hi).fold(0.0f64, |m, v| m.max(v.abs()));
                DEFAULT_ESCAPE_SCALE.max(half)
            }
        };
        let domain = SearchDomain::new(lo, hi, escape_scale)?;

        let mut budget = Budget::default();
        for (k, slot) in [
            ("budget.starts", &mut budget.starts),
            ("budget.iters", &mut budget.iters),
            ("budget.samples", &mut budget.samples),
        ] {
            if let Some((line, v)) = keys.remove(k) {
                *slot = integer(line, k, &v)? as usize;
            }
        }
        let seed = match take(&mut keys, "seed") {
            Some((line, v)) => integer(line, "seed", &v)?,
            None => DEFAULT_SEED,
        };
        let phi = match take(&mut keys, "phi") {
            Some((line, v)) => Some(expr(line, "phi", &v, n)?),
            None => None,
        };
        let mut kinf_paths = Vec::new();
        let mut p = 0;
        while let Some((line, text)) = take(&mut keys, &format!("kinf.path.{p}")) {
            let coords: Vec<Expression> = text
                .split(';')
                .map(|c| expr(line, &format!("kinf.path.{p}"), c.trim(), 1))
                .collect::<Result<_, _>>()?;
            if coords.len() != n {
                return Err(ProblemError::Syntax {
                    line,
                    message: format!("path has {} coordinates, expected {n}", coords.len()),
                });
            }
            kinf_paths.push(coords);
            p += 1;
        }

        if let Some((k, (line, _))) = keys.into_iter().next() {
            return Err(ProblemError::Syntax {
                line,
                message: format!("unknown key `{k}`"),
            });
        }

        let mut expectations = Vec::new();
        for (line, key, value) in expect_lines {
            let (command, arg, field) = parse_expect_key(&key).ok_or_else(|| ProblemError::Syntax {
                line,
                message: format!("malformed expectation key `expect.{key}`"),
            })?;
            let check = parse_check(&value).ok_or_else(|| ProblemError::Syntax {
                line,
                message: format!("malformed expectation `{value}`"),
            })?;
            expectations.push(Expectation {
                command,
                arg,
                field,
                check,
            });
        }

        Ok(Problem {
            name,
            n,
            objective,
            feasible,
            domain,
            budget,
            seed,
            phi,
            kinf_paths,
            expectations,
        })
    }

    /// Canonical text form; `from_text(p.to_text())` equals `p`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "objective = {}", self.objective);
        match &self.feasible {
            FeasibleSet::Cone { g, cone } => {
                for (i, (gi, f)) in g.iter().zip(cone.factors()).enumerate() {
                    let _ = writeln!(s, "constraint.{i}.expr = {gi}");
                    let _ = writeln!(s, "constraint.{i}.cone = {f}");
                }
            }
            FeasibleSet::Residual { psi } => {
                let _ = writeln!(s, "residual = {psi}");
            }
        }
        let _ = writeln!(s, "box.lo = {}", join(&self.domain.lo));
        let _ = writeln!(s, "box.hi = {}", join(&self.domain.hi));
        let _ = writeln!(s, "escape_scale = {}", self.domain.escape_scale);
        let _ = writeln!(s, "budget.starts = {}", self.budget.starts);
        let _ = writeln!(s, "budget.iters = {}", self.budget.iters);
        let _ = writeln!(s, "budget.samples = {}", self.budget.samples);
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(phi) = &self.phi {
            let _ = writeln!(s, "phi = {phi}");
        }
        for (i, path) in self.kinf_paths.iter().enumerate() {
            let coords: Vec<String> = path.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "kinf.path.{i} = {}", coords.join("; "));
        }
        for e in &self.expectations {
            let arg = e.arg.as_ref().map(|a| format!("[{a}]")).unwrap_or_default();
            let _ = writeln!(s, "expect.{}{}.{} = {}", e.command, arg, e.field, e.check);
        }
        s
    }

    /// Every expression in the problem, for round-trip checks.
    pub fn expressions(&self) -> Vec<&Expression> {
        let mut out = vec![&self.objective];
        out.extend(self.feasible.expressions());
        out.extend(self.phi.iter());
        out.extend(self.kinf_paths.iter().flatten());
        out
    }

    pub fn is_semialgebraic(&self) -> bool {
        self.expressions().iter().all(|e| e.is_semialgebraic())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# diagonal
name = diag
n = 2
objective = x0 - x1   # f
constraint.0.expr = x0 - x1
constraint.0.cone = zero
box.lo = -5
box.hi = 5, 6
expect.certify[plain(1.5)].status = CertifiedExactOnDomain
expect.cstar.value = 1 +- 0.01
expect.envelope.alpha_hat = in [0.4, 0.6]
";

    #[test]
    fn loads_and_round_trips() {
        let p = Problem::from_text(SAMPLE).unwrap();
        assert_eq!(p.n, 2);
        assert_eq!(p.domain.hi, vec![5.0, 6.0]);
        assert_eq!(p.domain.escape_scale, 1e3);
        assert_eq!(p.expectations.len(), 3);
        assert_eq!(p.expectations[0].arg.as_deref(), Some("plain(1.5)"));
        assert_eq!(p.expectations[1].check, Check::Approx { value: 1.0, tol: 0.01 });
        let again = Problem::from_text(&p.to_text()).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn reports_bad_input() {
        let bad = SAMPLE.replace("cone = zero", "cone = interval(2,1)");
        assert!(matches!(
            Problem::from_text(&bad),
            Err(ProblemError::Constraint {
                source: ConstraintError::EmptyInterval { .. },
                ..
            })
        ));
        let bad = SAMPLE.replace("objective = x0 - x1", "objective = x0 - x2");
        assert!(matches!(Problem::from_text(&bad), Err(ProblemError::Expression { line: 5, .. })));
        let bad = SAMPLE.replace("name = diag", "name = diag\nwidth = 3");
        assert!(matches!(Problem::from_text(&bad), Err(ProblemError::Syntax { .. })));
        let bad = SAMPLE.replace("box.lo = -5", "box.lo = -5, 1, 2");
        assert!(Problem::from_text(&bad).is_err());
    }

    #[test]
    fn checks() {
        assert!(parse_check("<= 0.1").unwrap().holds(&FieldValue::Num(0.05)));
        assert!(!parse_check(">= 0.9").unwrap().holds(&FieldValue::Num(0.5)));
        assert!(parse_check("true").unwrap().holds(&FieldValue::Text("true".into())));
        assert!(parse_check("0.3679 +- 0.05").unwrap().holds(&FieldValue::Num(0.35)));
    }
}
