//! Commands over problem files, the embedded example corpus, run reports
//! and plot series.

mod corpus;
mod plot;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

pub use corpus::{corpus, corpus_problem, run_corpus, CorpusEntry, ReportRow, RunReport};
pub use plot::{emit_plotdata, plot_series, PlotKind, Series};

use crate::certifier::{
    certify_exactness, comparison_function, cstar_for, default_t_grid_inf, default_t_grid_zero, default_u_grid, estimate_fstar, fit_envelope,
    probe_distance_conditions, probe_sequence_types, residual_function, scan_value_function, single_exponent_verdicts, validate_envelope,
    CertifyError, RunOptions, SequenceOptions,
};
use crate::constraint::FeasibleSet;
use crate::penalty::{PenaltyError, PenaltySpec, ResidualSpec};
use crate::problem::{FieldValue, Problem};
use crate::variational::{k_infinity_probe, mfcq_check, nu_estimate, ProbeOptions, VariationalError, DEFAULT_MFCQ_THRESHOLD};

/// Validation sample size and radius for envelope fits.
pub const ENVELOPE_VALIDATION_SAMPLES: usize = 100_000;
pub const ENVELOPE_VALIDATION_RADIUS: f64 = 1e3;
/// Single exponents tested against the fitted envelope.
pub const SINGLE_EXPONENT_GRID: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error("bad argument `{arg}` for `{command}`: {message}")]
    BadArgument { command: String, arg: String, message: String },
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Problem(#[from] crate::problem::ProblemError),
    #[error("bad filter pattern: {0}")]
    Pattern(#[from] glob::PatternError),
}

/// A probe to run on one problem.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Certify(PenaltySpec),
    /// Ratio threshold for a form's effective residual; plain if `None`.
    CStar(Option<PenaltySpec>),
    /// Calmness scan; the radius restricts `modulus` and selects `quotient`.
    Calmness(Option<f64>),
    Envelope,
    Sequences,
    DistCond,
    Nu(Vec<f64>),
    Mfcq(Vec<f64>),
    Kinf,
}

fn parse_point(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number"))).collect()
}

impl Command {
    pub fn parse(command: &str, arg: Option<&str>) -> Result<Command, HarnessError> {
        let bad = |message: String| HarnessError::BadArgument {
            command: command.to_string(),
            arg: arg.unwrap_or("").to_string(),
            message,
        };
        let point = |a: Option<&str>| -> Result<Vec<f64>, HarnessError> { parse_point(a.ok_or_else(|| bad("a point is required".into()))?).map_err(bad) };
        Ok(match command {
            "certify" => Command::Certify(arg.ok_or_else(|| bad("a penalty spec is required".into()))?.parse()?),
            "cstar" => Command::CStar(arg.map(str::parse).transpose()?),
            "calmness" => Command::Calmness(arg.map(|a| a.trim().parse::<f64>().map_err(|_| bad("expected a radius".into()))).transpose()?),
            "envelope" => Command::Envelope,
            "sequences" => Command::Sequences,
            "distcond" => Command::DistCond,
            "nu" => Command::Nu(point(arg)?),
            "mfcq" => Command::Mfcq(point(arg)?),
            "kinf" => Command::Kinf,
            other => return Err(HarnessError::UnknownCommand(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Certify(_) => "certify",
            Command::CStar(_) => "cstar",
            Command::Calmness(_) => "calmness",
            Command::Envelope => "envelope",
            Command::Sequences => "sequences",
            Command::DistCond => "distcond",
            Command::Nu(_) => "nu",
            Command::Mfcq(_) => "mfcq",
            Command::Kinf => "kinf",
        }
    }

    pub fn arg(&self) -> Option<String> {
        let point = |x: &[f64]| x.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        match self {
            Command::Certify(s) => Some(s.to_string()),
            Command::CStar(s) => s.map(|s| s.to_string()),
            Command::Calmness(r) => r.map(|r| r.to_string()),
            Command::Nu(x) | Command::Mfcq(x) => Some(point(x)),
            _ => None,
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.arg() {
            Some(a) => write!(f, "{}[{a}]", self.name()),
            None => write!(f, "{}", self.name()),
        }
    }
}

impl FromStr for Command {
    type Err = HarnessError;

    /// `name` or `name[arg]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.find('[') {
            Some(open) if s.ends_with(']') => Command::parse(&s[..open], Some(&s[open + 1..s.len() - 1])),
            _ => Command::parse(s, None),
        }
    }
}

/// Result of one command: scalar fields for expectations and tables, plus
/// the full structured result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub fields: BTreeMap<String, FieldValue>,
    pub detail: serde_json::Value,
}

impl Outcome {
    pub fn field(&self, name: &str) -> Result<&FieldValue, HarnessError> {
        self.fields.get(name).ok_or_else(|| HarnessError::MissingField(name.to_string()))
    }

    pub fn num(&self, name: &str) -> Option<f64> {
        match self.fields.get(name) {
            Some(FieldValue::Num(x)) => Some(*x),
            _ => None,
        }
    }

    pub fn text(&self, name: &str) -> Option<&str> {
        match self.fields.get(name) {
            Some(FieldValue::Text(s)) => Some(s),
            _ => None,
        }
    }
}

impl Serialize for FieldValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            FieldValue::Num(x) if x.is_finite() => s.serialize_f64(*x),
            FieldValue::Num(x) => s.serialize_str(&x.to_string()),
            FieldValue::Text(t) => s.serialize_str(t),
        }
    }
}

struct Fields(BTreeMap<String, FieldValue>);

impl Fields {
    fn new() -> Self {
        Fields(BTreeMap::new())
    }

    fn num(&mut self, k: &str, v: f64) -> &mut Self {
        self.0.insert(k.to_string(), FieldValue::Num(v));
        self
    }

    fn opt(&mut self, k: &str, v: Option<f64>) -> &mut Self {
        if let Some(v) = v {
            self.num(k, v);
        }
        self
    }

    fn text(&mut self, k: &str, v: impl Into<String>) -> &mut Self {
        self.0.insert(k.to_string(), FieldValue::Text(v.into()));
        self
    }

    fn flag(&mut self, k: &str, v: bool) -> &mut Self {
        self.text(k, if v { "true" } else { "false" })
    }
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn found(v: bool) -> &'static str {
    if v {
        "found"
    } else {
        "none"
    }
}

/// Runs one command on a problem with its default residual.
pub fn run_command(problem: &Problem, command: &Command, opts: &RunOptions) -> Result<Outcome, HarnessError> {
    let residual = ResidualSpec::default_for(&problem.feasible);
    let mut f = Fields::new();
    let detail = match command {
        Command::Certify(spec) => {
            let c = certify_exactness(problem, *spec, &residual, opts)?;
            f.text("form", spec.form_name())
                .num("c", spec.c())
                .num("alpha", spec.alpha())
                .opt("beta", spec.beta())
                .text("witness", c.witness.as_ref().map_or(String::new(), |w| join_coords(w)));
            f.text("status", c.status.as_str())
                .num("fstar", c.fstar)
                .num("penalized_inf", c.penalized_inf)
                .flag("penalized_unbounded", c.penalized_unbounded)
                .opt("witness_ratio", c.witness_ratio)
                .opt("cstar", c.cstar.as_ref().and_then(|s| s.finite_value()))
                .text("argmin", format!("{:?}", c.argmin));
            to_json(&c)
        }
        Command::CStar(form) => {
            let fs = estimate_fstar(problem, opts)?;
            let cs = cstar_for(problem, *form, &residual, fs.value, opts)?;
            f.num("value", cs.value)
                .flag("unbounded", cs.unbounded)
                .flag("inconclusive", cs.inconclusive)
                .num("fstar", fs.value);
            to_json(&cs)
        }
        Command::Calmness(radius) => {
            let m = match &problem.feasible {
                FeasibleSet::Cone { g, .. } => g.len(),
                FeasibleSet::Residual { .. } => return Err(CertifyError::Unsupported("calmness scan needs a cone-form problem".into()).into()),
            };
            let scan = scan_value_function(problem, &default_u_grid(m), opts)?;
            f.flag("diverging", scan.diverging).num("v0", scan.v0);
            match radius {
                Some(r) => {
                    f.opt("modulus", scan.modulus_within(*r));
                    let at = scan
                        .points
                        .iter()
                        .filter(|p| (p.norm - r).abs() <= 1e-12 * r.max(1.0))
                        .filter_map(|p| p.quotient)
                        .reduce(f64::min);
                    f.opt("quotient", at);
                }
                None => {
                    f.opt("modulus", scan.modulus_estimate);
                }
            }
            to_json(&scan)
        }
        Command::Envelope => {
            let fs = estimate_fstar(problem, opts)?;
            let phi = comparison_function(problem, fs.value);
            let psi = residual_function(&problem.feasible, problem.n)?;
            let fit = fit_envelope(
                &phi,
                &psi,
                &problem.domain,
                &default_t_grid_zero(),
                &default_t_grid_inf(),
                opts.budget,
                opts.seed,
            );
            f.opt("alpha_hat", fit.alpha_hat)
                .opt("beta_hat", fit.beta_hat)
                .opt("residual_zero", fit.residual_zero)
                .opt("residual_inf", fit.residual_inf)
                .flag("non_semialgebraic_warning", fit.non_semialgebraic_warning);
            let verdicts = single_exponent_verdicts(&fit, &SINGLE_EXPONENT_GRID);
            let impossible = verdicts.iter().all(|v| v.unbounded_at.is_some());
            f.text("single_exponent", if impossible { "impossible" } else { "possible" });
            let validation = match (fit.alpha_hat, fit.beta_hat) {
                (Some(a), Some(b)) => {
                    let v = validate_envelope(&phi, &psi, a, b, ENVELOPE_VALIDATION_RADIUS, ENVELOPE_VALIDATION_SAMPLES, opts.seed);
                    f.num("c_hat", v.c_hat).num("validation_violations", v.violations as f64);
                    Some(v)
                }
                _ => None,
            };
            serde_json::json!({ "fit": fit, "single_exponent": verdicts, "validation": validation })
        }
        Command::Sequences => {
            let fs = estimate_fstar(problem, opts)?;
            let phi = comparison_function(problem, fs.value);
            let psi = residual_function(&problem.feasible, problem.n)?;
            let v = probe_sequence_types(&phi, &psi, &problem.domain, SequenceOptions::default(), opts.budget, opts.seed);
            f.text("first_type", found(v.first_type.is_some()))
                .text("second_type", found(v.second_type.is_some()))
                .num("epsilon", v.epsilon_used)
                .flag("non_semialgebraic_warning", v.non_semialgebraic_warning);
            if let Some(last) = v.first_type.as_ref().and_then(|p| p.last()) {
                f.num("first_psi", last.psi).num("first_phi", last.phi).num("first_norm", last.norm);
            }
            if let Some(last) = v.second_type.as_ref().and_then(|p| p.last()) {
                f.num("second_psi", last.psi).num("second_phi", last.phi).num("second_norm", last.norm);
            }
            to_json(&v)
        }
        Command::DistCond => {
            let r = probe_distance_conditions(problem, &residual, opts)?;
            let verdict = |holds: bool| if r.inconclusive { "inconclusive" } else if holds { "holds" } else { "violated" };
            f.text("c1", verdict(r.c1_holds_on_domain))
                .text("c2_variant", verdict(r.c2_variant_holds_on_domain))
                .num("sample_size", r.sample_size as f64);
            to_json(&r)
        }
        Command::Nu(x) => {
            let p = nu_estimate(problem, x, &probe_options(opts))?;
            f.num("nu_hat", p.nu_hat);
            if let Some(m) = &p.minimizer {
                f.num("lambda", m.lambda);
            }
            to_json(&p)
        }
        Command::Mfcq(x) => {
            let r = mfcq_check(problem, x, DEFAULT_MFCQ_THRESHOLD, &probe_options(opts))?;
            f.flag("holds", r.holds).num("min_norm", r.min_norm);
            to_json(&r)
        }
        Command::Kinf => {
            let fs = estimate_fstar(problem, opts)?;
            let r = k_infinity_probe(problem, fs.value, opts)?;
            f.text("verdict", r.verdict.name()).num("fstar", fs.value);
            if let crate::variational::C2Verdict::ViolatedWithWitness(t) = r.verdict {
                f.num("t", t);
                if let Some(c) = r.cluster_values.iter().find(|c| c.t == t) {
                    f.num("scaled_nu", c.terminal.scaled_nu).num("dist", c.terminal.dist).num("norm", c.terminal.norm);
                }
            }
            to_json(&r)
        }
    };
    Ok(Outcome { fields: f.0, detail })
}

/// Coordinates joined with `;`.
pub fn join_coords(x: &[f64]) -> String {
    x.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn probe_options(opts: &RunOptions) -> ProbeOptions {
    ProbeOptions {
        seed: opts.seed,
        ..ProbeOptions::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_syntax() {
        let c: Command = "certify[plain(1.5)]".parse().unwrap();
        assert_eq!(c, Command::Certify(PenaltySpec::Plain { c: 1.5 }));
        assert_eq!(c.to_string(), "certify[plain(1.5)]");
        let c: Command = "mfcq[0,0]".parse().unwrap();
        assert_eq!(c, Command::Mfcq(vec![0.0, 0.0]));
        assert_eq!("kinf".parse::<Command>().unwrap(), Command::Kinf);
        assert!(matches!("frobnicate".parse::<Command>(), Err(HarnessError::UnknownCommand(_))));
        assert!(matches!("certify".parse::<Command>(), Err(HarnessError::BadArgument { .. })));
    }
}
