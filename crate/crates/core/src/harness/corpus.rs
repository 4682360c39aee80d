//! The bundled example problems and the expectation runner.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{run_command, Command, HarnessError};
use crate::certifier::RunOptions;
use crate::problem::Problem;
use crate::solver::Budget;

const EMBEDDED: [(&str, &str); 9] = [
    ("ex3", include_str!("../../corpus/ex3.problem")),
    ("ex4i", include_str!("../../corpus/ex4i.problem")),
    ("ex4ii", include_str!("../../corpus/ex4ii.problem")),
    ("ex4iii", include_str!("../../corpus/ex4iii.problem")),
    ("ex4iv", include_str!("../../corpus/ex4iv.problem")),
    ("ex5final", include_str!("../../corpus/ex5final.problem")),
    ("vd41", include_str!("../../corpus/vd41.problem")),
    ("vd42i", include_str!("../../corpus/vd42i.problem")),
    ("vd42ii", include_str!("../../corpus/vd42ii.problem")),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub name: String,
    pub text: String,
}

/// The bundled problems, sorted by name.
pub fn corpus() -> Vec<CorpusEntry> {
    EMBEDDED
        .iter()
        .map(|(name, text)| CorpusEntry {
            name: name.to_string(),
            text: text.to_string(),
        })
        .collect()
}

pub fn corpus_problem(name: &str) -> Option<Problem> {
    EMBEDDED
        .iter()
        .find(|(n, _)| *n == name)
        .and_then(|(_, text)| Problem::from_text(text).ok())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub problem: String,
    pub command: String,
    pub arg: Option<String>,
    pub field: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
    /// Time spent in the command that produced this row.
    pub wall_ms: Option<u128>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    /// SHA-256 over the problem names and texts.
    pub inputs_digest: String,
    pub version: String,
    pub rows: Vec<ReportRow>,
    pub wall_ms: Option<u128>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["problem", "command", "arg", "field", "expected", "actual", "pass", "wall_ms"])?;
        for r in &self.rows {
            w.write_record([
                r.problem.as_str(),
                r.command.as_str(),
                r.arg.as_deref().unwrap_or(""),
                r.field.as_str(),
                r.expected.as_str(),
                r.actual.as_str(),
                if r.pass { "true" } else { "false" },
                &r.wall_ms.map_or(String::new(), |t| t.to_string()),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn digest(entries: &[&CorpusEntry]) -> String {
    let mut h = Sha256::new();
    for e in entries {
        h.update(e.name.as_bytes());
        h.update([0]);
        h.update(e.text.as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

fn run_entry(entry: &CorpusEntry, budget: Option<Budget>, seed: Option<u64>, timing: bool) -> Vec<ReportRow> {
    let problem = match Problem::from_text(&entry.text) {
        Ok(p) => p,
        Err(e) => {
            return vec![ReportRow {
                problem: entry.name.clone(),
                command: "parse".into(),
                arg: None,
                field: "problem".into(),
                expected: "valid".into(),
                actual: format!("error: {e}"),
                pass: false,
                wall_ms: None,
            }]
        }
    };
    let mut opts = RunOptions::for_problem(&problem);
    if let Some(b) = budget {
        opts.budget = b;
    }
    if let Some(s) = seed {
        opts.seed = s;
    }

    // each distinct command runs once, in order of first mention
    let mut groups: Vec<(String, Option<String>)> = Vec::new();
    for e in &problem.expectations {
        let key = (e.command.clone(), e.arg.clone());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let mut rows = Vec::new();
    for (command, arg) in groups {
        let start = Instant::now();
        let outcome = Command::parse(&command, arg.as_deref()).and_then(|c| run_command(&problem, &c, &opts));
        let wall_ms = timing.then(|| start.elapsed().as_millis());
        for e in problem.expectations.iter().filter(|e| e.command == command && e.arg == arg) {
            let (actual, pass) = match &outcome {
                Ok(o) => match o.field(&e.field) {
                    Ok(v) => (v.to_string(), e.check.holds(v)),
                    Err(err) => (format!("error: {err}"), false),
                },
                Err(err) => (format!("error: {err}"), false),
            };
            rows.push(ReportRow {
                problem: problem.name.clone(),
                command: command.clone(),
                arg: arg.clone(),
                field: e.field.clone(),
                expected: e.check.to_string(),
                actual,
                pass,
                wall_ms,
            });
        }
    }
    rows
}

/// Runs every expectation of the entries whose names match `filter` (a
/// glob pattern). Rows are ordered by problem name.
pub fn run_corpus(
    entries: &[CorpusEntry],
    filter: Option<&str>,
    budget: Option<Budget>,
    seed: Option<u64>,
    timing: bool,
) -> Result<RunReport, HarnessError> {
    let pattern = filter.map(glob::Pattern::new).transpose()?;
    let mut selected: Vec<&CorpusEntry> = entries
        .iter()
        .filter(|e| pattern.as_ref().is_none_or(|p| p.matches(&e.name)))
        .collect();
    selected.sort_by(|a, b| a.name.cmp(&b.name));
    let start = Instant::now();
    let rows: Vec<ReportRow> = selected.par_iter().map(|e| run_entry(e, budget, seed, timing)).collect::<Vec<_>>().concat();
    Ok(RunReport {
        command: "corpus".into(),
        inputs_digest: digest(&selected),
        version: env!("CARGO_PKG_VERSION").into(),
        rows,
        wall_ms: timing.then(|| start.elapsed().as_millis()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_problems_parse() {
        for e in corpus() {
            let p = Problem::from_text(&e.text).unwrap_or_else(|err| panic!("{}: {err}", e.name));
            assert_eq!(p.name, e.name);
            assert!(!p.expectations.is_empty(), "{}", e.name);
            for x in &p.expectations {
                Command::parse(&x.command, x.arg.as_deref()).unwrap_or_else(|err| panic!("{}: {err}", e.name));
            }
        }
    }

    #[test]
    fn filter_selects_by_name() {
        let entries = vec![CorpusEntry {
            name: "tiny".into(),
            text: "name = tiny\nn = 1\nobjective = x0^2\nresidual = abs(x0 - 1)\nexpect.certify[plain(5)].status = CertifiedExactOnDomain\n".into(),
        }];
        let budget = Budget::preset("quick");
        let none = run_corpus(&entries, Some("ex*"), budget, None, false).unwrap();
        assert!(none.rows.is_empty());
        let r = run_corpus(&entries, Some("t*"), budget, None, false).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!(r.passed(), "{:?}", r.rows);
        let again = run_corpus(&entries, None, budget, None, false).unwrap();
        assert_eq!(r.to_json(), again.to_json());
        assert!(r.to_csv().unwrap().starts_with("problem,command,arg,field"));
    }
}
