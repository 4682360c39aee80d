use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use penaltylab::certifier::RunOptions;
use penaltylab::harness::{
    corpus, corpus_problem, emit_plotdata, plot_series, run_command, run_corpus, Command, CorpusEntry, Outcome, PlotKind,
};
use penaltylab::penalty::PenaltySpec;
use penaltylab::problem::{FieldValue, Problem};
use penaltylab::solver::Budget;

#[derive(Parser)]
#[command(name = "penaltylab", version, about = "Exact-penalty diagnostics on searched domains")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compare the constrained and penalized infima and run the ratio test.
    Certify {
        #[command(flatten)]
        common: Common,
        /// plain(c), power(c,alpha), twopower(c,alpha,beta) or curvature(c,alpha)
        #[arg(long)]
        penalty: String,
    },
    /// Estimate the ratio threshold, for the plain residual or a form's.
    Cstar {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        penalty: Option<String>,
    },
    /// Fit the residual envelope and test single-exponent forms.
    Envelope {
        #[command(flatten)]
        common: Common,
    },
    /// Scan the perturbed value function near zero.
    Calmness {
        #[command(flatten)]
        common: Common,
        /// Restrict the modulus to perturbations no larger than this.
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Search norm shells for divergent sequences of either type.
    Sequences {
        #[command(flatten)]
        common: Common,
    },
    /// Probe the distance conditions.
    Distcond {
        #[command(flatten)]
        common: Common,
    },
    /// Estimate the subgradient-plus-normal residual at a point.
    Nu {
        #[command(flatten)]
        common: Common,
        /// Comma-separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        at: String,
    },
    /// Check the Mangasarian-Fromovitz condition at a feasible point.
    Mfcq {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        at: String,
    },
    /// Search for asymptotic critical values at or below the infimum.
    Kinf {
        #[command(flatten)]
        common: Common,
    },
    /// Run the expectations declared in a set of problem files.
    Corpus {
        /// Directory of `.problem` files; the bundled examples if omitted.
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Glob over problem names.
        #[arg(long)]
        filter: Option<String>,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Write a two-column data file for plotting.
    Plotdata {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: PlotArg,
        /// Penalty form for the c sweep; the weight is ignored.
        #[arg(long)]
        penalty: Option<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Problem file, or the name of a bundled example.
    #[arg(long)]
    problem: String,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args)]
struct RunFlags {
    /// quick, default or thorough; the problem's own budget if omitted.
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Leave wall times out so output is reproducible byte for byte.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotArg {
    Csweep,
    Envelope,
    Calmness,
}

/// Usage and input errors exit with 2, failed expectations with 1.
struct UsageError(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for UsageError {
    fn from(e: E) -> Self {
        UsageError(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

enum Failure {
    Usage(anyhow::Error),
    Run(anyhow::Error),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

fn load_problem(arg: &str) -> Result<Problem, UsageError> {
    let path = Path::new(arg);
    if path.exists() {
        return Ok(Problem::load(path)?);
    }
    corpus_problem(arg).ok_or_else(|| UsageError(anyhow!("no problem file or bundled example named `{arg}`")))
}

fn budget_of(flags: &RunFlags) -> Result<Option<Budget>, UsageError> {
    flags
        .budget
        .as_deref()
        .map(|b| Budget::preset(b).ok_or_else(|| UsageError(anyhow!("unknown budget `{b}` (quick, default or thorough)"))))
        .transpose()
}

fn run_options(problem: &Problem, flags: &RunFlags) -> Result<RunOptions, UsageError> {
    let mut opts = RunOptions::for_problem(problem);
    if let Some(b) = budget_of(flags)? {
        opts.budget = b;
    }
    if let Some(s) = flags.seed {
        opts.seed = s;
    }
    if let Some(t) = flags.tol {
        opts.tol = t;
    }
    Ok(opts)
}

fn penalty(text: &str) -> Result<PenaltySpec, UsageError> {
    Ok(text.parse::<PenaltySpec>()?)
}

fn write_output(flags: &RunFlags, text: &str) -> Result<()> {
    match &flags.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let (common, command) = match cli.command {
        Cmd::Corpus { dir, filter, run } => return run_corpus_cmd(dir, filter, &run),
        Cmd::Plotdata { common, kind, penalty: p } => return plotdata(&common, kind, p),
        Cmd::Certify { common, penalty: p } => {
            let spec = penalty(&p)?;
            (common, Command::Certify(spec))
        }
        Cmd::Cstar { common, penalty: p } => {
            let spec = p.as_deref().map(penalty).transpose()?;
            (common, Command::CStar(spec))
        }
        Cmd::Envelope { common } => (common, Command::Envelope),
        Cmd::Calmness { common, radius } => (common, Command::Calmness(radius)),
        Cmd::Sequences { common } => (common, Command::Sequences),
        Cmd::Distcond { common } => (common, Command::DistCond),
        Cmd::Nu { common, at } => {
            let cmd = Command::parse("nu", Some(&at)).map_err(UsageError::from)?;
            (common, cmd)
        }
        Cmd::Mfcq { common, at } => {
            let cmd = Command::parse("mfcq", Some(&at)).map_err(UsageError::from)?;
            (common, cmd)
        }
        Cmd::Kinf { common } => (common, Command::Kinf),
    };
    single(&common, &command)
}

/// Runs one command, prints its outcome and checks any matching
/// expectations declared in the problem.
fn single(common: &Common, command: &Command) -> Result<bool, Failure> {
    let problem = load_problem(&common.problem)?;
    let opts = run_options(&problem, &common.run)?;
    let start = Instant::now();
    let outcome = run_command(&problem, command, &opts).map_err(|e| Failure::Run(e.into()))?;
    let wall_ms = (!common.run.no_timing).then(|| start.elapsed().as_millis());

    let arg = command.arg();
    let mut pass = true;
    let mut checks = Vec::new();
    for e in problem.expectations.iter().filter(|e| e.command == command.name() && e.arg == arg) {
        let (actual, ok) = match outcome.field(&e.field) {
            Ok(v) => (v.to_string(), e.check.holds(v)),
            Err(err) => (err.to_string(), false),
        };
        pass &= ok;
        if !ok {
            eprintln!("expectation failed: {}.{} = {} (expected {})", command, e.field, actual, e.check);
        }
        checks.push(serde_json::json!({ "field": e.field, "expected": e.check.to_string(), "actual": actual, "pass": ok }));
    }

    let text = match common.run.format {
        Format::Json => {
            let doc = serde_json::json!({
                "problem": problem.name,
                "command": command.name(),
                "arg": arg,
                "seed": opts.seed,
                "fields": outcome.fields,
                "detail": outcome.detail,
                "expectations": checks,
                "wall_ms": wall_ms,
            });
            serde_json::to_string_pretty(&doc).map_err(|e| Failure::Run(e.into()))? + "\n"
        }
        Format::Csv => outcome_csv(&problem.name, command, &outcome, wall_ms).map_err(Failure::Run)?,
    };
    write_output(&common.run, &text).map_err(Failure::Run)?;
    Ok(pass)
}

fn outcome_csv(problem: &str, command: &Command, outcome: &Outcome, wall_ms: Option<u128>) -> Result<String> {
    let text = |k: &str| outcome.fields.get(k).map_or(String::new(), FieldValue::to_string);
    let wall = wall_ms.map_or(String::new(), |t| t.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Command::Certify(_) = command {
        w.write_record(["problem", "form", "c", "alpha", "beta", "fstar", "penalized_inf", "status", "witness_coords", "wall_ms"])?;
        let penalized = if outcome.text("penalized_unbounded") == Some("true") {
            "Unbounded".to_string()
        } else {
            text("penalized_inf")
        };
        w.write_record([
            problem.to_string(),
            text("form"),
            text("c"),
            text("alpha"),
            text("beta"),
            text("fstar"),
            penalized,
            text("status"),
            text("witness"),
            wall,
        ])?;
    } else {
        let keys: Vec<&String> = outcome.fields.keys().collect();
        let mut header = vec!["problem", "command", "arg"];
        header.extend(keys.iter().map(|k| k.as_str()));
        header.push("wall_ms");
        w.write_record(&header)?;
        let mut row = vec![problem.to_string(), command.name().to_string(), command.arg().unwrap_or_default()];
        row.extend(keys.iter().map(|k| text(k)));
        row.push(wall);
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("{}", e.error()))?;
    Ok(String::from_utf8(bytes)?)
}

fn read_dir_entries(dir: &Path) -> Result<Vec<CorpusEntry>> {
    let mut entries = Vec::new();
    for item in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = item?.path();
        if path.extension().is_some_and(|e| e == "problem") {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            entries.push(CorpusEntry { name, text });
        }
    }
    if entries.is_empty() {
        bail!("no .problem files in {}", dir.display());
    }
    Ok(entries)
}

fn run_corpus_cmd(dir: Option<PathBuf>, filter: Option<String>, flags: &RunFlags) -> Result<bool, Failure> {
    let entries = match dir {
        Some(d) => read_dir_entries(&d).map_err(Failure::Usage)?,
        None => corpus(),
    };
    let budget = budget_of(flags)?;
    let report = run_corpus(&entries, filter.as_deref(), budget, flags.seed, !flags.no_timing).map_err(|e| Failure::Usage(e.into()))?;
    let text = match flags.format {
        Format::Json => report.to_json() + "\n",
        Format::Csv => report.to_csv().map_err(|e| Failure::Run(e.into()))?,
    };
    write_output(flags, &text).map_err(Failure::Run)?;
    let failures = report.failures().count();
    eprintln!("{} of {} expectations passed", report.rows.len() - failures, report.rows.len());
    for r in report.failures() {
        eprintln!("FAIL {} {} {}: expected {}, got {}", r.problem, r.command, r.field, r.expected, r.actual);
    }
    Ok(report.passed())
}

fn plotdata(common: &Common, kind: PlotArg, p: Option<String>) -> Result<bool, Failure> {
    let problem = load_problem(&common.problem)?;
    let opts = run_options(&problem, &common.run)?;
    let kind = match kind {
        PlotArg::Csweep => PlotKind::CSweep(penalty(p.as_deref().unwrap_or("plain(1)"))?),
        PlotArg::Envelope => PlotKind::LogLogEnvelope,
        PlotArg::Calmness => PlotKind::Calmness,
    };
    let out = common.run.out.as_ref().ok_or_else(|| Failure::Usage(anyhow!("plotdata needs --out")))?;
    let series = plot_series(&problem, kind, &opts).map_err(|e| Failure::Run(e.into()))?;
    emit_plotdata(&series, out).map_err(|e| Failure::Run(e.into()))?;
    Ok(true)
}
