//! `hodge-lab`: command-line driver for the hodge-core laboratory.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure, unwritable
//! output or failed suite criteria.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hodge_core::{json, par, Error};
use serde_json::{json, Value};

use config::{Command, ConfigError, Params};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(
    name = "hodge-lab",
    version,
    about = "Numerical laboratory for opers, Higgs bundles and harmonic maps on a genus-2 surface"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Oper ODEs: monodromy, Eichler cocycles, w_k covariants.
    Oper {
        #[command(subcommand)]
        what: OperCmd,
    },
    /// Harder–Narasimhan types.
    Hn {
        #[command(subcommand)]
        what: HnCmd,
    },
    /// Irreducibility and unitarity of the trivial oper's monodromy.
    Rep {
        #[command(subcommand)]
        what: RepCmd,
    },
    /// Equivariant harmonic maps.
    Harmonic {
        #[command(subcommand)]
        what: HarmonicCmd,
    },
    /// Discrete Yang–Mills–Higgs flow.
    Gauge {
        #[command(subcommand)]
        what: GaugeCmd,
    },
    /// Truncated Poincaré series.
    Forms {
        #[command(subcommand)]
        what: FormsCmd,
    },
    /// Moduli space dimensions.
    Dims,
    /// The acceptance battery.
    Suite,
}

#[derive(Subcommand, Debug)]
enum OperCmd {
    Monodromy,
    Eichler,
    Wk,
}

#[derive(Subcommand, Debug)]
enum HnCmd {
    Verify,
}

#[derive(Subcommand, Debug)]
enum RepCmd {
    Analyze,
}

#[derive(Subcommand, Debug)]
enum HarmonicCmd {
    Solve,
}

#[derive(Subcommand, Debug)]
enum GaugeCmd {
    Flow,
}

#[derive(Subcommand, Debug)]
enum FormsCmd {
    Build,
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Rank, or ODE order.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Genus.
    #[arg(long, global = true)]
    g: Option<usize>,
    /// Differential degree of a Poincaré series.
    #[arg(long, global = true)]
    k: Option<u32>,
    #[arg(long, global = true)]
    refinement: Option<usize>,
    /// Word radius.
    #[arg(long, global = true)]
    radius: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long = "max-iters", global = true)]
    max_iters: Option<usize>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    /// Divergence slope of log cond per sweep.
    #[arg(long, global = true)]
    slope: Option<f64>,
    /// Divergence window in sweeps.
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Projective connection: zero or poincare.
    #[arg(long = "Q", global = true)]
    q: Option<String>,
    /// Basepoint as `re,im`.
    #[arg(long, global = true, value_parser = parse_point, allow_hyphen_values = true)]
    z0: Option<[f64; 2]>,
    /// fuchsian, trivial, diagonal or unipotent.
    #[arg(long, global = true)]
    rep: Option<String>,
    /// smoke or full.
    #[arg(long, global = true)]
    level: Option<String>,
    /// none or wrong-w4-constant.
    #[arg(long, global = true)]
    perturb: Option<String>,
    /// JSON run configuration; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report path (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// CSV trace path.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Worker threads (default 1).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected re,im, got {s:?}"));
    }
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok([p(parts[0])?, p(parts[1])?])
}

impl Flags {
    fn params(&self) -> Params {
        Params {
            command: None,
            n: self.n,
            g: self.g,
            k: self.k,
            refinement: self.refinement,
            radius: self.radius,
            tol: self.tol,
            seed: self.seed,
            steps: self.steps,
            max_iters: self.max_iters,
            dt: self.dt,
            mu: self.mu,
            slope: self.slope,
            window: self.window,
            q: self.q.clone(),
            z0: self.z0,
            rep: self.rep.clone(),
            level: self.level.clone(),
            perturb: self.perturb.clone(),
        }
    }
}

impl Cmd {
    fn command(&self) -> Command {
        match self {
            Cmd::Oper { what: OperCmd::Monodromy } => Command::OperMonodromy,
            Cmd::Oper { what: OperCmd::Eichler } => Command::OperEichler,
            Cmd::Oper { what: OperCmd::Wk } => Command::OperWk,
            Cmd::Hn { what: HnCmd::Verify } => Command::HnVerify,
            Cmd::Rep { what: RepCmd::Analyze } => Command::RepAnalyze,
            Cmd::Harmonic { what: HarmonicCmd::Solve } => Command::HarmonicSolve,
            Cmd::Gauge { what: GaugeCmd::Flow } => Command::GaugeFlow,
            Cmd::Forms { what: FormsCmd::Build } => Command::FormsBuild,
            Cmd::Dims => Command::Dims,
            Cmd::Suite => Command::Suite,
        }
    }
}

enum Failure {
    Validation(String),
    Numerical(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Numerical(format!("cannot write {}: {e}", path.display())))
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let cmd = cli.command.command();
    let file = cli.flags.config.as_deref().map(config::load).transpose()?;
    let params = config::resolve(cmd, cli.flags.params(), file)?;
    let threads = cli.flags.threads.unwrap_or(1);
    if threads == 0 {
        return Err(Failure::Validation("threads must be at least 1".into()));
    }
    if cli.flags.csv.is_some()
        && matches!(
            cmd,
            Command::OperMonodromy | Command::OperEichler | Command::RepAnalyze | Command::Dims | Command::Suite
        )
    {
        return Err(Failure::Validation(format!("{cmd} writes no CSV")));
    }
    let out = par::with_threads(threads, || commands::run(cmd, &params))?;

    let mut report = match out.report {
        Value::Object(m) => m,
        other => {
            let mut m = serde_json::Map::new();
            m.insert("result".into(), other);
            m
        }
    };
    report.insert("config".into(), Value::Object(params.to_json()));
    report.insert("version".into(), json!(VERSION));
    report.insert("tool".into(), json!("hodge-lab"));
    let text = json::to_string(&Value::Object(report), true).map_err(|e| Failure::Numerical(e.to_string()))?;
    match &cli.flags.out {
        Some(path) => write(path, &text)?,
        // the suite prints its table instead
        None if cmd == Command::Suite => {}
        None => print!("{text}"),
    }
    if let (Some(path), Some(csv)) = (&cli.flags.csv, &out.csv) {
        write(path, csv)?;
    }
    if !out.failed.is_empty() {
        return Err(Failure::Numerical(format!("failed criteria: {:?}", out.failed)));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
