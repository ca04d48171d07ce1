//! `logbranch`: runs the experiments of the logistic branching library and
//! writes their data files plus a `manifest.json` into an output directory.

mod config;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use logbranch::Error;
use serde::Serialize;

use config::Config;
use experiments::{default_out, prepare, Experiment, Prepared};

/// Environment variable that overrides the output directory when `--out`
/// is not given.
const OUTPUT_ENV: &str = "LBP_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "logbranch", version, about = "Logistic branching process experiments")]
struct Cli {
    /// Caps the number of worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Overrides a configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory (default: `out/<experiment>`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact simulation of one trajectory, optionally with its genealogy.
    Simulate(RunArgs),
    /// Finite-horizon conditioned rates from survival moments.
    #[command(name = "rates-T", alias = "rates-t")]
    RatesT(RunArgs),
    /// Q-process rates from the conditioned stationary density.
    #[command(name = "rates-Q", alias = "rates-q")]
    RatesQ(RunArgs),
    /// Stationary law of the Q-process and optional occupation check.
    QStationary(RunArgs),
    /// Stationary density of the conditioned dual diffusion.
    PiStar(RunArgs),
    /// Yaglom limit by recursion, Feynman–Kac and simulation.
    Yaglom(RunArgs),
    /// Mean γ statistic across detectability rates.
    GammaScan(RunArgs),
    /// Population size now against just before the MRCA.
    Mrca(RunArgs),
    /// Moran/ASG duality check on coupled realizations.
    DualCheck(RunArgs),
    /// Rescaled chain against the Feller logistic diffusion.
    ScalingCheck(RunArgs),
    /// Checks a configuration without running it.
    Validate {
        /// Experiment name; taken from the `experiment` key when omitted.
        experiment: Option<String>,
        #[command(flatten)]
        args: RunArgs,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument(_) | Error::Domain(_) | Error::UnsupportedRegime(_) => 2,
            Error::NumericalFailure { .. }
            | Error::BracketFailure { .. }
            | Error::CapTooSmall { .. }
            | Error::EmptyTree => 3,
            Error::Impractical { .. } => 4,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Serialize)]
struct Versions {
    logbranch: &'static str,
    cli: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'static str,
    seed: u64,
    config: &'a std::collections::BTreeMap<String, String>,
    versions: Versions,
    wall_time_seconds: f64,
    artifacts: &'a [String],
    notes: &'a [String],
}

fn load(args: &RunArgs) -> Result<Config, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
            Config::parse(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
        }
        None => Config::default(),
    };
    for pair in &args.set {
        cfg.set(pair).map_err(|e| Failure::config(e.to_string()))?;
    }
    Ok(cfg)
}

fn output_dir(experiment: Experiment, args: &RunArgs, cfg: &Config) -> PathBuf {
    args.out
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.get("out").map(PathBuf::from))
        .unwrap_or_else(|| default_out(experiment))
}

fn run(experiment: Experiment, args: &RunArgs) -> Result<(), Failure> {
    let cfg = load(args)?;
    let prepared: Prepared = prepare(experiment, &cfg);
    if !prepared.violations.is_empty() {
        return Err(Failure::config(format!(
            "invalid configuration:\n  {}",
            prepared.violations.join("\n  ")
        )));
    }
    let dir = output_dir(experiment, args, &cfg);
    std::fs::create_dir_all(&dir).map_err(|e| Failure {
        code: 1,
        message: format!("cannot create {}: {e}", dir.display()),
    })?;
    let start = Instant::now();
    let report = prepared.execute(&dir)?;
    let manifest = Manifest {
        experiment: experiment.name(),
        seed: prepared.seed,
        config: &prepared.resolved,
        versions: Versions {
            logbranch: logbranch::VERSION,
            cli: env!("CARGO_PKG_VERSION"),
        },
        wall_time_seconds: start.elapsed().as_secs_f64(),
        artifacts: &report.artifacts,
        notes: &report.notes,
    };
    let file = std::fs::File::create(dir.join("manifest.json")).map_err(Error::from)?;
    logbranch::io::write_json(std::io::BufWriter::new(file), &manifest)?;
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    println!("{}: wrote {} files to {}", experiment.name(), report.artifacts.len() + 1, dir.display());
    Ok(())
}

fn validate(name: Option<&str>, args: &RunArgs) -> Result<(), Failure> {
    let cfg = load(args)?;
    let name = name
        .or_else(|| cfg.get("experiment"))
        .ok_or_else(|| Failure::config("no experiment given and no 'experiment' key in the configuration"))?;
    let experiment = Experiment::from_name(name).ok_or_else(|| Failure::config(format!("unknown experiment '{name}'")))?;
    let prepared = prepare(experiment, &cfg);
    if prepared.violations.is_empty() {
        println!("{}: ok", experiment.name());
    } else {
        println!("{}: {} violation(s)", experiment.name(), prepared.violations.len());
        for v in &prepared.violations {
            println!("  - {v}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => run(Experiment::Simulate, a),
        Command::RatesT(a) => run(Experiment::RatesT, a),
        Command::RatesQ(a) => run(Experiment::RatesQ, a),
        Command::QStationary(a) => run(Experiment::QStationary, a),
        Command::PiStar(a) => run(Experiment::PiStar, a),
        Command::Yaglom(a) => run(Experiment::Yaglom, a),
        Command::GammaScan(a) => run(Experiment::GammaScan, a),
        Command::Mrca(a) => run(Experiment::Mrca, a),
        Command::DualCheck(a) => run(Experiment::DualCheck, a),
        Command::ScalingCheck(a) => run(Experiment::ScalingCheck, a),
        Command::Validate { experiment, args } => validate(experiment.as_deref(), args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
