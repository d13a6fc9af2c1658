//! The `rwce` command line: `rwce <subcommand> --config <path> [--out <dir>]
//! [--seed <u64>] [--format json|csv]`.
//!
//! Exit codes: 0 all checks pass, 1 a check failed (or a computation broke),
//! 2 invalid config or unwritable output, 3 truncation radius exceeded.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{self, ExperimentConfig, Format};
use crate::electrical::{resistance_profile, ProfileVerdict};
use crate::error::{Error, Result};
use crate::graph::{split_at_origin, Ball, GraphFamily};
use crate::report::{emit, AnalysisSection, Provenance, Report, SimulationSection, SplitSummary};
use crate::verify::{electrical_checks, run_suite, CheckRow};
use crate::walker::{classify_simulation, simulate, theorem_inputs, ClassifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_TRUNCATED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "rwce", version, about = "Random walks in changing environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Resistance profile of C_0 and the return probabilities it implies.
    Analyze(RunArgs),
    /// Monte Carlo trajectories and the theorem-based classification.
    Simulate(RunArgs),
    /// The full invariant suite.
    Verify(RunArgs),
    /// Analyze, simulate and verify merged into one document.
    Report(RunArgs),
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    Analyze,
    Simulate,
    Verify,
    Report,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Analyze => "analyze",
            Pipeline::Simulate => "simulate",
            Pipeline::Verify => "verify",
            Pipeline::Report => "report",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "analyze" => Pipeline::Analyze,
            "simulate" => Pipeline::Simulate,
            "verify" => Pipeline::Verify,
            "report" => Pipeline::Report,
            other => return Err(Error::Config(format!("unknown subcommand `{other}`"))),
        })
    }
}

pub fn exit_code(report: &Report) -> i32 {
    if report.truncated {
        EXIT_TRUNCATED
    } else if report.passed {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

pub fn error_exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Io(_) | Error::Json(_) => EXIT_INVALID,
        Error::TruncationExceeded { .. } => EXIT_TRUNCATED,
        _ => EXIT_CHECK_FAILED,
    }
}

fn classify_options(cfg: &ExperimentConfig, seed: u64) -> ClassifyOptions {
    ClassifyOptions {
        horizon: cfg.horizon,
        trials: cfg.trials,
        seed,
        start: cfg.start_label(),
        radii: cfg.radii.clone(),
        trace_horizon: cfg.trace.horizon,
        trace_radius: cfg.trace.radius,
        probe_radius: cfg.probe_radius,
        max_radius: cfg.max_radius,
        truncation: cfg.truncation,
        visit_radius: cfg.visit_radius,
    }
}

fn analysis(cfg: &ExperimentConfig, family: &GraphFamily) -> Result<AnalysisSection> {
    let base = cfg.weights.clone();
    let profile = resistance_profile(family, &|b: &Ball| base.weights(b), &cfg.radii)?;
    let ball = Ball::build(family, cfg.probe_radius)?;
    let origin_conductance: f64 = ball
        .incident(0)
        .iter()
        .map(|&(_, e)| cfg.weights.weight(&ball, e))
        .sum::<Result<f64>>()?;
    let from_resistance = |r: f64| 1.0 - 1.0 / (origin_conductance * r);
    let return_probabilities = profile.values.iter().map(|&r| from_resistance(r)).collect();
    let limit_return_probability = match profile.verdict {
        ProfileVerdict::Convergent => profile.limit_estimate.map(from_resistance),
        ProfileVerdict::Divergent => Some(1.0),
    };
    let split = split_at_origin(family, cfg.probe_radius)?;
    Ok(AnalysisSection {
        profile,
        return_probabilities,
        limit_return_probability,
        split: SplitSummary::new(&split, |x| ball.label(x).clone()),
    })
}

fn simulation(
    cfg: &ExperimentConfig,
    family: &GraphFamily,
    seed: u64,
    report: &mut Report,
) -> Result<()> {
    let env = cfg.environment()?;
    let opts = classify_options(cfg, seed);
    let inputs = theorem_inputs(family, &env, &opts)?;
    let sim = match simulate(family, &env, &opts.simulation_options()) {
        Ok(sim) => sim,
        Err(Error::TruncationExceeded { partial, .. }) => {
            report.simulation = Some(SimulationSection::new(&partial));
            report.truncated = true;
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    report.simulation = Some(SimulationSection::new(&sim));
    let class = classify_simulation(&opts, inputs, &sim);
    let margin = class
        .slowness
        .observed_min
        .iter()
        .zip(&class.slowness.lower_bounds)
        .map(|(o, l)| (o - l) / l)
        .fold(f64::INFINITY, f64::min);
    report.ledger.push(CheckRow::at_least(
        "conductance_lower_bound",
        "Conductance lower bound from the slowness sum",
        margin,
        -1e-12,
        class.slowness.lower_bounds.len(),
    ));
    let min_step = class
        .ellipticity
        .iter()
        .filter_map(|e| e.min_probability)
        .fold(f64::INFINITY, f64::min);
    if min_step.is_finite() {
        report.ledger.push(CheckRow::at_least(
            "observed_ellipticity",
            "Uniform ellipticity",
            min_step,
            f64::MIN_POSITIVE,
            class.trials,
        ));
    }
    report.classification = Some(class);
    Ok(())
}

/// Runs one pipeline on a validated config. `base_dir` resolves relative
/// paths inside the config.
pub fn run_pipeline(
    pipeline: Pipeline,
    cfg: &ExperimentConfig,
    config_bytes: &[u8],
    base_dir: &Path,
    seed: u64,
) -> Result<Report> {
    let family = cfg.family(base_dir)?;
    let env = cfg.environment()?;
    let mut report = Report::new(
        pipeline.name(),
        family.name(),
        &env.name(),
        Provenance::new(config_bytes, seed),
    );
    if matches!(pipeline, Pipeline::Analyze | Pipeline::Report) {
        report.analysis = Some(analysis(cfg, &family)?);
        if pipeline == Pipeline::Analyze {
            report.ledger = electrical_checks(cfg, &family, &env)?;
        }
    }
    if matches!(pipeline, Pipeline::Simulate | Pipeline::Report) {
        simulation(cfg, &family, seed, &mut report)?;
    }
    if matches!(pipeline, Pipeline::Verify | Pipeline::Report) && !report.truncated {
        let out = run_suite(cfg, &family, &env, seed)?;
        report.ledger.extend(out.rows);
        report.skipped = out.skipped;
        report.slowness = out.slowness;
        report.certificates = out.certificates;
    }
    report.finish();
    Ok(report)
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("RWCE_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::Config(format!("RWCE_THREADS={value} is not a positive integer")))?;
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let (pipeline, args) = match cli.command {
        Command::Analyze(a) => (Pipeline::Analyze, a),
        Command::Simulate(a) => (Pipeline::Simulate, a),
        Command::Verify(a) => (Pipeline::Verify, a),
        Command::Report(a) => (Pipeline::Report, a),
    };
    match execute(pipeline, &args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("rwce {}: {e}", pipeline.name());
            error_exit_code(&e)
        }
    }
}

fn execute(pipeline: Pipeline, args: &RunArgs) -> Result<i32> {
    configure_threads()?;
    let (cfg, bytes) = config::load(&args.config)?;
    let base_dir = args.config.parent().unwrap_or(Path::new("."));
    let seed = args.seed.unwrap_or(cfg.seed);
    let format = args.format.unwrap_or(cfg.output.format);
    let out_dir = match (&args.out, &cfg.output.dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => base_dir.join(dir),
        (None, None) => PathBuf::from("rwce-out"),
    };
    let report = run_pipeline(pipeline, &cfg, &bytes, base_dir, seed)?;
    for path in emit(&report, &out_dir, format)? {
        println!("{}", path.display());
    }
    let failed: Vec<&str> = report
        .ledger
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.check.as_str())
        .collect();
    if report.truncated {
        eprintln!("truncation radius {} exceeded; output is partial", cfg.max_radius);
    } else if !failed.is_empty() {
        eprintln!("failed checks: {}", failed.join(", "));
    }
    Ok(exit_code(&report))
}
