use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cvpq_core::behaviors::{FamilyKind, behavior_family};
use cvpq_core::cfrd::cfrd_evaluate;
use cvpq_core::rswitness::{
    JointChoice, RS_REL_TOL, covariance_matrix, rs_test, rs_threshold_2mode, rs_threshold_family,
};
use cvpq_core::scan::{
    Engine, GridRange, OutputFormat, ScanConfig, classify_point_with, scan_region, to_json, write_csv,
};

mod verify;

/// Bell behaviors built from Gaussian mixtures: CFRD inequalities, the
/// Robertson-Schrödinger test and region scans.
#[derive(Debug, Parser)]
#[command(name = "cvpq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classify every point of an (l, sigma) grid and write CSV or JSON.
    Scan(ScanArgs),
    /// Classify a single (l, sigma) point.
    Classify(PointArgs),
    /// Evaluate both sides of the CFRD inequality on one behavior.
    Cfrd(BehaviorArgs),
    /// Run the RS eigenvalue test on one behavior.
    Rs(PointArgs),
    /// Print a behavior as JSON.
    Dump(BehaviorArgs),
    /// Run the built-in oracle and Monte-Carlo checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Family {
    Mmode,
    #[value(name = "2mode")]
    TwoMode,
}

impl From<Family> for FamilyKind {
    fn from(f: Family) -> Self {
        match f {
            Family::Mmode => FamilyKind::Mmode,
            Family::TwoMode => FamilyKind::TwoMode,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    Generic,
    ClosedForm,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Generic => Engine::Generic,
            EngineArg::ClosedForm => Engine::ClosedForm,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct BehaviorArgs {
    /// Number of modes (the 2mode family requires 2)
    #[arg(long, default_value_t = 3)]
    modes: usize,
    /// Center offset l >= 0
    #[arg(long, allow_negative_numbers = true)]
    l: f64,
    /// Component width sigma >= 0
    #[arg(long, allow_negative_numbers = true)]
    sigma: f64,
    /// Behavior family
    #[arg(long, value_enum, default_value_t = Family::Mmode)]
    family: Family,
}

#[derive(Debug, Args)]
struct PointArgs {
    #[command(flatten)]
    behavior: BehaviorArgs,
    /// Within-mode joint-moment choice c = <{x, p}>/2 - <x><p>
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    c: f64,
    /// Evaluation engine
    #[arg(long, value_enum, default_value_t = EngineArg::Generic)]
    engine: EngineArg,
}

#[derive(Debug, Args)]
struct ScanArgs {
    /// Number of modes
    #[arg(long, default_value_t = 3)]
    modes: usize,
    /// Behavior family
    #[arg(long, value_enum, default_value_t = Family::Mmode)]
    family: Family,
    /// Range of l as start:end:step (inclusive), start:end (step 0.01) or a single value
    #[arg(long, default_value = "0:1.5:0.01")]
    l: GridRange,
    /// Range of sigma, same syntax as --l
    #[arg(long, default_value = "0:1:0.01")]
    sigma: GridRange,
    /// Within-mode joint-moment choice c
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    c: f64,
    /// Evaluation engine
    #[arg(long, value_enum, default_value_t = EngineArg::Generic)]
    engine: EngineArg,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also run a Monte-Carlo no-signaling check at the central grid point with this seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Which checks to run
    #[arg(long, value_enum, default_value_t = verify::Suite::All)]
    suite: verify::Suite,
    /// Monte-Carlo samples per moment case
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    /// Base seed for the Monte-Carlo checks
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Internal(String),
}

impl From<cvpq_core::Error> for Failure {
    fn from(e: cvpq_core::Error) -> Self {
        if e.is_internal() { Failure::Internal(e.to_string()) } else { Failure::Usage(e.to_string()) }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run_scan(args: ScanArgs) -> Result<(), Failure> {
    let cfg = ScanConfig {
        modes: args.modes,
        family: args.family.into(),
        l: args.l,
        sigma: args.sigma,
        c: args.c,
        engine: args.engine.into(),
        format: match args.format {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        },
        seed: args.seed,
    };
    let result = scan_region(&cfg)?;
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut sink = BufWriter::new(sink);
    match cfg.format {
        OutputFormat::Csv => write_csv(&result, &mut sink)?,
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut sink, &to_json(&result))?;
            writeln!(sink)?;
        }
    }
    sink.flush()?;
    let s = &result.summary;
    log::info!(
        "{} cells: {} CFRD-violating, {} RS-violating, {} post-quantum",
        result.cells.len(),
        s.cfrd_violating,
        s.rs_violating,
        s.counts.post_quantum
    );
    if let Some(mc) = &s.mc_no_signaling {
        if !mc.pass {
            return Err(Failure::Internal(format!(
                "Monte-Carlo no-signaling check failed at the central point (worst z {})",
                mc.worst_z
            )));
        }
    }
    Ok(())
}

fn run_classify(args: PointArgs) -> Result<(), Failure> {
    let b = &args.behavior;
    let class = classify_point_with(args.engine.into(), b.modes, b.family.into(), b.l, b.sigma, args.c)?;
    print_json(&json!({
        "modes": b.modes,
        "family": FamilyKind::from(b.family),
        "l": b.l,
        "sigma": b.sigma,
        "c": args.c,
        "engine": Engine::from(args.engine),
        "cfrd_margin": class.cfrd_margin,
        "rs_min_eig": class.rs_min_eig,
        "rs_tol": class.rs_tol,
        "label": class.label,
    }))
}

fn run_cfrd(args: BehaviorArgs) -> Result<(), Failure> {
    let b = behavior_family(args.family.into(), args.modes, args.l, args.sigma)?;
    let v = cfrd_evaluate(&b)?;
    print_json(&json!({
        "modes": args.modes,
        "family": FamilyKind::from(args.family),
        "l": args.l,
        "sigma": args.sigma,
        "lhs": v.lhs,
        "rhs": v.rhs,
        "margin": v.margin,
        "violated": v.violated(),
    }))
}

fn run_rs(args: PointArgs) -> Result<(), Failure> {
    let p = &args.behavior;
    let family: FamilyKind = p.family.into();
    let b = behavior_family(family, p.modes, p.l, p.sigma)?;
    let report = rs_test(&covariance_matrix(&b, JointChoice::new(args.c)?)?)?;
    // The two families coincide at two modes.
    let threshold = if p.modes == 2 { rs_threshold_2mode(p.l, args.c) } else { rs_threshold_family(p.modes, args.c)? };
    let radius = p.l * p.l + p.sigma * p.sigma;
    let predicted = radius < threshold;
    if (radius - threshold).abs() > RS_REL_TOL * (1.0 + radius) && predicted != report.violated {
        return Err(Failure::Internal(format!(
            "eigenvalue test ({}) disagrees with the threshold l^2 + sigma^2 < {threshold}",
            report.min_eigenvalue
        )));
    }
    print_json(&json!({
        "modes": p.modes,
        "family": family,
        "l": p.l,
        "sigma": p.sigma,
        "c": args.c,
        "min_eigenvalue": report.min_eigenvalue,
        "tolerance": report.tolerance,
        "threshold": threshold,
        "violated": report.violated,
        "verdict": report.verdict,
    }))
}

fn run_dump(args: BehaviorArgs) -> Result<(), Failure> {
    let b = behavior_family(args.family.into(), args.modes, args.l, args.sigma)?;
    print_json(&b.to_document()?)
}

fn run_verify(args: VerifyArgs) -> Result<(), Failure> {
    if args.samples < 2 {
        return Err(Failure::Usage("--samples must be at least 2".into()));
    }
    let report = verify::run(args.suite, &verify::McOptions { samples: args.samples, seed: args.seed });
    print_json(&report)?;
    if report.pass {
        Ok(())
    } else {
        let failed: Vec<_> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
        Err(Failure::Internal(format!("failed checks: {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Scan(a) => run_scan(a),
        Command::Classify(a) => run_classify(a),
        Command::Cfrd(a) => run_cfrd(a),
        Command::Rs(a) => run_rs(a),
        Command::Dump(a) => run_dump(a),
        Command::Verify(a) => run_verify(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}
