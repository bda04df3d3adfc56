//! `fro`: simulate FRO attacks, synthesize minimal injections, run parameter
//! sweeps and summarise them.
//!
//! Exit codes: 0 success, 1 no attack exists, 2 config/spec/input error,
//! 3 output I/O error, 4 solver refusal (non-monotone feasibility or a
//! failed backend).

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fro_core::grid::{GridConfig, InertiaMode, RelayMode, ShedSign};
use fro_core::io::{
    load_raw_config, load_sweep, load_sweep_spec, save_synthesis_result, save_sweep, save_trace, save_trend_report,
    synthesis_result_json, write_trace_csv, SynthesisResult,
};
use fro_core::sweep::{run_sweep_with_workers, trend_report, AttackType, RecordStatus, SweepMode, Verdict};
use fro_core::synth::solver::{
    solve, BisectionBackend, ConstraintProblem, ExhaustiveBackend, SmtProcessBackend, SolverAnswer, SolverBackend,
};
use fro_core::synth::DEFAULT_TOLERANCE;
use fro_core::{
    feasibility, simulate, validate_config, AttackGoal, AttackSignal, FeasibilityOutcome, InjectionSign, SynthError,
    TargetKind, ValidatedGridConfig,
};

const EXIT_NO_ATTACK: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_OUTPUT: u8 = 3;
const EXIT_REFUSED: u8 = 4;

#[derive(Parser)]
#[command(name = "fro", version, about = "False-relay-operation attack simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the frequency simulator and write a per-step trace CSV.
    Simulate(SimulateArgs),
    /// Find the smallest injection that makes a relay operate falsely.
    Synthesize(SynthesizeArgs),
    /// Solve every combination of a sweep spec and write the records CSV.
    Sweep(SweepArgs),
    /// Bucket sweep records by parameter and judge the trends.
    Report(ReportArgs),
}

/// Engine and calibration overrides applied on top of the config file.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// Re-add a relay's block on every step its condition holds.
    #[arg(long)]
    literal_accumulation: bool,
    /// Shed load lowers frequency, like tripped generation.
    #[arg(long)]
    literal_signs: bool,
    /// Scale inertia by the generator capacity still online.
    #[arg(long)]
    rescale_inertia: bool,
    /// Attacker gain applied to the capability bound.
    #[arg(long)]
    kappa: Option<f64>,
    /// Under-frequency threshold for every load relay, in p.u. of nominal
    /// or with an `hz` suffix (e.g. `59.5hz`).
    #[arg(long, value_parser = parse_frequency)]
    ls_threshold: Option<Frequency>,
    /// ROCOF threshold for every generator relay, in Hz/s (`0.5` or `0.5hz/s`).
    #[arg(long, value_parser = parse_rocof)]
    rocof_threshold: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Injected power imbalance in p.u. (`0.322` or `0.322pu`).
    #[arg(long, default_value = "0", value_parser = parse_pu, allow_hyphen_values = true)]
    dp_a: f64,
    #[arg(long, default_value_t = 0)]
    attack_step: usize,
    #[arg(long, default_value_t = 600)]
    horizon: usize,
    /// Trace CSV path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Any,
    Rocof,
    Ls,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    Positive,
    Negative,
    Either,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Relay class that must operate.
    #[arg(long, value_enum, default_value = "any", conflicts_with = "relay")]
    target: TargetArg,
    /// A specific relay id that must operate.
    #[arg(long)]
    relay: Option<String>,
    #[arg(long, value_enum, default_value = "either")]
    sign: SignArg,
    /// Steps to observe; defaults to two ROCOF windows.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 0)]
    attack_step: usize,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    /// Grid-scan backend: sound without assuming monotone feasibility.
    #[arg(long, conflicts_with = "smt_solver")]
    exhaustive: bool,
    /// External SMT-LIB solver read from stdin (e.g. `z3`).
    #[arg(long)]
    smt_solver: Option<String>,
    /// Result JSON path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the certificate trace CSV.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to the number of logical CPUs.
    #[arg(long)]
    workers: Option<usize>,
    /// Seed for a random sweep (switches a cartesian spec to random).
    #[arg(long)]
    seed: Option<u64>,
    /// Draw count for a random sweep (switches a cartesian spec to random).
    #[arg(long)]
    count: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    records: PathBuf,
    /// Directory for `trend.json` and the per-parameter CSVs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Frequency {
    Hz(f64),
    PerUnit(f64),
}

fn split_suffix<'a>(s: &'a str, suffix: &str) -> Option<&'a str> {
    let lower = s.to_ascii_lowercase();
    lower.strip_suffix(suffix).map(|_| s[..s.len() - suffix.len()].trim())
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_frequency(s: &str) -> Result<Frequency, String> {
    match split_suffix(s, "hz") {
        Some(hz) => number(hz).map(Frequency::Hz),
        None => number(split_suffix(s, "pu").unwrap_or(s)).map(Frequency::PerUnit),
    }
}

fn parse_pu(s: &str) -> Result<f64, String> {
    if split_suffix(s, "hz").is_some() {
        return Err("power injections are per-unit; drop the `hz` suffix".into());
    }
    number(split_suffix(s, "pu").unwrap_or(s))
}

fn parse_rocof(s: &str) -> Result<f64, String> {
    number(split_suffix(s, "hz/s").unwrap_or(s))
}

/// Error paired with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type CliResult = Result<u8, Failure>;

trait ExitWith<T> {
    fn exit_with(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitWith<T> for Result<T, E> {
    fn exit_with(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code,
            error: e.into(),
        })
    }
}

fn input_error(msg: impl Display) -> Failure {
    Failure {
        code: EXIT_INPUT,
        error: anyhow!("{msg}"),
    }
}

impl Overrides {
    fn apply(&self, cfg: &mut GridConfig) {
        if self.literal_accumulation {
            cfg.engine.relay_mode = RelayMode::LiteralAccumulation;
        }
        if self.literal_signs {
            cfg.engine.shed_sign = ShedSign::Literal;
        }
        if self.rescale_inertia {
            cfg.engine.inertia_mode = InertiaMode::RescaleBySurvivingGeneration;
        }
        if let Some(k) = self.kappa {
            cfg.capability.kappa = k;
        }
        if let Some(th) = self.ls_threshold {
            let hz = match th {
                Frequency::Hz(hz) => hz,
                Frequency::PerUnit(pu) => cfg.params.pu_to_hz(pu),
            };
            for load in &mut cfg.loads {
                load.underfreq_threshold = hz;
            }
        }
        if let Some(th) = self.rocof_threshold {
            for g in &mut cfg.generators {
                g.rocof_threshold = th;
            }
        }
    }
}

fn load_grid(path: &Path, overrides: &Overrides) -> Result<ValidatedGridConfig, Failure> {
    let mut raw = load_raw_config(path)
        .context("cannot load configuration")
        .exit_with(EXIT_INPUT)?;
    overrides.apply(&mut raw);
    validate_config(raw)
        .with_context(|| format!("{}: configuration rejected", path.display()))
        .exit_with(EXIT_INPUT)
}

fn cmd_simulate(args: SimulateArgs) -> CliResult {
    let cfg = load_grid(&args.config, &args.overrides)?;
    if args.dp_a.abs() > cfg.capability_bound() {
        log::warn!(
            "|dp_a| = {} exceeds the attacker capability bound {}",
            args.dp_a.abs(),
            cfg.capability_bound()
        );
    }
    let trace = simulate(&cfg, &AttackSignal::new(args.dp_a, args.attack_step), args.horizon).exit_with(EXIT_INPUT)?;
    match &args.out {
        Some(path) => save_trace(path, &trace).exit_with(EXIT_OUTPUT)?,
        None => write_trace_csv(std::io::stdout().lock(), &trace)
            .context("writing trace to standard output")
            .exit_with(EXIT_OUTPUT)?,
    }
    for e in &trace.events {
        log::info!("step {}: {} {}", e.step, e.kind, e.relay_id);
    }
    eprintln!(
        "simulated {} steps, {} relay event(s), final frequency {:.6} Hz",
        args.horizon,
        trace.events.len(),
        trace.rows.last().map_or(f64::NAN, |r| r.f_hz)
    );
    Ok(0)
}

fn synth_failure(e: SynthError) -> Failure {
    let code = match e {
        SynthError::NonMonotoneFeasibility { .. }
        | SynthError::BackendUnavailable(_)
        | SynthError::CertificateMismatch(_) => EXIT_REFUSED,
        _ => EXIT_INPUT,
    };
    Failure {
        code,
        error: e.into(),
    }
}

fn cmd_synthesize(args: SynthesizeArgs) -> CliResult {
    let cfg = load_grid(&args.config, &args.overrides)?;
    let target = match (&args.relay, args.target) {
        (Some(id), _) => TargetKind::Specific(id.clone()),
        (None, TargetArg::Any) => TargetKind::Any,
        (None, TargetArg::Rocof) => TargetKind::RocofOnly,
        (None, TargetArg::Ls) => TargetKind::LsOnly,
    };
    let sign = match args.sign {
        SignArg::Positive => InjectionSign::Positive,
        SignArg::Negative => InjectionSign::Negative,
        SignArg::Either => InjectionSign::Either,
    };
    if args.tolerance.is_nan() || args.tolerance <= 0.0 {
        return Err(input_error(format!("--tolerance must be > 0, got {}", args.tolerance)));
    }
    let horizon = args.horizon.unwrap_or(2 * cfg.params().rocof_window_m);
    let mut goal = AttackGoal::new(target, horizon).with_sign(sign);
    goal.attack_step = args.attack_step;

    let backend: Box<dyn SolverBackend> = if args.exhaustive {
        Box::new(ExhaustiveBackend {
            resolution: args.tolerance,
        })
    } else if let Some(program) = &args.smt_solver {
        Box::new(SmtProcessBackend {
            program: program.clone(),
            args: vec!["-in".into()],
        })
    } else {
        Box::new(BisectionBackend {
            tolerance: args.tolerance,
            ..BisectionBackend::default()
        })
    };
    let problem = ConstraintProblem::from_goal(cfg.clone(), &goal);
    log::info!("solving with the {} backend, bound {} p.u.", backend.name(), cfg.capability_bound());
    let answer = solve(&problem, backend.as_ref()).map_err(synth_failure)?;
    let outcome = match answer {
        SolverAnswer::Sat(a) => feasibility(&cfg, a.dp_a, &goal).map_err(synth_failure)?,
        SolverAnswer::Unsat => FeasibilityOutcome::NoAttackExists,
    };

    if let (Some(path), Some(v)) = (&args.trace_out, outcome.vector()) {
        save_trace(path, &v.trace).exit_with(EXIT_OUTPUT)?;
    }
    let trace_file = args.trace_out.as_deref().filter(|_| outcome.is_success());
    let result = SynthesisResult::from_outcome(&outcome, trace_file);
    match &args.out {
        Some(path) => save_synthesis_result(path, &result).exit_with(EXIT_OUTPUT)?,
        None => {
            let mut out = std::io::stdout().lock();
            let text = synthesis_result_json(&result);
            writeln!(out, "{text}").context("writing result").exit_with(EXIT_OUTPUT)?;
        }
    }
    match outcome.vector() {
        Some(v) => {
            eprintln!(
                "attack found: dp_a = {:.6} p.u. trips {} ({}) at step {}",
                v.dp_a, v.outcome.relay_id, v.outcome.kind, v.outcome.trip_step
            );
            Ok(0)
        }
        None => {
            eprintln!("no attack within the capability bound {:.6} p.u.", cfg.capability_bound());
            Ok(EXIT_NO_ATTACK)
        }
    }
}

fn cmd_sweep(args: SweepArgs) -> CliResult {
    let mut spec = load_sweep_spec(&args.spec)
        .context("cannot load sweep spec")
        .exit_with(EXIT_INPUT)?;
    if args.seed.is_some() || args.count.is_some() {
        let (count, seed) = match spec.mode {
            SweepMode::Random { count, seed } => (count, seed),
            SweepMode::Cartesian => (10_000, 1),
        };
        spec.mode = SweepMode::Random {
            count: args.count.unwrap_or(count),
            seed: args.seed.unwrap_or(seed),
        };
    }
    args.overrides.apply(&mut spec.base_config);
    spec.check().map_err(input_error)?;
    validate_config(spec.base_config.clone())
        .context("sweep base configuration rejected after overrides")
        .exit_with(EXIT_INPUT)?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(input_error("--workers must be >= 1"));
    }

    let records = run_sweep_with_workers(&spec, workers);
    save_sweep(&args.out, &records).exit_with(EXIT_OUTPUT)?;

    let count = |t: AttackType| records.iter().filter(|r| r.attack_type == t).count();
    let fallbacks = records
        .iter()
        .filter(|r| r.status == RecordStatus::ExhaustiveFallback)
        .count();
    for r in &records {
        if let RecordStatus::Error(msg) = &r.status {
            log::warn!("combination {}: {msg}", r.combo_id);
        }
    }
    let errors = records
        .iter()
        .filter(|r| matches!(r.status, RecordStatus::Error(_)))
        .count();
    println!(
        "{} combinations: {} successful ({} ROCOF, {} LS), {} without attack; {} exhaustive fallbacks, {} errors",
        records.len(),
        records.iter().filter(|r| r.success).count(),
        count(AttackType::Rocof),
        count(AttackType::Ls),
        count(AttackType::None),
        fallbacks,
        errors
    );
    Ok(0)
}

fn cmd_report(args: ReportArgs) -> CliResult {
    let records = load_sweep(&args.records)
        .context("cannot load sweep records")
        .exit_with(EXIT_INPUT)?;
    let report = trend_report(&records).ok_or_else(|| input_error("no records"))?;
    save_trend_report(&args.out, &report).exit_with(EXIT_OUTPUT)?;
    println!("{} records, {} successful (slack {})", report.total_records, report.successes, report.slack);
    println!("{:<8} {:<15} {:<22} success rate by value", "param", "expected", "verdict");
    for t in &report.params {
        let verdict = match t.verdict {
            Verdict::Violated { excursion } => format!("violated ({excursion:.3})"),
            ref v => v.label().to_string(),
        };
        let expected = format!("{:?}", t.expected).to_lowercase();
        let rates: Vec<String> = t
            .buckets
            .iter()
            .map(|b| format!("{}:{:.3}", b.value, b.success_rate))
            .collect();
        println!("{:<8} {:<15} {:<22} {}", t.param.column(), expected, verdict, rates.join(" "));
    }
    Ok(0)
}

/// The error chain on one line, skipping causes already quoted by the
/// message above them.
fn describe(error: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in error.chain() {
        let part = cause.to_string();
        if !text.contains(&part) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&part);
        }
    }
    text
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("FRO_LOG_LEVEL", "warn");
    env_logger::Builder::from_env(env).format_timestamp(None).init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Synthesize(a) => cmd_synthesize(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", describe(&f.error));
            ExitCode::from(f.code)
        }
    }
}
