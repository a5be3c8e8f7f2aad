//! Command-line bindings. Every command parses flags, calls into the
//! library and maps errors onto exit codes: 0 success, 1 configuration or
//! validation error, 2 protocol fault.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::adversary::{self, neighbors, AttackError, Outcome};
use crate::analysis::{self, AnalysisError};
use crate::engine::{self, ConfigError, EngineError, ProtocolConfig};
use crate::exec::Execution;
use crate::field::{ModulusProfile, Seed, DEFAULT_INPUT_BOUND};
use crate::simnet::{self, Protocol};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAULT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dksum", version, about = "Segmented secure-sum protocols on a simulated ring")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute one protocol run and write its transcript.
    Run(RunArgs),
    /// Attack a transcript with the target's two ring neighbors.
    Attack(AttackArgs),
    /// Estimate leakage frequency over seeded random trials.
    Montecarlo(MonteCarloArgs),
    /// Measure message and addition counts over a range of party counts.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Baseline,
    Kss,
    Dk,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Baseline => Protocol::Baseline,
            ProtocolArg::Kss => Protocol::Kss,
            ProtocolArg::Dk => Protocol::Dk,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileArg {
    Standard,
    Tiny,
}

impl From<ProfileArg> for ModulusProfile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Standard => ModulusProfile::Standard,
            ProfileArg::Tiny => ModulusProfile::Tiny,
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long, value_enum)]
    protocol: ProtocolArg,
    /// Bound B on input magnitudes.
    #[arg(long, default_value_t = DEFAULT_INPUT_BOUND)]
    bound: u64,
    #[arg(long, value_enum, default_value = "standard")]
    modulus_profile: ProfileArg,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated signed inputs, one per party.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    inputs: Option<Vec<i64>>,
    /// Party count; inputs are drawn from the seed when not given.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    initiator: usize,
    /// Pin the baseline mask R.
    #[arg(long, allow_hyphen_values = true)]
    mask: Option<i64>,
    #[arg(long, default_value = "transcript.jsonl")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AttackArgs {
    #[arg(long)]
    transcript: PathBuf,
    #[arg(long)]
    target: usize,
    /// The target's predecessor and successor; inferred when omitted.
    #[arg(long, value_delimiter = ',')]
    colluders: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
struct MonteCarloArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    trials: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    target: usize,
    #[arg(long, default_value = "montecarlo.csv")]
    out: PathBuf,
    /// Disable the parallel trial runner.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_enum, default_value = "dk")]
    protocol: ProtocolArg,
    /// Inclusive range of party counts, e.g. `3..10`.
    #[arg(long)]
    range: String,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

/// A failed command: message plus exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Failure { code: EXIT_CONFIG, message: message.to_string() }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let code = match e {
            EngineError::Config(_) => EXIT_CONFIG,
            _ => EXIT_FAULT,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e)
    }
}

impl From<AttackError> for Failure {
    fn from(e: AttackError) -> Self {
        match e {
            AttackError::Engine(inner) => inner.into(),
            AttackError::Solve(_) => Failure { code: EXIT_FAULT, message: e.to_string() },
            other => Failure::config(other),
        }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Engine(inner) => inner.into(),
            other => Failure::config(other),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::config(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, write: impl FnOnce(&mut io::BufWriter<fs::File>) -> io::Result<()>) -> Result<(), Failure> {
    let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
    let mut w = io::BufWriter::new(file);
    write(&mut w).map_err(|e| io_failure(path, e))
}

fn parse_range(s: &str) -> Result<(usize, usize), Failure> {
    let malformed = || Failure::config(format!("malformed range '{s}', expected MIN..MAX"));
    let (lo, hi) = s.split_once("..").ok_or_else(malformed)?;
    let lo = lo.trim().parse().map_err(|_| malformed())?;
    let hi = hi.trim().parse().map_err(|_| malformed())?;
    Ok((lo, hi))
}

fn cmd_run(args: RunArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let protocol: Protocol = args.common.protocol.into();
    let k = match (&args.inputs, args.k) {
        (Some(inputs), Some(k)) if inputs.len() != k => {
            return Err(ConfigError::InputCount { expected: k, got: inputs.len() }.into())
        }
        (Some(inputs), _) => inputs.len(),
        (None, Some(k)) => k,
        (None, None) => return Err(Failure::config("either --inputs or --k is required")),
    };
    // Only a baseline run with explicit inputs and a pinned mask is free of randomness.
    let deterministic = protocol == Protocol::Baseline && args.mask.is_some() && args.inputs.is_some();
    let seed = match args.seed {
        Some(s) => Seed(s),
        None if deterministic => Seed(0),
        None => return Err(Failure::config("--seed is required for randomized runs")),
    };
    let mut config = ProtocolConfig::new(protocol, k, seed)
        .with_bound(args.common.bound)
        .with_profile(args.common.modulus_profile.into())
        .with_initiator(args.initiator);
    config.mask = args.mask;
    config.validate()?;
    let inputs = args.inputs.unwrap_or_else(|| config.random_inputs());

    let outcome = engine::run(&config, &inputs)?;
    let t = &outcome.transcript;
    simnet::write_transcript(t, &args.out).map_err(|e| io_failure(&args.out, e))?;

    let c = simnet::counters(t);
    let mut report = || -> io::Result<()> {
        writeln!(out, "protocol: {protocol}")?;
        writeln!(out, "parties: {k}")?;
        writeln!(out, "sum: {}", outcome.sum)?;
        writeln!(out, "segment_transfers: {}", c.segment_transfers)?;
        writeln!(out, "partial_sums: {}", c.partial_sums)?;
        writeln!(out, "broadcasts: {}", c.broadcasts)?;
        writeln!(out, "additions: {}", c.additions)?;
        writeln!(out, "transcript: {}", args.out.display())
    };
    report().map_err(Failure::config)
}

fn cmd_attack(args: AttackArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let t = simnet::read_transcript(&args.transcript).map_err(Failure::config)?;
    let k = t.header.k;
    let colluders = match args.colluders.as_deref() {
        Some([a, b]) => [*a, *b],
        Some(_) => return Err(Failure::config("--colluders takes exactly two parties")),
        None if args.target < k => neighbors(k, args.target),
        None => return Err(AttackError::TargetOutOfRange { target: args.target, k }.into()),
    };
    let verdict = adversary::attack(&t, colluders, args.target)?;
    let field = t.header.field().map_err(Failure::config)?;
    let line = match verdict.outcome {
        Outcome::Determined(v) => match field.decode(v, t.header.bound) {
            Ok(x) => format!("DETERMINED {x}"),
            Err(_) => format!("DETERMINED residue {v}"),
        },
        Outcome::Underdetermined => {
            format!("UNDETERMINED rank {} of {} unknowns", verdict.rank, verdict.unknowns)
        }
    };
    writeln!(out, "{line}").map_err(Failure::config)
}

fn cmd_montecarlo(args: MonteCarloArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let config = ProtocolConfig::new(args.common.protocol.into(), args.k, Seed(args.seed))
        .with_bound(args.common.bound)
        .with_profile(args.common.modulus_profile.into());
    let exec = if args.sequential { Execution::Sequential } else { Execution::default() };
    let report =
        adversary::monte_carlo_leakage(&config, args.target, args.trials, Seed(args.seed), exec)?;
    write_file(&args.out, |w| report.write_csv(w))?;
    if !report.all_sound() {
        return Err(Failure {
            code: EXIT_FAULT,
            message: "a determined verdict disagreed with the target's input".into(),
        });
    }
    writeln!(
        out,
        "leakage frequency: {:.3} ({}/{})",
        report.frequency(),
        report.determined(),
        report.trials.len()
    )
    .map_err(Failure::config)
}

fn cmd_sweep(args: SweepArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let (lo, hi) = parse_range(&args.range)?;
    let rows = analysis::sweep(lo, hi, args.protocol.into(), Seed(args.seed), Execution::default())?;
    write_file(&args.out, |w| analysis::write_sweep_csv(&rows, w))?;
    let matched = rows.iter().filter(|r| r.complexity.matches).count();
    writeln!(out, "rows: {} matched: {} csv: {}", rows.len(), matched, args.out.display())
        .map_err(Failure::config)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Attack(a) => cmd_attack(a, out),
        Command::Montecarlo(a) => cmd_montecarlo(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
