use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use netnash::games::{sample_instance, CournotGenerator};
use netnash::gnep::Coupling;
use netnash::harness::{self, ConfigError, Mode, RunConfig, RunError};
use netnash::inexact::InnerRule;
use netnash::oracle;
use netnash::seeker::InnerSolver;

#[derive(Parser)]
#[command(name = "netnash", version, about = "Distributed Nash equilibrium learning on network games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Seek the equilibrium with the true parameters.
    SolveExact(RunArgs),
    /// Seek the equilibrium while learning the parameters online.
    Learn(RunArgs),
    /// Douglas-Rachford seeking with shared and local constraints.
    Gnep(RunArgs),
    /// Centralized reference solution of the configured instance.
    Oracle(OracleArgs),
    /// Sample a Cournot instance and print it as JSON.
    GenInstance(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum InnerKind {
    ClosedForm,
    Psg,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    metrics_every: Option<usize>,
    #[arg(long, value_enum)]
    inner: Option<InnerKind>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generator ranges as JSON; defaults to the ten-player Cournot setup.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Schema(String),
    Numerical(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Schema { .. } => Failure::Schema(e.to_string()),
            ConfigError::Io { .. } => Failure::Io(e.to_string()),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => c.into(),
            RunError::Numerical(m) => Failure::Numerical(m),
            RunError::Io(m) => Failure::Io(m),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SolveExact(a) => run(a, Mode::Exact),
        Command::Learn(a) => run(a, Mode::Learn),
        Command::Gnep(a) => run(a, Mode::Gnep),
        Command::Oracle(a) => run_oracle(a),
        Command::GenInstance(a) => gen_instance(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Schema(m)) => {
            eprintln!("schema error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    Ok(harness::load_config(path)?)
}

fn run(a: RunArgs, mode: Mode) -> Result<(), Failure> {
    let origin = a.config.display().to_string();
    let mut cfg = load(&a.config)?;
    cfg.mode = mode;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.iters {
        cfg.iters = n;
    }
    if let Some(m) = a.metrics_every {
        cfg.metrics_every = m;
    }
    match a.inner {
        Some(InnerKind::ClosedForm) => cfg.inner = InnerSolver::ClosedForm,
        Some(InnerKind::Psg) if !matches!(cfg.inner, InnerSolver::Psg { .. }) => {
            cfg.inner = InnerSolver::Psg {
                schedule: InnerRule::Default,
            }
        }
        _ => {}
    }
    if let Some(o) = &a.out {
        cfg.output.dir = Some(o.display().to_string());
    }
    cfg.validate(&origin)?;
    let (inst, out) = harness::run_config(&cfg, a.config.parent())?;
    if let Some(dir) = &cfg.output.dir {
        harness::write_outputs(Path::new(dir), &inst, &out)?;
    }
    print_out(serde_json::to_string_pretty(&out.summary).expect("summary serializes"))
}

/// Writes to stdout; a reader that went away early is not an error.
fn print_out(text: String) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Io(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn emit(text: String, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => print_out(text),
    }
}

fn run_oracle(a: OracleArgs) -> Result<(), Failure> {
    let cfg = load(&a.config)?;
    let inst = cfg.load_instance(a.config.parent(), &a.config.display().to_string())?;
    let sol = match &cfg.gnep {
        Some(g) => {
            let coupling = Coupling::from_spec(&g.coupling, inst.topology())
                .map_err(|e| Failure::Schema(format!("gnep.coupling: {e}")))?;
            oracle::gnep_kkt_oracle(&inst, &coupling, a.tol)
        }
        None => oracle::solve_vi_centralized(&inst, a.tol),
    }
    .map_err(|e| Failure::Numerical(e.to_string()))?;
    emit(serde_json::to_string_pretty(&sol).expect("solution serializes"), a.out.as_deref())
}

fn gen_instance(a: GenArgs) -> Result<(), Failure> {
    let gen: CournotGenerator = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Schema(format!("{}: {e}", p.display())))?
        }
        None => CournotGenerator::default(),
    };
    let inst = sample_instance(a.seed, &gen).map_err(|e| Failure::Numerical(e.to_string()))?;
    emit(serde_json::to_string_pretty(&inst).expect("instance serializes"), a.out.as_deref())
}
