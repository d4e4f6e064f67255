use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fdnoma::channel::{ConfigFile, Preset};
use fdnoma::experiment::{emit_summary, results_csv, run_experiment, summary_csv, summarize, timings_csv, trace_csv, trace_convergence, ExperimentSpec};
use fdnoma::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "fdnoma", version, about = "Full-duplex NOMA sum-rate sweeps")]
struct Cli {
    /// Overrides the seed in the spec (run) or selects the realization (trace).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// desk or paper; overrides the experiment file's preset.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment spec; writes results.csv, timings.csv and aggregate.csv.
    Run { spec: PathBuf },
    /// Record one run's per-iteration trace to trace.csv.
    Trace {
        #[arg(long, default_value = "ica_cr_pf")]
        scheme: String,
        /// Base `a` of the penalty schedule `rho = a^k`.
        #[arg(long, default_value_t = 3.0)]
        penalty_base: f64,
        /// Optional TOML of configuration overrides.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Aggregate a results CSV; prints the table and writes aggregate.csv.
    Summarize { results: PathBuf },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Infeasible(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse(_) | Error::Dimension(_) | Error::TooManyAssociations { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Internal(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli, spec_path: &Path) -> Result<(), Failure> {
    let mut spec = ExperimentSpec::parse(&read(spec_path)?).map_err(|e| Failure::Usage(format!("{}: {e}", spec_path.display())))?;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    if let Some(p) = &cli.preset {
        spec.preset = p.clone();
    }
    spec.validate()?;
    let out = run_experiment(&spec)?;
    write(&cli.out_dir, "results.csv", &results_csv(&out.rows)?)?;
    write(&cli.out_dir, "timings.csv", &timings_csv(&out.timings)?)?;
    write(&cli.out_dir, "aggregate.csv", &summary_csv(&summarize(&out.rows)))?;
    eprintln!("{} rows written to {}", out.rows.len(), cli.out_dir.display());
    if !out.rows.iter().any(|r| r.feasible()) {
        return Err(Failure::Infeasible("no run reached a QoS-feasible solution".into()));
    }
    Ok(())
}

fn trace(cli: &Cli, scheme: &str, penalty_base: f64, config: Option<&Path>) -> Result<(), Failure> {
    let preset = Preset::parse(cli.preset.as_deref().unwrap_or("desk"))?;
    let file = match config {
        Some(p) => ConfigFile::parse(&read(p)?)?,
        None => ConfigFile::default(),
    };
    let cfg = file.resolve(preset)?;
    let r = trace_convergence(&cfg, scheme, penalty_base, cli.seed.unwrap_or(0))?;
    write(&cli.out_dir, "trace.csv", &trace_csv(&r.trace))?;
    eprintln!("{scheme}: {} iterations, status {}", r.iterations(), r.status.as_str());
    if !r.feasible() {
        return Err(Failure::Infeasible(format!("{scheme} ended with status {} without meeting QoS", r.status.as_str())));
    }
    Ok(())
}

fn summarize_file(cli: &Cli, results: &Path) -> Result<(), Failure> {
    let table = emit_summary(&read(results)?)?;
    print!("{table}");
    write(&cli.out_dir, "aggregate.csv", &table)
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { spec } => run(cli, spec),
        Command::Trace { scheme, penalty_base, config } => trace(cli, scheme, *penalty_base, config.as_deref()),
        Command::Summarize { results } => summarize_file(cli, results),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Infeasible(m)) => {
            eprintln!("infeasible: {m}");
            ExitCode::from(EXIT_INFEASIBLE)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
