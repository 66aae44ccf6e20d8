//! `marketforge` command line: single runs, population sweeps and their
//! regression analysis.
//!
//! Exit codes: 0 success, 1 usage, 2 config error, 3 runtime error. The log
//! level comes from `MARKETFORGE_LOG` (for example `info` or `debug`).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use marketforge::experiment::emit::{self, Format, StepRow};
use marketforge::experiment::{analyze_sweep, run_sweep, SweepError, SweepRow, SweepSpec};
use marketforge::sim::run_with_metadata;
use marketforge::{parse_config, MarketStepSaver, SimError, SimulationConfig};

const SWEEP_TEMPLATE: &str = include_str!("../configs/sweep_template.json");

#[derive(Parser)]
#[command(name = "marketforge", version, about = "Artificial market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its step log.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Replace n_da stylized agents with deep agents and record profits.
    Sweep {
        /// Range `A..B` (inclusive) or comma list `1,5,10`.
        #[arg(long, default_value = "1..20", value_parser = parse_nda)]
        nda: NdaList,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        /// Length of the final session (defaults to the template's).
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, default_value = "sweep_out")]
        out: PathBuf,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Template config (defaults to the built-in 100+500+1000 step template).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Regress per-type average profit on n_da.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Debug, Clone)]
struct NdaList(Vec<usize>);

fn parse_nda(s: &str) -> Result<NdaList, String> {
    let bad = || format!("invalid n_da list `{s}` (expected A..B or a,b,c)");
    let values: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok(NdaList(values))
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Run {
                source: SimError::Config(_),
                ..
            }
            | SweepError::NoStylizedGroup
            | SweepError::TooManyDeep { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<emit::EmitError> for Failure {
    fn from(e: emit::EmitError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(path: &Path) -> Result<SimulationConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn cmd_run(config: &Path, seed: u64, out: &Path, format: Format) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let mut saver = MarketStepSaver::default();
    let (result, meta) = run_with_metadata(&cfg, seed, &mut saver)?;
    create_dir(out)?;
    let rows: Vec<StepRow> = saver.records.iter().map(StepRow::from).collect();
    let steps_path = out.join(format!("steps.{}", format.extension()));
    emit::write_rows(&rows, format, &steps_path)?;
    emit::write_json(&meta, &out.join("metadata.json"))?;
    emit::write_jsonl(&result.training_reports, &out.join("training_reports.jsonl"))?;
    println!(
        "{} steps, {} executions, final price {:?} -> {}",
        result.steps,
        result.executions.len(),
        result.final_prices,
        steps_path.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    nda: Vec<usize>,
    trials: usize,
    seed: u64,
    steps: Option<u64>,
    out: &Path,
    jobs: usize,
    config: Option<&Path>,
) -> Result<(), Failure> {
    let mut template = match config {
        Some(p) => load_config(p)?,
        None => parse_config(SWEEP_TEMPLATE).map_err(|e| Failure::Config(e.to_string()))?,
    };
    if let Some(s) = steps {
        match template.sessions.last_mut() {
            Some(last) => last.iteration_steps = s,
            None => return Err(Failure::Config("template has no sessions".into())),
        }
    }
    let spec = SweepSpec {
        n_da_values: nda,
        trials,
        base_seed: seed,
        template,
        jobs,
    };
    let rows = run_sweep(&spec)?;
    create_dir(out)?;
    emit::write_rows(&rows, Format::Csv, &out.join("sweep.csv"))?;
    println!("{} rows -> {}", rows.len(), out.join("sweep.csv").display());
    match analyze_sweep(&rows) {
        Ok(a) => {
            emit::write_json(&a, &out.join("analysis.json"))?;
            fs::write(out.join("table.txt"), &a.table)
                .map_err(|e| Failure::Runtime(format!("cannot write table: {e}")))?;
            print!("{}", a.table);
        }
        Err(e) => log::warn!("regression skipped: {e}"),
    }
    Ok(())
}

fn cmd_analyze(input: &Path) -> Result<(), Failure> {
    let rows: Vec<SweepRow> = emit::read_csv(input)?;
    let a = analyze_sweep(&rows).map_err(|e| Failure::Runtime(e.to_string()))?;
    print!("{}", a.table);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MARKETFORGE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            format,
        } => cmd_run(&config, seed, &out, format),
        Command::Sweep {
            nda,
            trials,
            seed,
            steps,
            out,
            jobs,
            config,
        } => cmd_sweep(nda.0, trials, seed, steps, &out, jobs, config.as_deref()),
        Command::Analyze { input } => cmd_analyze(&input),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(m) | Failure::Runtime(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}
