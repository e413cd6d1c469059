use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cranopt::conic::{self, ConicProblem};
use cranopt::harness::{
    gain_table, gain_table_text, records_to_csv, run_tradeoff_sweep, solve_slot, ExperimentConfig, ModeName, Preset,
    SweepRecord,
};
use cranopt::oracle::{run_validation, ValidationConfig};
use cranopt::relaxation::{assemble_linearized_sdp, CutPool, LiftedScenario};

/// Joint beamforming and cache-aware backhaul optimisation experiments.
#[derive(Parser, Debug)]
#[command(name = "cranopt", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Experiment config (JSON); missing fields take paper-preset values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed, overriding the config
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Built-in settings used when no --config is given
    #[arg(long, global = true, default_value = "desk")]
    preset: Preset,

    /// Write results into this directory instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Accept or reject raw Gaussian samples without power rebalancing
    #[arg(long, global = true)]
    paper_faithful_rounding: bool,

    /// More logging (repeat for more)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args, Debug, Clone)]
struct Cell {
    #[arg(long, default_value = "coded")]
    mode: ModeName,

    /// Cache size S in files (ignored for mode none)
    #[arg(long, default_value_t = 3)]
    cache_size: usize,
}

impl Cell {
    fn size(&self) -> usize {
        if self.mode == ModeName::None {
            0
        } else {
            self.cache_size
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a network and its time slots as JSON
    Generate {
        #[command(flatten)]
        cell: Cell,
    },
    /// Relax, round and score one time slot; prints the full report
    Solve {
        #[command(flatten)]
        cell: Cell,
        #[arg(long, default_value_t = 0.999)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        slot: u64,
        /// Use this scenario (from `generate`) instead of drawing one
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// λ sweep over modes and cache sizes, as CSV
    Sweep,
    /// Saturated-backhaul reductions (from a sweep CSV, or a fresh largest-λ sweep)
    Gains {
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Run the oracle suite; exits nonzero on any failure
    Validate {
        /// Fewer cases per suite
        #[arg(long)]
        quick: bool,
    },
    /// Conic problems as JSON
    Conic {
        #[command(subcommand)]
        action: ConicAction,
    },
}

#[derive(Subcommand, Debug)]
enum ConicAction {
    /// Solve a problem file and print the solution
    Solve { problem: PathBuf },
    /// Write the first linearised SDP of a slot
    Dump {
        #[command(flatten)]
        cell: Cell,
        #[arg(long, default_value_t = 0.999)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        slot: u64,
    },
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let mut config = match &g.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_json(&text).with_context(|| format!("invalid config {}", path.display()))?
        }
        None => ExperimentConfig::preset(g.preset),
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if g.paper_faithful_rounding {
        config.rounding.paper_faithful = true;
    }
    config.validate().context("invalid config")?;
    Ok(config)
}

/// Writes `text` to `<out>/<name>` or stdout.
fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            log::info!("wrote {}", path.display());
        }
        None => print_stdout(text)?,
    }
    Ok(())
}

/// Like `print!`, but a closed pipe (`cranopt ... | head`) is not an error.
fn print_stdout(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn parse_records(csv: &str) -> Result<Vec<SweepRecord>> {
    let mut lines = csv.lines();
    let header = lines.next().context("empty records file")?;
    if header.trim() != cranopt::harness::CSV_HEADER {
        bail!("unexpected CSV header {header:?}");
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 7 {
                bail!("line {}: expected 7 fields, got {}", i + 2, f.len());
            }
            let ctx = || format!("line {}", i + 2);
            Ok(SweepRecord {
                mode: f[0].parse().with_context(ctx)?,
                cache_size: f[1].parse().with_context(ctx)?,
                lambda: f[2].parse().with_context(ctx)?,
                power_cost: f[3].parse().with_context(ctx)?,
                backhaul_cost: f[4].parse().with_context(ctx)?,
                infeasible: f[5].parse().with_context(ctx)?,
                slots: f[6].parse().with_context(ctx)?,
                numerical_failures: 0,
            })
        })
        .collect()
}

fn run(cli: Cli) -> Result<ExitCode> {
    let out = cli.global.out.as_deref();
    match &cli.command {
        Command::Generate { cell } => {
            let config = load_config(&cli.global)?;
            let mut scenario = config.scenario(cell.mode, cell.size())?;
            scenario.slots = (0..config.slots as u64).map(|i| scenario.slot(i)).collect::<Result<_, _>>()?;
            emit(out, "scenario.json", &(scenario.to_json()? + "\n"))?;
        }
        Command::Solve { cell, lambda, slot, scenario } => {
            let config = load_config(&cli.global)?;
            let scenario = match scenario {
                Some(path) => cranopt::Scenario::from_json(&fs::read_to_string(path)?)
                    .with_context(|| format!("invalid scenario {}", path.display()))?,
                None => config.scenario(cell.mode, cell.size())?,
            };
            let mode = match scenario.placement.mode {
                cranopt::CachingMode::None => ModeName::None,
                cranopt::CachingMode::Uncoded => ModeName::Uncoded,
                cranopt::CachingMode::Coded { .. } => ModeName::Coded,
            };
            let (report, _) = solve_slot(&config, &scenario, mode, *lambda, *slot)?;
            emit(out, "solve.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
        }
        Command::Sweep => {
            let config = load_config(&cli.global)?;
            let records = run_tradeoff_sweep(&config)?;
            emit(out, "sweep.csv", &records_to_csv(&records))?;
        }
        Command::Gains { records } => {
            let records = match records {
                Some(path) => parse_records(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?,
                None => {
                    let mut config = load_config(&cli.global)?;
                    let top = config.lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    config.lambdas = vec![top];
                    config.modes = ModeName::ALL.to_vec();
                    run_tradeoff_sweep(&config)?
                }
            };
            let rows = gain_table(&records)?;
            match out {
                Some(_) => {
                    emit(out, "gains.json", &(serde_json::to_string_pretty(&rows)? + "\n"))?;
                    emit(out, "gains.txt", &gain_table_text(&rows))?;
                }
                None => print_stdout(&gain_table_text(&rows))?,
            }
        }
        Command::Validate { quick } => {
            let mut config = ValidationConfig::default();
            if let Some(seed) = cli.global.seed {
                config.seed = seed;
            }
            if *quick {
                config.single_user_cases = 10;
                config.sdp_cases = 10;
                config.grid_cases = 3;
            }
            let reports = run_validation(&config)?;
            let failed = reports.iter().filter(|r| !r.passed).count();
            let mut text: String = reports.iter().map(|r| format!("{r}\n")).collect();
            text.push_str(&format!("{} cases, {failed} failed\n", reports.len()));
            match out {
                Some(_) => {
                    emit(out, "validation.json", &(serde_json::to_string_pretty(&reports)? + "\n"))?;
                    emit(out, "validation.txt", &text)?;
                }
                None => print_stdout(&text)?,
            }
            if failed > 0 {
                eprintln!("validation failed: {failed} of {} cases", reports.len());
                return Ok(ExitCode::from(2));
            }
        }
        Command::Conic { action: ConicAction::Solve { problem } } => {
            let text = fs::read_to_string(problem).with_context(|| format!("reading {}", problem.display()))?;
            let problem = ConicProblem::from_json(&text).context("invalid problem file")?;
            let sol = conic::solve(&problem, &load_config(&cli.global)?.relaxation.solver)?;
            emit(out, "solution.json", &(serde_json::to_string_pretty(&sol)? + "\n"))?;
        }
        Command::Conic { action: ConicAction::Dump { cell, lambda, slot } } => {
            let config = load_config(&cli.global)?;
            let scenario = config.scenario(cell.mode, cell.size())?;
            let slot = scenario.slot(*slot)?;
            let lifted = LiftedScenario::from_slot(&scenario, &slot, &config.qos(*lambda), config.relaxation.theta)?;
            let cuts = CutPool::initial(lifted.user_count(), lifted.bs_count, lifted.p_max);
            let sdp = assemble_linearized_sdp(&lifted, &cuts)?;
            emit(out, "problem.json", &(sdp.problem.to_json()? + "\n"))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
