use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use isr_cli::{BenchArgs, GenCityArgs, SolveInput};
use isr_core::{Budget, SolverParams};

#[derive(Parser)]
#[command(name = "isr", version, about = "Overflow-aware waste collection experiments")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic city (city.json + matrix.txt).
    GenCity {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = isr_cli::config::DEFAULT_CLUSTERS)]
        clusters: usize,
        #[arg(long, default_value_t = isr_cli::config::DEFAULT_AREA_KM)]
        area_km: f64,
        #[arg(long)]
        vehicles: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every scenario and seed of a config; writes reports.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Epsilon x rho grid search; writes tune_cells.csv and heatmaps.
    Tune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one routing problem and print the routes.
    Solve {
        /// Solomon / Gehring-Homberger instance file.
        #[arg(long, conflicts_with = "city", required_unless_present = "city")]
        instance: Option<PathBuf>,
        /// Generate prizes for the instance with this seed (otherwise every
        /// client is required).
        #[arg(long, requires = "instance")]
        prize_seed: Option<u64>,
        /// A city.json; clusters are required unless --prizes says otherwise.
        #[arg(long)]
        city: Option<PathBuf>,
        /// `cluster,prize` lines (prize in metres or `required`).
        #[arg(long, requires = "city")]
        prizes: Option<PathBuf>,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the solution here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benchmark the solver on prize-collecting VRPTW instances.
    Bench {
        #[arg(long, num_args = 1.., required = true)]
        instances: Vec<PathBuf>,
        /// Best known solutions, one `name cost` pair per line.
        #[arg(long)]
        bks: Option<PathBuf>,
        #[arg(long, num_args = 1.., default_values_t = [0u64])]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 0)]
        prize_seed: u64,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct BudgetArgs {
    /// Iteration budget (default for solve: 2000).
    #[arg(long, conflicts_with = "time_limit")]
    iterations: Option<u64>,
    /// Wall-clock budget in seconds (default for bench: 60).
    #[arg(long)]
    time_limit: Option<f64>,
}

impl BudgetArgs {
    fn resolve(&self, default: Budget) -> Result<Budget> {
        match (self.iterations, self.time_limit) {
            (Some(n), _) => Ok(Budget::Iterations(n)),
            (None, Some(s)) if s > 0.0 && s.is_finite() => Ok(Budget::Time(Duration::from_secs_f64(s))),
            (None, Some(s)) => Err(isr_cli::ConfigError(format!("invalid time limit {s}")).into()),
            (None, None) => Ok(default),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    match cli.command {
        Command::GenCity {
            seed,
            clusters,
            area_km,
            vehicles,
            out,
        } => {
            let path = isr_cli::gen_city(
                &GenCityArgs {
                    seed,
                    clusters,
                    area_km,
                    vehicles,
                },
                &out,
            )?;
            println!("wrote {}", path.display());
        }
        Command::Simulate { config, out } => {
            let cells = isr_cli::simulate_file(&config, &out)?;
            println!("{} runs; wrote {}", cells.len(), out.join("reports.csv").display());
        }
        Command::Tune { config, out } => {
            let cells = isr_cli::tune_file(&config, &out)?;
            println!("{} grid cells; wrote {}", cells.len(), out.display());
        }
        Command::Solve {
            instance,
            prize_seed,
            city,
            prizes,
            budget,
            seed,
            out,
        } => {
            let params = SolverParams {
                budget: budget.resolve(SolverParams::default().budget)?,
                seed,
                ..SolverParams::default()
            };
            let input = match (&instance, &city) {
                (Some(path), _) => SolveInput::Benchmark { path, prize_seed },
                (None, Some(path)) => SolveInput::City {
                    path,
                    prizes: prizes.as_deref(),
                },
                (None, None) => unreachable!("clap requires one input"),
            };
            let (_, text) = isr_cli::solve(input, &params)?;
            match out {
                Some(path) => std::fs::write(&path, text)?,
                None => print!("{text}"),
            }
        }
        Command::Bench {
            instances,
            bks,
            seeds,
            prize_seed,
            budget,
            out,
        } => {
            let args = BenchArgs {
                instances,
                bks,
                seeds,
                prize_seed,
                budget: budget.resolve(isr_cli::default_bench_budget())?,
                solver: SolverParams::default(),
            };
            let rows = isr_cli::bench(&args, &out)?;
            println!("{} solves; wrote {}", rows.len(), out.join("bench.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(isr_cli::exit_code(&e) as u8)
        }
    }
}
