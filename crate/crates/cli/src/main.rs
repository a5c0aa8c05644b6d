use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ffm_core::characteristics::CurveConfig;
use ffm_core::coupling::CouplingConfig;
use ffm_core::finite_model::{InitialCondition, SimConfig};
use ffm_core::kinetics::{Closure, SolverConfig};
use ffm_core::limit_process::SamplerConfig;
use ffm_core::rng::with_workers;
use ffm_core::MassDistribution;

use ffm_cli::commands::{self, SimulateParams, SolveParams};
use ffm_cli::pipeline::{describe_plan, load_config, run_pipeline};
use ffm_cli::report::{run_report, ReportConfig, ReportInputs};
use ffm_cli::{artifact, exit, CliResult};

/// Forest-fire model toolkit. Set WORKERS to choose the number of threads.
#[derive(Parser)]
#[command(name = "ffm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClosureArg {
    CriticalFire,
    Smoluchowski,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the finite graph and record size distributions.
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long)]
        horizon: f64,
        /// Comma-separated snapshot times.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        snapshots: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        replicas: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Tagged-vertex edges ring at twice the rate.
        #[arg(long)]
        dagger: bool,
        /// Initial mass distribution (JSON); monodisperse by default.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the limiting equations and write the environment with its binary sidecar.
    Solve {
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long = "K")]
        k: usize,
        /// Nominal integration step; halved on the refined window after gelation.
        #[arg(long)]
        grid_step: Option<f64>,
        #[arg(long)]
        horizon: f64,
        #[arg(long, value_enum, default_value = "critical-fire")]
        closure: ClosureArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate characteristic curves.
    Characteristics {
        #[arg(long)]
        env: PathBuf,
        /// Comma-separated horizons; a geometric family when absent.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        horizons: Option<Vec<f64>>,
        #[arg(long)]
        family_size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample the limiting tagged-cluster process.
    SampleLimit {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        curves: PathBuf,
        /// Comma-separated observation times.
        #[arg(long = "t", value_delimiter = ',', num_args = 1..)]
        times: Vec<f64>,
        #[arg(long)]
        n_paths: u64,
        #[arg(long, default_value_t = 100_000)]
        threshold: u64,
        /// End of the explosion-count window; the last time by default.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run coupled finite and limiting tagged clusters.
    Couple {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        lambda: f64,
        #[arg(long = "K")]
        k: u64,
        #[arg(long = "T")]
        t: f64,
        #[arg(long, default_value_t = 100)]
        replicas: u64,
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        curves: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated times at which both states are recorded.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        observe: Option<Vec<f64>>,
        #[arg(long, default_value_t = 100_000)]
        threshold: u64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare artifacts against a reference environment and write tables.
    Report {
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long)]
        compare_env: Vec<PathBuf>,
        #[arg(long = "sim")]
        simulations: Vec<PathBuf>,
        #[arg(long = "law")]
        laws: Vec<PathBuf>,
        #[arg(long = "coupling")]
        couplings: Vec<PathBuf>,
        /// Tolerances as JSON; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run every stage from a JSON config.
    Pipeline {
        config: PathBuf,
        #[arg(long, default_value = "ffm-out")]
        out_dir: PathBuf,
        /// Print the plan and exit without writing anything.
        #[arg(long)]
        dry_run: bool,
        /// Comma-separated subset of stages, reusing earlier artifacts in the output directory.
        #[arg(long, value_delimiter = ',')]
        stages: Vec<String>,
    },
}

fn read_init(path: &Option<PathBuf>) -> CliResult<MassDistribution> {
    match path {
        Some(p) => commands::read_init(p),
        None => Ok(MassDistribution::monodisperse()),
    }
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Simulate { n, lambda, horizon, snapshots, replicas, seed, dagger, init, out } => {
            let config =
                SimConfig { n, lambda, dagger, horizon, init: InitialCondition::Distribution(read_init(&init)?), seed };
            commands::simulate(&SimulateParams { config, replicas, snapshots }, &out, None)?;
        }
        Command::Solve { init, k, grid_step, horizon, closure, out } => {
            let mut solver = SolverConfig::new(k, horizon);
            if let Some(h) = grid_step {
                solver.step_pre = h;
                solver.step_post = h / 2.0;
            }
            let closure = match closure {
                ClosureArg::CriticalFire => Closure::CriticalFire,
                ClosureArg::Smoluchowski => Closure::Smoluchowski,
            };
            commands::solve_env(&SolveParams { init: read_init(&init)?, closure, solver }, &out, None)?;
        }
        Command::Characteristics { env, horizons, family_size, out } => {
            let mut config = CurveConfig::default();
            if let Some(s) = family_size {
                config.family_size = s;
            }
            commands::characteristics(&env, horizons, config, &out, None)?;
        }
        Command::SampleLimit { env, curves, times, n_paths, threshold, horizon, seed, out } => {
            let config = SamplerConfig { threshold, seed, ..Default::default() };
            commands::sample_limit(&env, &curves, times, n_paths, horizon, config, &out, None)?;
        }
        Command::Couple { n, lambda, k, t, replicas, env, curves, seed, observe, threshold, eps, out } => {
            let config = CouplingConfig {
                n,
                lambda,
                k,
                horizon: t,
                seed,
                replicas,
                threshold,
                observe: observe.unwrap_or_default(),
                ..Default::default()
            };
            commands::couple(&env, &curves, config, eps, &out, None)?;
        }
        Command::Report { env, compare_env, simulations, laws, couplings, config, out_dir } => {
            let cfg: ReportConfig = match config {
                Some(p) => artifact::read_json(&p)?,
                None => ReportConfig::default(),
            };
            let inputs = ReportInputs { env, compare_env, simulations, laws, couplings };
            let report = run_report(&inputs, &cfg, &out_dir, None)?;
            println!(
                "report written to {}: {} simulation, {} law and {} coupling rows, all checks passed",
                out_dir.display(),
                report.sim_sup.len(),
                report.chi_square.len(),
                report.coupling.len()
            );
        }
        Command::Pipeline { config, out_dir, dry_run, stages } => {
            let cfg = load_config(&config)?;
            if dry_run {
                cfg.validate()?;
                print!("{}", describe_plan(&cfg, &out_dir));
                return Ok(());
            }
            run_pipeline(&cfg, &out_dir, &stages)?;
            println!("pipeline finished; artifacts in {}", out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::PASS });
        }
    };
    match with_workers(|| run(cli.command)) {
        Ok(()) => ExitCode::from(exit::PASS),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
