use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nadbound::{init_threads, run, CliError, Overrides, RunConfig, Task};

/// Bounds on nonadiabatic transitions (ħ = 1; times in inverse energy units).
#[derive(Parser)]
#[command(name = "nadbound", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measured transition rates p_nm(t) only.
    Simulate(Common),
    /// Transition rates with every bound and certification.
    Bounds(Common),
    /// Speed-limit chain for states transported in each level.
    Qsl(Common),
    /// Adiabatic perturbation rates and quench transfers.
    Apt(Common),
    /// Path optimization of the transition bound.
    Optimize(Common),
    /// Projected two-level reduction against the full model.
    Reduce2(Common),
    /// Every task listed in the config.
    Run(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "dt-max")]
    dt_max: Option<f64>,
    /// Number of grid steps K.
    #[arg(long = "grid")]
    grid: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, common) = match cli.command {
        Command::Simulate(c) => (Some(Task::Simulate), c),
        Command::Bounds(c) => (Some(Task::Bounds), c),
        Command::Qsl(c) => (Some(Task::Qsl), c),
        Command::Apt(c) => (Some(Task::Apt), c),
        Command::Optimize(c) => (Some(Task::Optimize), c),
        Command::Reduce2(c) => (Some(Task::Reduce2), c),
        Command::Run(c) => (None, c),
    };
    match execute(task, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nadbound: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(task: Option<Task>, c: Common) -> Result<(), CliError> {
    init_threads()?;
    let mut cfg = RunConfig::load(&c.config)?;
    cfg.apply(Overrides {
        out: c.out,
        seed: c.seed,
        dt_max: c.dt_max,
        steps: c.grid,
        tasks: task.map(|t| vec![t]),
    });
    let report = run(&cfg)?;
    println!("run {} written to {}", report.run_id, cfg.output_dir.display());
    if let Some(o) = &report.optimize {
        println!("optimized objective {:.9}, bound {:.9}", o.objective, o.bound);
    }
    Ok(())
}
