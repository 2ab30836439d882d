use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

use icp_walk::commands::{self, CommandError};
use icp_walk::config::RunConfig;
use icp_walk::controller::ControllerMode;

#[derive(Parser, Debug)]
#[command(name = "icp-walk", version, about = "ICP walking planner, controller and push-recovery simulator")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// feedback_only | feedback_adjust | feedback_speedup | feedback_both
    #[arg(long, global = true)]
    mode: Option<ControllerMode>,

    /// Sweep worker threads, 0 for all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Print the default configuration as TOML and exit.
    #[arg(long, global = true)]
    print_defaults: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the nominal ICP plan (plan.csv, footsteps.csv).
    Plan,
    /// Run one push-recovery episode (episode.csv, summary.csv).
    Simulate,
    /// Bisect the largest recoverable push over the grid (sweep.csv).
    Sweep,
}

fn load(cli: &Cli) -> Result<RunConfig, CommandError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = cli.mode {
        cfg.mode = mode;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate().map_err(CommandError::from)?;
    Ok(cfg)
}

fn run(cli: &Cli, command: &Command) -> Result<(), CommandError> {
    let cfg = load(cli)?;
    let out = cli.out.as_deref();
    match command {
        Command::Plan => {
            let dir = commands::cmd_plan(&cfg, out)?;
            log::info!("plan written to {}", dir.display());
        }
        Command::Simulate => {
            let (dir, r) = commands::cmd_simulate(&cfg, out)?;
            println!(
                "success={} max_icp_error={:.4} adjustments={} written to {}",
                r.success,
                r.max_icp_error,
                r.adjustments.len(),
                dir.display()
            );
        }
        Command::Sweep => {
            let (dir, cells) = commands::cmd_sweep(&cfg, out)?;
            println!("{} cells written to {}", cells.len(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.print_defaults {
        print!("{}", RunConfig::default().to_toml());
        return ExitCode::SUCCESS;
    }
    let Some(command) = &cli.command else {
        let _ = Cli::command().print_help();
        return ExitCode::from(2);
    };
    match run(&cli, command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("icp-walk: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
