use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lvo_cli::{commands, config::PipelineConfig, exit_code};

/// Learned monocular visual odometry and dense mapping pipeline.
#[derive(Parser)]
#[command(name = "lvo", version, about)]
struct Cli {
    /// TOML config file; defaults apply for every omitted key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the training and prediction seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Predict translation means instead of sampling.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Combine 2D flow and depth into 3D-flow rasters.
    Associate,
    /// Train the pose regressor on ground-truth relative poses.
    Train,
    /// Predict a trajectory from the associated rasters.
    Odometry,
    /// Score the predicted trajectory against ground truth.
    Evaluate,
    /// Fuse depth along the trajectory into an occupancy octree.
    Map,
    /// Associate, predict, evaluate (when ground truth exists), and map.
    Run,
}

fn load_config(cli: &Cli) -> lvo::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_overrides(cli.seed, cli.deterministic, cli.out.clone());
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> lvo::Result<()> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Associate => {
            let files = commands::cmd_associate(&cfg)?;
            println!("associated {} frame pairs", files.len());
        }
        Command::Train => {
            commands::cmd_train(&cfg)?;
            println!("saved checkpoint to {}", cfg.checkpoint_path().display());
        }
        Command::Odometry => {
            let path = commands::cmd_odometry(&cfg)?;
            println!("wrote trajectory to {}", path.display());
        }
        Command::Evaluate => {
            let files = commands::cmd_evaluate(&cfg)?;
            println!("wrote {} report tables", files.len());
        }
        Command::Map => {
            commands::cmd_map(&cfg)?;
            println!("wrote map to {}", cfg.stage_dir("map").display());
        }
        Command::Run => {
            let manifest = commands::cmd_run(&cfg)?;
            println!("pipeline complete; manifest at {}", manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
