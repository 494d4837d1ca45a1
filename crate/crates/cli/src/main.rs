use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hdamp::config::{Config, SchemeName};
use hdamp::{curves, reach, sweep, CliError};

#[derive(Parser)]
#[command(name = "hdamp", version, about = "Hybrid dynamic-regenerative braking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimise and compare reaching motions under each braking scheme.
    Reach(Common),
    /// Sweep the damping command on the virtual test rig.
    Sweep(Common),
    /// Tabulate duty cycles, damping and regeneration power against u.
    Curves(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated scheme list, e.g. `hybrid,dynamic`.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    schemes: Option<Vec<String>>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (Command::Reach(common) | Command::Sweep(common) | Command::Curves(common)) = &cli.command;
    let mut cfg = Config::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(list) = &common.schemes {
        let names = list
            .iter()
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.parse::<SchemeName>().map_err(CliError::Usage))
            .collect::<Result<Vec<_>, _>>()?;
        cfg.schemes = Some(names);
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    match cli.command {
        Command::Reach(_) => {
            let runs = reach::cmd_reach(&cfg.reach_setup()?, &out)?;
            for r in &runs {
                let e = &r.report;
                println!(
                    "{:<13} E = {:.4e} J  E_rege = {:.4e} J  eta = {:5.1} %  overshoot = {:.4} rad  iterations = {}",
                    e.scheme,
                    e.work,
                    e.regenerated,
                    e.eta_percent(),
                    e.overshoot,
                    r.result.iterations
                );
            }
            Ok(())
        }
        Command::Sweep(_) => {
            let table = sweep::cmd_sweep(&cfg.sweep_setup()?, &out)?;
            println!("{} points written to {}", table.point_count(), out.display());
            Ok(())
        }
        Command::Curves(_) => {
            let module = cfg.damping.module()?;
            let rows = curves::cmd_curves(&module, &cfg.curves, &out)?;
            println!("{} rows written to {}", rows.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hdamp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
