//! Virtual rig sweep over the damping command.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use hybrid_damping::switch_sim::{sweep, RigError, SweepTable};

use crate::config::SweepSetup;
use crate::{create_out_dir, io_err, CliError};

pub fn run_sweep(setup: &SweepSetup) -> Result<SweepTable, CliError> {
    sweep(&setup.rig, &setup.u_grid, setup.repetitions, setup.duration, setup.seed).map_err(|e| match e {
        RigError::NoSteadyState { .. } => CliError::Diverged(e.to_string()),
        other => CliError::Config(other.to_string()),
    })
}

/// Writes `sweep_points.csv` (every repetition) and `sweep_summary.csv`.
pub fn cmd_sweep(setup: &SweepSetup, dir: &Path) -> Result<SweepTable, CliError> {
    let table = run_sweep(setup)?;
    create_out_dir(dir)?;
    for (name, points) in [("sweep_points.csv", true), ("sweep_summary.csv", false)] {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(file);
        let written = if points {
            table.write_points_csv(&mut w)
        } else {
            table.write_summary_csv(&mut w)
        };
        written.and_then(|_| w.flush()).map_err(|e| io_err(&path, e))?;
    }
    Ok(table)
}
