//! Five-scheme reaching comparison.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use hybrid_damping::energy::EnergyReport;
use hybrid_damping::ilqr::{evaluate, solve, IlqrError, SolveResult};
use hybrid_damping::plant::{ActuatedPlant, ControlInput, PlantError, Sample};
use rayon::prelude::*;

use crate::config::{ReachSetup, SchemeName};
use crate::{create_out_dir, io_err, CliError};

/// Optimised (or closed-form) run of one scheme.
#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub name: SchemeName,
    pub result: SolveResult,
    pub report: EnergyReport,
}

fn solver_error(name: SchemeName, e: IlqrError) -> CliError {
    let msg = format!("{}: {e}", name.as_str());
    match e {
        IlqrError::Plant(PlantError::Diverged { .. })
        | IlqrError::InitialRollout(PlantError::Diverged { .. })
        | IlqrError::LinearizationFailed { .. } => CliError::Diverged(msg),
        _ => CliError::Config(msg),
    }
}

fn run_scheme(setup: &ReachSetup, name: SchemeName) -> Result<SchemeRun, CliError> {
    let plant = ActuatedPlant::new(setup.model, setup.scheme(name), setup.damping)
        .map_err(|e| CliError::Config(format!("{}: {e}", name.as_str())))?;
    let horizon = setup
        .settings
        .horizon(setup.cost.t_f)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let x0 = plant.rest_state();

    let result = match (name, setup.critical_stiffness) {
        (SchemeName::Critical, Some(u2)) => {
            let c = ControlInput::new(setup.init.u1, u2, 0.0);
            evaluate(&plant, &setup.cost, &x0, &vec![c; horizon], setup.settings)
        }
        _ => {
            let mut opts = setup.solver.clone();
            if setup.pin_u1 {
                let mut bounds = plant.control_bounds();
                bounds[0] = (setup.init.u1, setup.init.u1);
                opts.bounds = Some(bounds);
            }
            solve(&plant, &setup.cost, &x0, &opts, &vec![setup.init; horizon], setup.settings)
        }
    }
    .map_err(|e| solver_error(name, e))?;

    let report = EnergyReport::from_trajectory(name.as_str(), &result.trajectory, setup.cost.q_star, setup.settling_band);
    Ok(SchemeRun { name, result, report })
}

/// Runs every requested scheme in parallel. Results keep the requested order.
pub fn run_comparison(setup: &ReachSetup) -> Result<Vec<SchemeRun>, CliError> {
    if setup.schemes.is_empty() {
        return Err(CliError::Usage("scheme list is empty".into()));
    }
    setup.schemes.par_iter().map(|&n| run_scheme(setup, n)).collect()
}

fn write_file<F>(dir: &Path, name: &str, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| io_err(&path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(&path, e))
}

fn write_panel(
    dir: &Path,
    name: &str,
    units: &str,
    prefix: &str,
    runs: &[SchemeRun],
    value: impl Fn(&Sample) -> f64,
) -> Result<(), CliError> {
    write_file(dir, name, |w| {
        writeln!(w, "# units: t [s], {prefix}_* [{units}]")?;
        write!(w, "t")?;
        for r in runs {
            write!(w, ",{prefix}_{}", r.name.as_str())?;
        }
        writeln!(w)?;
        let samples = &runs[0].result.trajectory.samples;
        for i in 0..samples.len() {
            write!(w, "{}", samples[i].t)?;
            for r in runs {
                write!(w, ",{}", value(&r.result.trajectory.samples[i]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

/// Writes per-scheme trajectories, controls and cost histories, the
/// comparison table and the four plot panels.
pub fn write_artifacts(runs: &[SchemeRun], band: f64, dir: &Path) -> Result<(), CliError> {
    create_out_dir(dir)?;
    for r in runs {
        let tag = r.name.as_str();
        write_file(dir, &format!("traj_{tag}.csv"), |w| r.result.trajectory.write_csv(w))?;
        write_file(dir, &format!("controls_{tag}.csv"), |w| r.result.write_controls_csv(w))?;
        write_file(dir, &format!("history_{tag}.csv"), |w| r.result.write_history_csv(w))?;
    }
    write_file(dir, "comparison.csv", |w| {
        EnergyReport::write_csv_header(&mut *w, band)?;
        runs.iter().try_for_each(|r| r.report.write_csv_row(&mut *w))
    })?;

    write_panel(dir, "plot_q.csv", "rad", "q", runs, |s| s.q())?;
    write_panel(dir, "plot_k.csv", "N·m/rad", "k", runs, |s| s.stiffness)?;
    write_panel(dir, "plot_d.csv", "N·m·s/rad", "d", runs, |s| s.damping)?;
    write_file(dir, "plot_energy.csv", |w| {
        writeln!(w, "# units: E [J], E_rege [J], E_net [J], eta_percent [%]")?;
        writeln!(w, "scheme,E,E_rege,E_net,eta_percent")?;
        for r in runs {
            let e = &r.report;
            writeln!(w, "{},{},{},{},{}", e.scheme, e.work, e.regenerated, e.net, e.eta_percent())?;
        }
        Ok(())
    })
}

/// Runs the comparison and writes its artifacts. Non-converged schemes still
/// get their best iterate written before the error is returned.
pub fn cmd_reach(setup: &ReachSetup, dir: &Path) -> Result<Vec<SchemeRun>, CliError> {
    let runs = run_comparison(setup)?;
    write_artifacts(&runs, setup.settling_band, dir)?;
    let stalled: Vec<_> = runs
        .iter()
        .filter(|r| !r.result.converged)
        .map(|r| r.name.as_str().to_owned())
        .collect();
    if stalled.is_empty() {
        Ok(runs)
    } else {
        Err(CliError::NotConverged(stalled))
    }
}
