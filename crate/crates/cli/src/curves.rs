//! Analytic duty-cycle, damping and power curves of a damping module.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use hybrid_damping::damping::{damping_from_u, duty_cycles_from_u, regen_power_from_u, BrakingScheme, DampingModuleParams};

use crate::config::CurvesSection;
use crate::{create_out_dir, io_err, CliError};

/// One row per command value: `(u, D_r, D_d, d, P_rege)`.
pub fn curve_rows(module: &DampingModuleParams, grid: &CurvesSection) -> Vec<[f64; 5]> {
    let n = grid.points;
    (0..n)
        .map(|i| {
            let u = if i + 1 == n { 1.0 } else { i as f64 / (n - 1) as f64 };
            // u lies in [0, 1] by construction
            let dc = duty_cycles_from_u(u, module).unwrap();
            let d = damping_from_u(BrakingScheme::Hybrid, module, u, None).unwrap();
            let p = regen_power_from_u(BrakingScheme::Hybrid, module, u, grid.qdot).unwrap();
            [u, dc.d_r, dc.d_d, d, p]
        })
        .collect()
}

/// Writes `curves_duty.csv` and `curves_power.csv`.
pub fn cmd_curves(module: &DampingModuleParams, grid: &CurvesSection, dir: &Path) -> Result<Vec<[f64; 5]>, CliError> {
    let rows = curve_rows(module, grid);
    create_out_dir(dir)?;
    let write = |name: &str, body: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(&path, e))
    };
    write("curves_duty.csv", &|w| {
        writeln!(w, "# units: u [-], D_r [-], D_d [-]")?;
        writeln!(w, "u,D_r,D_d")?;
        rows.iter().try_for_each(|r| writeln!(w, "{},{},{}", r[0], r[1], r[2]))
    })?;
    write("curves_power.csv", &|w| {
        writeln!(w, "# units: u [-], d [N·m·s/rad], p_rege [W] at qdot = {} rad/s", grid.qdot)?;
        writeln!(w, "u,d,p_rege")?;
        rows.iter().try_for_each(|r| writeln!(w, "{},{},{}", r[0], r[3], r[4]))
    })?;
    Ok(rows)
}
