//! Energy and task-performance accounting over simulated trajectories.

use std::io::{self, Write};

use crate::plant::Trajectory;

/// Default band for the settling-time metric, rad.
pub const DEFAULT_SETTLING_BAND: f64 = 0.02;

/// Trapezoidal rule over paired samples.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(t.len(), y.len());
    t.windows(2)
        .zip(y.windows(2))
        .map(|(tw, yw)| 0.5 * (tw[1] - tw[0]) * (yw[0] + yw[1]))
        .sum()
}

fn integrate<F: Fn(&crate::plant::Sample) -> f64>(traj: &Trajectory, f: F) -> f64 {
    let t: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    let y: Vec<f64> = traj.samples.iter().map(f).collect();
    trapezoid(&t, &y)
}

/// Work done by the elastic element on the joint, `∫ τ_s·q̇ dt`, in J.
/// For the pendulum `τ_s = k(u₂)(u₁ − q)`.
pub fn mechanical_work(traj: &Trajectory) -> f64 {
    integrate(traj, |s| s.spring_torque * s.qdot())
}

/// Energy delivered to the storage element, `∫ P_rege dt`, in J.
pub fn regenerated_energy(traj: &Trajectory) -> f64 {
    integrate(traj, |s| s.regen_power)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceMetrics {
    /// Largest excursion beyond the target in the direction of travel, rad.
    pub overshoot: f64,
    /// First time after which `|q − q*|` stays inside the band; `None` if
    /// the trajectory ends outside it.
    pub settling_time: Option<f64>,
    /// `|q(t_f) − q*|`, rad.
    pub reach_error: f64,
}

pub fn performance_metrics(traj: &Trajectory, q_star: f64, band: f64) -> PerformanceMetrics {
    let q0 = traj.samples[0].q();
    let dir = if q_star != q0 { (q_star - q0).signum() } else { 1.0 };
    let overshoot = traj
        .samples
        .iter()
        .map(|s| dir * (s.q() - q_star))
        .fold(0.0f64, f64::max);

    let last_outside = traj.samples.iter().rposition(|s| (s.q() - q_star).abs() >= band);
    let settling_time = match last_outside {
        None => Some(traj.samples[0].t),
        Some(i) if i + 1 < traj.samples.len() => Some(traj.samples[i + 1].t),
        Some(_) => None,
    };
    PerformanceMetrics {
        overshoot,
        settling_time,
        reach_error: (traj.final_sample().q() - q_star).abs(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub scheme: String,
    /// Total mechanical work E, J.
    pub work: f64,
    /// Regenerated energy E_rege, J.
    pub regenerated: f64,
    /// Net energy cost E − E_rege, J.
    pub net: f64,
    /// Regeneration ratio E_rege / E.
    pub eta: f64,
    pub overshoot: f64,
    pub settling_time: Option<f64>,
    pub reach_error: f64,
}

impl EnergyReport {
    pub fn from_trajectory(scheme: &str, traj: &Trajectory, q_star: f64, band: f64) -> Self {
        let work = mechanical_work(traj);
        let regenerated = regenerated_energy(traj);
        let perf = performance_metrics(traj, q_star, band);
        Self {
            scheme: scheme.to_owned(),
            work,
            regenerated,
            net: work - regenerated,
            eta: if work != 0.0 { regenerated / work } else { 0.0 },
            overshoot: perf.overshoot,
            settling_time: perf.settling_time,
            reach_error: perf.reach_error,
        }
    }

    pub fn eta_percent(&self) -> f64 {
        100.0 * self.eta
    }

    pub fn write_csv_header<W: Write>(mut w: W, band: f64) -> io::Result<()> {
        writeln!(
            w,
            "# units: E [J], E_rege [J], E_net [J], eta_percent [%], overshoot [rad], settling_time [s] (inf = did not settle), reach_error [rad]; settling band = {band} rad"
        )?;
        writeln!(w, "scheme,E,E_rege,E_net,eta_percent,overshoot,settling_time,reach_error")
    }

    pub fn write_csv_row<W: Write>(&self, mut w: W) -> io::Result<()> {
        let settle = self
            .settling_time
            .map(|t| t.to_string())
            .unwrap_or_else(|| "inf".to_owned());
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            self.scheme,
            self.work,
            self.regenerated,
            self.net,
            self.eta_percent(),
            self.overshoot,
            settle,
            self.reach_error
        )
    }
}
