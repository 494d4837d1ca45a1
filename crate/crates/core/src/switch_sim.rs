//! Virtual damping test rig.
//!
//! A driver motor on a fixed supply spins a damper motor through an ideal
//! 1:1 spur-gear pair. The damper feeds the four-switch bridge, which is
//! simulated switch by switch at the PWM rate. Within every switch segment
//! the shaft obeys a linear first-order ODE, integrated in closed form.
//! Three simulated meters report the driver, damper and load currents,
//! and the estimators recover damping and speed-normalised regeneration
//! power from those readings alone.

use std::io::{self, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::damping::{
    duty_cycles_from_u, switch_selection, CurrentDirection, DampingError, DampingModuleParams, DutyCycles,
    MotorConstants, SwitchState,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RigError {
    #[error(transparent)]
    Damping(#[from] DampingError),
    #[error("invalid rig parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("no steady state within {duration} s")]
    NoSteadyState { duration: f64 },
    #[error("measurement invalid: supply minus driver winding drop is {denominator} V")]
    MeasurementInvalid { denominator: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigParams {
    /// Driver supply voltage, V. Negative values spin the rig backwards.
    pub v_bb: f64,
    /// Constants shared by the two identical motors, plus the load resistance.
    pub motor: MotorConstants,
    /// Regenerative/dynamic crossover of the duty-cycle mapping.
    pub u_r: f64,
    /// PWM frequency, Hz.
    pub pwm_freq: f64,
    /// Total inertia of both geared rotors at the output shaft, kg·m².
    pub inertia: f64,
    /// Relative standard deviation of each meter reading.
    pub measurement_noise: f64,
    /// Relative change of cycle-averaged speed that counts as steady.
    pub steady_tol: f64,
    /// Cycles averaged for one reading once steady.
    pub measure_cycles: usize,
}

impl Default for RigParams {
    fn default() -> Self {
        Self {
            v_bb: 10.0,
            motor: MotorConstants {
                n_d: 20.0,
                k_t: 0.0212,
                k_b: 0.0212,
                r_m: 21.2,
                r_l: 25.0,
            },
            u_r: 0.5,
            pwm_freq: 10_000.0,
            // two rotors of ~4.1e-7 kg·m² reflected through the 20:1 gearheads
            inertia: 3.3e-4,
            measurement_noise: 0.01,
            steady_tol: 1e-6,
            measure_cycles: 50,
        }
    }
}

impl RigParams {
    pub fn validate(&self) -> Result<DampingModuleParams, RigError> {
        let invalid = |name, value, reason| Err(RigError::InvalidParameter { name, value, reason });
        if !(self.v_bb.is_finite() && self.v_bb != 0.0) {
            return invalid("v_bb", self.v_bb, "must be finite and nonzero");
        }
        if !(self.pwm_freq >= 1_000.0 && self.pwm_freq.is_finite()) {
            return invalid("pwm_freq", self.pwm_freq, "must be at least 1 kHz");
        }
        if !(self.inertia > 0.0 && self.inertia.is_finite()) {
            return invalid("inertia", self.inertia, "must be > 0");
        }
        if !(self.measurement_noise >= 0.0 && self.measurement_noise.is_finite()) {
            return invalid("measurement_noise", self.measurement_noise, "must be >= 0");
        }
        if !(self.steady_tol > 0.0) {
            return invalid("steady_tol", self.steady_tol, "must be > 0");
        }
        if self.measure_cycles == 0 {
            return invalid("measure_cycles", 0.0, "must be >= 1");
        }
        Ok(DampingModuleParams::from_motor(self.motor, self.u_r)?)
    }

    fn torque_gain(&self) -> f64 {
        self.motor.n_d * self.motor.k_t
    }

    /// Slowest mechanical time constant (damper open), s.
    pub fn mechanical_time_constant(&self) -> f64 {
        let g = self.torque_gain();
        self.inertia * self.motor.r_m / (g * g)
    }
}

/// Conductance (1/Ω) seen by the damper back-EMF for a switch configuration,
/// and whether that path runs through the load.
///
/// S₁ (forward) or S₂ (reverse) is the series switch; the other one shorts
/// the motor past the load. The load path also needs the steering switch for
/// the current's direction (S₄ forward, S₃ reverse).
pub fn damper_path(state: SwitchState, direction: CurrentDirection, motor: &MotorConstants) -> (f64, bool) {
    let (series, bypass, steer) = match direction {
        CurrentDirection::Positive => (state.s1, state.s2, state.s4),
        CurrentDirection::Negative => (state.s2, state.s1, state.s3),
        CurrentDirection::Zero => return (0.0, false),
    };
    match (series, bypass, steer) {
        (false, _, _) => (0.0, false),
        (true, true, _) => (1.0 / motor.r_m, false),
        (true, false, true) => (1.0 / (motor.r_m + motor.r_l), true),
        (true, false, false) => (0.0, false),
    }
}

/// Cycle-averaged quantities of a rig at steady state, before metering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigSteadyState {
    pub u: f64,
    pub duty: DutyCycles,
    /// Mean output-shaft speed, rad/s.
    pub omega: f64,
    /// Mean driver current, A.
    pub i1: f64,
    /// Mean damper current, A.
    pub i2: f64,
    /// Mean load current (always into the positive terminal), A.
    pub ir: f64,
    /// RMS load current, A.
    pub ir_rms: f64,
    /// Mean braking torque on the shaft, N·m.
    pub braking_torque: f64,
    /// Mean mechanical braking power `n_d·k_t·I₂·ω`, W.
    pub braking_power: f64,
    /// Mean power dissipated in the damper winding, W.
    pub winding_power: f64,
    /// Mean power delivered to the load, W.
    pub load_power: f64,
    /// Simulated time until the steady state was detected, s.
    pub settle_time: f64,
}

impl RigSteadyState {
    /// Cycle-averaged damping coefficient, N·m·s/rad.
    pub fn damping(&self) -> f64 {
        if self.omega == 0.0 {
            0.0
        } else {
            self.braking_torque / self.omega
        }
    }

    /// Reads the three meters once, each with independent multiplicative noise.
    pub fn measure<R: Rng + ?Sized>(&self, noise: f64, rng: &mut R) -> MeasurementSet {
        let mut read = |v: f64| {
            if noise > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                v * (1.0 + noise * z)
            } else {
                v
            }
        };
        MeasurementSet {
            i1: read(self.i1),
            i2: read(self.i2),
            ir: read(self.ir),
            ir_rms: read(self.ir_rms),
            repetitions: 1,
        }
    }
}

/// Meter readings of one run.
///
/// `i1`, `i2`, `ir` are cycle-averaged (DC) readings. `ir_rms` is the
/// true-RMS reading of the load current, the one whose square gives the
/// PWM-chopped load power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSet {
    pub i1: f64,
    pub i2: f64,
    pub ir: f64,
    pub ir_rms: f64,
    pub repetitions: usize,
}

#[derive(Default)]
struct CycleSums {
    time: f64,
    omega: f64,
    i1: f64,
    i2: f64,
    ir: f64,
    ir_sq: f64,
    torque: f64,
    braking_power: f64,
    winding_power: f64,
    load_power: f64,
}

impl CycleSums {
    fn add(&mut self, other: &CycleSums) {
        self.time += other.time;
        self.omega += other.omega;
        self.i1 += other.i1;
        self.i2 += other.i2;
        self.ir += other.ir;
        self.ir_sq += other.ir_sq;
        self.torque += other.torque;
        self.braking_power += other.braking_power;
        self.winding_power += other.winding_power;
        self.load_power += other.load_power;
    }
}

struct Rig<'a> {
    params: &'a RigParams,
    duty: DutyCycles,
    phases: Vec<f64>,
}

impl Rig<'_> {
    /// Advances one PWM period from `omega`, returning the end speed and the
    /// period's integrals.
    fn cycle(&self, mut omega: f64) -> Result<(f64, CycleSums), RigError> {
        let p = self.params;
        let m = &p.motor;
        let g = p.torque_gain();
        let period = 1.0 / p.pwm_freq;
        let drive = g * p.v_bb / (p.inertia * m.r_m);
        let mut sums = CycleSums::default();
        for w in self.phases.windows(2) {
            let span = (w[1] - w[0]) * period;
            if span <= 0.0 {
                continue;
            }
            let direction = CurrentDirection::from_sign(omega);
            let state = switch_selection(direction, self.duty, 0.5 * (w[0] + w[1]))?;
            let (cond, through_load) = damper_path(state, direction, m);
            // J ω̇ = g(V − gω)/R_m − g²·cond·ω  ⇒  ω̇ = drive − rate·ω
            let rate = g * g * (1.0 / m.r_m + cond) / p.inertia;
            let omega_inf = drive / rate;
            let delta = omega - omega_inf;
            let decay = (-rate * span).exp();
            let int_w = omega_inf * span + delta * (1.0 - decay) / rate;
            let int_w2 = omega_inf * omega_inf * span
                + 2.0 * omega_inf * delta * (1.0 - decay) / rate
                + delta * delta * (1.0 - decay * decay) / (2.0 * rate);
            omega = omega_inf + delta * decay;

            // damper current I₂ = cond·g·ω; load current is rectified
            let k2 = cond * g;
            sums.time += span;
            sums.omega += int_w;
            sums.i1 += (p.v_bb * span - g * int_w) / m.r_m;
            sums.i2 += k2 * int_w;
            sums.torque += g * k2 * int_w;
            sums.braking_power += g * k2 * int_w2;
            sums.winding_power += k2 * k2 * int_w2 * m.r_m;
            if through_load {
                sums.ir += k2 * int_w.abs();
                sums.ir_sq += k2 * k2 * int_w2;
                sums.load_power += k2 * k2 * int_w2 * m.r_l;
            }
        }
        Ok((omega, sums))
    }
}

/// Runs the rig at command `u` from rest until the cycle-averaged speed is
/// steady, then averages `measure_cycles` further periods.
pub fn simulate_rig(rig: &RigParams, u: f64, duration: f64) -> Result<RigSteadyState, RigError> {
    let dmp = rig.validate()?;
    let duty = duty_cycles_from_u(u, &dmp)?;
    if !(duration >= 20.0 * rig.mechanical_time_constant()) {
        return Err(RigError::InvalidParameter {
            name: "duration",
            value: duration,
            reason: "must cover at least 20 mechanical time constants",
        });
    }
    let mut phases = vec![0.0, duty.d_d, duty.d_r, 1.0];
    phases.sort_by(f64::total_cmp);
    phases.dedup();
    let sim = Rig {
        params: rig,
        duty,
        phases,
    };

    let period = 1.0 / rig.pwm_freq;
    let max_cycles = (duration / period).ceil() as usize;
    let mut omega = 0.0;
    let mut prev_mean: Option<f64> = None;
    let mut cycles = 0usize;
    loop {
        if cycles >= max_cycles {
            return Err(RigError::NoSteadyState { duration });
        }
        let (end, sums) = sim.cycle(omega)?;
        omega = end;
        cycles += 1;
        let mean = sums.omega / sums.time;
        if let Some(prev) = prev_mean {
            if mean != 0.0 && ((mean - prev) / mean).abs() < rig.steady_tol {
                break;
            }
        }
        prev_mean = Some(mean);
    }
    let settle_time = cycles as f64 * period;

    let mut total = CycleSums::default();
    for _ in 0..rig.measure_cycles {
        let (end, sums) = sim.cycle(omega)?;
        omega = end;
        total.add(&sums);
    }
    let t = total.time;
    Ok(RigSteadyState {
        u,
        duty,
        omega: total.omega / t,
        i1: total.i1 / t,
        i2: total.i2 / t,
        ir: total.ir / t,
        ir_rms: (total.ir_sq / t).sqrt(),
        braking_torque: total.torque / t,
        braking_power: total.braking_power / t,
        winding_power: total.winding_power / t,
        load_power: total.load_power / t,
        settle_time,
    })
}

/// One metered run of the rig at command `u`.
pub fn run_rig<R: Rng + ?Sized>(rig: &RigParams, u: f64, duration: f64, rng: &mut R) -> Result<MeasurementSet, RigError> {
    Ok(simulate_rig(rig, u, duration)?.measure(rig.measurement_noise, rng))
}

fn back_emf_estimate(ms: &MeasurementSet, rig: &RigParams) -> Result<f64, RigError> {
    let denom = rig.v_bb - ms.i1 * rig.motor.r_m;
    if denom * rig.v_bb.signum() <= 0.0 {
        return Err(RigError::MeasurementInvalid { denominator: denom });
    }
    Ok(denom)
}

/// Damping coefficient `n_d²k_t²I₂ / (V_bb − I₁R_m)`, N·m·s/rad.
pub fn estimate_damping(ms: &MeasurementSet, rig: &RigParams) -> Result<f64, RigError> {
    let denom = back_emf_estimate(ms, rig)?;
    let g = rig.torque_gain();
    Ok(g * g * ms.i2 / denom)
}

/// Regeneration power normalised by squared speed,
/// `n_d²k_t²I_r²R_l / (V_bb − I₁R_m)²`, W·s²/rad². Uses the RMS load reading.
pub fn estimate_regen_power(ms: &MeasurementSet, rig: &RigParams) -> Result<f64, RigError> {
    let denom = back_emf_estimate(ms, rig)?;
    let g = rig.torque_gain();
    Ok(g * g * ms.ir_rms * ms.ir_rms * rig.motor.r_l / (denom * denom))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub u: f64,
    pub d_mean: f64,
    pub d_points: Vec<f64>,
    pub p_mean: f64,
    pub p_points: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn point_count(&self) -> usize {
        self.rows.iter().map(|r| r.d_points.len()).sum()
    }

    pub fn write_points_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# units: u [-], rep [-], d_est [N m s/rad], p_norm_est [W s^2/rad^2]")?;
        writeln!(w, "u,rep,d_est,p_norm_est")?;
        for row in &self.rows {
            for (rep, (d, p)) in row.d_points.iter().zip(&row.p_points).enumerate() {
                writeln!(w, "{},{},{},{}", row.u, rep, d, p)?;
            }
        }
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# units: u [-], d_mean [N m s/rad], p_mean [W s^2/rad^2]")?;
        writeln!(w, "u,d_mean,p_mean")?;
        for row in &self.rows {
            writeln!(w, "{},{},{}", row.u, row.d_mean, row.p_mean)?;
        }
        Ok(())
    }
}

/// Meters every command in `u_values` `repetitions` times.
///
/// Each (command, repetition) pair draws from its own ChaCha stream of
/// `seed`, so results do not depend on scheduling.
pub fn sweep(
    rig: &RigParams,
    u_values: &[f64],
    repetitions: usize,
    duration: f64,
    seed: u64,
) -> Result<SweepTable, RigError> {
    if repetitions == 0 {
        return Err(RigError::InvalidParameter {
            name: "repetitions",
            value: 0.0,
            reason: "must be >= 1",
        });
    }
    let rows = u_values
        .par_iter()
        .enumerate()
        .map(|(i, &u)| {
            let steady = simulate_rig(rig, u, duration)?;
            let mut d_points = Vec::with_capacity(repetitions);
            let mut p_points = Vec::with_capacity(repetitions);
            for rep in 0..repetitions {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((i * repetitions + rep) as u64);
                let ms = steady.measure(rig.measurement_noise, &mut rng);
                d_points.push(estimate_damping(&ms, rig)?);
                p_points.push(estimate_regen_power(&ms, rig)?);
            }
            let n = repetitions as f64;
            Ok(SweepRow {
                u,
                d_mean: d_points.iter().sum::<f64>() / n,
                p_mean: p_points.iter().sum::<f64>() / n,
                d_points,
                p_points,
            })
        })
        .collect::<Result<Vec<_>, RigError>>()?;
    Ok(SweepTable { rows })
}

/// `{0, 0.1, …, 1.0}`.
pub fn default_u_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}
