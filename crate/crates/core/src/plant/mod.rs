//! Plant dynamics for the two case studies and a fixed-step RK4 simulator
//! with zero-order-hold controls.

mod maccepa;
mod pendulum;

use std::io::{self, Write};

use nalgebra::DVector;
use thiserror::Error;

use crate::damping::{regen_power_from_u, BrakingScheme, DampingError, DampingModuleParams};

pub use maccepa::{maccepa_damping, maccepa_deriv, maccepa_spring_torque, maccepa_stiffness, MaccepaParams};
pub use pendulum::{pendulum_deriv, PendulumParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error(transparent)]
    Damping(#[from] DampingError),
    #[error("invalid plant parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("integration diverged at t = {t} s")]
    Diverged { t: f64 },
    #[error("invalid simulation setup: {0}")]
    Setup(String),
}

/// Command triple: equilibrium (u₁), stiffness or pretension (u₂), damping (u₃).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
}

impl ControlInput {
    pub const DIM: usize = 3;

    pub fn new(u1: f64, u2: f64, u3: f64) -> Self {
        Self { u1, u2, u3 }
    }

    pub fn from_slice(u: &[f64]) -> Self {
        Self::new(u[0], u[1], u[2])
    }

    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_vec(vec![self.u1, self.u2, self.u3])
    }
}

/// Per-channel `(lo, hi)` bounds of a control vector.
pub type ControlBounds = Vec<(f64, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantKind {
    Pendulum,
    Maccepa,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlantModel {
    Pendulum(PendulumParams),
    Maccepa(MaccepaParams),
}

impl PlantModel {
    pub fn kind(&self) -> PlantKind {
        match self {
            Self::Pendulum(_) => PlantKind::Pendulum,
            Self::Maccepa(_) => PlantKind::Maccepa,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Self::Pendulum(_) => 2,
            Self::Maccepa(_) => 6,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        match self {
            Self::Pendulum(p) => p.validate(),
            Self::Maccepa(p) => p.validate(),
        }
    }
}

/// A plant together with the braking scheme and damping module acting on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatedPlant {
    pub model: PlantModel,
    pub scheme: BrakingScheme,
    pub damping: DampingModuleParams,
}

impl ActuatedPlant {
    pub fn new(model: PlantModel, scheme: BrakingScheme, damping: DampingModuleParams) -> Result<Self, PlantError> {
        model.validate()?;
        scheme.validate(&damping)?;
        Ok(Self { model, scheme, damping })
    }

    pub fn kind(&self) -> PlantKind {
        self.model.kind()
    }

    /// Admissible range of each command channel.
    pub fn control_bounds(&self) -> ControlBounds {
        match &self.model {
            PlantModel::Pendulum(p) => vec![p.u1_range, (0.0, 1.0), (0.0, 1.0)],
            PlantModel::Maccepa(p) => vec![p.u1_range, p.u2_range, (0.0, 1.0)],
        }
    }

    pub fn clamp(&self, c: &ControlInput) -> ControlInput {
        let b = self.control_bounds();
        ControlInput::new(
            c.u1.clamp(b[0].0, b[0].1),
            c.u2.clamp(b[1].0, b[1].1),
            c.u3.clamp(b[2].0, b[2].1),
        )
    }

    pub fn deriv(&self, s: &DVector<f64>, c: &ControlInput) -> Result<DVector<f64>, PlantError> {
        match &self.model {
            PlantModel::Pendulum(p) => pendulum_deriv(s, c, p, self.scheme, &self.damping),
            PlantModel::Maccepa(p) => maccepa_deriv(s, c, p, self.scheme, &self.damping),
        }
    }

    pub fn damping_coefficient(&self, s: &DVector<f64>, c: &ControlInput) -> Result<f64, PlantError> {
        match &self.model {
            PlantModel::Pendulum(p) => p.damping(c, self.scheme, &self.damping),
            PlantModel::Maccepa(p) => maccepa_damping(s, c, p, self.scheme, &self.damping),
        }
    }

    pub fn regen_power(&self, s: &DVector<f64>, c: &ControlInput) -> Result<f64, PlantError> {
        Ok(regen_power_from_u(self.scheme, &self.damping, c.u3, s[1])?)
    }

    /// Torque the elastic element applies to the joint, N·m.
    pub fn spring_torque(&self, s: &DVector<f64>, c: &ControlInput) -> f64 {
        match &self.model {
            PlantModel::Pendulum(p) => p.spring_torque(s[0], c),
            PlantModel::Maccepa(p) => maccepa_spring_torque(s[0], s[2], s[3], p),
        }
    }

    /// Joint stiffness, N·m/rad.
    pub fn stiffness(&self, s: &DVector<f64>, c: &ControlInput) -> f64 {
        match &self.model {
            PlantModel::Pendulum(p) => p.stiffness(c),
            PlantModel::Maccepa(p) => maccepa_stiffness(s[0], s[2], s[3], p),
        }
    }

    pub fn rest_state(&self) -> DVector<f64> {
        DVector::zeros(self.model.state_dim())
    }
}

/// Continuous-time dynamics `ẋ = f(x, u)` over plain vectors.
pub trait Dynamics: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn deriv(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, PlantError>;
}

impl Dynamics for ActuatedPlant {
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    fn control_dim(&self) -> usize {
        ControlInput::DIM
    }

    fn deriv(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        ActuatedPlant::deriv(self, x, &ControlInput::from_slice(u.as_slice()))
    }
}

fn finite_or_diverged(x: DVector<f64>) -> Result<DVector<f64>, PlantError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(PlantError::Diverged { t: f64::NAN })
    }
}

/// One classical fourth-order Runge-Kutta step of `ẋ = deriv(x)`.
pub fn rk4_step<F>(deriv: F, s: &DVector<f64>, dt: f64) -> Result<DVector<f64>, PlantError>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>, PlantError>,
{
    let k1 = finite_or_diverged(deriv(s)?)?;
    let k2 = finite_or_diverged(deriv(&(s + &k1 * (0.5 * dt)))?)?;
    let k3 = finite_or_diverged(deriv(&(s + &k2 * (0.5 * dt)))?)?;
    let k4 = finite_or_diverged(deriv(&(s + &k3 * dt))?)?;
    finite_or_diverged(s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Integrator step and control rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    /// RK4 step, s.
    pub dt: f64,
    /// Zero-order-hold control rate, Hz.
    pub control_freq: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            control_freq: 50.0,
        }
    }
}

impl SimSettings {
    pub fn control_period(&self) -> f64 {
        1.0 / self.control_freq
    }

    /// RK4 steps per control interval; the interval must be a whole number of steps.
    pub fn substeps(&self) -> Result<usize, PlantError> {
        if !(self.dt > 0.0 && self.control_freq > 0.0) {
            return Err(PlantError::Setup(format!(
                "dt = {} and control_freq = {} must be positive",
                self.dt, self.control_freq
            )));
        }
        let ratio = self.control_period() / self.dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
            return Err(PlantError::Setup(format!(
                "control period {} s is not a whole multiple of dt = {} s",
                self.control_period(),
                self.dt
            )));
        }
        Ok(n as usize)
    }

    /// Number of control intervals in `t_f`.
    pub fn horizon(&self, t_f: f64) -> Result<usize, PlantError> {
        if !(t_f > 0.0) {
            return Err(PlantError::Setup(format!("t_f = {t_f} must be positive")));
        }
        let ratio = t_f * self.control_freq;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
            return Err(PlantError::Setup(format!(
                "t_f = {t_f} s is not a whole number of control periods"
            )));
        }
        Ok(n as usize)
    }
}

/// Advances `x` across one control interval with `u` held constant.
pub fn hold_step<D: Dynamics + ?Sized>(
    dynamics: &D,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
    substeps: usize,
) -> Result<DVector<f64>, PlantError> {
    let mut x = x.clone();
    for _ in 0..substeps {
        x = rk4_step(|s| dynamics.deriv(s, u), &x, dt)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: Vec<f64>,
    pub control: ControlInput,
    /// Instantaneous damping coefficient, N·m·s/rad.
    pub damping: f64,
    /// Instantaneous regeneration power, W.
    pub regen_power: f64,
    /// Spring torque on the joint, N·m.
    pub spring_torque: f64,
    /// Joint stiffness, N·m/rad.
    pub stiffness: f64,
}

impl Sample {
    pub fn q(&self) -> f64 {
        self.state[0]
    }

    pub fn qdot(&self) -> f64 {
        self.state[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: PlantKind,
    pub dt: f64,
    pub control_hold: f64,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn duration(&self) -> f64 {
        self.final_sample().t - self.samples[0].t
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        match self.kind {
            PlantKind::Pendulum => {
                writeln!(
                    w,
                    "# units: t [s], q [rad], qdot [rad/s], u1 [rad], u2 [-], u3 [-], d [N m s/rad], p_rege [W], tau_s [N m]"
                )?;
                writeln!(w, "t,q,qdot,u1,u2,u3,d,p_rege,tau_s")?;
                for s in &self.samples {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{},{}",
                        s.t,
                        s.state[0],
                        s.state[1],
                        s.control.u1,
                        s.control.u2,
                        s.control.u3,
                        s.damping,
                        s.regen_power,
                        s.spring_torque
                    )?;
                }
            }
            PlantKind::Maccepa => {
                writeln!(
                    w,
                    "# units: t [s], q [rad], qdot [rad/s], theta1 [rad], theta2 [rad], theta1dot [rad/s], theta2dot [rad/s], u1 [rad], u2 [rad], u3 [-], d [N m s/rad], p_rege [W], tau_s [N m]"
                )?;
                writeln!(w, "t,q,qdot,theta1,theta2,theta1dot,theta2dot,u1,u2,u3,d,p_rege,tau_s")?;
                for s in &self.samples {
                    let x = &s.state;
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                        s.t,
                        x[0],
                        x[1],
                        x[2],
                        x[3],
                        x[4],
                        x[5],
                        s.control.u1,
                        s.control.u2,
                        s.control.u3,
                        s.damping,
                        s.regen_power,
                        s.spring_torque
                    )?;
                }
            }
        }
        Ok(())
    }
}

fn record(plant: &ActuatedPlant, t: f64, x: &DVector<f64>, c: &ControlInput) -> Result<Sample, PlantError> {
    Ok(Sample {
        t,
        state: x.as_slice().to_vec(),
        control: *c,
        damping: plant.damping_coefficient(x, c)?,
        regen_power: plant.regen_power(x, c)?,
        spring_torque: plant.spring_torque(x, c),
        stiffness: plant.stiffness(x, c),
    })
}

/// Executes a piecewise-constant open-loop command sequence from `x0`.
///
/// `controls` holds one command per control interval; each is clamped to
/// the plant's admissible range before integration.
pub fn simulate(
    plant: &ActuatedPlant,
    controls: &[ControlInput],
    x0: &DVector<f64>,
    t_f: f64,
    settings: SimSettings,
) -> Result<Trajectory, PlantError> {
    let substeps = settings.substeps()?;
    let horizon = settings.horizon(t_f)?;
    if controls.len() != horizon {
        return Err(PlantError::Setup(format!(
            "expected {horizon} control intervals, got {}",
            controls.len()
        )));
    }
    if x0.len() != plant.model.state_dim() {
        return Err(PlantError::Setup(format!(
            "initial state has {} components, plant needs {}",
            x0.len(),
            plant.model.state_dim()
        )));
    }
    let dt = settings.dt;
    let mut samples = Vec::with_capacity(horizon * substeps + 1);
    let mut x = x0.clone();
    let mut i = 0usize;
    let mut last = plant.clamp(&controls[0]);
    for raw in controls {
        let c = plant.clamp(raw);
        for _ in 0..substeps {
            let t = i as f64 * dt;
            samples.push(record(plant, t, &x, &c)?);
            x = rk4_step(|s| plant.deriv(s, &c), &x, dt).map_err(|e| match e {
                PlantError::Diverged { .. } => PlantError::Diverged { t },
                other => other,
            })?;
            i += 1;
        }
        last = c;
    }
    samples.push(record(plant, i as f64 * dt, &x, &last)?);
    Ok(Trajectory {
        kind: plant.kind(),
        dt,
        control_hold: settings.control_period(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_3;

    fn toy() -> DampingModuleParams {
        DampingModuleParams::from_aggregates(25.0, 50.0, 0.5, 0.5).unwrap()
    }

    fn pendulum(scheme: BrakingScheme) -> ActuatedPlant {
        ActuatedPlant::new(PlantModel::Pendulum(PendulumParams::default()), scheme, toy()).unwrap()
    }

    #[test]
    fn rk4_on_exponential_decay() {
        let x0 = DVector::from_vec(vec![1.0]);
        let h = 0.1f64;
        let x1 = rk4_step(|x| Ok(-x), &x0, h).unwrap();
        // one step reproduces the degree-4 Taylor polynomial of e^{-h}
        let taylor = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((x1[0] - taylor).abs() < 1e-15);
        let local = (x1[0] - (-h).exp()).abs();
        assert!((local - (h.powi(5) / 120.0 - h.powi(6) / 720.0)).abs() < 1e-10, "{local}");
        assert!((x1[0] - 0.9048374180).abs() < 1e-7);
        // ten steps of h/10 land within 1e-8 of the closed form
        let mut x = x0.clone();
        for _ in 0..10 {
            x = rk4_step(|x| Ok(-x), &x, h / 10.0).unwrap();
        }
        assert!((x[0] - (-h).exp()).abs() < 1e-8);
    }

    #[test]
    fn rk4_zero_field_keeps_state() {
        let x0 = DVector::from_vec(vec![0.3, -2.0, 5.0]);
        let x1 = rk4_step(|x| Ok(DVector::zeros(x.len())), &x0, 0.05).unwrap();
        assert_eq!(x0, x1);
    }

    #[test]
    fn rk4_reports_divergence() {
        let x0 = DVector::from_vec(vec![1.0]);
        let err = rk4_step(|x| Ok(x.map(|v| v * f64::MAX)), &x0, 1.0).unwrap_err();
        assert!(matches!(err, PlantError::Diverged { .. }));
    }

    #[test]
    fn settings_reject_fractional_hold() {
        let s = SimSettings {
            dt: 3e-3,
            control_freq: 50.0,
        };
        assert!(s.substeps().is_err());
        assert_eq!(SimSettings::default().substeps().unwrap(), 20);
        assert_eq!(SimSettings::default().horizon(1.0).unwrap(), 50);
        assert!(SimSettings::default().horizon(0.0).is_err());
    }

    #[test]
    fn zero_controls_stay_at_rest() {
        let plant = pendulum(BrakingScheme::Hybrid);
        let controls = vec![ControlInput::default(); 50];
        let traj = simulate(&plant, &controls, &plant.rest_state(), 1.0, SimSettings::default()).unwrap();
        assert_eq!(traj.samples.len(), 1001);
        assert!(traj.samples.iter().all(|s| s.q() == 0.0 && s.qdot() == 0.0));
    }

    #[test]
    fn timestamps_are_uniform() {
        let plant = pendulum(BrakingScheme::Dynamic);
        let controls = vec![ControlInput::new(FRAC_PI_3, 0.5, 0.5); 10];
        let traj = simulate(&plant, &controls, &plant.rest_state(), 0.2, SimSettings::default()).unwrap();
        for w in traj.samples.windows(2) {
            assert!((w[1].t - w[0].t - 1e-3).abs() < 1e-12);
        }
        assert!((traj.final_sample().t - 0.2).abs() < 1e-12);
    }

    #[test]
    fn controls_are_clamped() {
        let plant = pendulum(BrakingScheme::Dynamic);
        let controls = vec![ControlInput::new(3.0, 1.5, -0.2); 5];
        let traj = simulate(&plant, &controls, &plant.rest_state(), 0.1, SimSettings::default()).unwrap();
        let c = traj.samples[0].control;
        assert_eq!(c, ControlInput::new(std::f64::consts::FRAC_PI_2, 1.0, 0.0));
    }

    #[test]
    fn critically_damped_reaches_without_overshoot() {
        let plant = pendulum(BrakingScheme::CriticallyDamped(1.0));
        let controls = vec![ControlInput::new(FRAC_PI_3, 0.5, 0.0); 50];
        let traj = simulate(&plant, &controls, &plant.rest_state(), 1.0, SimSettings::default()).unwrap();
        let mut prev = -1.0;
        for s in &traj.samples {
            assert!(s.q() <= FRAC_PI_3);
            assert!(s.q() >= prev);
            prev = s.q();
        }
        assert!((traj.final_sample().q() - FRAC_PI_3).abs() < 1e-3);
    }

    #[test]
    fn wrong_control_count_is_rejected() {
        let plant = pendulum(BrakingScheme::Dynamic);
        let controls = vec![ControlInput::default(); 3];
        assert!(matches!(
            simulate(&plant, &controls, &plant.rest_state(), 1.0, SimSettings::default()),
            Err(PlantError::Setup(_))
        ));
    }

    #[test]
    fn csv_header_matches_plant() {
        let plant = pendulum(BrakingScheme::Dynamic);
        let controls = vec![ControlInput::default(); 1];
        let traj = simulate(&plant, &controls, &plant.rest_state(), 0.02, SimSettings::default()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# units"));
        assert_eq!(lines.next().unwrap(), "t,q,qdot,u1,u2,u3,d,p_rege,tau_s");
        assert_eq!(lines.count(), 21);
    }
}
