//! Closed-form models of the three motor-braking schemes.
//!
//! A damper motor shorted through its winding resistance (dynamic braking),
//! loaded by a storage element (regenerative braking), or PWM-switched between
//! the two (hybrid braking). Every function here is pure.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DampingError {
    #[error("{name} = {value} is outside its admissible range [{lo}, {hi}]")]
    Domain {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("inconsistent duty pair: D_d = {d_d} exceeds D_r = {d_r}")]
    InconsistentDuty { d_r: f64, d_d: f64 },
    #[error("critically damped scheme requires the instantaneous stiffness and inertia")]
    MissingStiffness,
}

pub type Result<T> = std::result::Result<T, DampingError>;

fn check_unit(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(DampingError::Domain {
            name,
            value,
            lo: 0.0,
            hi: 1.0,
        })
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(DampingError::InvalidParameter {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

fn check_crossover(u_r: f64) -> Result<f64> {
    if u_r > 0.0 && u_r < 1.0 {
        Ok(u_r)
    } else {
        Err(DampingError::InvalidParameter {
            name: "u_r",
            value: u_r,
            reason: "must lie in the open interval (0, 1)",
        })
    }
}

/// Physical constants of the damper motor and its electrical load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorConstants {
    /// Gearhead ratio.
    pub n_d: f64,
    /// Torque constant, N·m/A.
    pub k_t: f64,
    /// Back-EMF constant, V·s/rad. Must equal `k_t`.
    pub k_b: f64,
    /// Winding resistance, Ω.
    pub r_m: f64,
    /// Load (storage element) resistance, Ω.
    pub r_l: f64,
}

/// Damping-module constants and the bounds derived from them.
///
/// `d_bar1` is the dynamic-braking maximum `n_d²k_t²/R_m`, `d_bar2` the
/// regenerative maximum `n_d²k_t²/(R_m + R_l)` and `alpha = R_l/(R_m + R_l)`.
/// The hybrid scheme's dynamic-path bound `d̄₃` equals `d_bar1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingModuleParams {
    d_bar1: f64,
    d_bar2: f64,
    alpha: f64,
    u_r: f64,
    motor: Option<MotorConstants>,
}

impl DampingModuleParams {
    pub fn from_motor(motor: MotorConstants, u_r: f64) -> Result<Self> {
        check_positive("n_d", motor.n_d)?;
        check_positive("k_t", motor.k_t)?;
        check_positive("k_b", motor.k_b)?;
        check_positive("r_m", motor.r_m)?;
        if !(motor.r_l.is_finite() && motor.r_l >= 0.0) {
            return Err(DampingError::InvalidParameter {
                name: "r_l",
                value: motor.r_l,
                reason: "must be finite and >= 0",
            });
        }
        if (motor.k_b - motor.k_t).abs() > 1e-12 * motor.k_t {
            return Err(DampingError::InvalidParameter {
                name: "k_b",
                value: motor.k_b,
                reason: "back-EMF constant must equal the torque constant",
            });
        }
        check_crossover(u_r)?;
        let gain = motor.n_d * motor.n_d * motor.k_t * motor.k_t;
        Ok(Self {
            d_bar1: gain / motor.r_m,
            d_bar2: gain / (motor.r_m + motor.r_l),
            alpha: motor.r_l / (motor.r_m + motor.r_l),
            u_r,
            motor: Some(motor),
        })
    }

    /// Builds the module from aggregate bounds, as for an idealised actuator
    /// with no motor constants. Requires `d̄₂ + α·d̄₃ = d̄₃`.
    pub fn from_aggregates(d_bar2: f64, d_bar3: f64, alpha: f64, u_r: f64) -> Result<Self> {
        check_positive("d_bar2", d_bar2)?;
        check_positive("d_bar3", d_bar3)?;
        if !(0.0..1.0).contains(&alpha) {
            return Err(DampingError::InvalidParameter {
                name: "alpha",
                value: alpha,
                reason: "must lie in [0, 1)",
            });
        }
        if d_bar2 > d_bar3 {
            return Err(DampingError::InvalidParameter {
                name: "d_bar2",
                value: d_bar2,
                reason: "regenerative bound cannot exceed the dynamic bound",
            });
        }
        if (d_bar2 + alpha * d_bar3 - d_bar3).abs() > 1e-9 * d_bar3 {
            return Err(DampingError::InvalidParameter {
                name: "alpha",
                value: alpha,
                reason: "aggregates violate d_bar2 + alpha * d_bar3 = d_bar3",
            });
        }
        check_crossover(u_r)?;
        Ok(Self {
            d_bar1: d_bar3,
            d_bar2,
            alpha,
            u_r,
            motor: None,
        })
    }

    pub fn with_crossover(mut self, u_r: f64) -> Result<Self> {
        self.u_r = check_crossover(u_r)?;
        Ok(self)
    }

    pub fn d_bar1(&self) -> f64 {
        self.d_bar1
    }

    pub fn d_bar2(&self) -> f64 {
        self.d_bar2
    }

    pub fn d_bar3(&self) -> f64 {
        self.d_bar1
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn u_r(&self) -> f64 {
        self.u_r
    }

    pub fn motor(&self) -> Option<&MotorConstants> {
        self.motor.as_ref()
    }

    /// Crossover at which the hybrid damping law is exactly linear in u.
    pub fn linear_crossover(&self) -> f64 {
        self.d_bar2 / self.d_bar1
    }
}

/// PWM duty cycles of the regenerative (`d_r`) and dynamic (`d_d`) switches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DutyCycles {
    pub d_r: f64,
    pub d_d: f64,
}

impl DutyCycles {
    pub fn new(d_r: f64, d_d: f64) -> Result<Self> {
        Ok(Self {
            d_r: check_unit("D_r", d_r)?,
            d_d: check_unit("D_d", d_d)?,
        })
    }
}

/// Closed (`true`) / open state of the four bridge switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SwitchState {
    pub s1: bool,
    pub s2: bool,
    pub s3: bool,
    pub s4: bool,
}

/// Direction of the damper-motor current, i.e. the sign of its back-EMF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurrentDirection {
    Positive,
    Negative,
    Zero,
}

impl CurrentDirection {
    pub fn from_sign(x: f64) -> Self {
        if x > 0.0 {
            Self::Positive
        } else if x < 0.0 {
            Self::Negative
        } else {
            Self::Zero
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BrakingScheme {
    Dynamic,
    Regenerative,
    Hybrid,
    /// Constant damping coefficient in N·m·s/rad, independent of u.
    FixedDamping(f64),
    /// Damping tracks `2ζ·sqrt(k·I)` for the current stiffness.
    CriticallyDamped(f64),
}

impl BrakingScheme {
    /// Short tag used in file names and CSV columns.
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Dynamic => "dynamic",
            Self::Regenerative => "regenerative",
            Self::Hybrid => "hybrid",
            Self::FixedDamping(_) => "fixed",
            Self::CriticallyDamped(_) => "critical",
        }
    }

    /// Whether the damping coefficient depends on the command u₃.
    pub fn uses_damping_command(&self) -> bool {
        matches!(self, Self::Dynamic | Self::Regenerative | Self::Hybrid)
    }

    pub fn validate(&self, p: &DampingModuleParams) -> Result<()> {
        match *self {
            Self::FixedDamping(d) if !(0.0..=p.d_bar1() * (1.0 + 1e-12)).contains(&d) => {
                Err(DampingError::InvalidParameter {
                    name: "fixed damping",
                    value: d,
                    reason: "must lie in [0, d_bar1]",
                })
            }
            Self::CriticallyDamped(zeta) => check_positive("zeta", zeta).map(|_| ()),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for BrakingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Instantaneous stiffness (N·m/rad) and inertia (kg·m²) needed by the
/// critically damped baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalContext {
    pub stiffness: f64,
    pub inertia: f64,
}

/// Maps the single damping command onto the coupled duty-cycle pair.
pub fn duty_cycles_from_u(u: f64, p: &DampingModuleParams) -> Result<DutyCycles> {
    check_unit("u", u)?;
    let u_r = p.u_r();
    if u <= u_r {
        Ok(DutyCycles {
            d_r: u / u_r,
            d_d: 0.0,
        })
    } else {
        Ok(DutyCycles {
            d_r: 1.0,
            d_d: (u - u_r) / (1.0 - u_r),
        })
    }
}

pub fn damping_dynamic(p: &DampingModuleParams, d_d: f64) -> Result<f64> {
    Ok(p.d_bar1() * check_unit("D_d", d_d)?)
}

pub fn damping_regenerative(p: &DampingModuleParams, d_r: f64) -> Result<f64> {
    Ok(p.d_bar2() * check_unit("D_r", d_r)?)
}

pub fn regen_power_regenerative(p: &DampingModuleParams, d_r: f64, qdot: f64) -> Result<f64> {
    Ok(p.alpha() * p.d_bar2() * qdot * qdot * check_unit("D_r", d_r)?)
}

pub fn damping_hybrid(p: &DampingModuleParams, dc: DutyCycles) -> f64 {
    p.d_bar2() * dc.d_r + p.alpha() * p.d_bar3() * dc.d_d
}

pub fn regen_power_hybrid(p: &DampingModuleParams, dc: DutyCycles, qdot: f64) -> Result<f64> {
    if dc.d_d > dc.d_r {
        return Err(DampingError::InconsistentDuty {
            d_r: dc.d_r,
            d_d: dc.d_d,
        });
    }
    Ok(p.alpha() * p.d_bar2() * qdot * qdot * (dc.d_r - dc.d_d))
}

/// Damping coefficient (N·m·s/rad) produced by `scheme` for command `u`.
pub fn damping_from_u(
    scheme: BrakingScheme,
    p: &DampingModuleParams,
    u: f64,
    critical: Option<CriticalContext>,
) -> Result<f64> {
    check_unit("u", u)?;
    match scheme {
        BrakingScheme::Dynamic => damping_dynamic(p, u),
        BrakingScheme::Regenerative => damping_regenerative(p, u),
        BrakingScheme::Hybrid => Ok(damping_hybrid(p, duty_cycles_from_u(u, p)?)),
        BrakingScheme::FixedDamping(d) => Ok(d),
        BrakingScheme::CriticallyDamped(zeta) => {
            let ctx = critical.ok_or(DampingError::MissingStiffness)?;
            // negative stiffness (past the spring's toggle point) gets no damping
            Ok(2.0 * zeta * (ctx.stiffness.max(0.0) * ctx.inertia).sqrt())
        }
    }
}

/// Power (W) delivered to the storage element. Zero for every scheme that
/// does not route current through the load.
pub fn regen_power_from_u(
    scheme: BrakingScheme,
    p: &DampingModuleParams,
    u: f64,
    qdot: f64,
) -> Result<f64> {
    check_unit("u", u)?;
    match scheme {
        BrakingScheme::Regenerative => regen_power_regenerative(p, u, qdot),
        BrakingScheme::Hybrid => regen_power_hybrid(p, duty_cycles_from_u(u, p)?, qdot),
        BrakingScheme::Dynamic | BrakingScheme::FixedDamping(_) | BrakingScheme::CriticallyDamped(_) => {
            Ok(0.0)
        }
    }
}

/// Switch configuration of the bidirectional bridge at `phase` ∈ [0, 1)
/// within one PWM period. A switch with duty `D` is closed iff `phase < D`.
///
/// For forward current S₄ conducts and S₁/S₂ follow `D_r`/`D_d`; for reverse
/// current S₃ conducts and the duty roles of S₁ and S₂ are exchanged. With no
/// current every switch is open (coasting).
pub fn switch_selection(direction: CurrentDirection, dc: DutyCycles, phase: f64) -> Result<SwitchState> {
    if !(0.0..1.0).contains(&phase) {
        return Err(DampingError::Domain {
            name: "phase",
            value: phase,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let regen_on = phase < dc.d_r;
    let dyn_on = phase < dc.d_d;
    Ok(match direction {
        CurrentDirection::Positive => SwitchState {
            s1: regen_on,
            s2: dyn_on,
            s3: false,
            s4: true,
        },
        CurrentDirection::Negative => SwitchState {
            s1: dyn_on,
            s2: regen_on,
            s3: true,
            s4: false,
        },
        CurrentDirection::Zero => SwitchState::default(),
    })
}
