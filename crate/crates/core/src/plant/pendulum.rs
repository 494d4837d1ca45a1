//! Point-mass pendulum driven by an ideal variable impedance actuator with
//! the damper in parallel with the spring. No gravity.

use nalgebra::DVector;

use super::{ControlInput, PlantError};
use crate::damping::{damping_from_u, BrakingScheme, CriticalContext, DampingModuleParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    /// Point mass, kg.
    pub m: f64,
    /// Link length, m.
    pub l: f64,
    /// Joint viscous friction, N·m·s/rad.
    pub b: f64,
    /// Maximum stiffness k̄, N·m/rad; `k(u₂) = k̄·u₂`.
    pub k_max: f64,
    /// Equilibrium command bounds, rad.
    pub u1_range: (f64, f64),
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            l: 1.0,
            b: 0.01,
            k_max: 200.0,
            u1_range: (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        for (name, v) in [("m", self.m), ("l", self.l), ("k_max", self.k_max)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlantError::InvalidParameter { name, value: v });
            }
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(PlantError::InvalidParameter { name: "b", value: self.b });
        }
        if !(self.u1_range.0 <= self.u1_range.1) {
            return Err(PlantError::InvalidParameter {
                name: "u1_range",
                value: self.u1_range.0,
            });
        }
        Ok(())
    }

    pub fn inertia(&self) -> f64 {
        self.m * self.l * self.l
    }

    pub fn stiffness(&self, c: &ControlInput) -> f64 {
        self.k_max * c.u2
    }

    pub fn spring_torque(&self, q: f64, c: &ControlInput) -> f64 {
        self.stiffness(c) * (c.u1 - q)
    }

    pub fn damping(
        &self,
        c: &ControlInput,
        scheme: BrakingScheme,
        dmp: &DampingModuleParams,
    ) -> Result<f64, PlantError> {
        let ctx = CriticalContext {
            stiffness: self.stiffness(c),
            inertia: self.inertia(),
        };
        Ok(damping_from_u(scheme, dmp, c.u3, Some(ctx))?)
    }
}

/// Time derivative of `(q, q̇)`:
/// `m l² q̈ = k̄u₂(u₁ − q) − d(u₃)·q̇ − b·q̇`.
pub fn pendulum_deriv(
    s: &DVector<f64>,
    c: &ControlInput,
    p: &PendulumParams,
    scheme: BrakingScheme,
    dmp: &DampingModuleParams,
) -> Result<DVector<f64>, PlantError> {
    let (q, qdot) = (s[0], s[1]);
    let d = p.damping(c, scheme, dmp)?;
    let qddot = (p.spring_torque(q, c) - (d + p.b) * qdot) / p.inertia();
    Ok(DVector::from_vec(vec![qdot, qddot]))
}
