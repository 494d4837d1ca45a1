//! MACCEPA with a damper motor on the joint. Equilibrium angle and spring
//! pretension are set by two position servos modelled as critically damped
//! second-order systems.
//!
//! State layout: `(q, q̇, θ₁, θ₂, θ̇₁, θ̇₂)`.

use std::f64::consts::FRAC_PI_3;

use nalgebra::DVector;

use super::{ControlInput, PlantError};
use crate::damping::{damping_from_u, BrakingScheme, CriticalContext, DampingModuleParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaccepaParams {
    /// Lever length B, m.
    pub b_len: f64,
    /// Lever length C, m.
    pub c_len: f64,
    /// Pretension drum radius, m.
    pub r: f64,
    /// Linear spring constant, N/m.
    pub kappa: f64,
    /// Link inertia, kg·m².
    pub inertia: f64,
    /// Joint viscous friction, N·m·s/rad.
    pub b: f64,
    /// Servo bandwidth, 1/s.
    pub beta: f64,
    /// External joint torque, N·m.
    pub tau_ext: f64,
    pub u1_range: (f64, f64),
    pub u2_range: (f64, f64),
}

impl Default for MaccepaParams {
    fn default() -> Self {
        Self {
            b_len: 0.036,
            c_len: 0.135,
            r: 0.015,
            kappa: 394.0,
            inertia: 0.0015,
            b: 0.0023,
            beta: 30.0,
            tau_ext: 0.0,
            u1_range: (-FRAC_PI_3, FRAC_PI_3),
            u2_range: (0.0, FRAC_PI_3),
        }
    }
}

impl MaccepaParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        for (name, v) in [
            ("B", self.b_len),
            ("C", self.c_len),
            ("r", self.r),
            ("kappa", self.kappa),
            ("inertia", self.inertia),
            ("beta", self.beta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlantError::InvalidParameter { name, value: v });
            }
        }
        if self.b_len == self.c_len {
            return Err(PlantError::InvalidParameter {
                name: "C",
                value: self.c_len,
            });
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(PlantError::InvalidParameter { name: "b", value: self.b });
        }
        if !self.tau_ext.is_finite() {
            return Err(PlantError::InvalidParameter {
                name: "tau_ext",
                value: self.tau_ext,
            });
        }
        if !(self.u1_range.0 <= self.u1_range.1) {
            return Err(PlantError::InvalidParameter {
                name: "u1_range",
                value: self.u1_range.0,
            });
        }
        if !(self.u2_range.0 >= 0.0 && self.u2_range.0 <= self.u2_range.1) {
            return Err(PlantError::InvalidParameter {
                name: "u2_range",
                value: self.u2_range.0,
            });
        }
        Ok(())
    }

    fn pretension_offset(&self) -> f64 {
        (self.c_len - self.b_len).abs()
    }

    /// Spring length term `A(q, θ₁) = sqrt(B² + C² − 2BC·cos(θ₁ − q))`.
    pub fn spring_span(&self, q: f64, theta1: f64) -> f64 {
        let (b, c) = (self.b_len, self.c_len);
        // clamp guards the B ≈ C rounding case; A >= |C - B| analytically
        (b * b + c * c - 2.0 * b * c * (theta1 - q).cos())
            .max(0.0)
            .sqrt()
            .max(self.pretension_offset())
    }
}

/// Joint torque produced by the spring.
pub fn maccepa_spring_torque(q: f64, theta1: f64, theta2: f64, p: &MaccepaParams) -> f64 {
    let phi = theta1 - q;
    let a = p.spring_span(q, theta1);
    p.kappa * p.b_len * p.c_len * phi.sin() * (1.0 + (p.r * theta2 - p.pretension_offset()) / a)
}

/// Restoring joint stiffness `k = −∂τ_s/∂q` (equivalently `∂τ_s/∂θ₁`).
///
/// With `φ = θ₁ − q`, `P = rθ₂ − |C − B|` and `dA/dφ = BC·sin φ / A`:
/// `k = κBC·[cos φ·(1 + P/A) − BC·P·sin²φ / A³]`.
pub fn maccepa_stiffness(q: f64, theta1: f64, theta2: f64, p: &MaccepaParams) -> f64 {
    let phi = theta1 - q;
    let a = p.spring_span(q, theta1);
    let bc = p.b_len * p.c_len;
    let pre = p.r * theta2 - p.pretension_offset();
    let (s, c) = phi.sin_cos();
    p.kappa * bc * (c * (1.0 + pre / a) - bc * pre * s * s / (a * a * a))
}

pub fn maccepa_damping(
    s: &DVector<f64>,
    c: &ControlInput,
    p: &MaccepaParams,
    scheme: BrakingScheme,
    dmp: &DampingModuleParams,
) -> Result<f64, PlantError> {
    let critical = match scheme {
        BrakingScheme::CriticallyDamped(_) => Some(CriticalContext {
            stiffness: maccepa_stiffness(s[0], s[2], s[3], p),
            inertia: p.inertia,
        }),
        _ => None,
    };
    Ok(damping_from_u(scheme, dmp, c.u3, critical)?)
}

/// Time derivative of the six-component MACCEPA state.
pub fn maccepa_deriv(
    s: &DVector<f64>,
    c: &ControlInput,
    p: &MaccepaParams,
    scheme: BrakingScheme,
    dmp: &DampingModuleParams,
) -> Result<DVector<f64>, PlantError> {
    let (q, qdot, th1, th2, th1dot, th2dot) = (s[0], s[1], s[2], s[3], s[4], s[5]);
    let d = maccepa_damping(s, c, p, scheme, dmp)?;
    let tau_s = maccepa_spring_torque(q, th1, th2, p);
    let qddot = (tau_s - (d + p.b) * qdot - p.tau_ext) / p.inertia;
    let beta = p.beta;
    let th1ddot = beta * beta * (c.u1 - th1) - 2.0 * beta * th1dot;
    let th2ddot = beta * beta * (c.u2 - th2) - 2.0 * beta * th2dot;
    Ok(DVector::from_vec(vec![qdot, qddot, th1dot, th2dot, th1ddot, th2ddot]))
}
