//! Simulation and trajectory optimisation for variable impedance actuators
//! whose damper motor mixes dynamic and regenerative braking.
//!
//! - [`damping`]: closed-form damping and regeneration-power models and the
//!   four-switch bridge logic.
//! - [`plant`]: ideal-VIA pendulum and MACCEPA dynamics, RK4 simulation.
//! - [`ilqr`]: box-constrained iterative LQR for the reaching cost.
//! - [`energy`]: work, regenerated energy and task metrics.
//! - [`switch_sim`]: switch-level virtual test rig and current-based estimators.

pub mod damping;
pub mod energy;
pub mod ilqr;
pub mod plant;
pub mod switch_sim;

pub use damping::{BrakingScheme, DampingModuleParams, DutyCycles, MotorConstants, SwitchState};
pub use energy::EnergyReport;
pub use ilqr::{CostSpec, SolveResult, SolverOptions};
pub use plant::{ActuatedPlant, ControlInput, MaccepaParams, PendulumParams, PlantModel, SimSettings, Trajectory};
