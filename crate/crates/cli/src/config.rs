//! Experiment configuration files.
//!
//! A config is a TOML document. Unknown keys are rejected and every
//! physical parameter is checked when the file is loaded, so a bad value
//! fails before anything is simulated.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use hybrid_damping::damping::{BrakingScheme, DampingModuleParams, MotorConstants};
use hybrid_damping::ilqr::{CostSpec, SolverOptions};
use hybrid_damping::plant::{ControlInput, MaccepaParams, PendulumParams, PlantModel, SimSettings};
use hybrid_damping::switch_sim::RigParams;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Pendulum,
    Maccepa,
    Rig,
}

/// Scheme names accepted in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Dynamic,
    Regenerative,
    Hybrid,
    Fixed,
    Critical,
}

impl SchemeName {
    pub const ALL: [SchemeName; 5] = [
        SchemeName::Dynamic,
        SchemeName::Regenerative,
        SchemeName::Hybrid,
        SchemeName::Fixed,
        SchemeName::Critical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dynamic => "dynamic",
            Self::Regenerative => "regenerative",
            Self::Hybrid => "hybrid",
            Self::Fixed => "fixed",
            Self::Critical => "critical",
        }
    }
}

impl FromStr for SchemeName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s.trim())
            .ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorSection {
    pub n_d: f64,
    pub k_t: f64,
    /// Defaults to `k_t`.
    pub k_b: Option<f64>,
    pub r_m: f64,
    pub r_l: f64,
    pub u_r: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateSection {
    pub d_bar2: f64,
    pub d_bar3: f64,
    pub alpha: f64,
    pub u_r: f64,
}

/// The damper given either by motor constants or by its aggregate bounds.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DampingSection {
    Motor(MotorSection),
    Aggregates(AggregateSection),
}

impl DampingSection {
    pub fn module(&self) -> Result<DampingModuleParams, CliError> {
        let r = match self {
            Self::Motor(m) => DampingModuleParams::from_motor(m.constants(), m.u_r),
            Self::Aggregates(a) => DampingModuleParams::from_aggregates(a.d_bar2, a.d_bar3, a.alpha, a.u_r),
        };
        r.map_err(|e| CliError::Config(format!("[damping]: {e}")))
    }
}

impl MotorSection {
    pub fn constants(&self) -> MotorConstants {
        MotorConstants {
            n_d: self.n_d,
            k_t: self.k_t,
            k_b: self.k_b.unwrap_or(self.k_t),
            r_m: self.r_m,
            r_l: self.r_l,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumSection {
    pub mass: f64,
    pub length: f64,
    pub friction: f64,
    pub k_max: f64,
    pub u1_range: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaccepaSection {
    pub b: f64,
    pub c: f64,
    pub r: f64,
    pub kappa: f64,
    pub inertia: f64,
    pub friction: f64,
    pub beta: f64,
    #[serde(default)]
    pub tau_ext: f64,
    pub u1_range: [f64; 2],
    pub u2_range: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub q_star: f64,
    pub t_f: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub control_freq: f64,
}

/// Optional overrides of the solver defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub lambda_init: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub lambda_growth: Option<f64>,
    pub lambda_shrink: Option<f64>,
    pub backtrack: Option<f64>,
    pub min_step: Option<f64>,
    pub fd_step: Option<f64>,
}

/// Constant initial guess; `pin_u1` holds the equilibrium command there.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    #[serde(default)]
    pub pin_u1: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FixedLevel {
    Value(f64),
    /// `"d_bar1"` or `"d_bar2"`.
    Named(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub fixed_damping: FixedLevel,
    pub zeta: f64,
    /// When set, the critical baseline runs this constant stiffness command
    /// instead of optimising it.
    pub critical_stiffness: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigSection {
    pub v_bb: f64,
    pub pwm_freq: f64,
    pub inertia: f64,
    pub measurement_noise: f64,
    pub steady_tol: f64,
    pub measure_cycles: usize,
    pub duration: f64,
    pub repetitions: usize,
    pub u_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvesSection {
    pub points: usize,
    pub qdot: f64,
}

impl Default for CurvesSection {
    fn default() -> Self {
        Self { points: 1001, qdot: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub schemes: Option<Vec<SchemeName>>,
    #[serde(default = "default_band")]
    pub settling_band: f64,
    pub damping: DampingSection,
    pub pendulum: Option<PendulumSection>,
    pub maccepa: Option<MaccepaSection>,
    pub cost: Option<CostSection>,
    pub sim: Option<SimSection>,
    #[serde(default)]
    pub solver: SolverSection,
    pub init: Option<InitSection>,
    pub baselines: Option<BaselineSection>,
    pub rig: Option<RigSection>,
    #[serde(default)]
    pub curves: CurvesSection,
}

fn default_band() -> f64 {
    0.02
}

fn missing(section: &str, experiment: Experiment) -> CliError {
    CliError::Config(format!("[{section}] is required for experiment {experiment:?}"))
}

fn range(name: &str, r: [f64; 2]) -> Result<(f64, f64), CliError> {
    if r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] {
        Ok((r[0], r[1]))
    } else {
        Err(CliError::Config(format!("{name} = {r:?} is not an ordered finite range")))
    }
}

/// Everything a reaching comparison needs, validated.
#[derive(Debug, Clone)]
pub struct ReachSetup {
    pub model: PlantModel,
    pub damping: DampingModuleParams,
    pub cost: CostSpec,
    pub settings: SimSettings,
    pub solver: SolverOptions,
    pub init: ControlInput,
    pub pin_u1: bool,
    pub fixed_damping: f64,
    pub zeta: f64,
    pub critical_stiffness: Option<f64>,
    pub settling_band: f64,
    pub schemes: Vec<SchemeName>,
}

impl ReachSetup {
    pub fn scheme(&self, name: SchemeName) -> BrakingScheme {
        match name {
            SchemeName::Dynamic => BrakingScheme::Dynamic,
            SchemeName::Regenerative => BrakingScheme::Regenerative,
            SchemeName::Hybrid => BrakingScheme::Hybrid,
            SchemeName::Fixed => BrakingScheme::FixedDamping(self.fixed_damping),
            SchemeName::Critical => BrakingScheme::CriticallyDamped(self.zeta),
        }
    }
}

/// Rig parameters plus sweep settings.
#[derive(Debug, Clone)]
pub struct SweepSetup {
    pub rig: RigParams,
    pub duration: f64,
    pub repetitions: usize,
    pub u_grid: Vec<f64>,
    pub seed: u64,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Checks every block the experiment refers to.
    pub fn validate(&self) -> Result<(), CliError> {
        self.damping.module()?;
        if !(self.settling_band > 0.0) {
            return Err(CliError::Config(format!("settling_band = {} must be > 0", self.settling_band)));
        }
        if self.curves.points < 2 {
            return Err(CliError::Config("[curves] points must be >= 2".into()));
        }
        match self.experiment {
            Experiment::Pendulum | Experiment::Maccepa => self.reach_setup().map(|_| ()),
            Experiment::Rig => self.sweep_setup().map(|_| ()),
        }
    }

    pub fn reach_setup(&self) -> Result<ReachSetup, CliError> {
        let exp = self.experiment;
        let damping = self.damping.module()?;
        let model = match exp {
            Experiment::Pendulum => {
                let p = self.pendulum.as_ref().ok_or_else(|| missing("pendulum", exp))?;
                PlantModel::Pendulum(PendulumParams {
                    m: p.mass,
                    l: p.length,
                    b: p.friction,
                    k_max: p.k_max,
                    u1_range: range("pendulum.u1_range", p.u1_range)?,
                })
            }
            Experiment::Maccepa => {
                let p = self.maccepa.as_ref().ok_or_else(|| missing("maccepa", exp))?;
                PlantModel::Maccepa(MaccepaParams {
                    b_len: p.b,
                    c_len: p.c,
                    r: p.r,
                    kappa: p.kappa,
                    inertia: p.inertia,
                    b: p.friction,
                    beta: p.beta,
                    tau_ext: p.tau_ext,
                    u1_range: range("maccepa.u1_range", p.u1_range)?,
                    u2_range: range("maccepa.u2_range", p.u2_range)?,
                })
            }
            Experiment::Rig => {
                return Err(CliError::Config("experiment rig has no reaching task; use `sweep`".into()));
            }
        };
        model.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let sim = self.sim.as_ref().ok_or_else(|| missing("sim", exp))?;
        let settings = SimSettings {
            dt: sim.dt,
            control_freq: sim.control_freq,
        };
        let c = self.cost.as_ref().ok_or_else(|| missing("cost", exp))?;
        let cost = CostSpec {
            w1: c.w1,
            w2: c.w2,
            w3: c.w3,
            w4: c.w4,
            q_star: c.q_star,
            t_f: c.t_f,
            control_freq: sim.control_freq,
        };
        cost.validate().map_err(|e| CliError::Config(format!("[cost]: {e}")))?;
        settings
            .substeps()
            .and_then(|_| settings.horizon(c.t_f))
            .map_err(|e| CliError::Config(format!("[sim]: {e}")))?;

        let solver = self.solver.options()?;
        let init = self.init.as_ref().ok_or_else(|| missing("init", exp))?;
        let b = self.baselines.as_ref().ok_or_else(|| missing("baselines", exp))?;
        let fixed_damping = match &b.fixed_damping {
            FixedLevel::Value(v) => *v,
            FixedLevel::Named(n) if n == "d_bar1" => damping.d_bar1(),
            FixedLevel::Named(n) if n == "d_bar2" => damping.d_bar2(),
            FixedLevel::Named(n) => {
                return Err(CliError::Config(format!(
                    "baselines.fixed_damping = `{n}`; expected a number, \"d_bar1\" or \"d_bar2\""
                )))
            }
        };
        let setup = ReachSetup {
            model,
            damping,
            cost,
            settings,
            solver,
            init: ControlInput::new(init.u1, init.u2, init.u3),
            pin_u1: init.pin_u1,
            fixed_damping,
            zeta: b.zeta,
            critical_stiffness: b.critical_stiffness,
            settling_band: self.settling_band,
            schemes: self.schemes.clone().unwrap_or_else(|| SchemeName::ALL.to_vec()),
        };
        for name in SchemeName::ALL {
            setup
                .scheme(name)
                .validate(&damping)
                .map_err(|e| CliError::Config(format!("[baselines] {}: {e}", name.as_str())))?;
        }
        Ok(setup)
    }

    pub fn sweep_setup(&self) -> Result<SweepSetup, CliError> {
        let r = self.rig.as_ref().ok_or_else(|| missing("rig", self.experiment))?;
        let DampingSection::Motor(m) = &self.damping else {
            return Err(CliError::Config("the rig needs motor constants in [damping]".into()));
        };
        let rig = RigParams {
            v_bb: r.v_bb,
            motor: m.constants(),
            u_r: m.u_r,
            pwm_freq: r.pwm_freq,
            inertia: r.inertia,
            measurement_noise: r.measurement_noise,
            steady_tol: r.steady_tol,
            measure_cycles: r.measure_cycles,
        };
        rig.validate().map_err(|e| CliError::Config(format!("[rig]: {e}")))?;
        if !(r.duration >= 20.0 * rig.mechanical_time_constant()) {
            return Err(CliError::Config(format!(
                "rig.duration = {} s must cover 20 mechanical time constants ({:.3} s)",
                r.duration,
                20.0 * rig.mechanical_time_constant()
            )));
        }
        if r.repetitions == 0 {
            return Err(CliError::Config("rig.repetitions must be >= 1".into()));
        }
        let u_grid = r.u_grid.clone().unwrap_or_else(hybrid_damping::switch_sim::default_u_grid);
        if u_grid.is_empty() || u_grid.iter().any(|u| !(0.0..=1.0).contains(u)) {
            return Err(CliError::Config("rig.u_grid must be non-empty and inside [0, 1]".into()));
        }
        Ok(SweepSetup {
            rig,
            duration: r.duration,
            repetitions: r.repetitions,
            u_grid,
            seed: self.seed,
        })
    }
}

impl SolverSection {
    pub fn options(&self) -> Result<SolverOptions, CliError> {
        let d = SolverOptions::default();
        let o = SolverOptions {
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            lambda_init: self.lambda_init.unwrap_or(d.lambda_init),
            lambda_min: self.lambda_min.unwrap_or(d.lambda_min),
            lambda_max: self.lambda_max.unwrap_or(d.lambda_max),
            lambda_growth: self.lambda_growth.unwrap_or(d.lambda_growth),
            lambda_shrink: self.lambda_shrink.unwrap_or(d.lambda_shrink),
            backtrack: self.backtrack.unwrap_or(d.backtrack),
            min_step: self.min_step.unwrap_or(d.min_step),
            fd_step: self.fd_step.unwrap_or(d.fd_step),
            bounds: None,
        };
        o.validate().map_err(|e| CliError::Config(format!("[solver]: {e}")))?;
        Ok(o)
    }
}
