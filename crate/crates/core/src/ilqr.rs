//! Iterative LQR over zero-order-hold RK4 dynamics.
//!
//! Dynamics are linearised by central differences of the discrete step map.
//! The backward pass regularises the control Hessian and treats channels
//! resting on a bound (and pushed against it by the gradient) as clamped;
//! the forward pass clamps every control and backtracks on the step size.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::damping::{regen_power_from_u, BrakingScheme, DampingModuleParams};
use crate::plant::{
    hold_step, simulate, ActuatedPlant, ControlBounds, ControlInput, Dynamics, PlantError, SimSettings, Trajectory,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IlqrError {
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("initial rollout diverged: {0}")]
    InitialRollout(PlantError),
    #[error("linearization failed at knot {knot}")]
    LinearizationFailed { knot: usize },
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
}

/// Weights and task of the reaching cost
/// `∫ w₁(q − q*)² + w₂(u₁ − q*)² + w₃u₂² − w₄P_rege dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSpec {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    /// Target joint angle, rad.
    pub q_star: f64,
    /// Horizon, s.
    pub t_f: f64,
    /// Control rate, Hz.
    pub control_freq: f64,
}

impl CostSpec {
    pub fn validate(&self) -> Result<(), IlqrError> {
        for (name, w) in [("w2", self.w2), ("w3", self.w3), ("w4", self.w4)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(IlqrError::InvalidInput(format!("{name} = {w} must be >= 0")));
            }
        }
        if !(self.w1.is_finite() && self.w1 > 0.0) {
            return Err(IlqrError::InvalidInput(format!("w1 = {} must be > 0", self.w1)));
        }
        if !(self.t_f > 0.0 && self.control_freq > 0.0) {
            return Err(IlqrError::InvalidInput("t_f and control_freq must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers J by less than this fraction.
    pub tolerance: f64,
    pub lambda_init: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_growth: f64,
    pub lambda_shrink: f64,
    /// Step-size multiplier applied on each failed line-search trial.
    pub backtrack: f64,
    /// Smallest step size tried before the iteration is rejected.
    pub min_step: f64,
    /// Finite-difference perturbation for linearization.
    pub fd_step: f64,
    /// Per-channel bounds overriding the plant's; equal ends fix a channel.
    pub bounds: Option<ControlBounds>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-6,
            lambda_init: 1e-6,
            lambda_min: 1e-9,
            lambda_max: 1e9,
            lambda_growth: 10.0,
            lambda_shrink: 0.1,
            backtrack: 0.5,
            min_step: 1e-3,
            fd_step: 1e-6,
            bounds: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), IlqrError> {
        let bad = |what: &str| Err(IlqrError::InvalidInput(what.to_owned()));
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be > 0");
        }
        if !(self.lambda_min >= 1e-9 && self.lambda_max <= 1e9 && self.lambda_min <= self.lambda_max) {
            return bad("lambda bounds must lie within [1e-9, 1e9]");
        }
        if !(self.lambda_init >= self.lambda_min && self.lambda_init <= self.lambda_max) {
            return bad("lambda_init outside [lambda_min, lambda_max]");
        }
        if !(self.lambda_growth > 1.0 && self.lambda_shrink > 0.0 && self.lambda_shrink < 1.0) {
            return bad("lambda_growth must be > 1 and lambda_shrink in (0, 1)");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0 && self.min_step > 0.0 && self.min_step <= 1.0) {
            return bad("backtrack must be in (0, 1) and min_step in (0, 1]");
        }
        if !(self.fd_step > 0.0) {
            return bad("fd_step must be > 0");
        }
        Ok(())
    }
}

/// Second-order expansion of a running cost rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CostExpansion {
    pub lx: DVector<f64>,
    pub lu: DVector<f64>,
    pub lxx: DMatrix<f64>,
    pub luu: DMatrix<f64>,
    /// `∂²l/∂u∂x`, m × n.
    pub lux: DMatrix<f64>,
}

/// Running cost rate `l(x, u)` (integrated with the rectangle rule at the
/// control rate) plus a terminal cost on the final state.
pub trait Cost: Sync {
    fn running(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64;
    fn running_expansion(&self, x: &DVector<f64>, u: &DVector<f64>) -> CostExpansion;
    fn terminal(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }
    fn terminal_expansion(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        (DVector::zeros(x.len()), DMatrix::zeros(x.len(), x.len()))
    }
}

/// A finite-horizon problem over a discretised continuous plant.
pub struct Problem<'a, D: Dynamics + ?Sized, C: Cost + ?Sized> {
    pub dynamics: &'a D,
    pub cost: &'a C,
    pub x0: DVector<f64>,
    pub horizon: usize,
    /// RK4 step, s.
    pub dt: f64,
    /// RK4 steps per control interval.
    pub substeps: usize,
    pub bounds: ControlBounds,
}

impl<D: Dynamics + ?Sized, C: Cost + ?Sized> Problem<'_, D, C> {
    pub fn hold(&self) -> f64 {
        self.dt * self.substeps as f64
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        hold_step(self.dynamics, x, u, self.dt, self.substeps)
    }

    /// Projects `u` onto the problem bounds.
    pub fn clamp(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            u.len(),
            u.iter().zip(&self.bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)),
        )
    }

    /// Simulates `us` (clamped) from `x0`, returning knot states and total cost.
    pub fn rollout(&self, us: &[DVector<f64>]) -> Result<(Vec<DVector<f64>>, f64), PlantError> {
        let mut xs = Vec::with_capacity(us.len() + 1);
        xs.push(self.x0.clone());
        let mut j = 0.0;
        for (k, u) in us.iter().enumerate() {
            let u = self.clamp(u);
            let x = xs.last().unwrap();
            j += self.cost.running(x, &u) * self.hold();
            let next = self.step(x, &u).map_err(|e| match e {
                PlantError::Diverged { .. } => PlantError::Diverged { t: k as f64 * self.hold() },
                other => other,
            })?;
            xs.push(next);
        }
        j += self.cost.terminal(xs.last().unwrap());
        Ok((xs, j))
    }

    pub fn total_cost(&self, us: &[DVector<f64>]) -> Result<f64, PlantError> {
        self.rollout(us).map(|(_, j)| j)
    }
}

/// Central-difference Jacobians `(A, B)` of the discrete step map at `(x, u)`.
///
/// Control perturbations that would leave `bounds` fall back to one-sided
/// differences; channels with coincident bounds get a zero column.
pub fn linearize<F>(
    step: F,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
    bounds: Option<&ControlBounds>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), PlantError>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>, PlantError>,
{
    let n = x.len();
    let m = u.len();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let col = (step(&xp, u)? - step(&xm, u)?) / (2.0 * h);
        a.set_column(i, &col);
    }
    let mut base: Option<DVector<f64>> = None;
    for i in 0..m {
        let (lo, hi) = bounds.map(|b| b[i]).unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        if hi - lo <= 0.0 {
            continue;
        }
        let up_ok = u[i] + h <= hi;
        let down_ok = u[i] - h >= lo;
        let mut up = u.clone();
        let mut down = u.clone();
        up[i] += h;
        down[i] -= h;
        let col = match (up_ok, down_ok) {
            (true, true) => (step(x, &up)? - step(x, &down)?) / (2.0 * h),
            (true, false) => {
                let f0 = base.get_or_insert(step(x, u)?).clone();
                (step(x, &up)? - f0) / h
            }
            (false, true) => {
                let f0 = base.get_or_insert(step(x, u)?).clone();
                (f0 - step(x, &down)?) / h
            }
            (false, false) => continue,
        };
        b.set_column(i, &col);
    }
    if a.iter().chain(b.iter()).all(|v| v.is_finite()) {
        Ok((a, b))
    } else {
        Err(PlantError::Diverged { t: f64::NAN })
    }
}

/// Outcome of [`optimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct IlqrSolution {
    pub controls: Vec<DVector<f64>>,
    pub states: Vec<DVector<f64>>,
    pub cost: f64,
    /// Cost of the initial guess followed by each accepted iterate.
    pub history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

struct Linearization {
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    l: Vec<CostExpansion>,
    vx_final: DVector<f64>,
    vxx_final: DMatrix<f64>,
}

fn linearize_trajectory<D, C>(
    problem: &Problem<'_, D, C>,
    xs: &[DVector<f64>],
    us: &[DVector<f64>],
    h: f64,
) -> Result<Linearization, IlqrError>
where
    D: Dynamics + ?Sized,
    C: Cost + ?Sized,
{
    let jac: Vec<_> = (0..us.len())
        .into_par_iter()
        .map(|k| {
            linearize(|x, u| problem.step(x, u), &xs[k], &us[k], h, Some(&problem.bounds))
                .map_err(|_| IlqrError::LinearizationFailed { knot: k })
        })
        .collect::<Result<_, _>>()?;
    let (a, b) = jac.into_iter().unzip();
    let l = (0..us.len())
        .map(|k| problem.cost.running_expansion(&xs[k], &us[k]))
        .collect();
    let (vx_final, vxx_final) = problem.cost.terminal_expansion(xs.last().unwrap());
    Ok(Linearization {
        a,
        b,
        l,
        vx_final,
        vxx_final,
    })
}

/// Gradient of the total discrete cost with respect to every control,
/// from the adjoint recursion over the linearised dynamics.
pub fn control_gradient<D, C>(
    problem: &Problem<'_, D, C>,
    us: &[DVector<f64>],
    h: f64,
) -> Result<Vec<DVector<f64>>, IlqrError>
where
    D: Dynamics + ?Sized,
    C: Cost + ?Sized,
{
    let (xs, _) = problem.rollout(us).map_err(IlqrError::InitialRollout)?;
    let us: Vec<_> = us.iter().map(|u| problem.clamp(u)).collect();
    let lin = linearize_trajectory(problem, &xs, &us, h)?;
    let dt = problem.hold();
    let mut adj = lin.vx_final.clone();
    let mut grads = vec![DVector::zeros(0); us.len()];
    for k in (0..us.len()).rev() {
        grads[k] = &lin.l[k].lu * dt + lin.b[k].transpose() * &adj;
        adj = &lin.l[k].lx * dt + lin.a[k].transpose() * &adj;
    }
    Ok(grads)
}

struct Policy {
    k: Vec<DVector<f64>>,
    gain: Vec<DMatrix<f64>>,
    /// First-order expected cost change of a full step.
    d1: f64,
}

fn backward_pass<D, C>(
    problem: &Problem<'_, D, C>,
    lin: &Linearization,
    us: &[DVector<f64>],
    lambda: f64,
) -> Option<Policy>
where
    D: Dynamics + ?Sized,
    C: Cost + ?Sized,
{
    let dt = problem.hold();
    let n = problem.x0.len();
    let m = us[0].len();
    let horizon = us.len();
    let mut vx = lin.vx_final.clone();
    let mut vxx = lin.vxx_final.clone();
    let mut ks = vec![DVector::zeros(m); horizon];
    let mut gains = vec![DMatrix::zeros(m, n); horizon];
    let mut d1 = 0.0;

    for t in (0..horizon).rev() {
        let (a, b, l) = (&lin.a[t], &lin.b[t], &lin.l[t]);
        let at = a.transpose();
        let bt = b.transpose();
        let qx = &l.lx * dt + &at * &vx;
        let qu = &l.lu * dt + &bt * &vx;
        let qxx = &l.lxx * dt + &at * &vxx * a;
        let quu = &l.luu * dt + &bt * &vxx * b;
        let qux = &l.lux * dt + &bt * &vxx * a;

        let free: Vec<usize> = (0..m)
            .filter(|&i| {
                let (lo, hi) = problem.bounds[i];
                let eps = 1e-10 * (1.0 + hi.abs().max(lo.abs()));
                if hi - lo <= eps {
                    return false;
                }
                let at_lo = us[t][i] <= lo + eps && qu[i] > 0.0;
                let at_hi = us[t][i] >= hi - eps && qu[i] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();

        let mut k = DVector::zeros(m);
        let mut gain = DMatrix::zeros(m, n);
        if !free.is_empty() {
            let nf = free.len();
            let mut qff = DMatrix::from_fn(nf, nf, |r, c| quu[(free[r], free[c])]);
            for i in 0..nf {
                qff[(i, i)] += lambda;
            }
            let chol = qff.cholesky()?;
            let qu_f = DVector::from_fn(nf, |r, _| qu[free[r]]);
            let qux_f = DMatrix::from_fn(nf, n, |r, c| qux[(free[r], c)]);
            let k_f = -chol.solve(&qu_f);
            let gain_f = -chol.solve(&qux_f);
            for (r, &i) in free.iter().enumerate() {
                k[i] = k_f[r];
                gain.set_row(i, &gain_f.row(r));
            }
        }

        d1 += k.dot(&qu);

        let gt = gain.transpose();
        vx = &qx + &gt * &quu * &k + &gt * &qu + qux.transpose() * &k;
        vxx = &qxx + &gt * &quu * &gain + &gt * &qux + qux.transpose() * &gain;
        vxx = (&vxx + vxx.transpose()) * 0.5;

        ks[t] = k;
        gains[t] = gain;
    }
    Some(Policy {
        k: ks,
        gain: gains,
        d1,
    })
}

fn forward_pass<D, C>(
    problem: &Problem<'_, D, C>,
    xs: &[DVector<f64>],
    us: &[DVector<f64>],
    policy: &Policy,
    step: f64,
) -> Option<(Vec<DVector<f64>>, Vec<DVector<f64>>, f64)>
where
    D: Dynamics + ?Sized,
    C: Cost + ?Sized,
{
    let mut new_xs = Vec::with_capacity(xs.len());
    let mut new_us = Vec::with_capacity(us.len());
    new_xs.push(problem.x0.clone());
    let mut j = 0.0;
    for t in 0..us.len() {
        let x = &new_xs[t];
        let u = &us[t] + &policy.k[t] * step + &policy.gain[t] * (x - &xs[t]);
        let u = problem.clamp(&u);
        j += problem.cost.running(x, &u) * problem.hold();
        let next = problem.step(x, &u).ok()?;
        new_xs.push(next);
        new_us.push(u);
    }
    j += problem.cost.terminal(new_xs.last().unwrap());
    j.is_finite().then_some((new_xs, new_us, j))
}

/// Runs ILQR from `u_init`. On failure to make progress the best iterate so
/// far is returned with `converged = false`.
pub fn optimize<D, C>(
    problem: &Problem<'_, D, C>,
    u_init: Vec<DVector<f64>>,
    opts: &SolverOptions,
) -> Result<IlqrSolution, IlqrError>
where
    D: Dynamics + ?Sized,
    C: Cost + ?Sized,
{
    opts.validate()?;
    if u_init.len() != problem.horizon || u_init.is_empty() {
        return Err(IlqrError::InvalidInput(format!(
            "expected {} controls, got {}",
            problem.horizon,
            u_init.len()
        )));
    }
    if problem.bounds.len() != problem.dynamics.control_dim() {
        return Err(IlqrError::InvalidInput("bounds do not match control dimension".into()));
    }
    for (t, u) in u_init.iter().enumerate() {
        if u.len() != problem.dynamics.control_dim() {
            return Err(IlqrError::InvalidInput(format!("control {t} has the wrong dimension")));
        }
        for (i, (v, (lo, hi))) in u.iter().zip(&problem.bounds).enumerate() {
            let tol = 1e-12 * (1.0 + v.abs());
            if *v < lo - tol || *v > hi + tol {
                return Err(IlqrError::InvalidInput(format!(
                    "u_init[{t}][{i}] = {v} outside [{lo}, {hi}]"
                )));
            }
        }
    }

    let mut us: Vec<_> = u_init.iter().map(|u| problem.clamp(u)).collect();
    let (mut xs, mut cost) = problem.rollout(&us).map_err(IlqrError::InitialRollout)?;
    let mut history = vec![cost];
    let mut lambda = opts.lambda_init;
    let mut converged = false;
    let mut iterations = 0;
    let mut lin = linearize_trajectory(problem, &xs, &us, opts.fd_step)?;

    while iterations < opts.max_iterations {
        iterations += 1;
        let policy = match backward_pass(problem, &lin, &us, lambda) {
            Some(p) => p,
            None => {
                lambda *= opts.lambda_growth;
                if lambda > opts.lambda_max {
                    break;
                }
                continue;
            }
        };
        if -policy.d1 <= opts.tolerance * cost.abs().max(f64::MIN_POSITIVE) {
            // first-order improvement available is negligible
            converged = true;
            break;
        }

        let mut step = 1.0;
        let mut accepted = None;
        while step >= opts.min_step {
            if let Some((nxs, nus, j)) = forward_pass(problem, &xs, &us, &policy, step) {
                if j < cost {
                    accepted = Some((nxs, nus, j));
                    break;
                }
            }
            step *= opts.backtrack;
        }

        match accepted {
            Some((nxs, nus, j)) => {
                let rel = (cost - j) / cost.abs().max(f64::MIN_POSITIVE);
                xs = nxs;
                us = nus;
                cost = j;
                history.push(j);
                lambda = (lambda * opts.lambda_shrink).max(opts.lambda_min);
                if rel < opts.tolerance {
                    converged = true;
                    break;
                }
                lin = linearize_trajectory(problem, &xs, &us, opts.fd_step)?;
            }
            None => {
                lambda *= opts.lambda_growth;
                if lambda > opts.lambda_max {
                    break;
                }
            }
        }
    }

    Ok(IlqrSolution {
        controls: us,
        states: xs,
        cost,
        history,
        converged,
        iterations,
    })
}

/// The reaching cost bound to a plant's braking scheme.
#[derive(Debug, Clone, Copy)]
pub struct ReachingCost {
    pub spec: CostSpec,
    pub scheme: BrakingScheme,
    pub damping: DampingModuleParams,
    /// Weight of the final-state task term, `w₁·Δt` by default.
    pub terminal_weight: f64,
}

impl ReachingCost {
    pub fn new(spec: CostSpec, scheme: BrakingScheme, damping: DampingModuleParams) -> Self {
        Self {
            spec,
            scheme,
            damping,
            terminal_weight: spec.w1 / spec.control_freq,
        }
    }

    /// Regeneration power per unit squared speed for command `u`.
    fn power_gain(&self, u: f64) -> f64 {
        regen_power_from_u(self.scheme, &self.damping, u.clamp(0.0, 1.0), 1.0).unwrap_or(0.0)
    }

    fn power_gain_slope(&self, u: f64) -> f64 {
        if !matches!(self.scheme, BrakingScheme::Regenerative | BrakingScheme::Hybrid) {
            return 0.0;
        }
        let h = 1e-6;
        let lo = (u - h).max(0.0);
        let hi = (u + h).min(1.0);
        (self.power_gain(hi) - self.power_gain(lo)) / (hi - lo)
    }
}

/// Scalar reaching cost rate at one instant.
pub fn running_cost(s: &DVector<f64>, c: &ControlInput, spec: &CostSpec, scheme: BrakingScheme, dmp: &DampingModuleParams) -> f64 {
    let p_rege = regen_power_from_u(scheme, dmp, c.u3.clamp(0.0, 1.0), s[1]).unwrap_or(0.0);
    spec.w1 * (s[0] - spec.q_star).powi(2) + spec.w2 * (c.u1 - spec.q_star).powi(2) + spec.w3 * c.u2 * c.u2
        - spec.w4 * p_rege
}

impl Cost for ReachingCost {
    fn running(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        running_cost(x, &ControlInput::from_slice(u.as_slice()), &self.spec, self.scheme, &self.damping)
    }

    fn running_expansion(&self, x: &DVector<f64>, u: &DVector<f64>) -> CostExpansion {
        let n = x.len();
        let s = &self.spec;
        let (q, qdot) = (x[0], x[1]);
        let gain = self.power_gain(u[2]);
        let slope = self.power_gain_slope(u[2]);

        let mut lx = DVector::zeros(n);
        lx[0] = 2.0 * s.w1 * (q - s.q_star);
        lx[1] = -2.0 * s.w4 * gain * qdot;
        let lu = DVector::from_vec(vec![
            2.0 * s.w2 * (u[0] - s.q_star),
            2.0 * s.w3 * u[1],
            -s.w4 * slope * qdot * qdot,
        ]);
        let mut lxx = DMatrix::zeros(n, n);
        lxx[(0, 0)] = 2.0 * s.w1;
        lxx[(1, 1)] = -2.0 * s.w4 * gain;
        let mut luu = DMatrix::zeros(3, 3);
        luu[(0, 0)] = 2.0 * s.w2;
        luu[(1, 1)] = 2.0 * s.w3;
        let mut lux = DMatrix::zeros(3, n);
        lux[(2, 1)] = -2.0 * s.w4 * slope * qdot;
        CostExpansion { lx, lu, lxx, luu, lux }
    }

    fn terminal(&self, x: &DVector<f64>) -> f64 {
        self.terminal_weight * (x[0] - self.spec.q_star).powi(2)
    }

    fn terminal_expansion(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        let mut vx = DVector::zeros(n);
        let mut vxx = DMatrix::zeros(n, n);
        vx[0] = 2.0 * self.terminal_weight * (x[0] - self.spec.q_star);
        vxx[(0, 0)] = 2.0 * self.terminal_weight;
        (vx, vxx)
    }
}

/// Optimised open-loop command and its simulated execution.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub controls: Vec<ControlInput>,
    pub converged: bool,
    pub cost: f64,
    pub history: Vec<f64>,
    pub iterations: usize,
    pub trajectory: Trajectory,
}

impl SolveResult {
    pub fn write_controls_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# units: t [s], u1 [rad], u2 [rad or -], u3 [-]")?;
        writeln!(w, "t,u1,u2,u3")?;
        let hold = self.trajectory.control_hold;
        for (i, c) in self.controls.iter().enumerate() {
            writeln!(w, "{},{},{},{}", i as f64 * hold, c.u1, c.u2, c.u3)?;
        }
        Ok(())
    }

    pub fn write_history_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# units: iter [-], J [-] (iter 0 is the initial guess)")?;
        writeln!(w, "iter,J")?;
        for (i, j) in self.history.iter().enumerate() {
            writeln!(w, "{i},{j}")?;
        }
        Ok(())
    }
}

/// Bounds used when optimising `plant`: the option override if given, else
/// the plant's, with the damping channel pinned for schemes that ignore it.
pub fn effective_bounds(plant: &ActuatedPlant, opts: &SolverOptions) -> ControlBounds {
    let mut bounds = opts.bounds.clone().unwrap_or_else(|| plant.control_bounds());
    if !plant.scheme.uses_damping_command() {
        bounds[2] = (bounds[2].0, bounds[2].0);
    }
    bounds
}

/// Optimises the reaching task on `plant` and simulates the resulting command.
pub fn solve(
    plant: &ActuatedPlant,
    spec: &CostSpec,
    x0: &DVector<f64>,
    opts: &SolverOptions,
    u_init: &[ControlInput],
    settings: SimSettings,
) -> Result<SolveResult, IlqrError> {
    spec.validate()?;
    if (settings.control_freq - spec.control_freq).abs() > 1e-12 * spec.control_freq {
        return Err(IlqrError::InvalidInput("simulation and cost control rates differ".into()));
    }
    let horizon = settings.horizon(spec.t_f)?;
    let substeps = settings.substeps()?;
    let cost = ReachingCost::new(*spec, plant.scheme, plant.damping);
    let problem = Problem {
        dynamics: plant,
        cost: &cost,
        x0: x0.clone(),
        horizon,
        dt: settings.dt,
        substeps,
        bounds: effective_bounds(plant, opts),
    };
    // pinned channels differ by scheme, so the guess is projected rather than rejected
    let init: Vec<_> = u_init.iter().map(|c| problem.clamp(&c.to_vector())).collect();
    let sol = optimize(&problem, init, opts)?;
    let controls: Vec<_> = sol.controls.iter().map(|u| ControlInput::from_slice(u.as_slice())).collect();
    let trajectory = simulate(plant, &controls, x0, spec.t_f, settings)?;
    Ok(SolveResult {
        controls,
        converged: sol.converged,
        cost: sol.cost,
        history: sol.history,
        iterations: sol.iterations,
        trajectory,
    })
}

/// Simulates a fixed command without optimising it, reporting it in the same
/// form as [`solve`]. Used for baselines whose controls are set in closed form.
pub fn evaluate(
    plant: &ActuatedPlant,
    spec: &CostSpec,
    x0: &DVector<f64>,
    controls: &[ControlInput],
    settings: SimSettings,
) -> Result<SolveResult, IlqrError> {
    spec.validate()?;
    let cost = ReachingCost::new(*spec, plant.scheme, plant.damping);
    let problem = Problem {
        dynamics: plant,
        cost: &cost,
        x0: x0.clone(),
        horizon: settings.horizon(spec.t_f)?,
        dt: settings.dt,
        substeps: settings.substeps()?,
        bounds: plant.control_bounds(),
    };
    if controls.len() != problem.horizon {
        return Err(IlqrError::InvalidInput(format!(
            "expected {} controls, got {}",
            problem.horizon,
            controls.len()
        )));
    }
    let controls: Vec<_> = controls.iter().map(|c| plant.clamp(c)).collect();
    let us: Vec<_> = controls.iter().map(|c| c.to_vector()).collect();
    let j = problem.total_cost(&us).map_err(IlqrError::InitialRollout)?;
    let trajectory = simulate(plant, &controls, x0, spec.t_f, settings)?;
    Ok(SolveResult {
        controls,
        converged: true,
        cost: j,
        history: vec![j],
        iterations: 0,
        trajectory,
    })
}
