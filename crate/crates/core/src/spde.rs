//! The transport-noise Navier-Stokes equation
//!
//! ```text
//! dv + (v.grad) v dt = sqrt(2 nu) (grad v) dW + nu lap v dt - grad p dt       (Ito)
//! dv + (v.grad) v dt = sqrt(2 nu) (grad v) o dW - grad p dt                   (Stratonovich)
//! ```
//!
//! with one spatially uniform 2-d Brownian motion per replica, and the
//! random action whose critical points it describes.
//!
//! For steady Euler data `u` the Stratonovich form is solved exactly by the
//! rigid shift `v(t, x) = u(x + sqrt(2 nu) W_t)`, which is the oracle for the
//! integrators.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::action::ActionSetup;
use crate::error::{Error, Result};
use crate::fields::{ModalBundle, SpectralField, SpectralVectorField, TorusGrid};
use crate::flows::{det2, run_flow, wrap, TrajectoryDrift};
use crate::ns::{courant, pressure_from_nonlinearity, CFL_LIMIT};
use crate::rng::BrownianDriver;
use crate::stats::{log_log_slope, Estimate};

/// Relative size of `P (u.grad) u` below which a field counts as steady Euler.
pub const STEADY_EULER_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Euler-Maruyama on the Ito form.
    Ito,
    /// Heun predictor-corrector on the Stratonovich form.
    StratonovichHeun,
}

impl Scheme {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "ito" => Ok(Scheme::Ito),
            "stratonovich-heun" => Ok(Scheme::StratonovichHeun),
            _ => Err(Error::Config(format!("unknown scheme `{name}` (ito, stratonovich-heun)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Ito => "ito",
            Scheme::StratonovichHeun => "stratonovich-heun",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SPDEConfig {
    pub grid: TorusGrid,
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub replicas: usize,
    pub scheme: Scheme,
    pub seed: u64,
}

impl SPDEConfig {
    pub fn new(grid: &TorusGrid, nu: f64, dt: f64, t_final: f64, replicas: usize, scheme: Scheme, seed: u64) -> Result<Self> {
        let c = SPDEConfig {
            grid: grid.clone(),
            nu,
            dt,
            t_final,
            replicas,
            scheme,
            seed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return Err(Error::Config(format!("viscosity must be non-negative, got {}", self.nu)));
        }
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::Config("dt and t_final must be positive".into()));
        }
        steps_for(self.t_final, self.dt)?;
        if self.replicas == 0 {
            return Err(Error::Config("replica count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

fn steps_for(t_final: f64, dt: f64) -> Result<usize> {
    let steps = (t_final / dt).round();
    if steps < 1.0 || (steps * dt - t_final).abs() > 1e-9 * t_final {
        return Err(Error::Config(format!("t_final = {t_final} is not a multiple of dt = {dt}")));
    }
    Ok(steps as usize)
}

/// One replica of the random velocity.
#[derive(Clone, Debug)]
pub struct SPDEState {
    pub replica: usize,
    pub v: SpectralVectorField,
    pub t: f64,
    pub step: u64,
    /// `W_t` of this replica, accumulated from the increments used.
    pub w: [f64; 2],
}

impl SPDEState {
    pub fn new(replica: usize, v: &SpectralVectorField) -> Self {
        SPDEState {
            replica,
            v: v.clone(),
            t: 0.0,
            step: 0,
            w: [0.0, 0.0],
        }
    }

    /// Pressure of the current velocity, as recovered by the solver.
    pub fn pressure(&self) -> SpectralField {
        pressure_from_nonlinearity(&self.v.advect(&self.v))
    }
}

/// `(dw . grad) v`.
fn transport(v: &SpectralVectorField, dw: [f64; 2]) -> SpectralVectorField {
    let comps = [0, 1].map(|i| {
        let mut c = v.components[i].derivative(0).scale(dw[0]);
        c.axpy(dw[1], &v.components[i].derivative(1));
        c
    });
    SpectralVectorField::new(comps)
}

fn guard(state: &SPDEState, nu: f64, dt: f64, dw: [f64; 2]) -> Result<()> {
    let n = state.v.grid().n() as f64;
    // drift and noise displacements in grid cells
    let noise = (2.0 * nu).sqrt() * dw[0].hypot(dw[1]);
    let c = courant(&state.v, dt) + noise * n / (2.0 * PI);
    if c > CFL_LIMIT || !c.is_finite() {
        return Err(Error::Cfl {
            t: state.t,
            courant: c,
            limit: CFL_LIMIT,
        });
    }
    Ok(())
}

fn advance_state(state: &SPDEState, v: SpectralVectorField, dt: f64, dw: [f64; 2]) -> SPDEState {
    SPDEState {
        replica: state.replica,
        v: v.leray_project().dealiased(),
        t: state.t + dt,
        step: state.step + 1,
        w: [state.w[0] + dw[0], state.w[1] + dw[1]],
    }
}

/// Euler-Maruyama step with a given increment `dw`:
/// `v + dt (nu lap v - P (v.grad) v) + sqrt(2 nu) (dw.grad) v`, projected.
pub fn ito_step_with(state: &SPDEState, nu: f64, dt: f64, dw: [f64; 2]) -> Result<SPDEState> {
    guard(state, nu, dt, dw)?;
    let v = &state.v;
    let mut next = v.clone();
    next.axpy(dt * nu, &v.laplacian());
    next.axpy(-dt, &v.advect(v).leray_project());
    if nu > 0.0 {
        next.axpy((2.0 * nu).sqrt(), &transport(v, dw));
    }
    Ok(advance_state(state, next, dt, dw))
}

fn euler_drift(v: &SpectralVectorField) -> SpectralVectorField {
    v.advect(v).leray_project().scale(-1.0)
}

/// Heun step on the Stratonovich form with a given increment: predictor
/// with the noise coefficient at `v`, corrector averaging drift and noise
/// coefficient between `v` and the predictor. No `nu lap v` term appears.
pub fn stratonovich_step_with(state: &SPDEState, nu: f64, dt: f64, dw: [f64; 2]) -> Result<SPDEState> {
    guard(state, nu, dt, dw)?;
    let s = (2.0 * nu).sqrt();
    let v = &state.v;
    let f0 = euler_drift(v);
    let n0 = transport(v, dw);
    let mut pred = v.clone();
    pred.axpy(dt, &f0);
    pred.axpy(s, &n0);
    let pred = pred.leray_project();
    let f1 = euler_drift(&pred);
    let n1 = transport(&pred, dw);
    let mut next = v.clone();
    next.axpy(0.5 * dt, &f0);
    next.axpy(0.5 * dt, &f1);
    next.axpy(0.5 * s, &n0);
    next.axpy(0.5 * s, &n1);
    Ok(advance_state(state, next, dt, dw))
}

/// Ito step using this replica's increment from `driver` (whose `dt` is used).
pub fn spde_step_ito(state: &SPDEState, nu: f64, driver: &BrownianDriver) -> Result<SPDEState> {
    let dw = driver.increment(state.replica, state.step);
    ito_step_with(state, nu, driver.dt(), dw)
}

pub fn spde_step_stratonovich(state: &SPDEState, nu: f64, driver: &BrownianDriver) -> Result<SPDEState> {
    let dw = driver.increment(state.replica, state.step);
    stratonovich_step_with(state, nu, driver.dt(), dw)
}

pub fn step_with(scheme: Scheme, state: &SPDEState, nu: f64, dt: f64, dw: [f64; 2]) -> Result<SPDEState> {
    match scheme {
        Scheme::Ito => ito_step_with(state, nu, dt, dw),
        Scheme::StratonovichHeun => stratonovich_step_with(state, nu, dt, dw),
    }
}

/// Increment over coarse step `step` made of `ratio` fine increments.
pub fn coarse_increment(driver: &BrownianDriver, replica: usize, step: u64, ratio: u64) -> [f64; 2] {
    let mut w = [0.0; 2];
    for j in 0..ratio {
        let d = driver.increment(replica, step * ratio + j);
        w[0] += d[0];
        w[1] += d[1];
    }
    w
}

/// Integrates one replica to `t_final` with step `dt`, drawing increments
/// from `driver` (whose step must divide `dt`). When `dt` does not divide
/// `t_final` the last step is shortened to the remainder, which must be a
/// whole number of driver steps.
pub fn spde_solve_replica(
    u0: &SpectralVectorField,
    scheme: Scheme,
    nu: f64,
    dt: f64,
    t_final: f64,
    driver: &BrownianDriver,
    replica: usize,
) -> Result<SPDEState> {
    let fine = driver.dt();
    let ratio = whole_multiple(dt, fine).ok_or_else(|| {
        Error::Config(format!("dt = {dt} is not a multiple of the driver step {fine}"))
    })?;
    let total = whole_multiple(t_final, fine).ok_or_else(|| {
        Error::Config(format!("t_final = {t_final} is not a multiple of the driver step {fine}"))
    })?;
    let mut state = SPDEState::new(replica, u0);
    let mut done = 0u64;
    while done < total {
        let m = ratio.min(total - done);
        let mut dw = [0.0; 2];
        for j in 0..m {
            let d = driver.increment(replica, done + j);
            dw[0] += d[0];
            dw[1] += d[1];
        }
        state = step_with(scheme, &state, nu, m as f64 * fine, dw)?;
        done += m;
    }
    Ok(state)
}

fn whole_multiple(a: f64, b: f64) -> Option<u64> {
    let r = (a / b).round();
    (r >= 1.0 && (r * b - a).abs() <= 1e-9 * a).then_some(r as u64)
}

/// Final states of every replica.
pub fn spde_solve(u0: &SpectralVectorField, config: &SPDEConfig) -> Result<Vec<SPDEState>> {
    config.validate()?;
    if u0.grid() != &config.grid {
        return Err(Error::Config("initial field lives on a different grid".into()));
    }
    let driver = BrownianDriver::new(config.seed, config.replicas, config.dt);
    (0..config.replicas)
        .into_par_iter()
        .map(|r| spde_solve_replica(u0, config.scheme, config.nu, config.dt, config.t_final, &driver, r))
        .collect()
}

/// `max |P (u.grad) u|` relative to `max(1, max|u|^2)`.
pub fn steady_euler_residual(u: &SpectralVectorField) -> f64 {
    let r = u.advect(u).leray_project().max_abs();
    r / u.max_abs().powi(2).max(1.0)
}

/// Exact solution `u(x + sqrt(2 nu) W)` for steady Euler data `u`.
pub fn shift_oracle(u: &SpectralVectorField, nu: f64, w: [f64; 2]) -> Result<SpectralVectorField> {
    let residual = steady_euler_residual(u);
    if residual > STEADY_EULER_TOLERANCE {
        return Err(Error::NotSteadyEuler {
            residual,
            tolerance: STEADY_EULER_TOLERANCE,
        });
    }
    Ok(shift(u, [(2.0 * nu).sqrt() * w[0], (2.0 * nu).sqrt() * w[1]]))
}

/// `u(x + a)`, realized as `u_k e^{i k.a}`.
pub fn shift(u: &SpectralVectorField, a: [f64; 2]) -> SpectralVectorField {
    let grid = u.grid().clone();
    let comps = [0, 1].map(|i| {
        let mut c = u.components[i].clone();
        for (idx, z) in c.coeffs_mut().iter_mut().enumerate() {
            let k = grid.wavevector(idx);
            *z *= Complex64::cis(k[0] as f64 * a[0] + k[1] as f64 * a[1]);
        }
        c
    });
    SpectralVectorField::new(comps).with_div_free_flag(u.is_div_free())
}

/// `||a - b||_{L^2}`.
pub fn l2_distance(a: &SpectralVectorField, b: &SpectralVectorField) -> f64 {
    let mut d = a.clone();
    d.axpy(-1.0, b);
    (2.0 * d.energy()).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrongErrorRow {
    pub dt: f64,
    pub error: Estimate,
}

/// Pathwise `L^2` error against the oracle at `t_final`, per step size.
#[derive(Clone, Debug, PartialEq)]
pub struct StrongErrorTable {
    pub scheme: Scheme,
    pub rows: Vec<StrongErrorRow>,
    /// Least-squares slope of `log error` against `log dt`.
    pub order: f64,
}

impl StrongErrorTable {
    /// `error(dt) / error(dt / 2)` for consecutive rungs that halve `dt`.
    pub fn halving_ratios(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .filter(|w| (w[0].dt / w[1].dt - 2.0).abs() < 1e-9)
            .map(|w| w[0].error.mean / w[1].error.mean)
            .collect()
    }
}

/// Strong error of `config.scheme` over `dt_ladder` on shared Brownian paths:
/// the driver runs at the finest step and coarser increments are sums of
/// fine ones. The finest step must divide `t_final`; coarser steps may end
/// with a shortened step. `config.dt` is ignored.
pub fn strong_error(config: &SPDEConfig, u: &SpectralVectorField, dt_ladder: &[f64]) -> Result<StrongErrorTable> {
    if dt_ladder.is_empty() {
        return Err(Error::Config("empty dt ladder".into()));
    }
    if dt_ladder.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Config("dt ladder entries must be positive".into()));
    }
    let mut ladder = dt_ladder.to_vec();
    ladder.sort_by(|a, b| b.total_cmp(a));
    let fine = *ladder.last().expect("non-empty");
    let check = SPDEConfig { dt: fine, ..config.clone() };
    check.validate()?;
    let driver = BrownianDriver::new(config.seed, config.replicas, fine);
    let fine_steps = steps_for(config.t_final, fine)? as u64;
    let oracles: Vec<SpectralVectorField> = (0..config.replicas)
        .map(|r| shift_oracle(u, config.nu, driver.path_value(r, fine_steps)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(ladder.len());
    for &dt in &ladder {
        let errors: Vec<f64> = (0..config.replicas)
            .into_par_iter()
            .map(|r| {
                let s = spde_solve_replica(u, config.scheme, config.nu, dt, config.t_final, &driver, r)?;
                Ok(l2_distance(&s.v, &oracles[r]))
            })
            .collect::<Result<_>>()?;
        rows.push(StrongErrorRow {
            dt,
            error: Estimate::from_samples(&errors),
        });
    }
    let dts: Vec<f64> = rows.iter().map(|r| r.dt).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.error.mean).collect();
    let order = if rows.len() >= 2 && errs.iter().all(|&e| e > 0.0) {
        log_log_slope(&dts, &errs)
    } else {
        f64::NAN
    };
    Ok(StrongErrorTable {
        scheme: config.scheme,
        rows,
        order,
    })
}

/// Ensemble mean of one Fourier coefficient of one component at `t_final`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeMean {
    pub k: [i64; 2],
    pub component: usize,
    pub re: Estimate,
    pub im: Estimate,
    /// `u_k e^{-nu |k|^2 t}`.
    pub expected: Complex64,
}

impl ModeMean {
    /// Larger of the real and imaginary z-scores against the expectation.
    pub fn z_score(&self) -> f64 {
        self.re.z_score(self.expected.re).max(self.im.z_score(self.expected.im))
    }
}

pub fn mode_means(u0: &SpectralVectorField, states: &[SPDEState], nu: f64, k: [i64; 2]) -> Vec<ModeMean> {
    let t = states.first().map(|s| s.t).unwrap_or(0.0);
    let k2 = (k[0] * k[0] + k[1] * k[1]) as f64;
    (0..2)
        .map(|c| {
            let re: Vec<f64> = states.iter().map(|s| s.v.components[c].coeff(k).re).collect();
            let im: Vec<f64> = states.iter().map(|s| s.v.components[c].coeff(k).im).collect();
            ModeMean {
                k,
                component: c,
                re: Estimate::from_samples(&re),
                im: Estimate::from_samples(&im),
                expected: u0.components[c].coeff(k) * (-nu * k2 * t).exp(),
            }
        })
        .collect()
}

/// Martingale part of the semimartingale fed to the random action.
#[derive(Clone, Debug, PartialEq)]
pub enum MartingalePart {
    /// `M_t = scale W_t` with the flow's own Brownian motion.
    Brownian { scale: f64 },
    /// Anything else; representable but not executable.
    General(String),
}

/// Per-replica terms of the random action.
#[derive(Clone, Debug, PartialEq)]
pub struct TildeAction {
    /// `1/2 int int |D_t xi|^2`.
    pub kinetic: Vec<f64>,
    /// `int int D_t xi . dM`.
    pub martingale: Vec<f64>,
    /// `-sqrt(2 nu) int int D_t xi . dW`.
    pub compensator: Vec<f64>,
    /// `int int p(xi) (det grad xi - 1)`.
    pub constraint: Vec<f64>,
    /// `max |martingale + compensator|` over replicas.
    pub cancellation_defect: f64,
}

impl TildeAction {
    pub fn values(&self) -> Vec<f64> {
        (0..self.kinetic.len())
            .map(|r| self.kinetic[r] + self.martingale[r] + self.compensator[r] + self.constraint[r])
            .collect()
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::from_samples(&self.values())
    }
}

/// Random action along the flow `dxi = sqrt(2 nu) dW + v dt` of the setup,
/// with Ito sums for the stochastic integrals. Only the flow's own
/// martingale part can be evaluated.
pub fn tilde_action_evaluate(setup: &ActionSetup, martingale: &MartingalePart) -> Result<TildeAction> {
    let traj = setup.trajectory;
    let nu = traj.nu;
    let s = (2.0 * nu).sqrt();
    match martingale {
        MartingalePart::Brownian { scale } if (scale - s).abs() <= 1e-14 * s.max(1.0) => {}
        MartingalePart::Brownian { scale } => {
            return Err(Error::Unsupported(format!(
                "martingale part {scale} W differs from the flow's sqrt(2 nu) W = {s} W"
            )))
        }
        MartingalePart::General(what) => {
            return Err(Error::Unsupported(format!("general martingale part `{what}`")))
        }
    }
    if setup.replicas == 0 {
        return Err(Error::Config("replica count must be at least 1".into()));
    }
    let pressure = setup.pressure.unwrap_or(&traj.pressure);
    let nodes = traj.len();
    let dt = traj.dt;
    let driver = BrownianDriver::new(setup.seed, setup.replicas, dt);
    let drift = TrajectoryDrift {
        trajectory: traj,
        prune: setup.prune,
    };
    let ens = setup.points.ensemble(setup.replicas, setup.seed, 0.0)?;
    let cell = (2.0 * PI).powi(2) / ens.num_points() as f64;
    let r_count = setup.replicas;
    let mut out = TildeAction {
        kinetic: vec![0.0; r_count],
        martingale: vec![0.0; r_count],
        compensator: vec![0.0; r_count],
        constraint: vec![0.0; r_count],
        cancellation_defect: 0.0,
    };
    run_flow(ens, &drift, nu, dt, nodes - 1, &driver, |ens| {
        let n = ens.step() as usize;
        let weight = if n == 0 || n == nodes - 1 { 0.5 * dt } else { dt };
        let v = &traj.velocity[n];
        let bundle = ModalBundle::from_fields(&[&v.components[0], &v.components[1], &pressure[n]], setup.prune);
        let rows: Vec<([f64; 2], f64, f64)> = (0..r_count)
            .into_par_iter()
            .map(|r| {
                let mut vsum = [0.0; 2];
                let mut kin = 0.0;
                let mut con = 0.0;
                let mut f = [0.0; 3];
                for (x, jac) in ens.replica_positions(r).iter().zip(ens.replica_jacobians(r)) {
                    bundle.eval(wrap(*x), &mut f);
                    kin += 0.5 * (f[0] * f[0] + f[1] * f[1]);
                    con += f[2] * (det2(jac) - 1.0);
                    vsum[0] += f[0];
                    vsum[1] += f[1];
                }
                (vsum, kin, con)
            })
            .collect();
        for (r, (vsum, kin, con)) in rows.into_iter().enumerate() {
            out.kinetic[r] += weight * cell * kin;
            out.constraint[r] += weight * cell * con;
            if n + 1 < nodes {
                // left-point sums over the increment of the step leaving node n
                let dw = driver.increment(r, n as u64);
                let dm = [scale_of(martingale) * dw[0], scale_of(martingale) * dw[1]];
                out.martingale[r] += cell * (vsum[0] * dm[0] + vsum[1] * dm[1]);
                out.compensator[r] -= s * cell * (vsum[0] * dw[0] + vsum[1] * dw[1]);
            }
        }
        Ok(())
    })?;
    out.cancellation_defect = out
        .martingale
        .iter()
        .zip(&out.compensator)
        .map(|(a, b)| (a + b).abs())
        .fold(0.0, f64::max);
    Ok(out)
}

fn scale_of(m: &MartingalePart) -> f64 {
    match m {
        MartingalePart::Brownian { scale } => *scale,
        MartingalePart::General(_) => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{action_evaluate, InitialPoints};
    use crate::fields::taylor_green;
    use crate::ns::{ns_solve, random_solenoidal, NSConfig, NSTrajectory};

    fn shear(g: &TorusGrid) -> SpectralVectorField {
        SpectralVectorField::from_fn(g, |_, y| [y.sin(), 0.0]).with_div_free_flag(true)
    }

    #[test]
    fn constant_field_is_unchanged() {
        let g = TorusGrid::new(8).unwrap();
        let c = SpectralVectorField::constant(&g, [0.3, -0.1]);
        let s0 = SPDEState::new(0, &c);
        for scheme in [Scheme::Ito, Scheme::StratonovichHeun] {
            let s1 = step_with(scheme, &s0, 0.1, 1e-2, [0.05, -0.2]).unwrap();
            assert!(l2_distance(&s1.v, &c) < 1e-15);
        }
    }

    #[test]
    fn zero_viscosity_is_a_deterministic_euler_step() {
        let g = TorusGrid::new(16).unwrap();
        let v = random_solenoidal(&g, 3, 1.0, 2);
        let s0 = SPDEState::new(0, &v);
        let a = ito_step_with(&s0, 0.0, 1e-3, [0.3, 0.1]).unwrap();
        let b = ito_step_with(&s0, 0.0, 1e-3, [-0.7, 0.2]).unwrap();
        assert_eq!(l2_distance(&a.v, &b.v), 0.0);
        let mut euler = v.clone();
        euler.axpy(-1e-3, &v.advect(&v).leray_project());
        assert!(l2_distance(&a.v, &euler.leray_project().dealiased()) < 1e-15);
    }

    #[test]
    fn ito_step_matches_hand_assembly() {
        let g = TorusGrid::new(16).unwrap();
        let u = taylor_green(&g);
        let (nu, dt, dw) = (0.1f64, 1e-3, [0.02, -0.03]);
        let s1 = ito_step_with(&SPDEState::new(0, &u), nu, dt, dw).unwrap();
        let s = (2.0 * nu).sqrt();
        let jac = u.jacobian_matrix();
        let hand = SpectralVectorField::new([0, 1].map(|i| {
            let mut c = u.components[i].clone();
            c.axpy(dt * nu, &u.components[i].laplacian());
            c.axpy(s * dw[0], &jac[i][0]);
            c.axpy(s * dw[1], &jac[i][1]);
            c
        }));
        let mut hand = hand;
        hand.axpy(-dt, &u.advect(&u).leray_project());
        let hand = hand.leray_project();
        assert!(l2_distance(&s1.v, &hand) < 1e-13);
    }

    #[test]
    fn heun_step_matches_hand_assembly() {
        let g = TorusGrid::new(16).unwrap();
        let u = shear(&g);
        let (nu, dt, dw) = (0.1f64, 1e-2, [0.0, 0.1]);
        let s = (2.0 * nu).sqrt();
        let out = stratonovich_step_with(&SPDEState::new(0, &u), nu, dt, dw).unwrap();
        // single mode sin(y): the corrector gives (1 + i a + (i a)^2 / 2) with a = s k dw
        let a = s * dw[1];
        let expected = SpectralVectorField::from_fn(&g, |_, y| {
            let z = Complex64::new(1.0 - 0.5 * a * a, a) * Complex64::cis(y);
            [z.im, 0.0]
        });
        assert!(l2_distance(&out.v, &expected) < 1e-13);
    }

    #[test]
    fn oracle_examples() {
        let g = TorusGrid::new(16).unwrap();
        let u = taylor_green(&g);
        assert!(l2_distance(&shift_oracle(&u, 0.1, [0.0, 0.0]).unwrap(), &u) < 1e-15);
        assert!(l2_distance(&shift_oracle(&u, 0.0, [0.4, 1.0]).unwrap(), &u) < 1e-15);
        let sh = shear(&g);
        let w = [0.7, -0.3];
        let out = shift_oracle(&sh, 0.1, w).unwrap();
        let c0 = sh.components[0].coeff([0, 1]);
        let c1 = out.components[0].coeff([0, 1]);
        assert!((c1.norm() - c0.norm()).abs() < 1e-15);
        let phase = (c1 / c0).arg();
        assert!((phase - 0.2f64.sqrt() * w[1]).abs() < 1e-13);
        // spectrum is unchanged by the shift
        for (a, b) in u.components[0].coeffs().iter().zip(shift(&u, [0.3, 0.9]).components[0].coeffs()) {
            assert!((a.norm() - b.norm()).abs() < 1e-15);
        }
        let generic = random_solenoidal(&g, 3, 1.0, 1);
        assert!(matches!(shift_oracle(&generic, 0.1, w), Err(Error::NotSteadyEuler { .. })));
    }

    #[test]
    fn zero_viscosity_has_no_strong_error() {
        let g = TorusGrid::new(16).unwrap();
        let cfg = SPDEConfig::new(&g, 0.0, 1e-2, 0.1, 4, Scheme::StratonovichHeun, 3).unwrap();
        let t = strong_error(&cfg, &taylor_green(&g), &[2e-2, 1e-2]).unwrap();
        assert!(t.rows.iter().all(|r| r.error.mean < 1e-12));
    }

    #[test]
    fn heun_converges_at_first_order() {
        let g = TorusGrid::new(16).unwrap();
        let cfg = SPDEConfig::new(&g, 0.1, 1e-3, 0.25, 64, Scheme::StratonovichHeun, 5).unwrap();
        let t = strong_error(&cfg, &taylor_green(&g), &[4e-3, 2e-3, 1e-3]).unwrap();
        assert!(t.order >= 0.9, "{t:?}");
    }

    #[test]
    fn cfl_guard() {
        let g = TorusGrid::new(16).unwrap();
        let u = taylor_green(&g).scale(100.0);
        assert!(matches!(
            ito_step_with(&SPDEState::new(0, &u), 0.1, 0.1, [0.0, 0.0]),
            Err(Error::Cfl { .. })
        ));
    }

    #[test]
    fn random_action_terms() {
        let g = TorusGrid::new(8).unwrap();
        let zero = NSTrajectory::steady(&SpectralVectorField::zeros(&g), 0.1, 1e-2, 0.1);
        let setup = ActionSetup::new(&zero, InitialPoints::Grid(4), 3, 1);
        let m = MartingalePart::Brownian { scale: 0.2f64.sqrt() };
        let a = tilde_action_evaluate(&setup, &m).unwrap();
        assert!(a.values().iter().all(|&v| v == 0.0));

        let g = TorusGrid::new(16).unwrap();
        let traj = ns_solve(&taylor_green(&g), &NSConfig::new(&g, 0.1, 1e-2, 0.2).unwrap()).unwrap();
        let setup = ActionSetup::new(&traj, InitialPoints::Grid(8), 8, 2);
        let a = tilde_action_evaluate(&setup, &m).unwrap();
        assert!(a.cancellation_defect <= 1e-13);
        let s = action_evaluate(&setup).unwrap();
        let k: Vec<f64> = (0..8).map(|r| a.kinetic[r] + a.constraint[r]).collect();
        assert!((Estimate::from_samples(&k).mean - s.total()).abs() < 1e-12);
        assert!(matches!(
            tilde_action_evaluate(&setup, &MartingalePart::General("levy".into())),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            tilde_action_evaluate(&setup, &MartingalePart::Brownian { scale: 1.0 }),
            Err(Error::Unsupported(_))
        ));
    }
}
