//! Stochastic Lagrangian flows `dg = sqrt(2 nu) dW + v(t, g) dt`, their
//! Jacobians and the branching estimator of the generalized derivative.
//!
//! The noise is one 2-d Brownian path per replica shared by every initial
//! point. A step splits the noise symmetrically around an implicit midpoint
//! drift step:
//!
//! ```text
//! y = x + s dW / 2
//! z = y + dt v(t + dt/2, (y + z) / 2)
//! x' = z + s dW / 2
//! ```
//!
//! and the Jacobian follows the exact derivative of that map,
//! `J' = (I - dt/2 A)^{-1} (I + dt/2 A) J` with `A = grad v` at the midpoint.
//! For a divergence-free drift the update has unit determinant.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{ModalBundle, SpectralField, TorusGrid};
use crate::ns::NSTrajectory;
use crate::rng::{BrownianDriver, NoiseStream};
use crate::stats::Estimate;

/// Relative coefficient size below which modes are skipped in particle
/// evaluations of trajectory fields.
pub const DEFAULT_PRUNE: f64 = 1e-13;

/// Iteration cap for the implicit midpoint solve.
const MIDPOINT_ITERATIONS: usize = 30;

/// Largest relative Fourier amplitude tolerated beyond the 2/3 band of the
/// inverse Jacobian entries before a resolution warning is raised.
pub const ALIAS_WARNING_LEVEL: f64 = 1e-6;

pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

pub fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn inv2(m: &Mat2) -> Mat2 {
    let d = det2(m);
    [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
}

pub fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Velocity and its gradient `grad[i][j] = d_j v_i` at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: [f64; 2],
    pub grad: Mat2,
}

/// A velocity field frozen at one time.
pub trait DriftSlice: Sync {
    fn jet(&self, x: [f64; 2]) -> Jet;

    fn velocity(&self, x: [f64; 2]) -> [f64; 2] {
        self.jet(x).value
    }
}

/// A time-dependent drift that can be frozen at any time in its range.
pub trait Drift: Sync {
    fn time_range(&self) -> (f64, f64);
    fn freeze(&self, t: f64) -> Result<Box<dyn DriftSlice + '_>>;
}

/// Drift read from a solver trajectory, Hermite-interpolated in time.
#[derive(Clone, Copy, Debug)]
pub struct TrajectoryDrift<'a> {
    pub trajectory: &'a NSTrajectory,
    pub prune: f64,
}

impl<'a> TrajectoryDrift<'a> {
    pub fn new(trajectory: &'a NSTrajectory) -> Self {
        TrajectoryDrift {
            trajectory,
            prune: DEFAULT_PRUNE,
        }
    }

    pub fn exact(trajectory: &'a NSTrajectory) -> Self {
        TrajectoryDrift {
            trajectory,
            prune: 0.0,
        }
    }
}

struct BundleSlice {
    velocity: ModalBundle,
    gradient: ModalBundle,
}

impl DriftSlice for BundleSlice {
    fn jet(&self, x: [f64; 2]) -> Jet {
        let x = wrap(x);
        let mut v = [0.0; 2];
        let mut g = [0.0; 4];
        self.velocity.eval(x, &mut v);
        self.gradient.eval(x, &mut g);
        Jet {
            value: v,
            grad: [[g[0], g[1]], [g[2], g[3]]],
        }
    }

    fn velocity(&self, x: [f64; 2]) -> [f64; 2] {
        let mut v = [0.0; 2];
        self.velocity.eval(wrap(x), &mut v);
        v
    }
}

impl Drift for TrajectoryDrift<'_> {
    fn time_range(&self) -> (f64, f64) {
        (self.trajectory.t_start(), self.trajectory.t_end())
    }

    fn freeze(&self, t: f64) -> Result<Box<dyn DriftSlice + '_>> {
        let v = self.trajectory.velocity_at(t)?;
        let jac = v.jacobian_matrix();
        Ok(Box::new(BundleSlice {
            velocity: ModalBundle::from_fields(&[&v.components[0], &v.components[1]], self.prune),
            gradient: ModalBundle::from_fields(&[&jac[0][0], &jac[0][1], &jac[1][0], &jac[1][1]], self.prune),
        }))
    }
}

/// Drift given by a closed-form function of `(t, x)`, defined for all times.
/// `x` is the unwrapped position, so non-periodic fields such as linear
/// shear are allowed.
pub struct FnDrift<F> {
    f: F,
}

impl<F: Fn(f64, [f64; 2]) -> Jet + Sync> FnDrift<F> {
    pub fn new(f: F) -> Self {
        FnDrift { f }
    }
}

struct FnSlice<'a, F> {
    f: &'a F,
    t: f64,
}

impl<F: Fn(f64, [f64; 2]) -> Jet + Sync> DriftSlice for FnSlice<'_, F> {
    fn jet(&self, x: [f64; 2]) -> Jet {
        (self.f)(self.t, x)
    }
}

impl<F: Fn(f64, [f64; 2]) -> Jet + Sync> Drift for FnDrift<F> {
    fn time_range(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn freeze(&self, t: f64) -> Result<Box<dyn DriftSlice + '_>> {
        Ok(Box::new(FnSlice { f: &self.f, t }))
    }
}

pub fn zero_drift() -> FnDrift<impl Fn(f64, [f64; 2]) -> Jet + Sync> {
    FnDrift::new(|_, _| Jet::default())
}

pub fn constant_drift(c: [f64; 2]) -> FnDrift<impl Fn(f64, [f64; 2]) -> Jet + Sync> {
    FnDrift::new(move |_, _| Jet {
        value: c,
        grad: [[0.0; 2]; 2],
    })
}

/// Linear shear `v = (a x_2, 0)` on the unwrapped plane.
pub fn shear_drift(a: f64) -> FnDrift<impl Fn(f64, [f64; 2]) -> Jet + Sync> {
    FnDrift::new(move |_, x| Jet {
        value: [a * x[1], 0.0],
        grad: [[0.0, a], [0.0, 0.0]],
    })
}

/// Compressible `v = (sin x_1, 0)`.
pub fn compressible_drift() -> FnDrift<impl Fn(f64, [f64; 2]) -> Jet + Sync> {
    FnDrift::new(|_, x| {
        let (s, c) = x[0].sin_cos();
        Jet {
            value: [s, 0.0],
            grad: [[c, 0.0], [0.0, 0.0]],
        }
    })
}

pub fn wrap(x: [f64; 2]) -> [f64; 2] {
    let l = 2.0 * std::f64::consts::PI;
    [x[0].rem_euclid(l), x[1].rem_euclid(l)]
}

/// Particles `g_t(x)` and Jacobians for every (replica, initial point).
///
/// Storage is replica-major: particle `(r, i)` sits at `r * points + i`.
/// Positions are unwrapped lifts; use [`FlowEnsemble::wrapped_position`] for
/// torus coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowEnsemble {
    initial: Vec<[f64; 2]>,
    grid_n: Option<usize>,
    replicas: usize,
    seed: u64,
    t: f64,
    step: u64,
    positions: Vec<[f64; 2]>,
    jacobians: Vec<Mat2>,
}

impl FlowEnsemble {
    /// Starts one particle per grid point for each replica.
    pub fn on_grid(grid: &TorusGrid, replicas: usize, seed: u64, t0: f64) -> Result<Self> {
        let mut e = Self::at_points(grid.points(), replicas, seed, t0)?;
        e.grid_n = Some(grid.n());
        Ok(e)
    }

    pub fn at_points(points: Vec<[f64; 2]>, replicas: usize, seed: u64, t0: f64) -> Result<Self> {
        if replicas == 0 {
            return Err(Error::Config("replica count must be at least 1".into()));
        }
        if points.is_empty() {
            return Err(Error::Config("no initial points".into()));
        }
        let positions: Vec<[f64; 2]> = (0..replicas).flat_map(|_| points.iter().copied()).collect();
        let jacobians = vec![IDENTITY; positions.len()];
        Ok(FlowEnsemble {
            initial: points,
            grid_n: None,
            replicas,
            seed,
            t: t0,
            step: 0,
            positions,
            jacobians,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Number of steps taken since the start.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    pub fn num_points(&self) -> usize {
        self.initial.len()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Grid size when the initial points are a full `n x n` torus grid.
    pub fn grid_n(&self) -> Option<usize> {
        self.grid_n
    }

    pub fn initial_points(&self) -> &[[f64; 2]] {
        &self.initial
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn jacobians(&self) -> &[Mat2] {
        &self.jacobians
    }

    pub fn position(&self, replica: usize, point: usize) -> [f64; 2] {
        self.positions[replica * self.initial.len() + point]
    }

    pub fn wrapped_position(&self, replica: usize, point: usize) -> [f64; 2] {
        wrap(self.position(replica, point))
    }

    pub fn jacobian(&self, replica: usize, point: usize) -> Mat2 {
        self.jacobians[replica * self.initial.len() + point]
    }

    pub fn replica_positions(&self, replica: usize) -> &[[f64; 2]] {
        let p = self.initial.len();
        &self.positions[replica * p..(replica + 1) * p]
    }

    pub fn replica_jacobians(&self, replica: usize) -> &[Mat2] {
        let p = self.initial.len();
        &self.jacobians[replica * p..(replica + 1) * p]
    }

    pub fn replica_of(&self, particle: usize) -> usize {
        particle / self.initial.len()
    }

    pub fn all_finite(&self) -> bool {
        self.positions.iter().all(|x| x.iter().all(|v| v.is_finite()))
            && self
                .jacobians
                .iter()
                .all(|m| m.iter().flatten().all(|v| v.is_finite()))
    }
}

fn check_driver(ens: &FlowEnsemble, driver: &BrownianDriver, dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    if driver.replicas() < ens.replicas {
        return Err(Error::Config(format!(
            "driver has {} replicas, ensemble needs {}",
            driver.replicas(),
            ens.replicas
        )));
    }
    if (driver.dt() - dt).abs() > 1e-12 * dt {
        return Err(Error::Config(format!(
            "driver step {} differs from flow step {dt}",
            driver.dt()
        )));
    }
    Ok(())
}

fn check_range(drift: &dyn Drift, t0: f64, t1: f64) -> Result<()> {
    let (a, b) = drift.time_range();
    let tol = 1e-9 * (t1 - t0).abs().max(1e-300);
    if t0 < a - tol || t1 > b + tol {
        let t = if t0 < a - tol { t0 } else { t1 };
        return Err(Error::Range { t, start: a, end: b });
    }
    Ok(())
}

/// Implicit midpoint drift step with the noise split around it. Returns the
/// new position and the Jacobian update factor.
#[inline]
fn advance(slice: &dyn DriftSlice, x: [f64; 2], noise: [f64; 2], dt: f64) -> ([f64; 2], Mat2) {
    let y = [x[0] + 0.5 * noise[0], x[1] + 0.5 * noise[1]];
    let v0 = slice.velocity(y);
    let mut z = [y[0] + dt * v0[0], y[1] + dt * v0[1]];
    let mut m = y;
    for _ in 0..MIDPOINT_ITERATIONS {
        m = [0.5 * (y[0] + z[0]), 0.5 * (y[1] + z[1])];
        let v = slice.velocity(m);
        let next = [y[0] + dt * v[0], y[1] + dt * v[1]];
        let change = (next[0] - z[0]).abs().max((next[1] - z[1]).abs());
        z = next;
        if change <= 1e-15 * (1.0 + z[0].abs().max(z[1].abs())) {
            break;
        }
    }
    let h = 0.5 * dt;
    let a = slice.jet(m).grad;
    let plus = [[1.0 + h * a[0][0], h * a[0][1]], [h * a[1][0], 1.0 + h * a[1][1]]];
    let minus = [[1.0 - h * a[0][0], -h * a[0][1]], [-h * a[1][0], 1.0 - h * a[1][1]]];
    let update = mul2(&inv2(&minus), &plus);
    ([z[0] + 0.5 * noise[0], z[1] + 0.5 * noise[1]], update)
}

/// Position part of [`advance`] only.
#[inline]
fn advance_position(slice: &dyn DriftSlice, x: [f64; 2], noise: [f64; 2], dt: f64) -> [f64; 2] {
    let y = [x[0] + 0.5 * noise[0], x[1] + 0.5 * noise[1]];
    let v0 = slice.velocity(y);
    let mut z = [y[0] + dt * v0[0], y[1] + dt * v0[1]];
    for _ in 0..MIDPOINT_ITERATIONS {
        let v = slice.velocity([0.5 * (y[0] + z[0]), 0.5 * (y[1] + z[1])]);
        let next = [y[0] + dt * v[0], y[1] + dt * v[1]];
        let change = (next[0] - z[0]).abs().max((next[1] - z[1]).abs());
        z = next;
        if change <= 1e-15 * (1.0 + z[0].abs().max(z[1].abs())) {
            break;
        }
    }
    [z[0] + 0.5 * noise[0], z[1] + 0.5 * noise[1]]
}

/// `sqrt(2 nu)` times the replica's increment for `step`.
fn scaled_increment(driver: &BrownianDriver, stream: NoiseStream, replica: usize, step: u64, nu: f64) -> [f64; 2] {
    if nu == 0.0 {
        return [0.0, 0.0];
    }
    let s = (2.0 * nu).sqrt();
    let w = driver.increment_in(stream, replica, step);
    [s * w[0], s * w[1]]
}

/// Advances every particle and Jacobian by one step of size `dt`.
pub fn flow_step(
    ens: &FlowEnsemble,
    drift: &dyn Drift,
    nu: f64,
    dt: f64,
    driver: &BrownianDriver,
) -> Result<FlowEnsemble> {
    check_driver(ens, driver, dt)?;
    check_range(drift, ens.t, ens.t + dt)?;
    let slice = drift.freeze(ens.t + 0.5 * dt)?;
    let p = ens.num_points();
    let noise: Vec<[f64; 2]> = (0..ens.replicas)
        .map(|r| scaled_increment(driver, NoiseStream::Main, r, ens.step, nu))
        .collect();
    let updated: Vec<([f64; 2], Mat2)> = (0..ens.len())
        .into_par_iter()
        .map(|idx| {
            let (x, u) = advance(slice.as_ref(), ens.positions[idx], noise[idx / p], dt);
            (x, mul2(&u, &ens.jacobians[idx]))
        })
        .collect();
    let (positions, jacobians) = updated.into_iter().unzip();
    Ok(FlowEnsemble {
        initial: ens.initial.clone(),
        grid_n: ens.grid_n,
        replicas: ens.replicas,
        seed: ens.seed,
        t: ens.t + dt,
        step: ens.step + 1,
        positions,
        jacobians,
    })
}

/// Advances a Jacobian with the update for drift gradient `grad_v` taken at
/// the step midpoint.
pub fn jacobian_step(jacobian: &Mat2, grad_v: &Mat2, dt: f64) -> Mat2 {
    let h = 0.5 * dt;
    let a = grad_v;
    let plus = [[1.0 + h * a[0][0], h * a[0][1]], [h * a[1][0], 1.0 + h * a[1][1]]];
    let minus = [[1.0 - h * a[0][0], -h * a[0][1]], [-h * a[1][0], 1.0 - h * a[1][1]]];
    mul2(&mul2(&inv2(&minus), &plus), jacobian)
}

/// Runs `steps` flow steps, calling `observe` on the starting ensemble and
/// after every step. Returns the final ensemble.
pub fn run_flow(
    start: FlowEnsemble,
    drift: &dyn Drift,
    nu: f64,
    dt: f64,
    steps: usize,
    driver: &BrownianDriver,
    mut observe: impl FnMut(&FlowEnsemble) -> Result<()>,
) -> Result<FlowEnsemble> {
    check_driver(&start, driver, dt)?;
    check_range(drift, start.t, start.t + steps as f64 * dt)?;
    let mut ens = start;
    observe(&ens)?;
    for _ in 0..steps {
        ens = flow_step(&ens, drift, nu, dt, driver)?;
        observe(&ens)?;
    }
    Ok(ens)
}

/// Per-particle determinants and their defect summary.
#[derive(Clone, Debug, PartialEq)]
pub struct DetSummary {
    pub determinants: Vec<f64>,
    pub max_defect: f64,
    pub mean_defect: f64,
}

impl DetSummary {
    /// `det grad g - 1` per particle.
    pub fn defects(&self) -> Vec<f64> {
        self.determinants.iter().map(|d| d - 1.0).collect()
    }
}

pub fn det_jacobian(ens: &FlowEnsemble) -> DetSummary {
    let determinants: Vec<f64> = ens.jacobians.iter().map(det2).collect();
    let max_defect = determinants.iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max);
    let mean_defect = determinants.iter().map(|d| d - 1.0).sum::<f64>() / determinants.len() as f64;
    DetSummary {
        determinants,
        max_defect,
        mean_defect,
    }
}

/// Result of the Piola identity check `sum_i d_i (grad g)^{-1}_{ij} = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiolaCheck {
    pub max_divergence: f64,
    /// Largest relative Fourier amplitude of the inverse Jacobian entries
    /// outside the 2/3 band, over all replicas.
    pub alias_level: f64,
    pub aliased: bool,
}

/// Spectral x-derivatives of the inverse Jacobian field of every replica.
/// Needs an ensemble started on a full grid.
pub fn inverse_jacobian_divergence_check(ens: &FlowEnsemble) -> Result<PiolaCheck> {
    let n = ens.grid_n.ok_or_else(|| {
        Error::Config("inverse Jacobian check needs an ensemble started on a full grid".into())
    })?;
    let grid = TorusGrid::new(n)?;
    let cutoff = grid.dealias_cutoff();
    let per_replica: Vec<Result<(f64, f64)>> = (0..ens.replicas)
        .into_par_iter()
        .map(|r| {
            let inv: Vec<Mat2> = ens.replica_jacobians(r).iter().map(inv2).collect();
            let mut entries: Vec<SpectralField> = Vec::with_capacity(4);
            for i in 0..2 {
                for j in 0..2 {
                    let samples: Vec<f64> = inv.iter().map(|m| m[i][j]).collect();
                    entries.push(SpectralField::from_real(&grid, &samples)?);
                }
            }
            let mut alias: f64 = 0.0;
            for e in &entries {
                let total = e.max_abs_coeff();
                let outer = e
                    .coeffs()
                    .iter()
                    .enumerate()
                    .filter(|(idx, _)| {
                        let k = grid.wavevector(*idx);
                        k[0].abs() > cutoff || k[1].abs() > cutoff
                    })
                    .map(|(_, c)| c.norm())
                    .fold(0.0, f64::max);
                if total > 0.0 {
                    alias = alias.max(outer / total);
                }
            }
            let mut worst: f64 = 0.0;
            for j in 0..2 {
                let d = &entries[j].derivative(0) + &entries[2 + j].derivative(1);
                worst = worst.max(d.max_abs());
            }
            Ok((worst, alias))
        })
        .collect();
    let mut max_divergence: f64 = 0.0;
    let mut alias_level: f64 = 0.0;
    for item in per_replica {
        let (d, a) = item?;
        max_divergence = max_divergence.max(d);
        alias_level = alias_level.max(a);
    }
    let aliased = alias_level > ALIAS_WARNING_LEVEL;
    if aliased {
        log::warn!(
            "flow map under-resolved on {n}^2: inverse Jacobian has relative amplitude {alias_level:.2e} beyond the 2/3 band"
        );
    }
    Ok(PiolaCheck {
        max_divergence,
        alias_level,
        aliased,
    })
}

/// Per-replica grid quadrature `(1/P) sum_x f(g_t(x))`.
pub fn replica_averages(ens: &FlowEnsemble, f: impl Fn([f64; 2]) -> f64 + Sync) -> Vec<f64> {
    (0..ens.replicas)
        .into_par_iter()
        .map(|r| {
            let pos = ens.replica_positions(r);
            pos.iter().map(|&x| f(wrap(x))).sum::<f64>() / pos.len() as f64
        })
        .collect()
}

/// A function of `(t, x)` with one or more real outputs, frozen per time.
pub trait Observable: Sync {
    fn width(&self) -> usize;
    fn freeze(&self, t: f64) -> Result<Box<dyn ObservableSlice + '_>>;
}

pub trait ObservableSlice: Sync {
    /// `x` is the unwrapped position.
    fn eval(&self, x: [f64; 2], out: &mut [f64]);
}

/// `F(t, x) = x` on the unwrapped lift.
pub struct PositionObservable;

struct PositionSlice;

impl ObservableSlice for PositionSlice {
    fn eval(&self, x: [f64; 2], out: &mut [f64]) {
        out[..2].copy_from_slice(&x);
    }
}

impl Observable for PositionObservable {
    fn width(&self) -> usize {
        2
    }

    fn freeze(&self, _t: f64) -> Result<Box<dyn ObservableSlice + '_>> {
        Ok(Box::new(PositionSlice))
    }
}

/// Constant vector observable.
pub struct ConstantObservable(pub Vec<f64>);

struct ConstantSlice(Vec<f64>);

impl ObservableSlice for ConstantSlice {
    fn eval(&self, _x: [f64; 2], out: &mut [f64]) {
        out[..self.0.len()].copy_from_slice(&self.0);
    }
}

impl Observable for ConstantObservable {
    fn width(&self) -> usize {
        self.0.len()
    }

    fn freeze(&self, _t: f64) -> Result<Box<dyn ObservableSlice + '_>> {
        Ok(Box::new(ConstantSlice(self.0.clone())))
    }
}

/// The velocity `v(t, x)` of a trajectory.
pub struct VelocityObservable<'a> {
    pub trajectory: &'a NSTrajectory,
    pub prune: f64,
}

impl<'a> VelocityObservable<'a> {
    pub fn new(trajectory: &'a NSTrajectory) -> Self {
        VelocityObservable {
            trajectory,
            prune: DEFAULT_PRUNE,
        }
    }
}

struct ModalSlice(ModalBundle);

impl ObservableSlice for ModalSlice {
    fn eval(&self, x: [f64; 2], out: &mut [f64]) {
        self.0.eval(wrap(x), out);
    }
}

impl Observable for VelocityObservable<'_> {
    fn width(&self) -> usize {
        2
    }

    fn freeze(&self, t: f64) -> Result<Box<dyn ObservableSlice + '_>> {
        let v = self.trajectory.velocity_at(t)?;
        Ok(Box::new(ModalSlice(ModalBundle::from_fields(
            &[&v.components[0], &v.components[1]],
            self.prune,
        ))))
    }
}

/// Spectral fields (constant in time) as an observable.
pub struct FieldObservable {
    bundle: ModalBundle,
}

impl FieldObservable {
    pub fn new(fields: &[&SpectralField]) -> Self {
        FieldObservable {
            bundle: ModalBundle::from_fields(fields, 0.0),
        }
    }
}

struct BorrowedModal<'a>(&'a ModalBundle);

impl ObservableSlice for BorrowedModal<'_> {
    fn eval(&self, x: [f64; 2], out: &mut [f64]) {
        self.0.eval(wrap(x), out);
    }
}

impl Observable for FieldObservable {
    fn width(&self) -> usize {
        self.bundle.width()
    }

    fn freeze(&self, _t: f64) -> Result<Box<dyn ObservableSlice + '_>> {
        Ok(Box::new(BorrowedModal(&self.bundle)))
    }
}

/// Branch-averaged difference quotients, one per particle and output.
///
/// Entry `(particle, c)` lives at `particle * width + c`, with particles in
/// the ensemble's replica-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchEstimate {
    pub t: f64,
    pub eps: f64,
    pub branches: usize,
    pub width: usize,
    pub values: Vec<f64>,
    /// Standard error over branches (zero when `branches == 1`).
    pub stderr: Vec<f64>,
}

impl BranchEstimate {
    pub fn value(&self, particle: usize) -> &[f64] {
        &self.values[particle * self.width..(particle + 1) * self.width]
    }

    pub fn stderr_of(&self, particle: usize) -> &[f64] {
        &self.stderr[particle * self.width..(particle + 1) * self.width]
    }
}

/// Number of `dt` steps in `eps`, rejecting non-integer ratios.
pub fn eps_steps(eps: f64, dt: f64) -> Result<usize> {
    let ratio = eps / dt;
    let k = ratio.round();
    if !(k >= 1.0) || (ratio - k).abs() > 1e-9 * k {
        return Err(Error::Config(format!(
            "eps = {eps} must be a positive integer multiple of dt = {dt}"
        )));
    }
    Ok(k as usize)
}

/// Estimates `D_t F(t, g_t(x))` for every particle of `ens` by spawning
/// `branches` independent continuations over `[t, t + eps]` from the current
/// positions and averaging `(F(t + eps, xi) - F(t, g_t)) / eps`.
///
/// Branch `m` of replica `r` uses the noise stream
/// `Branch { origin: ens.step(), branch: m }`, so estimates do not depend on
/// evaluation order.
#[allow(clippy::too_many_arguments)]
pub fn generalized_derivative(
    f: &dyn Observable,
    ens: &FlowEnsemble,
    drift: &dyn Drift,
    nu: f64,
    dt: f64,
    eps: f64,
    branches: usize,
    driver: &BrownianDriver,
) -> Result<BranchEstimate> {
    if branches == 0 {
        return Err(Error::Config("branch count must be at least 1".into()));
    }
    check_driver(ens, driver, dt)?;
    let k = eps_steps(eps, dt)?;
    let t = ens.t;
    check_range(drift, t, t + k as f64 * dt)?;
    let slices: Vec<Box<dyn DriftSlice + '_>> = (0..k)
        .map(|j| drift.freeze(t + (j as f64 + 0.5) * dt))
        .collect::<Result<_>>()?;
    let f_now = f.freeze(t)?;
    let f_later = f.freeze(t + k as f64 * dt)?;
    let width = f.width();
    let p = ens.num_points();
    let eps_eff = k as f64 * dt;
    let per_particle: Vec<(Vec<f64>, Vec<f64>)> = (0..ens.len())
        .into_par_iter()
        .map(|idx| {
            let r = idx / p;
            let x0 = ens.positions[idx];
            let mut base = vec![0.0; width];
            f_now.eval(x0, &mut base);
            let mut sum = vec![0.0; width];
            let mut sum_sq = vec![0.0; width];
            let mut out = vec![0.0; width];
            for m in 0..branches {
                let stream = NoiseStream::Branch {
                    origin: ens.step,
                    branch: m as u64,
                };
                let mut x = x0;
                for (j, slice) in slices.iter().enumerate() {
                    let noise = scaled_increment(driver, stream, r, j as u64, nu);
                    x = advance_position(slice.as_ref(), x, noise, dt);
                }
                f_later.eval(x, &mut out);
                for c in 0..width {
                    let q = (out[c] - base[c]) / eps_eff;
                    sum[c] += q;
                    sum_sq[c] += q * q;
                }
            }
            let mb = branches as f64;
            let mean: Vec<f64> = sum.iter().map(|s| s / mb).collect();
            let se: Vec<f64> = if branches > 1 {
                (0..width)
                    .map(|c| {
                        let var = ((sum_sq[c] - mb * mean[c] * mean[c]) / (mb - 1.0)).max(0.0);
                        (var / mb).sqrt()
                    })
                    .collect()
            } else {
                vec![0.0; width]
            };
            (mean, se)
        })
        .collect();
    let mut values = Vec::with_capacity(ens.len() * width);
    let mut stderr = Vec::with_capacity(ens.len() * width);
    for (m, s) in per_particle {
        values.extend(m);
        stderr.extend(s);
    }
    Ok(BranchEstimate {
        t,
        eps: eps_eff,
        branches,
        width,
        values,
        stderr,
    })
}

/// Branching estimate of the drift of a per-replica functional of the whole
/// particle cloud. `functional(t, positions)` receives one replica's
/// unwrapped positions. Returns, per replica, the branch mean of the
/// difference quotient and its standard error over branches.
#[allow(clippy::too_many_arguments)]
pub fn replica_functional_drift(
    functional: &(dyn Fn(f64, &[[f64; 2]]) -> f64 + Sync),
    ens: &FlowEnsemble,
    drift: &dyn Drift,
    nu: f64,
    dt: f64,
    eps: f64,
    branches: usize,
    driver: &BrownianDriver,
) -> Result<Vec<Estimate>> {
    if branches == 0 {
        return Err(Error::Config("branch count must be at least 1".into()));
    }
    check_driver(ens, driver, dt)?;
    let k = eps_steps(eps, dt)?;
    let t = ens.t;
    check_range(drift, t, t + k as f64 * dt)?;
    let slices: Vec<Box<dyn DriftSlice + '_>> = (0..k)
        .map(|j| drift.freeze(t + (j as f64 + 0.5) * dt))
        .collect::<Result<_>>()?;
    let eps_eff = k as f64 * dt;
    let t_later = t + eps_eff;
    let jobs: Vec<(usize, usize)> = (0..ens.replicas)
        .flat_map(|r| (0..branches).map(move |m| (r, m)))
        .collect();
    let quotients: Vec<f64> = jobs
        .into_par_iter()
        .map(|(r, m)| {
            let stream = NoiseStream::Branch {
                origin: ens.step,
                branch: m as u64,
            };
            let start = ens.replica_positions(r);
            let mut pos = start.to_vec();
            for (j, slice) in slices.iter().enumerate() {
                let noise = scaled_increment(driver, stream, r, j as u64, nu);
                for x in pos.iter_mut() {
                    *x = advance_position(slice.as_ref(), *x, noise, dt);
                }
            }
            (functional(t_later, &pos) - functional(t, start)) / eps_eff
        })
        .collect();
    Ok(quotients
        .chunks(branches)
        .map(Estimate::from_samples)
        .collect())
}

const ENSEMBLE_MAGIC: &str = "# stochvar flow ensemble";

impl FlowEnsemble {
    /// Text checkpoint: a header with `t`, `step`, `replicas`, `points`,
    /// `seed`, `grid` (0 for scattered points), then one row per particle
    /// `point replica x1 x2 g1 g2 J11 J12 J21 J22` in `{:.16e}` form.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{ENSEMBLE_MAGIC}")?;
        writeln!(w, "t {:.16e}", self.t)?;
        writeln!(w, "step {}", self.step)?;
        writeln!(w, "replicas {}", self.replicas)?;
        writeln!(w, "points {}", self.initial.len())?;
        writeln!(w, "seed {}", self.seed)?;
        writeln!(w, "grid {}", self.grid_n.unwrap_or(0))?;
        writeln!(w, "# point replica x1 x2 g1 g2 J11 J12 J21 J22")?;
        let p = self.initial.len();
        for (idx, (g, j)) in self.positions.iter().zip(&self.jacobians).enumerate() {
            let x = self.initial[idx % p];
            writeln!(
                w,
                "{} {} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                idx % p,
                idx / p,
                x[0],
                x[1],
                g[0],
                g[1],
                j[0][0],
                j[0][1],
                j[1][0],
                j[1][1]
            )?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format("truncated ensemble file".into()))?
                .map_err(Error::from)
        };
        if next()?.trim() != ENSEMBLE_MAGIC {
            return Err(Error::Format("not a flow ensemble file".into()));
        }
        fn field<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(Error::Format(format!("expected `{key}` line, got `{line}`")));
            }
            it.next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad `{key}` value")))
        }
        let t: f64 = field(&next()?, "t")?;
        let step: u64 = field(&next()?, "step")?;
        let replicas: usize = field(&next()?, "replicas")?;
        let points: usize = field(&next()?, "points")?;
        let seed: u64 = field(&next()?, "seed")?;
        let grid: usize = field(&next()?, "grid")?;
        let _columns = next()?;
        if replicas == 0 || points == 0 {
            return Err(Error::Format("empty ensemble".into()));
        }
        let total = replicas * points;
        let mut initial = vec![[0.0; 2]; points];
        let mut positions = Vec::with_capacity(total);
        let mut jacobians = Vec::with_capacity(total);
        for idx in 0..total {
            let line = next()?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 10 {
                return Err(Error::Format(format!("row {idx}: expected 10 columns")));
            }
            let pi: usize = parts[0].parse().map_err(|_| Error::Format("bad point index".into()))?;
            let ri: usize = parts[1].parse().map_err(|_| Error::Format("bad replica index".into()))?;
            if pi != idx % points || ri != idx / points {
                return Err(Error::Format(format!("row {idx} out of order")));
            }
            let vals: Vec<f64> = parts[2..]
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Format(format!("row {idx}: bad number")))?;
            if ri == 0 {
                initial[pi] = [vals[0], vals[1]];
            }
            positions.push([vals[2], vals[3]]);
            jacobians.push([[vals[4], vals[5]], [vals[6], vals[7]]]);
        }
        Ok(FlowEnsemble {
            initial,
            grid_n: if grid == 0 { None } else { Some(grid) },
            replicas,
            seed,
            t,
            step,
            positions,
            jacobians,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}
