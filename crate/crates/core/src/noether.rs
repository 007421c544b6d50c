//! Conserved quantities of the stochastic Lagrangian flow.
//!
//! For a candidate symmetry `(eta, G)` the charge density is
//! `f = v.eta - G` and the residual is `r(t) = int L_t f dx` with the forward
//! material operator `L_t = d_t + (v.grad) + nu lap`. The residual is an
//! Eulerian grid computation. The Lagrangian side (invariance of the
//! Lagrangian along the flow, and the martingale property of the particle
//! charge) is estimated by Monte Carlo over flow replicas.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::action::InitialPoints;
use crate::error::{Error, Result};
use crate::fields::{ModalBundle, SpectralField, SpectralVectorField, TorusGrid};
use crate::flows::{det2, eps_steps, replica_functional_drift, run_flow, wrap, TrajectoryDrift, DEFAULT_PRUNE};
use crate::ns::NSTrajectory;
use crate::rng::BrownianDriver;
use crate::spacetime::{CisTable, Envelope, SpaceTimeScalar, SpaceTimeVector, SymmetryPair, TrigMode, TrigSeries};
use crate::stats::Estimate;

/// A scalar path known on the grid at any time, with its time derivative.
pub trait ScalarPath: Sync {
    fn value_at(&self, t: f64) -> Result<SpectralField>;
    fn time_derivative_at(&self, t: f64) -> Result<SpectralField>;
}

/// A closed-form scalar sampled on `grid`.
pub struct AnalyticScalar<'a> {
    pub field: &'a SpaceTimeScalar,
    pub grid: &'a TorusGrid,
}

impl ScalarPath for AnalyticScalar<'_> {
    fn value_at(&self, t: f64) -> Result<SpectralField> {
        self.field.field_at(self.grid, t)
    }

    fn time_derivative_at(&self, t: f64) -> Result<SpectralField> {
        self.field.time_derivative_at(self.grid, t)
    }
}

/// One velocity component of a trajectory, `d_t` from the stored right-hand side.
pub struct VelocityComponent<'a> {
    pub trajectory: &'a NSTrajectory,
    pub axis: usize,
}

impl ScalarPath for VelocityComponent<'_> {
    fn value_at(&self, t: f64) -> Result<SpectralField> {
        Ok(self.trajectory.velocity_at(t)?.components[self.axis].clone())
    }

    fn time_derivative_at(&self, t: f64) -> Result<SpectralField> {
        Ok(self.trajectory.dvdt_at(t)?.components[self.axis].clone())
    }
}

/// Charge density `v.eta - G` along a trajectory.
pub struct ChargeDensity<'a> {
    pub pair: &'a SymmetryPair,
    pub trajectory: &'a NSTrajectory,
}

impl ChargeDensity<'_> {
    fn check(&self) -> Result<()> {
        if self.pair.g_is_non_periodic() || !self.pair.eta.is_periodic() {
            return Err(Error::Unsupported(format!(
                "`{}` has a non-periodic part; its charge density has no grid representation",
                self.pair.label
            )));
        }
        Ok(())
    }
}

impl ScalarPath for ChargeDensity<'_> {
    fn value_at(&self, t: f64) -> Result<SpectralField> {
        self.check()?;
        let grid = self.trajectory.grid();
        let v = self.trajectory.velocity_at(t)?;
        let eta = self.pair.eta.field_at(grid, t)?;
        let mut f = v.dot(&eta);
        f.axpy(-1.0, &self.pair.g.field_at(grid, t)?);
        Ok(f)
    }

    fn time_derivative_at(&self, t: f64) -> Result<SpectralField> {
        self.check()?;
        let grid = self.trajectory.grid();
        let v = self.trajectory.velocity_at(t)?;
        let dv = self.trajectory.dvdt_at(t)?;
        let eta = self.pair.eta.field_at(grid, t)?;
        let deta = self.pair.eta.time_derivative_at(grid, t)?;
        let mut f = dv.dot(&eta);
        f.axpy(1.0, &v.dot(&deta));
        f.axpy(-1.0, &self.pair.g.time_derivative_at(grid, t)?);
        Ok(f)
    }
}

/// The three pieces `d_t f`, `(v.grad) f` and `nu lap f` at one time.
#[derive(Clone, Debug)]
pub struct OperatorParts {
    pub time: SpectralField,
    pub transport: SpectralField,
    pub diffusion: SpectralField,
}

impl OperatorParts {
    /// `d_t f + (v.grad) f + nu lap f`.
    pub fn material(&self) -> SpectralField {
        let mut out = self.time.clone();
        out.axpy(1.0, &self.transport);
        out.axpy(1.0, &self.diffusion);
        out
    }

    /// `d_t f + (v.grad) f - nu lap f`, the operator of the momentum equation.
    pub fn ns_form(&self) -> SpectralField {
        let mut out = self.time.clone();
        out.axpy(1.0, &self.transport);
        out.axpy(-1.0, &self.diffusion);
        out
    }
}

pub fn operator_parts(f: &dyn ScalarPath, trajectory: &NSTrajectory, t: f64) -> Result<OperatorParts> {
    let v = trajectory.velocity_at(t)?;
    let value = f.value_at(t)?;
    Ok(OperatorParts {
        time: f.time_derivative_at(t)?,
        transport: v.advect_scalar(&value),
        diffusion: value.laplacian().scale(trajectory.nu),
    })
}

/// `(d_t f + (v.grad) f + nu lap f)(t, .)` on the trajectory's grid. Note
/// the `+nu lap`: this is the forward generator of the flow, not the
/// operator of the momentum equation.
pub fn material_operator(f: &dyn ScalarPath, trajectory: &NSTrajectory, t: f64) -> Result<SpectralField> {
    Ok(operator_parts(f, trajectory, t)?.material())
}

/// Eulerian Noether residual of one pair along a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct NoetherReport {
    pub label: String,
    pub times: Vec<f64>,
    /// `r(t) = int L_t (v.eta - G) dx`.
    pub residual: Vec<f64>,
    /// `Q(t) = int (v.eta - G) dx`.
    pub charge: Vec<f64>,
    /// `int d_t f dx`; equals `dQ/dt`.
    pub time_part: Vec<f64>,
    /// `int ((v.grad) f + nu lap f) dx`; zero for divergence-free `v`.
    pub transport_part: Vec<f64>,
    /// Invariance defect at the times where it was sampled.
    pub defect: Vec<Option<Estimate>>,
}

impl NoetherReport {
    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Copies the defects of an invariance run onto matching times.
    pub fn attach_defect(&mut self, inv: &InvarianceReport) {
        for (t, d) in inv.times.iter().zip(&inv.defect) {
            if let Some(i) = self.times.iter().position(|s| (s - t).abs() <= 1e-12 * t.abs().max(1.0)) {
                self.defect[i] = Some(*d);
            }
        }
    }
}

/// `r(t)` and `Q(t)` at every stored time of the trajectory.
///
/// The endpoint conditions on `eta` are not required here: the identity is
/// local in time. Pairs with a non-periodic part are rejected.
pub fn noether_residual(pair: &SymmetryPair, trajectory: &NSTrajectory) -> Result<NoetherReport> {
    if !pair.eta_vanishes_at_ends(trajectory.t_end()) {
        log::info!("endpoint conditions on eta waived for `{}`", pair.label);
    }
    let density = ChargeDensity { pair, trajectory };
    density.check()?;
    let rows: Vec<(f64, f64, f64, f64)> = trajectory
        .times
        .par_iter()
        .map(|&t| {
            if pair.is_zero() {
                return Ok((0.0, 0.0, 0.0, 0.0));
            }
            let parts = operator_parts(&density, trajectory, t)?;
            let q = density.value_at(t)?.integral();
            let time = parts.time.integral();
            let mut rest = parts.transport.clone();
            rest.axpy(1.0, &parts.diffusion);
            let rest = rest.integral();
            Ok((parts.material().integral(), q, time, rest))
        })
        .collect::<Result<_>>()?;
    Ok(NoetherReport {
        label: pair.label.clone(),
        times: trajectory.times.clone(),
        residual: rows.iter().map(|r| r.0).collect(),
        charge: rows.iter().map(|r| r.1).collect(),
        time_part: rows.iter().map(|r| r.2).collect(),
        transport_part: rows.iter().map(|r| r.3).collect(),
        defect: vec![None; trajectory.len()],
    })
}

/// `int v_i dx` per stored time.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumSeries {
    pub times: Vec<f64>,
    pub values: Vec<[f64; 2]>,
}

impl MomentumSeries {
    /// `max_t |Q(t) - Q(0)|` divided by the length of the time window.
    pub fn drift_per_unit_time(&self) -> f64 {
        let span = self.times.last().unwrap_or(&0.0) - self.times.first().unwrap_or(&0.0);
        let q0 = self.values[0];
        let worst = self
            .values
            .iter()
            .map(|q| (q[0] - q0[0]).abs().max((q[1] - q0[1]).abs()))
            .fold(0.0, f64::max);
        if span > 0.0 {
            worst / span
        } else {
            0.0
        }
    }
}

pub fn momentum_series(trajectory: &NSTrajectory) -> MomentumSeries {
    MomentumSeries {
        times: trajectory.times.clone(),
        values: trajectory.momentum_series(),
    }
}

/// Particle ensemble parameters for the Monte Carlo checks.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowRun {
    pub points: InitialPoints,
    pub replicas: usize,
    pub seed: u64,
    /// Observe every `sample_every` solver steps.
    pub sample_every: usize,
    /// Largest `|det grad g - 1|` for which the flow counts as critical.
    pub det_tolerance: f64,
    pub prune: f64,
}

impl FlowRun {
    pub fn new(points: InitialPoints, replicas: usize, seed: u64) -> Self {
        FlowRun {
            points,
            replicas,
            seed,
            sample_every: 1,
            det_tolerance: 1e-4,
            prune: DEFAULT_PRUNE,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::Config("replica count must be at least 1".into()));
        }
        if self.sample_every == 0 {
            return Err(Error::Config("sampling stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Both sides of the invariance condition per sampled time.
#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceReport {
    pub label: String,
    pub times: Vec<f64>,
    /// `int (v.L eta - grad p.eta + grad p.eta (det - 1))(t, g) dx`.
    pub lhs: Vec<Estimate>,
    /// `int L G (t, g) dx`.
    pub rhs: Vec<Estimate>,
    /// Per-replica `lhs - rhs`.
    pub defect: Vec<Estimate>,
    pub max_det_defect: f64,
    /// Set when the flow is not volume preserving to `det_tolerance`.
    pub warning: Option<String>,
}

impl InvarianceReport {
    /// Largest `|mean| - k stderr` over times; non-positive when every
    /// defect is within `k` standard errors of zero.
    pub fn worst_excess(&self, k: f64) -> f64 {
        self.defect
            .iter()
            .map(|d| d.mean.abs() - k * d.stderr)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn node_bundle(trajectory: &NSTrajectory, n: usize, prune: f64) -> ModalBundle {
    let v = &trajectory.velocity[n];
    let gp = trajectory.pressure[n].gradient();
    ModalBundle::from_fields(
        &[&v.components[0], &v.components[1], &gp.components[0], &gp.components[1]],
        prune,
    )
}

/// Lagrangian form of the invariance condition along a flow driven by the
/// trajectory. The divergence term of the first variation of the
/// constraint integrates to zero on the torus and is not sampled.
pub fn invariance_check(pair: &SymmetryPair, trajectory: &NSTrajectory, run: &FlowRun) -> Result<InvarianceReport> {
    run.validate()?;
    pair.eta.components[0].validate()?;
    pair.eta.components[1].validate()?;
    pair.g.series.validate()?;
    let dt = trajectory.dt;
    let nu = trajectory.nu;
    let steps = trajectory.len() - 1;
    let driver = BrownianDriver::new(run.seed, run.replicas, dt);
    let drift = TrajectoryDrift {
        trajectory,
        prune: run.prune,
    };
    let ens = run.points.ensemble(run.replicas, run.seed, trajectory.t_start())?;
    let cell = (2.0 * PI).powi(2) / ens.num_points() as f64;
    let kmax = pair.kmax();
    let mut report = InvarianceReport {
        label: pair.label.clone(),
        times: Vec::new(),
        lhs: Vec::new(),
        rhs: Vec::new(),
        defect: Vec::new(),
        max_det_defect: 0.0,
        warning: None,
    };
    let zero = pair.is_zero();
    run_flow(ens, &drift, nu, dt, steps, &driver, |ens| {
        let n = ens.step() as usize;
        if n % run.sample_every != 0 {
            return Ok(());
        }
        let t = trajectory.times[n];
        let bundle = node_bundle(trajectory, n, run.prune);
        let per_replica: Vec<(f64, f64, f64)> = (0..run.replicas)
            .into_par_iter()
            .map(|r| {
                let (mut lhs, mut rhs, mut worst) = (0.0, 0.0, 0.0f64);
                let mut f = [0.0; 4];
                for (x_raw, jac) in ens.replica_positions(r).iter().zip(ens.replica_jacobians(r)) {
                    let det = det2(jac);
                    worst = worst.max((det - 1.0).abs());
                    if zero {
                        continue;
                    }
                    bundle.eval(wrap(*x_raw), &mut f);
                    let v = [f[0], f[1]];
                    let gp = [f[2], f[3]];
                    // jets take the unwrapped position so linear parts stay consistent
                    let x = *x_raw;
                    let cis = CisTable::new(x, kmax);
                    let eta = pair.eta.jet_with(t, &cis, x);
                    let g = pair.g.jet_with(t, &cis, x);
                    let mut v_leta = 0.0;
                    for i in 0..2 {
                        let l = eta.dt[i] + v[0] * eta.grad[i][0] + v[1] * eta.grad[i][1] + nu * eta.laplacian[i];
                        v_leta += v[i] * l;
                    }
                    let gp_eta = gp[0] * eta.value[0] + gp[1] * eta.value[1];
                    lhs += v_leta - gp_eta + gp_eta * (det - 1.0);
                    rhs += g.dt + v[0] * g.grad[0] + v[1] * g.grad[1] + nu * g.laplacian();
                }
                (cell * lhs, cell * rhs, worst)
            })
            .collect();
        let lhs: Vec<f64> = per_replica.iter().map(|p| p.0).collect();
        let rhs: Vec<f64> = per_replica.iter().map(|p| p.1).collect();
        let diff: Vec<f64> = per_replica.iter().map(|p| p.0 - p.1).collect();
        for p in &per_replica {
            report.max_det_defect = report.max_det_defect.max(p.2);
        }
        report.times.push(t);
        report.lhs.push(Estimate::from_samples(&lhs));
        report.rhs.push(Estimate::from_samples(&rhs));
        report.defect.push(Estimate::from_samples(&diff));
        Ok(())
    })?;
    if report.max_det_defect > run.det_tolerance {
        let msg = format!(
            "flow is not volume preserving (max |det - 1| = {:.3e} > {:.1e}); the constraint term of the variation does not vanish",
            report.max_det_defect, run.det_tolerance
        );
        log::warn!("{msg}");
        report.warning = Some(msg);
    }
    Ok(report)
}

/// Per-replica charges `int (v.eta - G)(t, g_t(x)) dx` and the branching
/// estimate of their drift.
#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleReport {
    pub label: String,
    pub times: Vec<f64>,
    /// `charges[time][replica]`.
    pub charges: Vec<Vec<f64>>,
    /// `replica_drift[time][replica]`: branch mean and its standard error.
    pub replica_drift: Vec<Vec<Estimate>>,
    /// Mean over replicas of the branch means.
    pub drift: Vec<Estimate>,
    pub eps: f64,
    pub branches: usize,
}

/// Branching parameters for [`martingale_probe`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeSchedule {
    pub eps: f64,
    pub branches: usize,
    /// Number of probe times, spread evenly over the admissible window.
    pub samples: usize,
}

fn charge_of(pair: &SymmetryPair, bundle: &ModalBundle, t: f64, positions: &[[f64; 2]], cell: f64) -> f64 {
    let kmax = pair.kmax();
    let mut v = [0.0; 2];
    let mut q = 0.0;
    for x in positions {
        bundle.eval(wrap(*x), &mut v);
        let cis = CisTable::new(*x, kmax);
        let eta = pair.eta.jet_with(t, &cis, *x);
        let g = pair.g.jet_with(t, &cis, *x);
        q += v[0] * eta.value[0] + v[1] * eta.value[1] - g.value;
    }
    cell * q
}

pub fn martingale_probe(
    pair: &SymmetryPair,
    trajectory: &NSTrajectory,
    run: &FlowRun,
    schedule: ProbeSchedule,
) -> Result<MartingaleReport> {
    run.validate()?;
    if schedule.samples == 0 {
        return Err(Error::Config("at least one probe time is needed".into()));
    }
    let dt = trajectory.dt;
    let nu = trajectory.nu;
    let k = eps_steps(schedule.eps, dt)?;
    let steps = trajectory.len() - 1;
    if k > steps {
        return Err(Error::Config("branching window longer than the trajectory".into()));
    }
    let last = steps - k;
    let probe_steps: Vec<usize> = if schedule.samples == 1 {
        vec![last / 2]
    } else {
        (0..schedule.samples)
            .map(|i| i * last / (schedule.samples - 1))
            .collect()
    };
    let driver = BrownianDriver::new(run.seed, run.replicas, dt);
    let drift = TrajectoryDrift {
        trajectory,
        prune: run.prune,
    };
    let ens = run.points.ensemble(run.replicas, run.seed, trajectory.t_start())?;
    let cell = (2.0 * PI).powi(2) / ens.num_points() as f64;
    let mut report = MartingaleReport {
        label: pair.label.clone(),
        times: Vec::new(),
        charges: Vec::new(),
        replica_drift: Vec::new(),
        drift: Vec::new(),
        eps: k as f64 * dt,
        branches: schedule.branches,
    };
    let end = *probe_steps.last().expect("non-empty");
    run_flow(ens, &drift, nu, dt, end, &driver, |ens| {
        let n = ens.step() as usize;
        if !probe_steps.contains(&n) {
            return Ok(());
        }
        let t = trajectory.times[n];
        let t_later = trajectory.times[n + k];
        let velocity = |s: f64| -> ModalBundle {
            let v = &trajectory.velocity[if s == t { n } else { n + k }];
            ModalBundle::from_fields(&[&v.components[0], &v.components[1]], run.prune)
        };
        let (now, later) = (velocity(t), velocity(t_later));
        let functional = |s: f64, pos: &[[f64; 2]]| -> f64 {
            let b = if s == t { &now } else { &later };
            charge_of(pair, b, s, pos, cell)
        };
        let charges: Vec<f64> = (0..ens.replicas())
            .map(|r| functional(t, ens.replica_positions(r)))
            .collect();
        let per_replica =
            replica_functional_drift(&functional, ens, &drift, nu, dt, k as f64 * dt, schedule.branches, &driver)?;
        let means: Vec<f64> = per_replica.iter().map(|e| e.mean).collect();
        report.times.push(t);
        report.charges.push(charges);
        report.drift.push(Estimate::from_samples(&means));
        report.replica_drift.push(per_replica);
        Ok(())
    })?;
    Ok(report)
}

/// Parses a custom symmetry file.
///
/// ```text
/// # comment
/// label = shear-like
/// eta.envelope = bump          # constant | sin2 | bump | exp:<rate>
/// eta1 = sin 0 1 1.0 + const 0.5
/// eta2 = cos 1 0 -0.25
/// g.envelope = constant
/// g = linear 1 0 + cos 1 1 0.1
/// ```
///
/// Terms are `const a`, `linear a1 a2`, `cos k1 k2 a` and `sin k1 k2 a`.
/// Missing components are zero.
pub fn parse_symmetry(text: &str, t_final: f64) -> Result<SymmetryPair> {
    let mut label = String::from("custom");
    let mut eta_env = Envelope::Constant;
    let mut g_env = Envelope::Constant;
    let mut eta = [TrigSeries::zero(), TrigSeries::zero()];
    let mut g = TrigSeries::zero();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("symmetry line {}: expected `key = value`", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let at = |e: Error| Error::Format(format!("symmetry line {}: {e}", lineno + 1));
        match key {
            "label" => label = value.to_string(),
            "eta.envelope" => eta_env = parse_envelope(value, t_final).map_err(at)?,
            "g.envelope" => g_env = parse_envelope(value, t_final).map_err(at)?,
            "eta1" => eta[0] = parse_series(value).map_err(at)?,
            "eta2" => eta[1] = parse_series(value).map_err(at)?,
            "g" => g = parse_series(value).map_err(at)?,
            other => {
                return Err(Error::Format(format!(
                    "symmetry line {}: unknown key `{other}`",
                    lineno + 1
                )))
            }
        }
    }
    for s in eta.iter().chain(std::iter::once(&g)) {
        s.validate()?;
    }
    Ok(SymmetryPair::new(
        label,
        SpaceTimeVector::new(eta_env, eta),
        SpaceTimeScalar::new(g_env, g),
    ))
}

fn parse_envelope(value: &str, t_final: f64) -> Result<Envelope> {
    if let Some(rate) = value.strip_prefix("exp:") {
        let rate: f64 = rate
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad rate in `{value}`")))?;
        return Ok(Envelope::Exp { rate });
    }
    Envelope::parse(value, t_final)
}

fn parse_series(value: &str) -> Result<TrigSeries> {
    let mut out = TrigSeries::zero();
    for term in value.split('+') {
        let words: Vec<&str> = term.split_whitespace().collect();
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Config(format!("bad number `{s}`"))) };
        let int = |s: &str| -> Result<i64> { s.parse().map_err(|_| Error::Config(format!("bad wavenumber `{s}`"))) };
        match words.as_slice() {
            ["const", a] => out.constant += num(a)?,
            ["linear", a, b] => {
                out.linear[0] += num(a)?;
                out.linear[1] += num(b)?;
            }
            [kind @ ("cos" | "sin"), k1, k2, a] => {
                let (k, a) = ([int(k1)?, int(k2)?], num(a)?);
                let (cos, sin) = if *kind == "cos" { (a, 0.0) } else { (0.0, a) };
                out.modes.push(TrigMode { k, cos, sin });
            }
            _ => return Err(Error::Config(format!("cannot read term `{}`", term.trim()))),
        }
    }
    Ok(out)
}

/// Grid charge density of a pair at one time; used by reports and tests.
pub fn charge_density(pair: &SymmetryPair, trajectory: &NSTrajectory, t: f64) -> Result<SpectralField> {
    ChargeDensity { pair, trajectory }.value_at(t)
}

/// Velocity field `w` with `int w dx = (2 pi)^2 c` and no other content;
/// adding it as a body force breaks translation invariance.
pub fn mean_forcing(grid: &TorusGrid, c: [f64; 2]) -> SpectralVectorField {
    SpectralVectorField::constant(grid, c)
}
