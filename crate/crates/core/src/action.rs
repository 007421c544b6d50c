//! The pressure-constrained action
//!
//! ```text
//! S(g, p) = 1/2 E int int |D_t g|^2 dx dt + E int int p(t, g)(det grad g - 1) dx dt
//! ```
//!
//! along flows driven by a trajectory, its shift variations
//! `g -> g + eps h(t, g)`, `p -> p + eps phi`, Gateaux derivatives and the
//! Euler-Lagrange pairing.
//!
//! Everything is accumulated in a single pass over the flow: at every time
//! node each particle contributes to the base action, to the perturbed
//! actions of every requested direction and signed `eps`, to the
//! Euler-Lagrange pairings and to the multiplier probes. All perturbed runs
//! therefore share the base run's Brownian paths.
//!
//! The perturbed integrands are closed form:
//!
//! * `D_t g^eps = v(t, g) + eps (d_t h + (v.grad) h + nu lap h)(t, g)`;
//! * `det grad g^eps = det grad g * det(I + eps grad h(t, g))`, exact in `eps`;
//! * the perturbed pressure along `g^eps` is expanded to second order,
//!   `p + eps (grad p.h + phi) + eps^2 (h.Hess p.h / 2 + grad phi.h)`, all at `g`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{ModalBundle, SpectralField, SpectralVectorField, TorusGrid};
use crate::flows::{det2, run_flow, wrap, FlowEnsemble, TrajectoryDrift, DEFAULT_PRUNE};
use crate::ns::NSTrajectory;
use crate::rng::BrownianDriver;
use crate::spacetime::{CisTable, PerturbationField, SpaceTimeScalar, SpaceTimeVector};
use crate::stats::Estimate;

/// Where the flow's particles start.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialPoints {
    /// Every point of an `n x n` grid.
    Grid(usize),
    Points(Vec<[f64; 2]>),
}

impl InitialPoints {
    pub fn ensemble(&self, replicas: usize, seed: u64, t0: f64) -> Result<FlowEnsemble> {
        match self {
            InitialPoints::Grid(n) => FlowEnsemble::on_grid(&TorusGrid::new(*n)?, replicas, seed, t0),
            InitialPoints::Points(p) => FlowEnsemble::at_points(p.clone(), replicas, seed, t0),
        }
    }
}

/// Inputs shared by every action evaluation: the drift path, the pressure
/// path, and the flow ensemble parameters.
#[derive(Clone, Debug)]
pub struct ActionSetup<'a> {
    pub trajectory: &'a NSTrajectory,
    /// One pressure field per trajectory node; `None` uses the trajectory's.
    pub pressure: Option<&'a [SpectralField]>,
    pub points: InitialPoints,
    pub replicas: usize,
    pub seed: u64,
    /// Horizon `T`; must match the trajectory's last time.
    pub t_final: f64,
    /// Smallest admissible `det(I + eps grad h)` before the run is rejected.
    pub singular_floor: f64,
    pub prune: f64,
}

impl<'a> ActionSetup<'a> {
    pub fn new(trajectory: &'a NSTrajectory, points: InitialPoints, replicas: usize, seed: u64) -> Self {
        ActionSetup {
            trajectory,
            pressure: None,
            points,
            replicas,
            seed,
            t_final: trajectory.t_end(),
            singular_floor: 0.1,
            prune: DEFAULT_PRUNE,
        }
    }

    pub fn with_pressure(mut self, pressure: &'a [SpectralField]) -> Self {
        self.pressure = Some(pressure);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::Config("replica count must be at least 1".into()));
        }
        let traj = self.trajectory;
        if traj.len() < 2 {
            return Err(Error::Config("trajectory needs at least two samples".into()));
        }
        if (traj.t_end() - self.t_final).abs() > 1e-9 * self.t_final.max(1.0)
            || traj.t_start().abs() > 1e-12
        {
            return Err(Error::Config(format!(
                "horizon mismatch: action over [0, {}] but trajectory covers [{}, {}]",
                self.t_final,
                traj.t_start(),
                traj.t_end()
            )));
        }
        if let Some(p) = self.pressure {
            if p.len() != traj.len() {
                return Err(Error::Config(format!(
                    "pressure path has {} samples, trajectory has {}",
                    p.len(),
                    traj.len()
                )));
            }
        }
        Ok(())
    }

    fn ensemble(&self) -> Result<FlowEnsemble> {
        self.points.ensemble(self.replicas, self.seed, 0.0)
    }
}

/// Kinetic and constraint terms of the action with Monte Carlo errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionBreakdown {
    pub s1: f64,
    pub s2: f64,
    pub stderr1: f64,
    pub stderr2: f64,
    pub replicas: usize,
}

impl ActionBreakdown {
    fn from_replicas(s1: &[f64], s2: &[f64]) -> Self {
        let a = Estimate::from_samples(s1);
        let b = Estimate::from_samples(s2);
        ActionBreakdown {
            s1: a.mean,
            s2: b.mean,
            stderr1: a.stderr,
            stderr2: b.stderr,
            replicas: s1.len(),
        }
    }

    pub fn total(&self) -> f64 {
        self.s1 + self.s2
    }
}

/// Per-replica results of one direction in a sweep.
#[derive(Clone, Debug)]
pub struct DirectionOutcome {
    pub label: String,
    /// Signed `eps` values evaluated, in request order.
    pub eps: Vec<f64>,
    /// `s1[e][r]`, `s2[e][r]`: perturbed terms for `eps[e]` and replica `r`.
    pub s1: Vec<Vec<f64>>,
    pub s2: Vec<Vec<f64>>,
    /// Per-replica `int int (dt v + (v.grad)v - nu lap v + grad p).h (t, g)`.
    pub pairing: Vec<f64>,
    /// Per-replica `int int phi(t, g)(det grad g - 1)`.
    pub multiplier: Vec<f64>,
    /// Smallest `det(I + eps grad h)` met for the largest `|eps|`.
    pub min_shift_det: f64,
}

impl DirectionOutcome {
    pub fn breakdown(&self, e: usize) -> ActionBreakdown {
        ActionBreakdown::from_replicas(&self.s1[e], &self.s2[e])
    }

    /// Per-replica total action for `eps[e]`.
    pub fn totals(&self, e: usize) -> Vec<f64> {
        self.s1[e].iter().zip(&self.s2[e]).map(|(a, b)| a + b).collect()
    }

    fn index_of(&self, eps: f64) -> Option<usize> {
        self.eps.iter().position(|&e| e == eps)
    }
}

/// Output of [`action_sweep`].
#[derive(Clone, Debug)]
pub struct ActionSweep {
    pub base_s1: Vec<f64>,
    pub base_s2: Vec<f64>,
    pub directions: Vec<DirectionOutcome>,
    /// Largest `|det grad g - 1|` over all particles and nodes.
    pub max_det_defect: f64,
    /// Largest grid max-norm of the Euler-Lagrange residual field over nodes.
    pub residual_norm: f64,
}

impl ActionSweep {
    pub fn base(&self) -> ActionBreakdown {
        ActionBreakdown::from_replicas(&self.base_s1, &self.base_s2)
    }
}

/// Euler-Lagrange residual field `dt v + (v.grad) v - nu lap v + grad p`.
fn residual_field(dvdt: &SpectralVectorField, v: &SpectralVectorField, p: &SpectralField, nu: f64) -> SpectralVectorField {
    let mut r = dvdt.clone();
    r.axpy(1.0, &v.advect(v));
    r.axpy(-nu, &v.laplacian());
    r.axpy(1.0, &p.gradient());
    r
}

const NODE_WIDTH: usize = 10;

struct NodeFields {
    bundle: ModalBundle,
    residual_norm: f64,
}

fn node_fields(traj: &NSTrajectory, pressure: &[SpectralField], n: usize, prune: f64) -> NodeFields {
    let v = &traj.velocity[n];
    let p = &pressure[n];
    let gp = p.gradient();
    let hp = p.hessian();
    let r = residual_field(&traj.dvdt[n], v, p, traj.nu);
    let fields: [&SpectralField; NODE_WIDTH] = [
        &v.components[0],
        &v.components[1],
        p,
        &gp.components[0],
        &gp.components[1],
        &hp[0][0],
        &hp[0][1],
        &hp[1][1],
        &r.components[0],
        &r.components[1],
    ];
    NodeFields {
        bundle: ModalBundle::from_fields(&fields, prune),
        residual_norm: r.max_abs(),
    }
}

/// Runs the flow once and accumulates the base action plus, for every
/// direction, the perturbed action at each signed `eps`, the
/// Euler-Lagrange pairing and the multiplier probe.
pub fn action_sweep(setup: &ActionSetup, directions: &[PerturbationField], eps: &[f64]) -> Result<ActionSweep> {
    setup.validate()?;
    // endpoint conditions matter only when the flow is actually varied
    for d in directions {
        if eps.is_empty() {
            d.validate_shape()?;
        } else {
            d.validate(setup.t_final)?;
        }
    }
    if eps.iter().any(|e| !e.is_finite()) {
        return Err(Error::Config("non-finite eps".into()));
    }
    let traj = setup.trajectory;
    let pressure = setup.pressure.unwrap_or(&traj.pressure);
    let nodes = traj.len();
    let dt = traj.dt;
    let nu = traj.nu;
    let ne = eps.len();
    let nd = directions.len();
    // per replica: [base s1, base s2] then per direction [s1 x ne, s2 x ne, pairing, multiplier]
    let stride = 2 * ne + 2;
    let width = 2 + nd * stride;
    let kmax = directions.iter().map(|d| d.kmax()).max().unwrap_or(0);
    let ens0 = setup.ensemble()?;
    let points = ens0.num_points();
    let cell = (2.0 * PI).powi(2) / points as f64;
    let driver = BrownianDriver::new(setup.seed, setup.replicas, dt);
    let drift = TrajectoryDrift {
        trajectory: traj,
        prune: setup.prune,
    };
    let mut acc = vec![vec![0.0; width]; setup.replicas];
    let mut min_det = vec![f64::INFINITY; nd];
    let mut max_det_defect: f64 = 0.0;
    let mut residual_norm: f64 = 0.0;
    let eps_max_idx: Option<usize> = (0..ne).max_by(|&a, &b| eps[a].abs().total_cmp(&eps[b].abs()));

    run_flow(ens0, &drift, nu, dt, nodes - 1, &driver, |ens| {
        let n = ens.step() as usize;
        let t = traj.times[n];
        let weight = if n == 0 || n == nodes - 1 { 0.5 * dt } else { dt };
        let nf = node_fields(traj, pressure, n, setup.prune);
        residual_norm = residual_norm.max(nf.residual_norm);
        let per_replica: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..setup.replicas)
            .into_par_iter()
            .map(|r| {
                let mut sums = vec![0.0; width];
                let mut mins = vec![f64::INFINITY; nd];
                let mut worst: f64 = 0.0;
                let mut f = [0.0; NODE_WIDTH];
                for (x_raw, jac) in ens.replica_positions(r).iter().zip(ens.replica_jacobians(r)) {
                    let x = wrap(*x_raw);
                    nf.bundle.eval(x, &mut f);
                    let v = [f[0], f[1]];
                    let p = f[2];
                    let gp = [f[3], f[4]];
                    let hp = [[f[5], f[6]], [f[6], f[7]]];
                    let res = [f[8], f[9]];
                    let det = det2(jac);
                    worst = worst.max((det - 1.0).abs());
                    sums[0] += 0.5 * (v[0] * v[0] + v[1] * v[1]);
                    sums[1] += p * (det - 1.0);
                    if nd == 0 {
                        continue;
                    }
                    let cis = CisTable::new(x, kmax);
                    for (d, dir) in directions.iter().enumerate() {
                        let base = 2 + d * stride;
                        let h = dir.h.jet_with(t, &cis, x);
                        let phi = dir.phi.jet_with(t, &cis, x);
                        let lh = [
                            h.dt[0] + v[0] * h.grad[0][0] + v[1] * h.grad[0][1] + nu * h.laplacian[0],
                            h.dt[1] + v[0] * h.grad[1][0] + v[1] * h.grad[1][1] + nu * h.laplacian[1],
                        ];
                        let tr = h.grad[0][0] + h.grad[1][1];
                        let dh = det2(&h.grad);
                        let first = gp[0] * h.value[0] + gp[1] * h.value[1] + phi.value;
                        let hph = 0.5
                            * (h.value[0] * (hp[0][0] * h.value[0] + hp[0][1] * h.value[1])
                                + h.value[1] * (hp[1][0] * h.value[0] + hp[1][1] * h.value[1]));
                        let second = hph + phi.grad[0] * h.value[0] + phi.grad[1] * h.value[1];
                        for (e, &ep) in eps.iter().enumerate() {
                            let w = [v[0] + ep * lh[0], v[1] + ep * lh[1]];
                            sums[base + e] += 0.5 * (w[0] * w[0] + w[1] * w[1]);
                            let shift = 1.0 + ep * tr + ep * ep * dh;
                            if Some(e) == eps_max_idx {
                                mins[d] = mins[d].min(shift);
                            }
                            let det_e = det * shift;
                            let p_e = p + ep * first + ep * ep * second;
                            sums[base + ne + e] += p_e * (det_e - 1.0);
                        }
                        sums[base + 2 * ne] += res[0] * h.value[0] + res[1] * h.value[1];
                        sums[base + 2 * ne + 1] += phi.value * (det - 1.0);
                    }
                }
                (sums, mins, worst)
            })
            .collect();
        for (r, (sums, mins, worst)) in per_replica.into_iter().enumerate() {
            for (a, s) in acc[r].iter_mut().zip(&sums) {
                *a += weight * cell * s;
            }
            for (m, x) in min_det.iter_mut().zip(&mins) {
                *m = m.min(*x);
            }
            max_det_defect = max_det_defect.max(worst);
        }
        Ok(())
    })?;

    for (d, dir) in directions.iter().enumerate() {
        if min_det[d] < setup.singular_floor {
            return Err(Error::NearSingular { min_det: min_det[d] }).map_err(|e| {
                log::warn!("direction `{}` makes I + eps grad h near-singular", dir.label);
                e
            });
        }
    }

    let column = |c: usize| acc.iter().map(|row| row[c]).collect::<Vec<f64>>();
    let outcomes = directions
        .iter()
        .enumerate()
        .map(|(d, dir)| {
            let base = 2 + d * stride;
            DirectionOutcome {
                label: dir.label.clone(),
                eps: eps.to_vec(),
                s1: (0..ne).map(|e| column(base + e)).collect(),
                s2: (0..ne).map(|e| column(base + ne + e)).collect(),
                pairing: column(base + 2 * ne),
                multiplier: column(base + 2 * ne + 1),
                min_shift_det: min_det[d],
            }
        })
        .collect();
    Ok(ActionSweep {
        base_s1: column(0),
        base_s2: column(1),
        directions: outcomes,
        max_det_defect,
        residual_norm,
    })
}

/// `S = S^1 + S^2` for the setup's drift and pressure.
pub fn action_evaluate(setup: &ActionSetup) -> Result<ActionBreakdown> {
    Ok(action_sweep(setup, &[], &[])?.base())
}

/// `S(g^eps, p^eps)` along one direction. `eps = 0` reproduces
/// [`action_evaluate`] exactly.
pub fn perturbed_action(setup: &ActionSetup, pert: &PerturbationField, eps: f64) -> Result<ActionBreakdown> {
    let sweep = action_sweep(setup, std::slice::from_ref(pert), &[eps])?;
    Ok(sweep.directions[0].breakdown(0))
}

/// Central difference at one `eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rung {
    pub eps: f64,
    pub estimate: Estimate,
}

/// Gateaux derivative along one direction.
#[derive(Clone, Debug, PartialEq)]
pub struct GateauxResult {
    pub label: String,
    pub rungs: Vec<Rung>,
    /// Richardson limit `eps -> 0` in powers of `eps^2`, per replica.
    pub extrapolated: Estimate,
    /// Observed ratio of successive rung differences divided by the ratio
    /// expected for an `eps^2` error; near 1 when the ladder is in the
    /// asymptotic regime. `None` with fewer than three rungs or when the
    /// differences vanish.
    pub consistency: Option<f64>,
}

/// Checks the ladder is positive and strictly decreasing.
pub fn validate_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::Config("empty epsilon ladder".into()));
    }
    if ladder.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::Config("epsilon ladder entries must be positive".into()));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(format!(
            "epsilon ladder must be strictly decreasing, got {ladder:?}"
        )));
    }
    Ok(())
}

/// Signed evaluation points `+e, -e` for every rung.
pub fn signed_ladder(ladder: &[f64]) -> Vec<f64> {
    ladder.iter().flat_map(|&e| [e, -e]).collect()
}

/// Neville extrapolation to `x = 0` of values `y` at nodes `x`.
fn extrapolate_to_zero(x: &[f64], y: &[f64]) -> f64 {
    let mut p = y.to_vec();
    let n = x.len();
    for level in 1..n {
        for i in 0..n - level {
            let (xi, xj) = (x[i], x[i + level]);
            p[i] = (xj * p[i] - xi * p[i + 1]) / (xj - xi);
        }
    }
    p[0]
}

/// Gateaux derivative from a sweep outcome evaluated on
/// [`signed_ladder`]`(ladder)`.
pub fn gateaux_from_outcome(outcome: &DirectionOutcome, ladder: &[f64]) -> Result<GateauxResult> {
    validate_ladder(ladder)?;
    let replicas = outcome.pairing.len();
    let mut per_rung: Vec<Vec<f64>> = Vec::with_capacity(ladder.len());
    for &e in ladder {
        let (ip, im) = match (outcome.index_of(e), outcome.index_of(-e)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Config(format!("eps = {e} missing from the sweep"))),
        };
        let plus = outcome.totals(ip);
        let minus = outcome.totals(im);
        per_rung.push(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * e)).collect());
    }
    let rungs = ladder
        .iter()
        .zip(&per_rung)
        .map(|(&eps, vals)| Rung {
            eps,
            estimate: Estimate::from_samples(vals),
        })
        .collect::<Vec<_>>();
    let x: Vec<f64> = ladder.iter().map(|e| e * e).collect();
    let extrapolated: Vec<f64> = (0..replicas)
        .map(|r| {
            let y: Vec<f64> = per_rung.iter().map(|v| v[r]).collect();
            extrapolate_to_zero(&x, &y)
        })
        .collect();
    let consistency = if ladder.len() >= 3 {
        let m: Vec<f64> = rungs.iter().map(|r| r.estimate.mean).collect();
        let d1 = m[0] - m[1];
        let d2 = m[1] - m[2];
        let expected = (x[0] - x[1]) / (x[1] - x[2]);
        if d2 != 0.0 && d1 != 0.0 {
            Some(d1 / d2 / expected)
        } else {
            None
        }
    } else {
        None
    };
    Ok(GateauxResult {
        label: outcome.label.clone(),
        rungs,
        extrapolated: Estimate::from_samples(&extrapolated),
        consistency,
    })
}

/// `dS/d eps` at 0 along `pert`, by central differences over the ladder and
/// Richardson extrapolation, all on common random numbers.
pub fn gateaux_derivative(setup: &ActionSetup, pert: &PerturbationField, ladder: &[f64]) -> Result<GateauxResult> {
    validate_ladder(ladder)?;
    if pert.is_zero() {
        let zero = Estimate {
            mean: 0.0,
            stderr: 0.0,
            count: setup.replicas,
        };
        return Ok(GateauxResult {
            label: pert.label.clone(),
            rungs: ladder.iter().map(|&eps| Rung { eps, estimate: zero }).collect(),
            extrapolated: zero,
            consistency: None,
        });
    }
    let sweep = action_sweep(setup, std::slice::from_ref(pert), &signed_ladder(ladder))?;
    gateaux_from_outcome(&sweep.directions[0], ladder)
}

/// Monte Carlo Euler-Lagrange pairing and the grid residual norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerLagrange {
    pub pairing: Estimate,
    pub grid_residual: f64,
}

pub fn euler_lagrange_residual(setup: &ActionSetup, h: &SpaceTimeVector) -> Result<EulerLagrange> {
    let pert = PerturbationField::new("el", h.clone(), SpaceTimeScalar::zero());
    let sweep = action_sweep(setup, std::slice::from_ref(&pert), &[])?;
    Ok(EulerLagrange {
        pairing: Estimate::from_samples(&sweep.directions[0].pairing),
        grid_residual: sweep.residual_norm,
    })
}

/// `E int int phi(t, g)(det grad g - 1)` for each `phi`.
pub fn multiplier_probe(setup: &ActionSetup, phis: &[SpaceTimeScalar]) -> Result<Vec<Estimate>> {
    let perts: Vec<PerturbationField> = phis
        .iter()
        .enumerate()
        .map(|(i, phi)| PerturbationField::new(format!("phi{i}"), SpaceTimeVector::zero(), phi.clone()))
        .collect();
    let sweep = action_sweep(setup, &perts, &[])?;
    Ok(sweep
        .directions
        .iter()
        .map(|d| Estimate::from_samples(&d.multiplier))
        .collect())
}

/// One row of a criticality sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticalityRow {
    pub gateaux: GateauxResult,
    pub pairing: Estimate,
    pub multiplier: Estimate,
}

/// Gateaux derivatives, pairings and probes for a whole basis in one flow pass.
pub fn criticality_sweep(
    setup: &ActionSetup,
    basis: &[PerturbationField],
    ladder: &[f64],
) -> Result<(ActionSweep, Vec<CriticalityRow>)> {
    validate_ladder(ladder)?;
    let sweep = action_sweep(setup, basis, &signed_ladder(ladder))?;
    let rows = sweep
        .directions
        .iter()
        .map(|d| {
            Ok(CriticalityRow {
                gateaux: gateaux_from_outcome(d, ladder)?,
                pairing: Estimate::from_samples(&d.pairing),
                multiplier: Estimate::from_samples(&d.multiplier),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((sweep, rows))
}

/// Per-replica `dS + pairing` for one direction: the two routes to the
/// first variation, which agree for any volume-preserving flow.
pub fn route_gap(outcome: &DirectionOutcome, ladder: &[f64]) -> Result<Estimate> {
    validate_ladder(ladder)?;
    for &e in ladder {
        if outcome.index_of(e).is_none() || outcome.index_of(-e).is_none() {
            return Err(Error::Config(format!("eps = {e} missing from the sweep")));
        }
    }
    let x: Vec<f64> = ladder.iter().map(|e| e * e).collect();
    let mut gaps = Vec::with_capacity(outcome.pairing.len());
    let per_rung: Vec<Vec<f64>> = ladder
        .iter()
        .map(|&e| {
            let ip = outcome.index_of(e).expect("validated");
            let im = outcome.index_of(-e).expect("validated");
            outcome
                .totals(ip)
                .iter()
                .zip(outcome.totals(im))
                .map(|(a, b)| (a - b) / (2.0 * e))
                .collect()
        })
        .collect();
    for r in 0..outcome.pairing.len() {
        let y: Vec<f64> = per_rung.iter().map(|v| v[r]).collect();
        gaps.push(extrapolate_to_zero(&x, &y) + outcome.pairing[r]);
    }
    Ok(Estimate::from_samples(&gaps))
}

/// A localized divergence-free field: the skew gradient of the periodic
/// bump `exp(kappa (cos(x1 - c1) + cos(x2 - c2) - 2))`, dealiased and
/// scaled so that its largest grid speed is `amplitude`.
pub fn bump_field(grid: &TorusGrid, center: [f64; 2], kappa: f64, amplitude: f64) -> SpectralVectorField {
    let psi = SpectralField::from_fn(grid, |x, y| {
        (kappa * ((x - center[0]).cos() + (y - center[1]).cos() - 2.0)).exp()
    })
    .dealiased();
    let w = SpectralVectorField::from_stream_function(&psi);
    let s = w.max_speed();
    w.scale(amplitude / s).with_div_free_flag(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::taylor_green;
    use crate::ns::{ns_solve, NSConfig};
    use crate::spacetime::{default_basis, Envelope, TrigSeries};

    fn tg(nu: f64, dt: f64, t_final: f64, n: usize) -> NSTrajectory {
        let g = TorusGrid::new(n).unwrap();
        let cfg = NSConfig::new(&g, nu, dt, t_final).unwrap();
        ns_solve(&taylor_green(&g), &cfg).unwrap()
    }

    #[test]
    fn zero_drift_zero_pressure_has_zero_action() {
        let g = TorusGrid::new(8).unwrap();
        let traj = NSTrajectory::steady(&SpectralVectorField::zeros(&g), 0.1, 0.01, 0.1);
        let setup = ActionSetup::new(&traj, InitialPoints::Grid(8), 3, 1);
        let a = action_evaluate(&setup).unwrap();
        assert_eq!((a.s1, a.s2), (0.0, 0.0));
        let phi = SpaceTimeScalar::new(Envelope::Constant, TrigSeries::cos([1, 0], 1.0));
        assert_eq!(multiplier_probe(&setup, &[phi]).unwrap()[0].mean, 0.0);
        let el = euler_lagrange_residual(&setup, &SpaceTimeVector::unit(0)).unwrap();
        assert_eq!(el.pairing.mean, 0.0);
    }

    #[test]
    fn constant_drift_action() {
        let g = TorusGrid::new(8).unwrap();
        let c = [0.3, -0.4];
        let traj = NSTrajectory::steady(&SpectralVectorField::constant(&g, c), 0.1, 0.01, 0.5);
        let setup = ActionSetup::new(&traj, InitialPoints::Grid(8), 4, 2);
        let a = action_evaluate(&setup).unwrap();
        let exact = 0.5 * 0.25 * 0.5 * (2.0 * PI).powi(2);
        assert!((a.s1 - exact).abs() < 1e-13 * exact, "{} {}", a.s1, exact);
        assert_eq!(a.s2, 0.0);
        assert!(a.stderr1 < 1e-14);
    }

    #[test]
    fn taylor_green_kinetic_term_is_energy_integral() {
        let nu = 0.1;
        let t_final = 0.5;
        let traj = tg(nu, 1e-3, t_final, 16);
        let setup = ActionSetup::new(&traj, InitialPoints::Grid(16), 4, 3);
        let a = action_evaluate(&setup).unwrap();
        // 1/2 int |v|^2 = pi^2 e^{-4 nu t}
        let exact = PI * PI * (1.0 - (-4.0 * nu * t_final).exp()) / (4.0 * nu);
        assert!((a.s1 - exact).abs() < 1e-6 * exact, "{} {}", a.s1, exact);
        assert!(a.s2.abs() < 1e-4);
    }

    #[test]
    fn zero_eps_is_bitwise_base() {
        let traj = tg(0.1, 1e-2, 0.2, 16);
        let setup = ActionSetup::new(&traj, InitialPoints::Grid(8), 3, 4);
        let base = action_evaluate(&setup).unwrap();
        let pert = default_basis(Envelope::Sin2 { t_final: 0.2 }).remove(3);
        let same = perturbed_action(&setup, &pert, 0.0).unwrap();
        assert_eq!(base, same);
    }

    #[test]
    fn ladder_validation() {
        assert!(validate_ladder(&[1e-2, 5e-3, 2.5e-3]).is_ok());
        assert!(validate_ladder(&[1e-2, 2e-2]).is_err());
        assert!(validate_ladder(&[1e-2, 1e-2]).is_err());
        assert!(validate_ladder(&[]).is_err());
        assert!(validate_ladder(&[-1e-2]).is_err());
    }

    #[test]
    fn neville_recovers_quadratic_limit() {
        let x = [4.0, 1.0, 0.25];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 3.0 * v + 0.5 * v * v).collect();
        assert!((extrapolate_to_zero(&x, &y) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn zero_direction_has_zero_derivative() {
        let traj = tg(0.1, 1e-2, 0.2, 16);
        let setup = ActionSetup::new(&traj, InitialPoints::Grid(8), 2, 4);
        let g = gateaux_derivative(&setup, &PerturbationField::zero(), &[1e-2, 5e-3]).unwrap();
        assert_eq!(g.extrapolated.mean, 0.0);
    }

    #[test]
    fn horizon_mismatch_rejected() {
        let traj = tg(0.1, 1e-2, 0.2, 16);
        let mut setup = ActionSetup::new(&traj, InitialPoints::Grid(8), 2, 4);
        setup.t_final = 0.3;
        assert!(matches!(action_evaluate(&setup), Err(Error::Config(_))));
    }

    #[test]
    fn near_singular_shift_rejected() {
        let traj = tg(0.1, 1e-2, 0.2, 16);
        let setup = ActionSetup::new(&traj, InitialPoints::Grid(8), 2, 4);
        let e = Envelope::Sin2 { t_final: 0.2 };
        let h = SpaceTimeVector::new(e, [TrigSeries::sin([1, 0], 1.0), TrigSeries::zero()]);
        let pert = PerturbationField::new("big", h, SpaceTimeScalar::zero());
        assert!(matches!(perturbed_action(&setup, &pert, 2.0), Err(Error::NearSingular { .. })));
    }
}
