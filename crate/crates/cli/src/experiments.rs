//! The four canonical experiments.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;

use stochvar::action::{bump_field, criticality_sweep, ActionSetup, CriticalityRow, InitialPoints};
use stochvar::fields::{taylor_green, SpectralVectorField, TorusGrid};
use stochvar::flows::{run_flow, TrajectoryDrift};
use stochvar::noether::{
    invariance_check, martingale_probe, mean_forcing, momentum_series, noether_residual, parse_symmetry, FlowRun,
    ProbeSchedule,
};
use stochvar::ns::{ns_residual, ns_solve_forced, random_solenoidal, NSConfig, NSTrajectory};
use stochvar::rng::BrownianDriver;
use stochvar::spacetime::{basis_from_modes, Envelope, SymmetryPair};
use stochvar::spde::{strong_error, Scheme, SPDEConfig};
use stochvar::stats::combined_stderr;

use crate::config::Config;
use crate::report::{num, opt, Check, Series};
use crate::CliError;

/// Checks, notes and the CSV series of one run.
#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub series: Series,
}

struct Common {
    grid: TorusGrid,
    nu: f64,
    dt: f64,
    t_final: f64,
    replicas: usize,
    seed: u64,
}

impl Common {
    fn read(cfg: &Config) -> Result<Self, CliError> {
        let replicas: usize = cfg.parsed("replicas")?;
        if replicas == 0 {
            return Err(CliError::Usage("replicas must be at least 1".into()));
        }
        Ok(Common {
            grid: TorusGrid::new(cfg.parsed("grid")?)?,
            nu: cfg.parsed("nu")?,
            dt: cfg.parsed("dt")?,
            t_final: cfg.parsed("t_final")?,
            replicas,
            seed: cfg.parsed("seed")?,
        })
    }
}

fn initial_field(cfg: &Config, grid: &TorusGrid) -> Result<SpectralVectorField, CliError> {
    match cfg.get("init")? {
        "taylor-green" => Ok(taylor_green(grid)),
        "random" => Ok(random_solenoidal(
            grid,
            cfg.parsed("init.kmax")?,
            cfg.parsed("init.amplitude")?,
            cfg.parsed("init.seed")?,
        )),
        other => Err(CliError::Usage(format!("unknown initial field `{other}` (taylor-green, random)"))),
    }
}

fn solve(cfg: &Config, c: &Common, forcing: Option<&SpectralVectorField>) -> Result<NSTrajectory, CliError> {
    let u0 = initial_field(cfg, &c.grid)?;
    let ns = NSConfig::new(&c.grid, c.nu, c.dt, c.t_final)?;
    let traj = ns_solve_forced(&u0, &ns, forcing)?;
    let path = cfg.get("save-trajectory")?;
    if !path.is_empty() {
        traj.save(path)?;
    }
    Ok(traj)
}

fn particles(cfg: &Config) -> Result<InitialPoints, CliError> {
    let n: usize = cfg.parsed("particles")?;
    if n == 0 {
        return Err(CliError::Usage("particles must be at least 1".into()));
    }
    Ok(InitialPoints::Grid(n))
}

pub fn ns_verify(cfg: &Config) -> Result<Outcome, CliError> {
    let c = Common::read(cfg)?;
    let traj = solve(cfg, &c, None)?;
    let tg = cfg.get("init")? == "taylor-green";
    let u0 = &traj.velocity[0];
    let rows: Vec<(f64, f64, f64)> = traj
        .times
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let res = ns_residual(&traj, t)?;
            let err = if tg {
                let exact = u0.scale((-2.0 * c.nu * t).exp());
                (&traj.velocity[i] - &exact).max_abs()
            } else {
                f64::NAN
            };
            Ok((err, res.momentum, res.divergence))
        })
        .collect::<stochvar::Result<_>>()?;
    let energy = traj.energy_series();
    let balance = traj.energy_balance_defects();
    let mut series = Series::new(&["t", "energy", "linf-error", "momentum-residual", "divergence", "energy-defect"]);
    for (i, &t) in traj.times.iter().enumerate() {
        series.push(vec![
            num(t),
            num(energy[i]),
            if tg { num(rows[i].0) } else { String::new() },
            num(rows[i].1),
            num(rows[i].2),
            opt(i.checked_sub(1).map(|j| balance[j])),
        ]);
    }
    let worst = |f: &dyn Fn(&(f64, f64, f64)) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let mut checks = Vec::new();
    if tg {
        checks.push(Check::at_most("taylor-green-linf", worst(&|r| r.0), cfg.parsed("ns.tol.linf")?));
    }
    checks.push(Check::at_most("momentum-residual", worst(&|r| r.1), cfg.parsed("ns.tol.residual")?));
    checks.push(Check::at_most("divergence", worst(&|r| r.2), cfg.parsed("ns.tol.divergence")?));
    checks.push(Check::at_most(
        "energy-balance",
        balance.iter().fold(0.0, |m, d| m.max(d.abs())),
        cfg.parsed("ns.tol.energy")?,
    ));
    checks.push(Check::at_most(
        "momentum-drift",
        momentum_series(&traj).drift_per_unit_time(),
        cfg.parsed("ns.tol.momentum")?,
    ));
    Ok(Outcome {
        checks,
        notes: Vec::new(),
        series,
    })
}

fn criticality_rows(series: &mut Series, prefix: &str, rows: &[CriticalityRow], verdicts: &[bool]) {
    for (row, pass) in rows.iter().zip(verdicts) {
        let g = &row.gateaux;
        for rung in &g.rungs {
            series.push(vec![
                format!("{prefix}{}", g.label),
                num(rung.eps),
                num(rung.estimate.mean),
                num(rung.estimate.stderr),
                num(g.extrapolated.mean),
                if *pass { "pass" } else { "fail" }.into(),
            ]);
        }
    }
}

pub fn criticality(cfg: &Config) -> Result<Outcome, CliError> {
    let c = Common::read(cfg)?;
    let traj = solve(cfg, &c, None)?;
    let envelope = Envelope::parse(cfg.get("criticality.envelope")?, c.t_final)?;
    let modes = cfg.modes("criticality.modes")?;
    let basis = basis_from_modes(&modes, envelope);
    let ladder = cfg.list("criticality.epsilon-ladder")?;
    let sigma: f64 = cfg.parsed("criticality.sigma")?;
    let floor: f64 = cfg.parsed("criticality.floor")?;
    let points = particles(cfg)?;
    let setup = ActionSetup::new(&traj, points.clone(), c.replicas, c.seed);
    let (sweep, rows) = criticality_sweep(&setup, &basis, &ladder)?;

    let mut checks = vec![Check::at_most(
        "det-defect",
        sweep.max_det_defect,
        cfg.parsed("criticality.det-tol")?,
    )];
    let mut verdicts = Vec::with_capacity(rows.len());
    for (row, pert) in rows.iter().zip(&basis) {
        let e = row.gateaux.extrapolated;
        let mut check = Check::at_most(format!("dS:{}", row.gateaux.label), e.mean, sigma * e.stderr + floor);
        check.stderr = Some(e.stderr);
        let mut pass = check.pass;
        checks.push(check);
        if pert.h.is_zero() {
            let m = row.multiplier;
            let tol = (sigma * m.stderr).max(cfg.parsed("criticality.multiplier-tol")?);
            let check = Check::at_most(format!("multiplier:{}", row.gateaux.label), m.mean, tol).with_stderr(m.stderr);
            pass &= check.pass;
            checks.push(check);
        }
        verdicts.push(pass);
    }
    let mut series = Series::new(&["pert-id", "eps", "dS", "stderr", "extrapolated dS", "verdict"]);
    criticality_rows(&mut series, "", &rows, &verdicts);
    let mut notes = vec![format!("grid Euler-Lagrange residual norm {:e}", sweep.residual_norm)];

    let amplitude: f64 = cfg.parsed("criticality.control-amplitude")?;
    if amplitude > 0.0 {
        let w = bump_field(&c.grid, [PI, PI], cfg.parsed("criticality.control-kappa")?, amplitude);
        let perturbed = traj.with_added_field(&w);
        let setup = ActionSetup::new(&perturbed, points.clone(), c.replicas, c.seed);
        let h_basis: Vec<_> = basis.iter().filter(|p| p.phi.is_zero()).cloned().collect();
        let (_, rows) = criticality_sweep(&setup, &h_basis, &ladder)?;
        let mut verdicts = Vec::with_capacity(rows.len());
        let mut detect: f64 = 0.0;
        for row in &rows {
            let e = row.gateaux.extrapolated;
            let se = combined_stderr(e.stderr, row.pairing.stderr);
            let check = Check::at_most(
                format!("control-match:{}", row.gateaux.label),
                e.mean + row.pairing.mean,
                sigma * se + floor,
            )
            .with_stderr(se);
            verdicts.push(check.pass);
            checks.push(check);
            if e.stderr > 0.0 {
                detect = detect.max(e.mean.abs() / e.stderr);
            }
        }
        checks.push(Check::at_least(
            "control-detect",
            detect,
            cfg.parsed("criticality.control-sigma")?,
        ));
        criticality_rows(&mut series, "control:", &rows, &verdicts);
        notes.push(format!("control drift adds a bump of speed {amplitude} at (pi, pi)"));
    }

    let ens_path = cfg.get("save-ensemble")?;
    if !ens_path.is_empty() {
        let drift = TrajectoryDrift::new(&traj);
        let driver = BrownianDriver::new(c.seed, c.replicas, c.dt);
        let start = points.ensemble(c.replicas, c.seed, 0.0)?;
        let end = run_flow(start, &drift, c.nu, c.dt, traj.len() - 1, &driver, |_| Ok(()))?;
        end.save(ens_path)?;
    }
    Ok(Outcome { checks, notes, series })
}

fn symmetry(cfg: &Config, t_final: f64) -> Result<SymmetryPair, CliError> {
    match cfg.get("noether.symmetry")? {
        "translation-x" => Ok(SymmetryPair::translation(0)),
        "translation-y" => Ok(SymmetryPair::translation(1)),
        "custom" => {
            let path = cfg.get("noether.symmetry-file")?;
            if path.is_empty() {
                return Err(CliError::Usage("noether.symmetry = custom needs noether.symmetry-file".into()));
            }
            let text = std::fs::read_to_string(Path::new(path))?;
            Ok(parse_symmetry(&text, t_final)?)
        }
        other => Err(CliError::Usage(format!(
            "unknown symmetry `{other}` (translation-x, translation-y, custom)"
        ))),
    }
}

pub fn noether(cfg: &Config) -> Result<Outcome, CliError> {
    let c = Common::read(cfg)?;
    let pair = symmetry(cfg, c.t_final)?;
    let force = cfg.pair("noether.forcing")?;
    let forcing = (force != [0.0, 0.0]).then(|| mean_forcing(&c.grid, force));
    let traj = solve(cfg, &c, forcing.as_ref())?;
    let sigma: f64 = cfg.parsed("noether.sigma")?;
    let floor: f64 = cfg.parsed("noether.floor")?;

    let mut run = FlowRun::new(particles(cfg)?, c.replicas, c.seed);
    run.sample_every = cfg.parsed("noether.sample-every")?;
    run.det_tolerance = cfg.parsed("noether.det-tol")?;
    let inv = invariance_check(&pair, &traj, &run)?;
    let inv_tol: f64 = cfg.parsed("noether.invariance-tol")?;
    let mut checks = vec![Check::at_most("det-defect", inv.max_det_defect, run.det_tolerance)];
    let mut notes = Vec::new();
    for (t, d) in inv.times.iter().zip(&inv.defect) {
        checks.push(
            Check::at_most(format!("invariance:t={}", num(*t)), d.mean, sigma * d.stderr + inv_tol).with_stderr(d.stderr),
        );
    }
    if let Some(w) = &inv.warning {
        notes.push(w.clone());
    }
    let invariant = checks.iter().all(|c| c.pass);
    let mut series = Series::new(&["t", "r(t)", "Q(t)", "defect", "stderr"]);

    if !invariant && !cfg.parsed::<bool>("noether.force")? {
        notes.push(format!(
            "`{}` failed the invariance check; residual not computed (set noether.force = true to override)",
            pair.label
        ));
        for (t, d) in inv.times.iter().zip(&inv.defect) {
            series.push(vec![num(*t), String::new(), String::new(), num(d.mean), num(d.stderr)]);
        }
        return Ok(Outcome { checks, notes, series });
    }

    let mut report = noether_residual(&pair, &traj)?;
    report.attach_defect(&inv);
    for i in 0..report.times.len() {
        let d = report.defect[i];
        series.push(vec![
            num(report.times[i]),
            num(report.residual[i]),
            num(report.charge[i]),
            opt(d.map(|d| d.mean)),
            opt(d.map(|d| d.stderr)),
        ]);
    }
    checks.push(Check::at_most(
        "noether-residual",
        report.max_abs_residual(),
        cfg.parsed("noether.residual-tol")?,
    ));
    checks.push(Check::at_most(
        "momentum-drift",
        momentum_series(&traj).drift_per_unit_time(),
        cfg.parsed("noether.momentum-tol")?,
    ));

    let samples: usize = cfg.parsed("noether.probe-samples")?;
    if samples > 0 {
        let eps_steps: usize = cfg.parsed("eps-steps")?;
        let schedule = ProbeSchedule {
            eps: eps_steps as f64 * c.dt,
            branches: cfg.parsed("branches")?,
            samples,
        };
        let probe = martingale_probe(&pair, &traj, &run, schedule)?;
        for (t, d) in probe.times.iter().zip(&probe.drift) {
            checks.push(
                Check::at_most(format!("martingale:t={}", num(*t)), d.mean, sigma * d.stderr + floor)
                    .with_stderr(d.stderr),
            );
        }
    }
    Ok(Outcome { checks, notes, series })
}

pub fn spde_converge(cfg: &Config) -> Result<Outcome, CliError> {
    let c = Common::read(cfg)?;
    let u = initial_field(cfg, &c.grid)?;
    let scheme = Scheme::parse(cfg.get("spde.scheme")?)?;
    let ladder = cfg.list("spde.dt-ladder")?;
    let fine = ladder.iter().copied().fold(f64::INFINITY, f64::min);
    let config = SPDEConfig::new(&c.grid, c.nu, fine, c.t_final, c.replicas, scheme, c.seed)?;
    let table = strong_error(&config, &u, &ladder)?;
    let mut series = Series::new(&["dt", "mean error", "stderr", "fitted order"]);
    for r in &table.rows {
        series.push(vec![num(r.dt), num(r.error.mean), num(r.error.stderr), num(table.order)]);
    }
    let checks = vec![Check::at_least("strong-order", table.order, cfg.parsed("spde.min-order")?)];
    let ratios: Vec<String> = table.halving_ratios().into_iter().map(num).collect();
    let notes = vec![format!("{} halving ratios: {}", scheme.name(), ratios.join(", "))];
    Ok(Outcome { checks, notes, series })
}
