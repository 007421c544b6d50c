//! Pseudo-spectral Navier-Stokes solver on the 2-torus.
//!
//! The velocity is advanced in Leray form,
//! `dv/dt = nu lap v - P (v . grad) v`, with an integrating factor for the
//! viscous term and classical RK4 for the rest. The pressure is recovered at
//! every stored time from `-lap p = div (v . grad) v` with zero mean.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::snapshot::{load_fields, save_fields};
use crate::fields::{poisson_solve, MeanHandling, SpectralField, SpectralVectorField, TorusGrid};

/// Courant number above which a step is refused.
pub const CFL_LIMIT: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct NSConfig {
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub grid: TorusGrid,
}

impl NSConfig {
    pub fn new(grid: &TorusGrid, nu: f64, dt: f64, t_final: f64) -> Result<Self> {
        let cfg = NSConfig {
            nu,
            dt,
            t_final,
            grid: grid.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::Config(format!("viscosity must be positive, got {}", self.nu)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= self.dt) {
            return Err(Error::Config(format!(
                "horizon {} shorter than one step {}",
                self.t_final, self.dt
            )));
        }
        Ok(())
    }

    /// Number of steps, `t_final / dt` rounded to the nearest integer.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Pressure `p` with `-lap p = div f`, mean zero.
pub fn pressure_from_nonlinearity(nonlinear: &SpectralVectorField) -> SpectralField {
    let rhs = -&nonlinear.divergence();
    poisson_solve(&rhs, MeanHandling::Project).expect("projected mean is solvable")
}

/// Right-hand side of the Leray form and the recovered pressure.
pub fn ns_rhs(v: &SpectralVectorField, nu: f64) -> (SpectralVectorField, SpectralField) {
    let nonlinear = v.advect(v);
    let p = pressure_from_nonlinearity(&nonlinear);
    let mut dvdt = v.laplacian().scale(nu);
    dvdt.axpy(-1.0, &nonlinear.leray_project());
    (dvdt.with_div_free_flag(true), p)
}

pub(crate) fn courant(v: &SpectralVectorField, dt: f64) -> f64 {
    let n = v.grid().n() as f64;
    dt * v.max_speed() * n / (2.0 * std::f64::consts::PI)
}

/// `-P (v . grad) v + forcing`, the non-stiff part.
fn explicit_part(v: &SpectralVectorField, forcing: Option<&SpectralVectorField>) -> SpectralVectorField {
    let mut out = v.advect(v).leray_project().scale(-1.0);
    if let Some(f) = forcing {
        out.axpy(1.0, f);
    }
    out
}

fn decay(v: &SpectralVectorField, nu: f64, tau: f64) -> SpectralVectorField {
    let factor = |k: [i64; 2]| (-nu * (k[0] * k[0] + k[1] * k[1]) as f64 * tau).exp();
    SpectralVectorField::new([
        v.components[0].apply_symbol(factor),
        v.components[1].apply_symbol(factor),
    ])
}

fn step_inner(
    v: &SpectralVectorField,
    nu: f64,
    dt: f64,
    forcing: Option<&SpectralVectorField>,
) -> SpectralVectorField {
    let a = explicit_part(v, forcing);
    let mut va = v.clone();
    va.axpy(0.5 * dt, &a);
    let va = decay(&va, nu, 0.5 * dt);
    let b = explicit_part(&va, forcing);
    let mut vb = decay(v, nu, 0.5 * dt);
    vb.axpy(0.5 * dt, &b);
    let c = explicit_part(&vb, forcing);
    let mut vc = decay(v, nu, dt);
    vc.axpy(dt, &decay(&c, nu, 0.5 * dt));
    let d = explicit_part(&vc, forcing);

    let mut bc = b;
    bc.axpy(1.0, &c);
    let mut incr = decay(&a, nu, dt);
    incr.axpy(2.0, &decay(&bc, nu, 0.5 * dt));
    incr.axpy(1.0, &d);
    let mut out = decay(v, nu, dt);
    out.axpy(dt / 6.0, &incr);
    out.leray_project().dealiased()
}

/// One integrating-factor RK4 step.
pub fn ns_step(v: &SpectralVectorField, nu: f64, dt: f64) -> Result<SpectralVectorField> {
    check_cfl(v, dt, 0.0)?;
    Ok(step_inner(v, nu, dt, None))
}

fn check_cfl(v: &SpectralVectorField, dt: f64, t: f64) -> Result<()> {
    let c = courant(v, dt);
    if c > CFL_LIMIT {
        return Err(Error::Cfl {
            t,
            courant: c,
            limit: CFL_LIMIT,
        });
    }
    Ok(())
}

/// Time-sampled velocity, its time derivative and pressure.
///
/// Solver output stores `dv/dt` from [`ns_rhs`]; hand-built paths (steady
/// fields, perturbed drifts) carry whatever derivative their dynamics has.
#[derive(Clone, Debug)]
pub struct NSTrajectory {
    pub nu: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub velocity: Vec<SpectralVectorField>,
    pub dvdt: Vec<SpectralVectorField>,
    pub pressure: Vec<SpectralField>,
}

pub fn ns_solve(v0: &SpectralVectorField, config: &NSConfig) -> Result<NSTrajectory> {
    ns_solve_forced(v0, config, None)
}

/// [`ns_solve`] with a constant body force added to the momentum equation.
/// The force is Leray-projected; its mean survives the projection.
pub fn ns_solve_forced(
    v0: &SpectralVectorField,
    config: &NSConfig,
    forcing: Option<&SpectralVectorField>,
) -> Result<NSTrajectory> {
    config.validate()?;
    if v0.grid() != &config.grid {
        return Err(Error::Config("initial field lives on a different grid".into()));
    }
    let v0 = v0.clone().check_div_free();
    if !v0.is_div_free() {
        return Err(Error::Config(format!(
            "initial field is not divergence-free (defect {:e})",
            v0.divergence_defect()
        )));
    }
    let forcing = forcing.map(|f| f.leray_project().dealiased());
    let steps = config.steps();
    let mut traj = NSTrajectory {
        nu: config.nu,
        dt: config.dt,
        times: Vec::with_capacity(steps + 1),
        velocity: Vec::with_capacity(steps + 1),
        dvdt: Vec::with_capacity(steps + 1),
        pressure: Vec::with_capacity(steps + 1),
    };
    let mut v = v0.dealiased();
    for i in 0..=steps {
        let t = i as f64 * config.dt;
        let (mut dvdt, p) = ns_rhs(&v, config.nu);
        if let Some(f) = &forcing {
            dvdt.axpy(1.0, f);
        }
        traj.times.push(t);
        traj.velocity.push(v.clone());
        traj.dvdt.push(dvdt);
        traj.pressure.push(p);
        if i < steps {
            check_cfl(&v, config.dt, t)?;
            v = step_inner(&v, config.nu, config.dt, forcing.as_ref());
        }
    }
    Ok(traj)
}

/// Max-norm residuals of the momentum equation and of incompressibility.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    pub momentum: f64,
    pub divergence: f64,
}

fn hermite(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    ]
}

fn hermite_derivative(s: f64) -> [f64; 4] {
    let s2 = s * s;
    [
        6.0 * s2 - 6.0 * s,
        3.0 * s2 - 4.0 * s + 1.0,
        -6.0 * s2 + 6.0 * s,
        3.0 * s2 - 2.0 * s,
    ]
}

/// Position of `t` in the time grid: either a stored sample or an interval.
#[derive(Clone, Copy, Debug)]
pub enum TimeSlot {
    Sample(usize),
    Between { left: usize, s: f64 },
}

impl NSTrajectory {
    /// A time-independent path `v(t) = v` with `dv/dt = 0` and the pressure of `v`.
    pub fn steady(v: &SpectralVectorField, nu: f64, dt: f64, t_final: f64) -> Self {
        let steps = (t_final / dt).round() as usize;
        let p = pressure_from_nonlinearity(&v.advect(v));
        let zero = SpectralVectorField::zeros(v.grid());
        NSTrajectory {
            nu,
            dt,
            times: (0..=steps).map(|i| i as f64 * dt).collect(),
            velocity: vec![v.clone(); steps + 1],
            dvdt: vec![zero; steps + 1],
            pressure: vec![p; steps + 1],
        }
    }

    /// Adds a time-independent field `w` to every velocity sample and
    /// recomputes the pressure from the new nonlinearity. `dv/dt` is kept.
    pub fn with_added_field(&self, w: &SpectralVectorField) -> Self {
        let velocity: Vec<SpectralVectorField> = self
            .velocity
            .iter()
            .map(|v| (v + w).with_div_free_flag(v.is_div_free() && w.is_div_free()))
            .collect();
        let pressure = velocity
            .iter()
            .map(|v| pressure_from_nonlinearity(&v.advect(v)))
            .collect();
        NSTrajectory {
            nu: self.nu,
            dt: self.dt,
            times: self.times.clone(),
            velocity,
            dvdt: self.dvdt.clone(),
            pressure,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        self.velocity[0].grid()
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn slot(&self, t: f64) -> Result<TimeSlot> {
        let tol = 1e-9 * self.dt;
        if t < self.t_start() - tol || t > self.t_end() + tol {
            return Err(Error::Range {
                t,
                start: self.t_start(),
                end: self.t_end(),
            });
        }
        let pos = ((t - self.t_start()) / self.dt).clamp(0.0, (self.len() - 1) as f64);
        let nearest = pos.round() as usize;
        if (self.times[nearest] - t).abs() <= tol {
            return Ok(TimeSlot::Sample(nearest));
        }
        let left = (pos.floor() as usize).min(self.len() - 2);
        let h = self.times[left + 1] - self.times[left];
        Ok(TimeSlot::Between {
            left,
            s: (t - self.times[left]) / h,
        })
    }

    fn combine(&self, left: usize, w: [f64; 4], h: f64) -> SpectralVectorField {
        let mut out = self.velocity[left].scale(w[0]);
        out.axpy(w[1] * h, &self.dvdt[left]);
        out.axpy(w[2], &self.velocity[left + 1]);
        out.axpy(w[3] * h, &self.dvdt[left + 1]);
        out
    }

    /// Velocity at any `t` in range: stored sample or cubic Hermite interpolant.
    pub fn velocity_at(&self, t: f64) -> Result<SpectralVectorField> {
        Ok(match self.slot(t)? {
            TimeSlot::Sample(i) => self.velocity[i].clone(),
            TimeSlot::Between { left, s } => {
                let h = self.times[left + 1] - self.times[left];
                let div_free = self.velocity[left].is_div_free() && self.velocity[left + 1].is_div_free();
                self.combine(left, hermite(s), h).with_div_free_flag(div_free)
            }
        })
    }

    /// Time derivative at any `t`: stored sample or derivative of the interpolant.
    pub fn dvdt_at(&self, t: f64) -> Result<SpectralVectorField> {
        Ok(match self.slot(t)? {
            TimeSlot::Sample(i) => self.dvdt[i].clone(),
            TimeSlot::Between { left, s } => {
                let h = self.times[left + 1] - self.times[left];
                let w = hermite_derivative(s).map(|x| x / h);
                self.combine(left, w, h)
            }
        })
    }

    /// Pressure at any `t`: stored sample, or recovered from the interpolated velocity.
    pub fn pressure_at(&self, t: f64) -> Result<SpectralField> {
        Ok(match self.slot(t)? {
            TimeSlot::Sample(i) => self.pressure[i].clone(),
            TimeSlot::Between { .. } => {
                let v = self.velocity_at(t)?;
                pressure_from_nonlinearity(&v.advect(&v))
            }
        })
    }

    pub fn energy_series(&self) -> Vec<f64> {
        self.velocity.iter().map(|v| v.energy()).collect()
    }

    /// `int v dx` per stored time.
    pub fn momentum_series(&self) -> Vec<[f64; 2]> {
        self.velocity.iter().map(|v| v.integral()).collect()
    }

    /// Per-step defect `E(t_{i+1}) - E(t_i) - int D dt` where `E = int |v|^2`
    /// and `D = -2 nu int |grad v|^2`. The integral uses the trapezoid rule with
    /// endpoint-derivative correction, so the defect is `O(dt^5)` per step.
    pub fn energy_balance_defects(&self) -> Vec<f64> {
        let rates: Vec<(f64, f64)> = self
            .velocity
            .iter()
            .zip(&self.dvdt)
            .map(|(v, d)| dissipation_and_rate(v, d, self.nu))
            .collect();
        let energy = self.energy_series();
        (0..self.len() - 1)
            .map(|i| {
                let h = self.times[i + 1] - self.times[i];
                let (d0, r0) = rates[i];
                let (d1, r1) = rates[i + 1];
                let integral = 0.5 * h * (d0 + d1) + h * h / 12.0 * (r0 - r1);
                energy[i + 1] - energy[i] - integral
            })
            .collect()
    }

    /// Writes `index.txt` plus one snapshot file per stored time into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut index = fs::File::create(dir.join("index.txt"))?;
        writeln!(index, "# stochvar trajectory")?;
        writeln!(index, "nu {:.16e}", self.nu)?;
        writeln!(index, "dt {:.16e}", self.dt)?;
        writeln!(index, "count {}", self.len())?;
        for (i, t) in self.times.iter().enumerate() {
            let name = format!("snap_{i:06}.txt");
            writeln!(index, "{t:.16e} {name}")?;
            let v = &self.velocity[i];
            let d = &self.dvdt[i];
            save_fields(
                dir.join(&name),
                &[
                    &v.components[0],
                    &v.components[1],
                    &d.components[0],
                    &d.components[1],
                    &self.pressure[i],
                ],
            )?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join("index.txt"))?;
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let mut value = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format("truncated trajectory index".into()))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.trim().to_string()),
                _ => Err(Error::Format(format!("expected `{key}` in index, got `{line}`"))),
            }
        };
        let parse = |s: String| -> Result<f64> {
            s.parse().map_err(|_| Error::Format(format!("bad number `{s}`")))
        };
        let nu = parse(value("nu")?)?;
        let dt = parse(value("dt")?)?;
        let count: usize = value("count")?
            .parse()
            .map_err(|_| Error::Format("bad count".into()))?;
        let mut traj = NSTrajectory {
            nu,
            dt,
            times: Vec::with_capacity(count),
            velocity: Vec::with_capacity(count),
            dvdt: Vec::with_capacity(count),
            pressure: Vec::with_capacity(count),
        };
        for line in lines.take(count) {
            let (t, name) = line
                .split_once(' ')
                .ok_or_else(|| Error::Format(format!("bad index row `{line}`")))?;
            let t: f64 = t.parse().map_err(|_| Error::Format(format!("bad time `{t}`")))?;
            let fields = load_fields(dir.join(name.trim()))?;
            let [v0, v1, d0, d1, p]: [SpectralField; 5] = fields
                .try_into()
                .map_err(|_| Error::Format("expected five components per snapshot".into()))?;
            traj.times.push(t);
            traj.velocity.push(SpectralVectorField::new([v0, v1]).check_div_free());
            traj.dvdt.push(SpectralVectorField::new([d0, d1]));
            traj.pressure.push(p);
        }
        if traj.len() != count || count < 2 {
            return Err(Error::Format("trajectory index lists too few snapshots".into()));
        }
        Ok(traj)
    }
}

/// `(D, dD/dt)` with `D = -2 nu int |grad v|^2`.
fn dissipation_and_rate(v: &SpectralVectorField, dvdt: &SpectralVectorField, nu: f64) -> (f64, f64) {
    let grid = v.grid();
    let mut d = 0.0;
    let mut r = 0.0;
    for c in 0..2 {
        let a = v.components[c].coeffs();
        let b = dvdt.components[c].coeffs();
        for idx in 0..grid.len() {
            let k = grid.wavevector(idx);
            let k2 = (k[0] * k[0] + k[1] * k[1]) as f64;
            d += k2 * a[idx].norm_sqr();
            r += k2 * (a[idx].conj() * b[idx]).re;
        }
    }
    let vol = grid.volume();
    (-2.0 * nu * vol * d, -4.0 * nu * vol * r)
}

/// Residual of the momentum equation and of incompressibility at time `t`,
/// with `dv/dt` taken from the trajectory (never from finite differences).
pub fn ns_residual(traj: &NSTrajectory, t: f64) -> Result<Residual> {
    let v = traj.velocity_at(t)?;
    let dvdt = traj.dvdt_at(t)?;
    let p = traj.pressure_at(t)?;
    let mut r = dvdt;
    r.axpy(1.0, &v.advect(&v));
    r.axpy(-traj.nu, &v.laplacian());
    r.axpy(1.0, &p.gradient());
    Ok(Residual {
        momentum: r.max_abs(),
        divergence: v.divergence().max_abs(),
    })
}

/// Random divergence-free field with modes `1 <= |k_i| <= kmax`, spectrum
/// decaying like `|k|^-2`, and `max|v|` normalised to `amplitude`.
pub fn random_solenoidal(grid: &TorusGrid, kmax: i64, amplitude: f64, seed: u64) -> SpectralVectorField {
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
    let mut psi = SpectralField::zeros(grid);
    let kmax = kmax.min(grid.dealias_cutoff());
    for k1 in -kmax..=kmax {
        for k2 in -kmax..=kmax {
            if (k1, k2) <= (0, 0) {
                continue;
            }
            let k2n = (k1 * k1 + k2 * k2) as f64;
            let amp = 1.0 / (k2n * k2n.sqrt());
            psi.set_mode([k1, k2], Complex64::new(uniform(), uniform()) * amp);
        }
    }
    let v = SpectralVectorField::from_stream_function(&psi);
    let scale = amplitude / v.max_abs();
    v.scale(scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::taylor_green;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n).unwrap()
    }

    #[test]
    fn config_validation() {
        let g = grid(8);
        assert!(NSConfig::new(&g, 0.0, 0.1, 1.0).is_err());
        assert!(NSConfig::new(&g, 0.1, -0.1, 1.0).is_err());
        assert!(NSConfig::new(&g, 0.1, 0.1, 0.05).is_err());
        assert_eq!(NSConfig::new(&g, 0.1, 0.1, 1.0).unwrap().steps(), 10);
    }

    #[test]
    fn rhs_of_trivial_fields() {
        let g = grid(16);
        for v in [
            SpectralVectorField::zeros(&g),
            SpectralVectorField::constant(&g, [0.3, -1.2]),
        ] {
            let (d, p) = ns_rhs(&v, 0.1);
            assert!(d.max_abs() < 1e-15);
            assert!(p.max_abs() < 1e-15);
        }
    }

    #[test]
    fn taylor_green_rhs_is_pure_decay() {
        let g = grid(32);
        let v = taylor_green(&g);
        let nu = 0.1;
        let (d, p) = ns_rhs(&v, nu);
        let e = (&d - &v.scale(-2.0 * nu)).max_abs();
        assert!(e < 1e-13, "{e}");
        // p = (cos 2x1 + cos 2x2) / 4
        let expect = SpectralField::from_fn(&g, |x, y| ((2.0 * x).cos() + (2.0 * y).cos()) / 4.0);
        assert!((&p - &expect).max_abs() < 1e-14);
    }

    #[test]
    fn taylor_green_single_step() {
        let g = grid(32);
        let v = taylor_green(&g);
        let (nu, dt) = (0.1, 1e-3);
        let next = ns_step(&v, nu, dt).unwrap();
        let expect = v.scale((-2.0 * nu * dt).exp());
        assert!((&next - &expect).max_abs() < 1e-12);
        let z = ns_step(&SpectralVectorField::zeros(&g), nu, dt).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn cfl_violation_aborts() {
        let g = grid(16);
        let v = taylor_green(&g).scale(100.0);
        assert!(matches!(ns_step(&v, 0.1, 0.1), Err(Error::Cfl { .. })));
    }

    #[test]
    fn fourth_order_by_step_halving() {
        let g = grid(16);
        let v0 = random_solenoidal(&g, 4, 1.0, 17);
        let nu = 0.05;
        let t_end = 0.4;
        let run = |dt: f64| {
            let steps = (t_end / dt).round() as usize;
            let mut v = v0.clone();
            for _ in 0..steps {
                v = ns_step(&v, nu, dt).unwrap();
            }
            v
        };
        let a = run(0.05);
        let b = run(0.025);
        let c = run(0.0125);
        let order = ((&a - &b).max_abs() / (&b - &c).max_abs()).log2();
        assert!((3.7..=4.3).contains(&order), "order {order}");
    }

    #[test]
    fn trivial_trajectories() {
        let g = grid(8);
        let cfg = NSConfig::new(&g, 0.1, 0.01, 0.1).unwrap();
        let zero = ns_solve(&SpectralVectorField::zeros(&g), &cfg).unwrap();
        assert!(zero.velocity.iter().all(|v| v.max_abs() == 0.0));
        let c = SpectralVectorField::constant(&g, [0.5, 0.25]);
        let tr = ns_solve(&c, &cfg).unwrap();
        for v in &tr.velocity {
            assert!((v - &c).max_abs() < 1e-15);
        }
        assert_eq!(tr.len(), 11);
    }

    #[test]
    fn rejects_compressible_initial_data() {
        let g = grid(8);
        let cfg = NSConfig::new(&g, 0.1, 0.01, 0.1).unwrap();
        let v = SpectralVectorField::from_fn(&g, |x, _| [x.sin(), 0.0]);
        assert!(ns_solve(&v, &cfg).is_err());
    }

    #[test]
    fn energy_decreases_and_balances() {
        let g = grid(16);
        let v0 = random_solenoidal(&g, 4, 1.0, 3);
        let cfg = NSConfig::new(&g, 0.05, 0.01, 0.5).unwrap();
        let tr = ns_solve(&v0, &cfg).unwrap();
        let e = tr.energy_series();
        assert!(e.windows(2).all(|w| w[1] <= w[0]));
        let worst = tr
            .energy_balance_defects()
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()));
        assert!(worst < 1e-9, "balance defect {worst}");
        let m0 = tr.momentum_series()[0];
        for m in tr.momentum_series() {
            assert!((m[0] - m0[0]).abs() < 1e-12 && (m[1] - m0[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn galilean_shift_of_mean() {
        let g = grid(16);
        let v0 = random_solenoidal(&g, 3, 0.5, 9);
        let c = [0.3, -0.2];
        let shifted = (&v0 + &SpectralVectorField::constant(&g, c)).check_div_free();
        let cfg = NSConfig::new(&g, 0.05, 0.01, 0.3).unwrap();
        let a = ns_solve(&v0, &cfg).unwrap();
        let b = ns_solve(&shifted, &cfg).unwrap();
        for (va, vb) in a.velocity.iter().zip(&b.velocity) {
            for comp in 0..2 {
                let ca = va.components[comp].coeffs();
                let cb = vb.components[comp].coeffs();
                assert!((cb[0].re - ca[0].re - c[comp]).abs() < 1e-10);
                for (x, y) in ca.iter().zip(cb).skip(1) {
                    assert!((x.norm() - y.norm()).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn residuals() {
        let g = grid(16);
        let v0 = random_solenoidal(&g, 4, 1.0, 5);
        let cfg = NSConfig::new(&g, 0.05, 0.01, 0.2).unwrap();
        let tr = ns_solve(&v0, &cfg).unwrap();
        for &t in &[0.0, 0.1, 0.2] {
            let r = ns_residual(&tr, t).unwrap();
            assert!(r.momentum < 1e-10 && r.divergence < 1e-12, "{r:?}");
        }
        assert!(ns_residual(&tr, 0.5).is_err());

        let nu = 0.1;
        let steady = NSTrajectory::steady(&taylor_green(&g), nu, 0.01, 0.1);
        let r = ns_residual(&steady, 0.05).unwrap();
        assert!((r.momentum - 2.0 * nu).abs() < 1e-12);

        let zero = NSTrajectory::steady(&SpectralVectorField::zeros(&g), nu, 0.01, 0.1);
        assert_eq!(ns_residual(&zero, 0.0).unwrap().momentum, 0.0);
    }

    #[test]
    fn hermite_interpolation_is_fourth_order() {
        let g = grid(8);
        let tg = taylor_green(&g);
        let nu = 0.5;
        let err = |dt: f64| {
            let cfg = NSConfig::new(&g, nu, dt, 0.4).unwrap();
            let tr = ns_solve(&tg, &cfg).unwrap();
            let t = 0.5 * dt + 0.2;
            let exact = tg.scale((-2.0 * nu * t).exp());
            (&tr.velocity_at(t).unwrap() - &exact).max_abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!(ratio > 12.0, "ratio {ratio}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let g = grid(8);
        let cfg = NSConfig::new(&g, 0.1, 0.05, 0.1).unwrap();
        let tr = ns_solve(&random_solenoidal(&g, 2, 1.0, 1), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        tr.save(dir.path()).unwrap();
        let back = NSTrajectory::load(dir.path()).unwrap();
        assert_eq!(back.times, tr.times);
        assert_eq!(back.nu, tr.nu);
        for i in 0..tr.len() {
            assert_eq!(back.velocity[i].components, tr.velocity[i].components);
            assert_eq!(back.pressure[i], tr.pressure[i]);
        }
    }
}
