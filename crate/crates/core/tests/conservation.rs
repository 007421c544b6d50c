use stochvar::action::InitialPoints;
use stochvar::fields::{taylor_green, SpectralVectorField, TorusGrid};
use stochvar::noether::{invariance_check, martingale_probe, momentum_series, FlowRun, ProbeSchedule};
use stochvar::ns::{ns_solve, random_solenoidal, NSConfig, NSTrajectory};
use stochvar::spacetime::{Envelope, SpaceTimeScalar, SpaceTimeVector, SymmetryPair, TrigSeries};

const NU: f64 = 0.1;
const DT: f64 = 5e-3;
const T: f64 = 0.2;

fn random_flow() -> NSTrajectory {
    let g = TorusGrid::new(16).unwrap();
    let v0 = random_solenoidal(&g, 2, 0.5, 11);
    ns_solve(&v0, &NSConfig::new(&g, NU, DT, T).unwrap()).unwrap()
}

fn shear_pair() -> SymmetryPair {
    let env = Envelope::Bump { t_final: T };
    SymmetryPair::new(
        "shear",
        SpaceTimeVector::new(env, [TrigSeries::sin([0, 1], 1.0), TrigSeries::zero()]),
        SpaceTimeScalar::zero(),
    )
}

fn schedule() -> ProbeSchedule {
    ProbeSchedule {
        eps: 4.0 * DT,
        branches: 16,
        samples: 3,
    }
}

#[test]
fn taylor_green_carries_no_momentum() {
    let g = TorusGrid::new(16).unwrap();
    let traj = ns_solve(&taylor_green(&g), &NSConfig::new(&g, NU, DT, T).unwrap()).unwrap();
    let m = momentum_series(&traj);
    assert_eq!(m.times.len(), traj.len());
    assert!(m.values.iter().all(|q| q[0].abs() < 1e-15 && q[1].abs() < 1e-15), "{:?}", m.values);
}

#[test]
fn translation_is_an_invariance_of_the_flow() {
    let traj = random_flow();
    let mut run = FlowRun::new(InitialPoints::Grid(16), 6, 2);
    run.sample_every = 10;
    for axis in 0..2 {
        let inv = invariance_check(&SymmetryPair::translation(axis), &traj, &run).unwrap();
        assert!(inv.warning.is_none());
        for d in &inv.defect {
            assert!(d.mean.abs() <= 3.0 * d.stderr + 1e-4, "{d:?}");
        }
    }
}

#[test]
fn resting_fluid_has_a_vanishing_charge() {
    let g = TorusGrid::new(8).unwrap();
    let traj = NSTrajectory::steady(&SpectralVectorField::zeros(&g), NU, DT, T);
    let run = FlowRun::new(InitialPoints::Grid(4), 3, 1);
    let probe = martingale_probe(&SymmetryPair::translation(0), &traj, &run, schedule()).unwrap();
    assert!(probe.charges.iter().flatten().all(|&q| q == 0.0));
    assert!(probe.drift.iter().all(|d| d.mean == 0.0));
}

#[test]
fn shear_charge_drifts() {
    let traj = random_flow();
    let run = FlowRun::new(InitialPoints::Grid(16), 6, 3);
    let probe = martingale_probe(&shear_pair(), &traj, &run, schedule()).unwrap();
    let z = probe.drift.iter().map(|d| d.mean.abs() / d.stderr).fold(0.0, f64::max);
    assert!(z > 5.0, "{:?}", probe.drift);
}
