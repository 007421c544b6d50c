use std::f64::consts::PI;

use proptest::prelude::*;
use stochvar::fields::{taylor_green, SpectralField, SpectralVectorField, TorusGrid};
use stochvar::flows::{det2, jacobian_step};
use stochvar::ns::{ns_solve, random_solenoidal, NSConfig};
use stochvar::rng::BrownianDriver;
use stochvar::spacetime::Envelope;
use stochvar::spde::{coarse_increment, shift_oracle};
use stochvar::stats::log_log_slope;

fn grid(n: usize) -> TorusGrid {
    TorusGrid::new(n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn implicit_midpoint_keeps_det_for_traceless_gradients(
        a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0,
        j in proptest::array::uniform4(-2.0f64..2.0), dt in 1e-4f64..1e-1,
    ) {
        let jac = [[1.0 + j[0], j[1]], [j[2], 1.0 + j[3]]];
        prop_assume!(det2(&jac).abs() > 1e-2);
        let next = jacobian_step(&jac, &[[a, b], [c, -a]], dt);
        prop_assert!((det2(&next) - det2(&jac)).abs() <= 1e-12 * det2(&jac).abs().max(1.0));
    }

    #[test]
    fn projection_removes_exactly_the_gradient_part(seed in 0u64..1000, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let g = grid(16);
        let v = random_solenoidal(&g, 4, 1.0, seed);
        let chi = SpectralField::from_fn(&g, |x, y| a * (x + 2.0 * y).sin() + b * (3.0 * x).cos() * y.sin());
        let mixed = &v + &chi.gradient();
        let p = mixed.leray_project();
        prop_assert!((&p - &v).max_abs() < 1e-12);
        prop_assert!(p.leray_project().inner(&chi.gradient()).abs() < 1e-11);
    }

    #[test]
    fn coarse_increments_sum_to_the_path(seed in any::<u64>(), replica in 0usize..4, ratio in 1u64..8, steps in 1u64..6) {
        let d = BrownianDriver::new(seed, 4, 1e-3);
        let mut w = [0.0; 2];
        for s in 0..steps {
            let inc = coarse_increment(&d, replica, s, ratio);
            w[0] += inc[0];
            w[1] += inc[1];
        }
        let p = d.path_value(replica, steps * ratio);
        prop_assert!((w[0] - p[0]).abs() < 1e-12 && (w[1] - p[1]).abs() < 1e-12);
    }

    #[test]
    fn shift_oracle_is_a_rigid_periodic_shift(w0 in -5.0f64..5.0, w1 in -5.0f64..5.0, nu in 0.01f64..1.0) {
        let g = grid(16);
        let u = taylor_green(&g);
        let v = shift_oracle(&u, nu, [w0, w1]).unwrap();
        prop_assert!((v.energy() - u.energy()).abs() < 1e-12 * u.energy());
        let period = 2.0 * PI / (2.0 * nu).sqrt();
        let same = shift_oracle(&u, nu, [w0 + period, w1 - period]).unwrap();
        prop_assert!((&v - &same).max_abs() < 1e-11);
    }

    #[test]
    fn power_law_slopes_are_recovered(p in -3.0f64..3.0, c in 0.1f64..10.0) {
        let x = [1e-3, 2e-3, 4e-3, 8e-3];
        let y: Vec<f64> = x.iter().map(|v: &f64| c * v.powf(p)).collect();
        prop_assert!((log_log_slope(&x, &y) - p).abs() < 1e-10);
    }

    #[test]
    fn envelopes_are_smooth_and_bounded(t_final in 0.1f64..2.0, s in 0.01f64..0.99) {
        for env in [Envelope::Bump { t_final }, Envelope::Sin2 { t_final }] {
            let t = s * t_final;
            let (a, da) = env.value_and_derivative(t);
            prop_assert!((0.0..=1.0 + 1e-15).contains(&a));
            let h = 1e-6 * t_final;
            let fd = (env.value(t + h) - env.value(t - h)) / (2.0 * h);
            prop_assert!((fd - da).abs() <= 1e-5 * (1.0 + da.abs()) / t_final);
            prop_assert!(env.vanishes_at_ends(t_final));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn mean_momentum_is_conserved(seed in 0u64..100, c0 in -1.0f64..1.0, c1 in -1.0f64..1.0) {
        let g = grid(8);
        let v0 = &random_solenoidal(&g, 2, 0.5, seed) + &SpectralVectorField::constant(&g, [c0, c1]);
        let traj = ns_solve(&v0.with_div_free_flag(true), &NSConfig::new(&g, 0.1, 1e-2, 0.2).unwrap()).unwrap();
        let area = 4.0 * PI * PI;
        for m in traj.momentum_series() {
            prop_assert!((m[0] - c0 * area).abs() < 1e-12 && (m[1] - c1 * area).abs() < 1e-12);
        }
    }
}
