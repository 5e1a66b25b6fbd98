use num_complex::Complex64;
use proptest::prelude::*;

use sideband_friction::adiabatic::solve_extended_adiabatic;
use sideband_friction::calibration::{calibrate_fp_from_bifurcation, drive_from_force, force_from_drive};
use sideband_friction::linearize::RotatingFrame;
use sideband_friction::params::{alpha_beta, hz_to_rad, Decays, Sideband, SystemParams};
use sideband_friction::response::{stationary_states, DriveConfig};
use sideband_friction::selfsustained::{
    delta_b, solve_limit_cycles, stability_of_cycle, stationarity_residual, Branch,
};
use sideband_friction::timedomain::{hamiltonian, rwa_rhs, RwaState};

fn device() -> SystemParams {
    SystemParams::paper_device()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forced_states_are_stationary_and_odd_in_number(
        detune in -60.0f64..60.0,
        f_d1 in 0.05f64..4.0,
        delta_hz in -80.0f64..-25.0,
    ) {
        let sys = device();
        let p = sys.rwa.with_delta(hz_to_rad(delta_hz));
        let d = DriveConfig::new(f_d1, detune);
        let states = stationary_states(d, &p, sys.decays()).unwrap();
        prop_assert_eq!(states.len() % 2, 1);
        let frame = RotatingFrame::new(&p, sys.decays(), detune, f_d1);
        for s in &states {
            let (a, b) = frame.field(s.u1, s.u2);
            prop_assert!(a.norm().max(b.norm()) < 1e-7 * f_d1, "{} {}", a, b);
            prop_assert!((s.u1.norm_sqr() - s.u1_sq).abs() <= 1e-9 * s.u1_sq);
        }
        for w in states.windows(2) {
            prop_assert!(w[0].curve_param < w[1].curve_param);
        }
    }

    #[test]
    fn force_drive_round_trip(force in 1e-15f64..1e-9) {
        let sys = device();
        let f = drive_from_force(force, &sys.modes.mode1, &sys.scaling);
        let back = force_from_drive(f, &sys.modes.mode1, &sys.scaling);
        prop_assert!((back / force - 1.0).abs() < 1e-13);
    }

    #[test]
    fn bifurcation_calibration_round_trip(target_hz in -200.0f64..-1.0) {
        let sys = device();
        let target = hz_to_rad(target_hz);
        let fp = calibrate_fp_from_bifurcation(target, &sys.rwa, sys.decays()).unwrap();
        let back = delta_b(&sys.rwa.with_pump(fp), sys.decays()).unwrap().delta_b;
        prop_assert!((back / target - 1.0).abs() < 1e-10);
    }

    #[test]
    fn limit_cycles_stationary_with_plus_stable(delta_hz in -20.0f64..20.0, f_p in 10.0f64..25.0) {
        let sys = device();
        let p = sys.rwa.with_delta(hz_to_rad(delta_hz)).with_pump(f_p);
        let decays = sys.decays();
        for c in solve_limit_cycles(&p, decays).unwrap() {
            let (c1, c2) = c.amplitudes(&p, decays);
            let r = stationarity_residual(c1, c2, c.delta_omega, &p, decays);
            prop_assert!(r < 1e-9 * (1.0 + c.c1_sq), "{}", r);
            let report = stability_of_cycle(&c, &p, decays).unwrap();
            prop_assert_eq!(report.stable, c.branch == Branch::Plus);
        }
    }

    #[test]
    fn adiabatic_rate_slope_at_small_amplitude(delta_hz in -100.0f64..100.0) {
        let sys = device();
        let p = sys.rwa.with_delta(hz_to_rad(delta_hz));
        let x = 1e-7;
        let s = solve_extended_adiabatic(x, &p, sys.decays()).unwrap();
        let alpha = alpha_beta(&p, sys.decays().gamma2).alpha;
        prop_assert!(((s.gamma_ad - sys.decays().gamma1) / x - alpha).abs() < 1e-3 * alpha.abs());
    }

    #[test]
    fn pump_friction_sign_follows_sideband(delta_hz in -100.0f64..100.0, f_p in 0.1f64..30.0) {
        let sys = device();
        let p = sys.rwa.with_delta(hz_to_rad(delta_hz)).with_pump(f_p);
        let g2 = sys.decays().gamma2;
        prop_assert!(alpha_beta(&p, g2).alpha < 0.0);
        prop_assert!(alpha_beta(&p.with_sideband(Sideband::Lower), g2).alpha > 0.0);
    }

    #[test]
    fn undamped_flow_is_hamiltonian(
        re1 in -2.0f64..2.0, im1 in -2.0f64..2.0, re2 in -0.5f64..0.5, im2 in -0.5f64..0.5,
        lower in any::<bool>(),
    ) {
        let sys = device();
        let p = if lower { sys.rwa.with_sideband(Sideband::Lower) } else { sys.rwa };
        let (v1, v2) = (Complex64::new(re1, im1), Complex64::new(re2, im2));
        let undamped = Decays { gamma1: 0.0, gamma2: 0.0 };
        let (d1, d2) = rwa_rhs(&RwaState::new(0.0, v1, v2), &p, undamped, None);
        // dH/dt = 2 Re(∂H/∂v · v̇) vanishes along the flow
        let h = 1e-6;
        let partial = |bump: &dyn Fn(Complex64) -> f64| {
            let dx = (bump(Complex64::new(h, 0.0)) - bump(Complex64::new(-h, 0.0))) / (2.0 * h);
            let dy = (bump(Complex64::new(0.0, h)) - bump(Complex64::new(0.0, -h))) / (2.0 * h);
            (dx, dy)
        };
        let (a, b) = partial(&|dz| hamiltonian(v1 + dz, v2, &p));
        let (c, d) = partial(&|dz| hamiltonian(v1, v2 + dz, &p));
        let rate = a * d1.re + b * d1.im + c * d2.re + d * d2.im;
        let scale = (a.abs() + b.abs()) * d1.norm() + (c.abs() + d.abs()) * d2.norm();
        prop_assert!(rate.abs() <= 1e-6 * scale.max(1e-12), "{} vs {}", rate, scale);
    }
}
