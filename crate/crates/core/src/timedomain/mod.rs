//! Time-domain simulation of the slow amplitudes: ringdowns, driven
//! trajectories, instantaneous decay rates and basins of attraction.

pub mod full;

use num_complex::Complex64;
use serde::Serialize;

use crate::adiabatic::solve_extended_adiabatic;
use crate::error::{ModelError, Result};
use crate::linearize::RotatingFrame;
use crate::ode::{dopri5, StepControl};
use crate::params::{scaled_from_amplitude, Decays, RwaParams, Sideband, SystemParams};
use crate::selfsustained::{solve_limit_cycles, Branch};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwaState {
    pub t: f64,
    pub v1: Complex64,
    pub v2: Complex64,
}

impl RwaState {
    pub fn new(t: f64, v1: Complex64, v2: Complex64) -> Self {
        Self { t, v1, v2 }
    }

    fn to_array(self) -> [f64; 4] {
        [self.v1.re, self.v1.im, self.v2.re, self.v2.im]
    }

    fn from_array(t: f64, y: &[f64; 4]) -> Self {
        Self::new(t, Complex64::new(y[0], y[1]), Complex64::new(y[2], y[3]))
    }
}

/// Resonant drive on mode 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Drive {
    /// Scaled drive amplitude (s⁻¹).
    pub f_d1: f64,
    /// `ω_d1 − ω₁` (rad/s).
    pub detune: f64,
}

/// `(v̇₁, v̇₂)` of the slow-amplitude equations in the frame of the mode
/// eigenfrequencies.
pub fn rwa_rhs(s: &RwaState, p: &RwaParams, decays: Decays, drive: Option<Drive>) -> (Complex64, Complex64) {
    let (d1, d2) = RotatingFrame::new(p, decays, 0.0, 0.0).field(s.v1, s.v2);
    match drive {
        Some(d) => (d1 - I * d.f_d1 * (I * d.detune * s.t).exp(), d2),
        None => (d1, d2),
    }
}

/// Rotating-frame Hamiltonian whose `i∂H/∂v*` gives the conservative part
/// of [`rwa_rhs`].
pub fn hamiltonian(v1: Complex64, v2: Complex64, p: &RwaParams) -> f64 {
    let (x1, x2) = (v1.norm_sqr(), v2.norm_sqr());
    let pump = match p.sideband {
        Sideband::Upper => v1 * v1 * v2,
        Sideband::Lower => v1 * v1 * v2.conj(),
    };
    -p.delta * x2 + p.lambda12 * x1 * x2 + 0.5 * (p.lambda11 * x1 * x1 + p.lambda22 * x2 * x2) - 2.0 * p.f_p * pump.re
}

#[derive(Debug, Clone, PartialEq)]
pub struct RwaTrajectory {
    pub states: Vec<RwaState>,
    /// Accumulated local error estimate of the integrator (scaled units).
    pub error_estimate: f64,
}

/// Adaptive integration of the slow-amplitude equations, sampled every
/// `sample_dt` seconds from `s0.t` to `s0.t + horizon`.
pub fn integrate_rwa(
    s0: RwaState,
    p: &RwaParams,
    decays: Decays,
    drive: Option<Drive>,
    horizon: f64,
    sample_dt: f64,
    ctrl: &StepControl,
) -> Result<RwaTrajectory> {
    if !(horizon > 0.0) {
        return Err(ModelError::Domain(format!("horizon must be positive, got {horizon}")));
    }
    if ctrl.rtol > 1e-9 {
        return Err(ModelError::Domain(format!(
            "relative tolerance {} exceeds 1e-9",
            ctrl.rtol
        )));
    }
    let f = |t: f64, y: &[f64; 4]| {
        let (d1, d2) = rwa_rhs(&RwaState::from_array(t, y), p, decays, drive);
        [d1.re, d1.im, d2.re, d2.im]
    };
    let tr = dopri5(f, s0.t, s0.to_array(), s0.t + horizon, sample_dt, ctrl)?;
    Ok(RwaTrajectory {
        states: tr
            .times
            .iter()
            .zip(&tr.states)
            .map(|(&t, y)| RwaState::from_array(t, y))
            .collect(),
        error_estimate: tr.error_estimate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub t: f64,
    /// Squared amplitude at the window centre, in the units of the input.
    pub a1_sq: f64,
    /// `−d ln A₁/dt` (s⁻¹).
    pub gamma_inst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSeries {
    pub points: Vec<RatePoint>,
    /// Window centres skipped because the window contained a zero amplitude.
    pub skipped: Vec<usize>,
}

/// Instantaneous decay rate from a centred least-squares fit of `ln A₁`
/// over `window` samples (odd).
pub fn instantaneous_rate(times: &[f64], a1: &[f64], window: usize) -> Result<RateSeries> {
    if times.len() != a1.len() {
        return Err(ModelError::Domain("times and amplitudes differ in length".into()));
    }
    if window < 3 || window.is_multiple_of(2) {
        return Err(ModelError::Domain(format!(
            "window must be odd and at least 3, got {window}"
        )));
    }
    if times.len() < window {
        return Err(ModelError::Domain(format!(
            "trace of {} samples is shorter than the window of {window}",
            times.len()
        )));
    }
    let half = window / 2;
    let mut out = RateSeries {
        points: Vec::new(),
        skipped: Vec::new(),
    };
    for c in half..times.len() - half {
        let range = c - half..=c + half;
        if a1[range.clone()].iter().any(|&a| !(a > 0.0)) {
            out.skipped.push(c);
            continue;
        }
        let tc = times[c];
        let (mut stt, mut sty, mut st, mut sy) = (0.0, 0.0, 0.0, 0.0);
        for i in range {
            let dt = times[i] - tc;
            let y = a1[i].ln();
            stt += dt * dt;
            sty += dt * y;
            st += dt;
            sy += y;
        }
        let n = window as f64;
        let slope = (n * sty - st * sy) / (n * stt - st * st);
        out.points.push(RatePoint {
            t: tc,
            a1_sq: a1[c] * a1[c],
            gamma_inst: -slope,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingdownOptions {
    pub horizon: f64,
    pub sample_dt: f64,
    /// Samples per rate-fit window.
    pub window: usize,
    /// Start mode 2 at rest instead of at its adiabatic slave value.
    pub v2_at_rest: bool,
    pub ctrl: StepControl,
}

impl Default for RingdownOptions {
    fn default() -> Self {
        Self {
            horizon: 2.0,
            sample_dt: 1e-3,
            window: 51,
            v2_at_rest: false,
            ctrl: StepControl::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RingdownTrace {
    pub times: Vec<f64>,
    /// Mode amplitudes (m).
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    #[serde(skip)]
    pub v1: Vec<Complex64>,
    #[serde(skip)]
    pub v2: Vec<Complex64>,
    /// Instantaneous rate at each sample, where the centred window fits.
    pub gamma_inst: Vec<Option<f64>>,
    pub error_estimate: f64,
}

impl RingdownTrace {
    /// `(|v₁|², Γ_inst)` pairs in scaled units.
    pub fn rate_vs_x(&self) -> Vec<(f64, f64)> {
        self.v1
            .iter()
            .zip(&self.gamma_inst)
            .filter_map(|(v, g)| g.map(|g| (v.norm_sqr(), g)))
            .collect()
    }
}

/// Initial state with real `v₁` and mode 2 either at rest or at its
/// adiabatic slave value.
pub fn initial_state(v1: f64, p: &RwaParams, decays: Decays, v2_at_rest: bool) -> Result<RwaState> {
    let v2 = if v2_at_rest || v1 == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        solve_extended_adiabatic(v1 * v1, p, decays)?.slaved_v2(p)
    };
    Ok(RwaState::new(0.0, Complex64::new(v1, 0.0), v2))
}

/// Free decay from a scaled initial amplitude `|v₁(0)| = v1`.
pub fn ringdown(sys: &SystemParams, v1: f64, opts: &RingdownOptions) -> Result<RingdownTrace> {
    let decays = sys.decays();
    let s0 = initial_state(v1, &sys.rwa, decays, opts.v2_at_rest)?;
    let tr = integrate_rwa(s0, &sys.rwa, decays, None, opts.horizon, opts.sample_dt, &opts.ctrl)?;
    let times: Vec<f64> = tr.states.iter().map(|s| s.t).collect();
    let v1s: Vec<Complex64> = tr.states.iter().map(|s| s.v1).collect();
    let v2s: Vec<Complex64> = tr.states.iter().map(|s| s.v2).collect();
    let a1: Vec<f64> = v1s.iter().map(|v| sys.a1(v.norm())).collect();
    let a2: Vec<f64> = v2s.iter().map(|v| sys.a2(v.norm())).collect();
    let mut gamma_inst = vec![None; times.len()];
    if times.len() >= opts.window {
        let rates = instantaneous_rate(&times, &a1, opts.window)?;
        let half = opts.window / 2;
        let mut j = 0;
        let end = times.len() - half;
        for (c, slot) in gamma_inst.iter_mut().enumerate().take(end).skip(half) {
            if rates.skipped.contains(&c) {
                continue;
            }
            *slot = Some(rates.points[j].gamma_inst);
            j += 1;
        }
    }
    Ok(RingdownTrace {
        times,
        a1,
        a2,
        v1: v1s,
        v2: v2s,
        gamma_inst,
        error_estimate: tr.error_estimate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum BasinOutcome {
    DecaysToZero {
        final_amplitude: f64,
    },
    /// Amplitude in metres.
    SettlesToLimitCycle {
        amplitude: f64,
    },
    Undecided {
        final_amplitude: f64,
    },
}

/// Fraction of `a_st` around the decision level `a_st/2` that is reported
/// as undecided.
const UNDECIDED_BAND: f64 = 0.05;

/// Integrates from `a1_initial` (m, zero phase) and decides whether the
/// trajectory ends at rest or on the stable limit cycle by comparing the
/// mean amplitude over the final 1% of the horizon with `a_st/2`.
pub fn classify_basin(
    a1_initial: f64,
    sys: &SystemParams,
    horizon: Option<f64>,
    ctrl: &StepControl,
) -> Result<BasinOutcome> {
    let p = &sys.rwa;
    if p.sideband != Sideband::Upper {
        return Err(ModelError::Domain(
            "basin classification requires upper-sideband pumping".into(),
        ));
    }
    if !(a1_initial >= 0.0) {
        return Err(ModelError::Domain(format!(
            "initial amplitude must be non-negative, got {a1_initial}"
        )));
    }
    let decays = sys.decays();
    let horizon = horizon.unwrap_or(20.0 / decays.gamma1);
    let a_st = solve_limit_cycles(p, decays)?
        .iter()
        .find(|c| c.branch == Branch::Plus)
        .map(|c| sys.a1(c.c1_sq.sqrt()));
    if a1_initial == 0.0 {
        return Ok(BasinOutcome::DecaysToZero { final_amplitude: 0.0 });
    }
    let v1 = scaled_from_amplitude(a1_initial, &sys.modes.mode1, &sys.scaling);
    let s0 = initial_state(v1, p, decays, false)?;
    let n = 10_000;
    let tr = integrate_rwa(s0, p, decays, None, horizon, horizon / n as f64, ctrl)?;
    let tail = &tr.states[tr.states.len() - n / 100..];
    let mean = tail.iter().map(|s| sys.a1(s.v1.norm())).sum::<f64>() / tail.len() as f64;
    let Some(a_st) = a_st else {
        return Ok(BasinOutcome::DecaysToZero { final_amplitude: mean });
    };
    let level = 0.5 * a_st;
    Ok(if (mean - level).abs() <= UNDECIDED_BAND * a_st {
        BasinOutcome::Undecided { final_amplitude: mean }
    } else if mean < level {
        BasinOutcome::DecaysToZero { final_amplitude: mean }
    } else {
        BasinOutcome::SettlesToLimitCycle { amplitude: mean }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adiabatic::thresholds;
    use crate::params::{alpha_beta, hz_to_rad};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn published(delta_hz: f64) -> SystemParams {
        let mut sys = SystemParams::paper_device();
        sys.rwa = sys.rwa.with_delta(hz_to_rad(delta_hz));
        sys
    }

    #[test]
    fn origin_is_fixed_point_without_drive() {
        let sys = published(-35.0);
        let zero = Complex64::new(0.0, 0.0);
        let s = RwaState::new(0.3, zero, zero);
        assert_eq!(rwa_rhs(&s, &sys.rwa, sys.decays(), None), (zero, zero));
        let driven = rwa_rhs(&s, &sys.rwa, sys.decays(), Some(Drive { f_d1: 1.0, detune: 2.0 }));
        assert!(driven.0.norm() > 0.0);
    }

    #[test]
    fn decoupled_linear_decay() {
        let sys = published(-35.0);
        let p = sys.rwa.with_pump(0.0).without_nonlinearity();
        let s = RwaState::new(0.0, Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.1));
        let (d1, d2) = rwa_rhs(&s, &p, sys.decays(), None);
        assert_eq!(d1, -3.26 * s.v1);
        assert!((d2 - (-187.57 - I * p.delta) * s.v2).norm() < 1e-12);
    }

    #[test]
    fn conservative_part_is_hamiltonian_gradient() {
        let sys = published(-35.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let undamped = Decays {
            gamma1: 0.0,
            gamma2: 0.0,
        };
        for sideband in [Sideband::Upper, Sideband::Lower] {
            let p = sys.rwa.with_sideband(sideband);
            for _ in 0..20 {
                let v1 = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                let v2 = Complex64::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
                let (d1, d2) = rwa_rhs(&RwaState::new(0.0, v1, v2), &p, undamped, None);
                let h = 1e-6;
                let grad = |which: usize| {
                    let bump = |dz: Complex64| {
                        if which == 0 {
                            hamiltonian(v1 + dz, v2, &p)
                        } else {
                            hamiltonian(v1, v2 + dz, &p)
                        }
                    };
                    let dx = (bump(Complex64::new(h, 0.0)) - bump(Complex64::new(-h, 0.0))) / (2.0 * h);
                    let dy = (bump(Complex64::new(0.0, h)) - bump(Complex64::new(0.0, -h))) / (2.0 * h);
                    I * 0.5 * Complex64::new(dx, dy)
                };
                assert!((d1 - grad(0)).norm() < 1e-6 * d1.norm());
                assert!((d2 - grad(1)).norm() < 1e-6 * d2.norm());
            }
        }
    }

    #[test]
    fn linear_ringdown_is_exponential() {
        let mut sys = published(-35.0);
        sys.rwa = sys.rwa.with_pump(0.0).without_nonlinearity();
        let opts = RingdownOptions {
            horizon: 1.0,
            ..RingdownOptions::default()
        };
        let tr = ringdown(&sys, 1.0, &opts).unwrap();
        let ratio = tr.a1.last().unwrap() / tr.a1[0];
        assert_relative_eq!(ratio, (-3.26f64).exp(), max_relative = 1e-8);
        for g in tr.gamma_inst.iter().flatten() {
            assert!((g - 3.26).abs() < 1e-8);
        }
    }

    #[test]
    fn hamiltonian_conserved_without_damping() {
        let sys = published(-35.0);
        let undamped = Decays {
            gamma1: 0.0,
            gamma2: 0.0,
        };
        let s0 = RwaState::new(0.0, Complex64::new(1.2, 0.3), Complex64::new(0.05, -0.02));
        let tr = integrate_rwa(s0, &sys.rwa, undamped, None, 1.0, 1e-2, &StepControl::default()).unwrap();
        let h0 = hamiltonian(s0.v1, s0.v2, &sys.rwa);
        for s in &tr.states {
            let h = hamiltonian(s.v1, s.v2, &sys.rwa);
            assert!((h - h0).abs() < 1e-7 * h0.abs(), "{h} vs {h0}");
        }
    }

    #[test]
    fn exact_exponential_rate() {
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 1e-3).collect();
        let a: Vec<f64> = times.iter().map(|t| 2e-8 * (-3.26 * t).exp()).collect();
        let r = instantaneous_rate(&times, &a, 51).unwrap();
        assert_eq!(r.points.len(), 150);
        for p in &r.points {
            assert!((p.gamma_inst - 3.26).abs() < 1e-10);
        }
        let mut with_zero = a.clone();
        with_zero[100] = 0.0;
        let r = instantaneous_rate(&times, &with_zero, 51).unwrap();
        assert_eq!(r.skipped.len(), 51);
        assert!(instantaneous_rate(&times[..10], &a[..10], 51).is_err());
    }

    #[test]
    fn negative_friction_slows_early_decay() {
        let sys = published(-35.0);
        let opts = RingdownOptions {
            horizon: 0.5,
            ..RingdownOptions::default()
        };
        let tr = ringdown(&sys, 1.2, &opts).unwrap();
        let early = tr.gamma_inst.iter().flatten().next().unwrap();
        assert!(*early < 3.26);
    }

    #[test]
    fn small_amplitude_rate_slope() {
        let sys = published(-35.0);
        let opts = RingdownOptions {
            horizon: 1.5,
            ..RingdownOptions::default()
        };
        let tr = ringdown(&sys, 0.3, &opts).unwrap();
        let pts = tr.rate_vs_x();
        let (x0, g0) = pts[0];
        let (x1, g1) = pts[pts.len() - 1];
        let slope = (g0 - g1) / (x0 - x1);
        let alpha = alpha_beta(&sys.rwa, sys.decays().gamma2).alpha;
        assert!((slope / alpha - 1.0).abs() < 0.05, "{slope} vs {alpha}");
    }

    #[test]
    fn large_amplitude_rate_has_interior_minimum() {
        let sys = published(-35.0);
        let opts = RingdownOptions {
            horizon: 2.0,
            ..RingdownOptions::default()
        };
        let tr = ringdown(&sys, 6.0, &opts).unwrap();
        let g: Vec<f64> = tr.gamma_inst.iter().flatten().copied().collect();
        let (imin, gmin) = g
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |a, (i, &v)| if v < a.1 { (i, v) } else { a });
        assert!(imin > 0 && imin < g.len() - 1);
        assert!(g[0] > gmin && *g.last().unwrap() > gmin);
    }

    #[test]
    fn basin_decision_around_threshold() {
        let mut sys = published(0.0);
        sys.rwa = sys.rwa.with_pump(14.5);
        let th = thresholds(&sys.rwa, sys.decays(), &sys.modes.mode1, &sys.scaling).unwrap();
        let (a_th, a_st) = (th.a_th.unwrap(), th.a_st.unwrap());
        let ctrl = StepControl::default();
        assert!(matches!(
            classify_basin(0.0, &sys, None, &ctrl).unwrap(),
            BasinOutcome::DecaysToZero { .. }
        ));
        assert!(matches!(
            classify_basin(0.97 * a_th, &sys, None, &ctrl).unwrap(),
            BasinOutcome::DecaysToZero { .. }
        ));
        for start in [1.03 * a_th, 1.5 * a_st] {
            match classify_basin(start, &sys, None, &ctrl).unwrap() {
                BasinOutcome::SettlesToLimitCycle { amplitude } => {
                    assert_relative_eq!(amplitude, a_st, max_relative = 1e-2)
                }
                other => panic!("{other:?}"),
            }
        }
    }
}
