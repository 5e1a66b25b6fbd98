//! Direct integration of the coupled second-order equations of motion of
//! the two modes, used to cross-check the slow-amplitude dynamics over
//! short horizons.
//!
//! ```text
//! q̈₁ + ω₁²q₁ + 2Γ₁q̇₁ + (γ/m₁)q₁q₂² + (γ₁/m₁)q₁³ = (F_p/m₁) 2q₁q₂ cos ω_F t
//! q̈₂ + ω₂²q₂ + 2Γ₂q̇₂ + (γ/m₂)q₁²q₂ + (γ₂/m₂)q₂³ = (F_p/m₂) q₁² cos ω_F t
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use super::{integrate_rwa, RwaState};
use crate::error::{ModelError, Result};
use crate::ode::{rk4, StepControl};
use crate::params::{raw_from_scaled, ModePair, ModeParams, RawCouplings, ScalingConfig, Sideband, SystemParams};

/// Longest horizon accepted by the full integrator (s).
pub const MAX_HORIZON: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FullState {
    pub t: f64,
    pub q1: f64,
    pub p1: f64,
    pub q2: f64,
    pub p2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pump {
    /// Pump amplitude `F_p` (N/m³).
    pub big_f_p: f64,
    /// Pump frequency (rad/s).
    pub omega_f: f64,
}

impl Pump {
    /// Pump frequency for detuning `delta` from the chosen combination
    /// frequency: `ω₂ + 2ω₁ + Δ` (upper) or `ω₂ − 2ω₁ + Δ` (lower).
    pub fn frequency(modes: &ModePair, delta: f64, sideband: Sideband) -> f64 {
        modes.mode2.omega + sideband.sign() * 2.0 * modes.mode1.omega + delta
    }
}

/// Carrier frequency of mode 2 in the slow-amplitude frame.
pub fn mode2_carrier(omega1: f64, omega_f: f64, sideband: Sideband) -> f64 {
    omega_f - sideband.sign() * 2.0 * omega1
}

/// Largest step allowed: `2π/(50ω₂)`.
pub fn max_step(modes: &ModePair) -> f64 {
    2.0 * PI / (50.0 * modes.mode2.omega)
}

/// Fixed-step RK4 integration with step `h`, sampled every
/// `sample_every` steps.
pub fn integrate_full_eom(
    s0: FullState,
    raw: &RawCouplings,
    modes: &ModePair,
    pump: Pump,
    horizon: f64,
    h: f64,
    sample_every: usize,
) -> Result<Vec<FullState>> {
    if !(horizon > 0.0 && horizon <= MAX_HORIZON) {
        return Err(ModelError::Domain(format!(
            "horizon {horizon} s outside (0, {MAX_HORIZON}] s"
        )));
    }
    if !(h > 0.0) || h > max_step(modes) {
        return Err(ModelError::Domain(format!(
            "step {h} s exceeds 2π/(50ω₂) = {} s",
            max_step(modes)
        )));
    }
    let (m1, m2) = (modes.mode1.mass, modes.mode2.mass);
    let (w1, w2) = (modes.mode1.omega, modes.mode2.omega);
    let (g1, g2) = (modes.mode1.gamma, modes.mode2.gamma);
    let f = |t: f64, y: &[f64; 4]| {
        let [q1, p1, q2, p2] = *y;
        let pump_t = pump.big_f_p * (pump.omega_f * t).cos();
        let a1 = -w1 * w1 * q1 - 2.0 * g1 * p1 - (raw.gamma_disp / m1) * q1 * q2 * q2 - (raw.gamma1 / m1) * q1.powi(3)
            + (pump_t / m1) * 2.0 * q1 * q2;
        let a2 = -w2 * w2 * q2 - 2.0 * g2 * p2 - (raw.gamma_disp / m2) * q1 * q1 * q2 - (raw.gamma2 / m2) * q2.powi(3)
            + (pump_t / m2) * q1 * q1;
        [p1, a1, p2, a2]
    };
    let n_steps = (horizon / h).round() as usize;
    let sample_every = sample_every.max(1);
    let mut out = Vec::with_capacity(n_steps / sample_every + 1);
    rk4(f, s0.t, [s0.q1, s0.p1, s0.q2, s0.p2], h, n_steps, |n, t, y| {
        if n % sample_every == 0 {
            out.push(FullState {
                t,
                q1: y[0],
                p1: y[1],
                q2: y[2],
                p2: y[3],
            });
        }
    });
    if out
        .iter()
        .any(|s| ![s.q1, s.p1, s.q2, s.p2].iter().all(|v| v.is_finite()))
    {
        return Err(ModelError::Solver {
            message: "full equations of motion produced non-finite values".into(),
            residual: f64::NAN,
        });
    }
    Ok(out)
}

/// Slow amplitude `(m/2ωC)^{1/2} (Ω q − i q̇) e^{−iΩt}` of a mode with
/// eigenfrequency `ω` observed at carrier `Ω`.
pub fn slow_amplitude(q: f64, qdot: f64, t: f64, mode: &ModeParams, carrier: f64, sc: &ScalingConfig) -> Complex64 {
    let pref = (mode.mass / (2.0 * mode.omega * sc.c_sc)).sqrt();
    pref * Complex64::new(carrier * q, -qdot) * Complex64::from_polar(1.0, -carrier * t)
}

/// Inverse of [`slow_amplitude`]: `(q, q̇)` for a slow amplitude `v`.
pub fn displacement_from_slow(v: Complex64, t: f64, mode: &ModeParams, carrier: f64, sc: &ScalingConfig) -> (f64, f64) {
    let pref = (mode.mass / (2.0 * mode.omega * sc.c_sc)).sqrt();
    let z = v * Complex64::from_polar(1.0, carrier * t) / pref;
    (z.re / carrier, -z.im)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullCheckReport {
    pub times: Vec<f64>,
    /// `|v₁|` from the full equations.
    pub full_v1: Vec<f64>,
    /// `|v₁|` from the slow-amplitude equations.
    pub rwa_v1: Vec<f64>,
    pub max_relative_deviation: f64,
}

/// Runs both integrators from the same slow amplitudes and compares the
/// mode-1 envelopes, sampled every `sample_dt` seconds.
pub fn compare_with_rwa(
    sys: &SystemParams,
    v1: Complex64,
    v2: Complex64,
    horizon: f64,
    sample_dt: f64,
    steps_per_period: f64,
) -> Result<FullCheckReport> {
    let modes = &sys.modes;
    let raw = raw_from_scaled(&sys.rwa, modes, &sys.scaling);
    let omega_f = Pump::frequency(modes, sys.rwa.delta, sys.rwa.sideband);
    let carrier2 = mode2_carrier(modes.mode1.omega, omega_f, sys.rwa.sideband);
    let (q1, p1) = displacement_from_slow(v1, 0.0, &modes.mode1, modes.mode1.omega, &sys.scaling);
    let (q2, p2) = displacement_from_slow(v2, 0.0, &modes.mode2, carrier2, &sys.scaling);
    let period2 = 2.0 * PI / modes.mode2.omega;
    let h_nominal = period2 / steps_per_period;
    let sample_every = (sample_dt / h_nominal).round().max(1.0) as usize;
    let h = sample_dt / sample_every as f64;
    let full = integrate_full_eom(
        FullState { t: 0.0, q1, p1, q2, p2 },
        &raw,
        modes,
        Pump {
            big_f_p: raw.big_f_p,
            omega_f,
        },
        horizon,
        h,
        sample_every,
    )?;
    let rwa = integrate_rwa(
        RwaState::new(0.0, v1, v2),
        &sys.rwa,
        sys.decays(),
        None,
        horizon,
        sample_dt,
        &StepControl::default(),
    )?;
    let n = full.len().min(rwa.states.len());
    let mut report = FullCheckReport {
        times: Vec::with_capacity(n),
        full_v1: Vec::with_capacity(n),
        rwa_v1: Vec::with_capacity(n),
        max_relative_deviation: 0.0,
    };
    for (f, r) in full.iter().zip(&rwa.states).take(n) {
        let env = slow_amplitude(f.q1, f.p1, f.t, &modes.mode1, modes.mode1.omega, &sys.scaling).norm();
        let slow = r.v1.norm();
        report.max_relative_deviation = report.max_relative_deviation.max((env - slow).abs() / slow);
        report.times.push(f.t);
        report.full_v1.push(env);
        report.rwa_v1.push(slow);
    }
    Ok(report)
}
