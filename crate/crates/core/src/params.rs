//! Physical and scaled parameters of the two modes and the pump, together
//! with the conversions between dimensional quantities and the scaled
//! rotating-frame description.
//!
//! All angular frequencies and rates are in rad/s. Frequencies quoted in Hz
//! are converted once, with [`hz_to_rad`], at the boundary.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{ensure_finite, ensure_positive, ModelError, Result};

/// Convert a frequency in Hz to an angular frequency in rad/s.
pub fn hz_to_rad(f_hz: f64) -> f64 {
    2.0 * PI * f_hz
}

/// Convert an angular frequency in rad/s to Hz.
pub fn rad_to_hz(w: f64) -> f64 {
    w / (2.0 * PI)
}

/// Which secondary sideband of mode 2 is pumped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sideband {
    /// Pump near `ω₂ + 2ω₁`: negative nonlinear friction.
    Upper,
    /// Pump near `ω₂ − 2ω₁`: positive nonlinear friction.
    Lower,
}

impl Sideband {
    /// `+1` for the upper sideband, `−1` for the lower one.
    pub fn sign(self) -> f64 {
        match self {
            Sideband::Upper => 1.0,
            Sideband::Lower => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sideband::Upper => "upper",
            Sideband::Lower => "lower",
        }
    }
}

impl std::str::FromStr for Sideband {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" => Ok(Sideband::Upper),
            "lower" => Ok(Sideband::Lower),
            other => Err(ModelError::Domain(format!(
                "sideband must be 'upper' or 'lower', got '{other}'"
            ))),
        }
    }
}

/// Linear parameters of one vibrational mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    /// Angular eigenfrequency (rad/s).
    pub omega: f64,
    /// Linear decay rate (rad/s).
    pub gamma: f64,
    /// Effective mass (kg).
    pub mass: f64,
}

impl ModeParams {
    pub fn new(omega: f64, gamma: f64, mass: f64) -> Result<Self> {
        Ok(Self {
            omega: ensure_positive("omega", omega)?,
            gamma: ensure_positive("gamma", gamma)?,
            mass: ensure_positive("mass", mass)?,
        })
    }
}

/// The slow plate mode (1) and the fast, strongly damped beam mode (2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModePair {
    pub mode1: ModeParams,
    pub mode2: ModeParams,
}

impl ModePair {
    pub fn new(mode1: ModeParams, mode2: ModeParams) -> Result<Self> {
        let pair = Self { mode1, mode2 };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("mode1", &self.mode1), ("mode2", &self.mode2)] {
            ModeParams::new(m.omega, m.gamma, m.mass).map_err(|e| ModelError::Domain(format!("{name}: {e}")))?;
        }
        if self.mode2.omega <= self.mode1.omega {
            return Err(ModelError::Domain("mode2.omega must exceed mode1.omega".into()));
        }
        if self.mode2.gamma <= self.mode1.gamma {
            return Err(ModelError::Domain("mode2.gamma must exceed mode1.gamma".into()));
        }
        Ok(())
    }

    pub fn decays(&self) -> Decays {
        Decays {
            gamma1: self.mode1.gamma,
            gamma2: self.mode2.gamma,
        }
    }
}

/// The two linear decay rates, which is all the scaled dynamics needs from
/// the mode parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decays {
    pub gamma1: f64,
    pub gamma2: f64,
}

/// Action scale used to make the complex amplitudes dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    /// J·s
    pub c_sc: f64,
}

impl ScalingConfig {
    pub fn new(c_sc: f64) -> Result<Self> {
        Ok(Self {
            c_sc: ensure_positive("c_sc", c_sc)?,
        })
    }
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self { c_sc: 1e-21 }
    }
}

/// Coefficients of the rotating-frame Hamiltonian. All entries are in 1/s
/// (rad/s for `delta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RwaParams {
    pub lambda11: f64,
    pub lambda22: f64,
    pub lambda12: f64,
    /// Scaled pump amplitude.
    pub f_p: f64,
    /// Pump detuning from the combination resonance (rad/s).
    pub delta: f64,
    pub sideband: Sideband,
}

impl RwaParams {
    /// Checks the invariants required of a user-supplied parameter set.
    /// Library routines accept any finite values so that limiting cases
    /// (zero nonlinearity, zero pump) can be studied directly.
    pub fn validate(&self, omega1: f64) -> Result<()> {
        for (name, v) in [
            ("lambda11", self.lambda11),
            ("lambda22", self.lambda22),
            ("lambda12", self.lambda12),
            ("f_p", self.f_p),
            ("delta", self.delta),
        ] {
            ensure_finite(name, v)?;
        }
        if self.f_p < 0.0 {
            return Err(ModelError::Domain(format!("f_p must be >= 0, got {}", self.f_p)));
        }
        if self.lambda22 <= 0.0 {
            return Err(ModelError::Domain(format!(
                "lambda22 must be > 0, got {}",
                self.lambda22
            )));
        }
        if self.delta.abs() >= omega1 / 10.0 {
            return Err(ModelError::Domain(format!(
                "|delta| = {} rad/s is not small compared to omega1 = {omega1} rad/s",
                self.delta.abs()
            )));
        }
        Ok(())
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_pump(mut self, f_p: f64) -> Self {
        self.f_p = f_p;
        self
    }

    pub fn with_sideband(mut self, sideband: Sideband) -> Self {
        self.sideband = sideband;
        self
    }

    /// Same parameters with all conservative nonlinearities removed.
    pub fn without_nonlinearity(mut self) -> Self {
        self.lambda11 = 0.0;
        self.lambda12 = 0.0;
        self.lambda22 = 0.0;
        self
    }
}

/// Coefficients of the full (lab-frame) equations of motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawCouplings {
    /// Dispersive coupling, coupling energy `½ γ q₁² q₂²` (N/m³).
    pub gamma_disp: f64,
    /// Duffing coefficient of mode 1 (N/m³).
    pub gamma1: f64,
    /// Duffing coefficient of mode 2 (N/m³).
    pub gamma2: f64,
    /// Pump amplitude `F_p` (N/m²).
    pub big_f_p: f64,
}

/// Everything needed to run any experiment: both modes, the rotating-frame
/// coefficients, and the action scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub modes: ModePair,
    pub rwa: RwaParams,
    pub scaling: ScalingConfig,
}

/// Name of the built-in preset for the published device.
pub const PAPER_DEVICE: &str = "paper-device";

impl SystemParams {
    /// Published device: plate mode at 272599.72 rad/s, beam mode at
    /// 9942136.19 rad/s, pumped at the upper sideband with Δ = −35 Hz.
    ///
    /// The masses are not published. `m₁` follows from the drive calibration
    /// (0.70 pN ↔ 1.717 s⁻¹); `m₂` is a geometry estimate and only affects
    /// dimensional output for mode 2.
    pub fn paper_device() -> Self {
        Self {
            modes: ModePair {
                mode1: ModeParams {
                    omega: 272_599.72,
                    gamma: 3.26,
                    mass: 7.62e-11,
                },
                mode2: ModeParams {
                    omega: 9_942_136.19,
                    gamma: 187.57,
                    mass: 5e-13,
                },
            },
            rwa: RwaParams {
                lambda11: 2.201,
                lambda22: 1627.7,
                lambda12: 33.234,
                f_p: 18.332,
                delta: hz_to_rad(-35.0),
                sideband: Sideband::Upper,
            },
            scaling: ScalingConfig::default(),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            PAPER_DEVICE => Some(Self::paper_device()),
            _ => None,
        }
    }

    pub fn decays(&self) -> Decays {
        self.modes.decays()
    }

    pub fn validate(&self) -> Result<()> {
        self.modes.validate()?;
        self.rwa.validate(self.modes.mode1.omega)?;
        ScalingConfig::new(self.scaling.c_sc)?;
        Ok(())
    }

    /// Dimensional amplitude of mode 1 for a scaled modulus `|v₁|`.
    pub fn a1(&self, v_mag: f64) -> f64 {
        amplitude_from_scaled(v_mag, &self.modes.mode1, &self.scaling)
    }

    /// Dimensional amplitude of mode 2 for a scaled modulus `|v₂|`.
    pub fn a2(&self, v_mag: f64) -> f64 {
        amplitude_from_scaled(v_mag, &self.modes.mode2, &self.scaling)
    }

    /// Scaled drive `f_d1` per newton of force on mode 1.
    pub fn drive_per_newton(&self) -> f64 {
        drive_per_newton(&self.modes.mode1, &self.scaling)
    }
}

/// `Λ₁₂ = γC/(2m₁m₂ω₁ω₂)`, `Λᵢᵢ = 3γᵢC/(4mᵢ²ωᵢ²)` and
/// `f_p = F_p C^{1/2} / (4 (2m₂ω₂)^{1/2} m₁ω₁)`.
pub fn scaled_params_from_raw(
    raw: &RawCouplings,
    modes: &ModePair,
    sc: &ScalingConfig,
    delta: f64,
    sideband: Sideband,
) -> Result<RwaParams> {
    for (name, v) in [
        ("gamma_disp", raw.gamma_disp),
        ("gamma1", raw.gamma1),
        ("gamma2", raw.gamma2),
        ("big_f_p", raw.big_f_p),
        ("delta", delta),
    ] {
        ensure_finite(name, v)?;
    }
    modes.validate()?;
    let c = ensure_positive("c_sc", sc.c_sc)?;
    let (m1, w1) = (modes.mode1.mass, modes.mode1.omega);
    let (m2, w2) = (modes.mode2.mass, modes.mode2.omega);
    Ok(RwaParams {
        lambda11: 3.0 * raw.gamma1 * c / (4.0 * m1 * m1 * w1 * w1),
        lambda22: 3.0 * raw.gamma2 * c / (4.0 * m2 * m2 * w2 * w2),
        lambda12: raw.gamma_disp * c / (2.0 * m1 * m2 * w1 * w2),
        f_p: raw.big_f_p * c.sqrt() / (4.0 * (2.0 * m2 * w2).sqrt() * m1 * w1),
        delta,
        sideband,
    })
}

/// Inverse of [`scaled_params_from_raw`].
pub fn raw_from_scaled(p: &RwaParams, modes: &ModePair, sc: &ScalingConfig) -> RawCouplings {
    let c = sc.c_sc;
    let (m1, w1) = (modes.mode1.mass, modes.mode1.omega);
    let (m2, w2) = (modes.mode2.mass, modes.mode2.omega);
    RawCouplings {
        gamma_disp: p.lambda12 * 2.0 * m1 * m2 * w1 * w2 / c,
        gamma1: p.lambda11 * 4.0 * m1 * m1 * w1 * w1 / (3.0 * c),
        gamma2: p.lambda22 * 4.0 * m2 * m2 * w2 * w2 / (3.0 * c),
        big_f_p: p.f_p * 4.0 * (2.0 * m2 * w2).sqrt() * m1 * w1 / c.sqrt(),
    }
}

/// `A = (2C/(mω))^{1/2} |v|`, in metres.
pub fn amplitude_from_scaled(v_mag: f64, mode: &ModeParams, sc: &ScalingConfig) -> f64 {
    (2.0 * sc.c_sc / (mode.mass * mode.omega)).sqrt() * v_mag
}

/// Inverse of [`amplitude_from_scaled`].
pub fn scaled_from_amplitude(amplitude: f64, mode: &ModeParams, sc: &ScalingConfig) -> f64 {
    amplitude * (mode.mass * mode.omega / (2.0 * sc.c_sc)).sqrt()
}

/// `f_d1 / F_d1 = (8 m₁ ω₁ C)^{-1/2}`, in s⁻¹ per newton.
pub fn drive_per_newton(mode1: &ModeParams, sc: &ScalingConfig) -> f64 {
    1.0 / (8.0 * mode1.mass * mode1.omega * sc.c_sc).sqrt()
}

/// Coefficients of the simple adiabatic amplitude equation
/// `v̇₁ = −v₁(Γ₁ + α|v₁|²) + iβ v₁|v₁|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
}

pub fn alpha_beta(p: &RwaParams, gamma2: f64) -> AlphaBeta {
    let denom = gamma2 * gamma2 + p.delta * p.delta;
    let fp2 = p.f_p * p.f_p;
    AlphaBeta {
        alpha: -p.sideband.sign() * 2.0 * fp2 * gamma2 / denom,
        beta: p.lambda11 + 2.0 * fp2 * p.delta / denom,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn published() -> SystemParams {
        SystemParams::paper_device()
    }

    #[test]
    fn zero_duffing_gives_zero_lambda11() {
        let sys = published();
        let mut raw = raw_from_scaled(&sys.rwa, &sys.modes, &sys.scaling);
        raw.gamma1 = 0.0;
        let p = scaled_params_from_raw(&raw, &sys.modes, &sys.scaling, 0.0, Sideband::Upper).unwrap();
        assert_eq!(p.lambda11, 0.0);
    }

    #[test]
    fn doubling_action_scale() {
        let sys = published();
        let raw = raw_from_scaled(&sys.rwa, &sys.modes, &sys.scaling);
        let p1 = scaled_params_from_raw(&raw, &sys.modes, &sys.scaling, 0.0, Sideband::Upper).unwrap();
        let sc2 = ScalingConfig::new(2e-21).unwrap();
        let p2 = scaled_params_from_raw(&raw, &sys.modes, &sc2, 0.0, Sideband::Upper).unwrap();
        assert_relative_eq!(p2.lambda12, 2.0 * p1.lambda12, max_relative = 1e-14);
        assert_relative_eq!(p2.lambda11, 2.0 * p1.lambda11, max_relative = 1e-14);
        assert_relative_eq!(p2.lambda22, 2.0 * p1.lambda22, max_relative = 1e-14);
        assert_relative_eq!(p2.f_p, 2f64.sqrt() * p1.f_p, max_relative = 1e-14);
    }

    #[test]
    fn published_set_round_trips() {
        let sys = published();
        let raw = raw_from_scaled(&sys.rwa, &sys.modes, &sys.scaling);
        let back = scaled_params_from_raw(&raw, &sys.modes, &sys.scaling, sys.rwa.delta, sys.rwa.sideband).unwrap();
        assert_relative_eq!(back.lambda11, 2.201, max_relative = 1e-12);
        assert_relative_eq!(back.lambda22, 1627.7, max_relative = 1e-12);
        assert_relative_eq!(back.lambda12, 33.234, max_relative = 1e-12);
        assert_relative_eq!(back.f_p, 18.332, max_relative = 1e-12);
    }

    #[test]
    fn non_finite_raw_rejected() {
        let sys = published();
        let mut raw = raw_from_scaled(&sys.rwa, &sys.modes, &sys.scaling);
        raw.gamma_disp = f64::NAN;
        let err = scaled_params_from_raw(&raw, &sys.modes, &sys.scaling, 0.0, Sideband::Upper);
        assert!(matches!(err, Err(ModelError::Domain(_))));
    }

    #[test]
    fn amplitude_conversion() {
        let sys = published();
        assert_eq!(sys.a1(0.0), 0.0);
        let one = sys.a1(1.0);
        // characteristic displacement of the plate mode is about 10 nm
        assert!((one - 9.8e-9).abs() < 0.05e-9, "{one}");
        assert_eq!(sys.a1(2.0), 2.0 * one);
        let back = scaled_from_amplitude(one, &sys.modes.mode1, &sys.scaling);
        assert_relative_eq!(back, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn alpha_beta_published_detuning() {
        let sys = published();
        let ab = alpha_beta(&sys.rwa, sys.modes.mode2.gamma);
        assert_relative_eq!(ab.alpha, -1.509, max_relative = 1e-3);
        // direct evaluation of the closed form
        assert_relative_eq!(ab.beta, 0.431_768_780_612_592_3, max_relative = 1e-12);
    }

    #[test]
    fn alpha_beta_no_pump() {
        let sys = published();
        let ab = alpha_beta(&sys.rwa.with_pump(0.0), sys.modes.mode2.gamma);
        assert_eq!(ab.alpha, 0.0);
        assert_eq!(ab.beta, 2.201);
    }

    #[test]
    fn alpha_beta_zero_detuning() {
        let sys = published();
        let g2 = sys.modes.mode2.gamma;
        let ab = alpha_beta(&sys.rwa.with_delta(0.0), g2);
        // limit Δ → 0 of −2f²Γ₂/(Γ₂²+Δ²), approached from both sides
        let limit = |d: f64| alpha_beta(&sys.rwa.with_delta(d), g2).alpha;
        assert_relative_eq!(ab.alpha, 0.5 * (limit(1e-6) + limit(-1e-6)), max_relative = 1e-12);
        assert_relative_eq!(ab.alpha, -3.583, max_relative = 2e-4);
        assert_eq!(ab.beta, 2.201);
    }

    #[test]
    fn validate_rejects_large_detuning() {
        let mut sys = published();
        sys.rwa.delta = sys.modes.mode1.omega / 5.0;
        assert!(sys.validate().is_err());
        assert!(published().validate().is_ok());
        sys.rwa.delta = hz_to_rad(-1000.0);
        assert!(sys.validate().is_ok());
    }

    #[test]
    fn sideband_parse() {
        assert_eq!("upper".parse::<Sideband>().unwrap(), Sideband::Upper);
        assert!("middle".parse::<Sideband>().is_err());
    }

    proptest! {
        #[test]
        fn raw_round_trip(
            l11 in -10.0f64..10.0, l22 in 0.1f64..5000.0, l12 in 0.0f64..100.0, fp in 0.0f64..50.0,
            c_exp in -23.0f64..-19.0,
        ) {
            let sys = published();
            let sc = ScalingConfig::new(10f64.powf(c_exp)).unwrap();
            let p = RwaParams { lambda11: l11, lambda22: l22, lambda12: l12, f_p: fp, delta: 1.0, sideband: Sideband::Upper };
            let raw = raw_from_scaled(&p, &sys.modes, &sc);
            let back = scaled_params_from_raw(&raw, &sys.modes, &sc, 1.0, Sideband::Upper).unwrap();
            for (a, b) in [(back.lambda11, l11), (back.lambda22, l22), (back.lambda12, l12), (back.f_p, fp)] {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
            }
        }

        #[test]
        fn amplitude_linear_and_monotone(v in 0.0f64..1e3, dv in 1e-6f64..1.0) {
            let sys = published();
            let a = sys.a1(v);
            prop_assert!(sys.a1(v + dv) > a);
            prop_assert!((sys.a1(3.0 * v) - 3.0 * a).abs() <= 1e-15 * a.max(1e-300) * 4.0);
        }

        #[test]
        fn alpha_beta_symmetry(d in -2000.0f64..2000.0, fp in 0.01f64..40.0) {
            let sys = published();
            let g2 = sys.modes.mode2.gamma;
            let up = sys.rwa.with_pump(fp).with_delta(d);
            let plus = alpha_beta(&up, g2);
            let minus = alpha_beta(&up.with_delta(-d), g2);
            prop_assert!(plus.alpha < 0.0);
            prop_assert!((plus.alpha - minus.alpha).abs() <= 1e-14 * plus.alpha.abs());
            let odd = (plus.beta - up.lambda11) + (minus.beta - up.lambda11);
            prop_assert!(odd.abs() <= 1e-12 * (plus.beta - up.lambda11).abs().max(1e-12));
            let low = alpha_beta(&up.with_sideband(Sideband::Lower), g2);
            prop_assert!(low.alpha > 0.0);
            prop_assert_eq!(low.alpha, -plus.alpha);
        }
    }
}
