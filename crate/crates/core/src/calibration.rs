//! Calibration of unpublished or indirectly measured quantities: dispersive
//! shift slopes, the effective mass of mode 1, and the scaled pump amplitude.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, ModelError, Result};
use crate::params::{Decays, ModeParams, RwaParams, ScalingConfig};
use crate::selfsustained::g_coefficient;

/// Measured frequency shift of one mode against the squared amplitude of
/// the other.
///
/// With `γ₁₂ = γ/m₁` the angular-frequency shift of mode 1 is
/// `δω₁ = γ₁₂ A₂² / (4ω₁)`, so a fit of `δω₁` against `A₂²` gives
/// `γ₁₂/(4ω₁)`. The fit itself is convention-agnostic and does not apply
/// that factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationData {
    pub gamma12_slope: Option<f64>,
    pub gamma21_slope: Option<f64>,
    /// `(squared amplitude in m², frequency shift)`
    pub points: Vec<(f64, f64)>,
}

/// Ordinary least-squares line with intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    pub max_abs_residual: f64,
}

impl LinearFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

pub(crate) fn least_squares_line(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(ModelError::Fit(format!("need at least 2 points, got {}", points.len())));
    }
    for &(x, y) in points {
        ensure_finite("abscissa", x).map_err(|e| ModelError::Fit(e.to_string()))?;
        ensure_finite("ordinate", y).map_err(|e| ModelError::Fit(e.to_string()))?;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let scale = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    if sxx <= (f64::EPSILON * scale).powi(2) * n {
        return Err(ModelError::Fit("degenerate abscissas: all x values equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut sq = 0.0;
    let mut max_abs = 0.0f64;
    for &(x, y) in points {
        let r = y - (intercept + slope * x);
        sq += r * r;
        max_abs = max_abs.max(r.abs());
    }
    Ok(LinearFit {
        slope,
        intercept,
        rms_residual: (sq / n).sqrt(),
        max_abs_residual: max_abs,
    })
}

/// Least-squares slope of frequency shift against squared amplitude.
pub fn fit_dispersive_slope(data: &CalibrationData) -> Result<LinearFit> {
    least_squares_line(&data.points)
}

/// Effective mass of mode 1 from a known force and its scaled drive:
/// `m₁ = F² / (8 f² ω₁ C)`.
pub fn calibrate_mass_from_drive(force: f64, f_d1: f64, omega1: f64, sc: &ScalingConfig) -> Result<f64> {
    let force = ensure_positive("force", force)?;
    let f_d1 = ensure_positive("f_d1", f_d1)?;
    let omega1 = ensure_positive("omega1", omega1)?;
    let c = ensure_positive("c_sc", sc.c_sc)?;
    Ok(force * force / (8.0 * f_d1 * f_d1 * omega1 * c))
}

/// Scaled drive for a dimensional force on mode 1.
pub fn drive_from_force(force: f64, mode1: &ModeParams, sc: &ScalingConfig) -> f64 {
    force * crate::params::drive_per_newton(mode1, sc)
}

/// Dimensional force on mode 1 for a scaled drive.
pub fn force_from_drive(f_d1: f64, mode1: &ModeParams, sc: &ScalingConfig) -> f64 {
    f_d1 / crate::params::drive_per_newton(mode1, sc)
}

/// Pump amplitude for which self-sustained vibrations first appear at the
/// detuning `delta_b`.
///
/// Solves `K² f_p⁴ + 2Γ₁ G Δ_B f_p² − Γ₁² G² = 0` with `K = 2Γ₁ + Γ₂`,
/// the vanishing of the square-root argument in the limit-cycle amplitude.
/// The `λ` coefficients are taken from `p`; its `f_p` and `delta` are
/// ignored.
pub fn calibrate_fp_from_bifurcation(delta_b: f64, p: &RwaParams, decays: Decays) -> Result<f64> {
    let delta_b = ensure_finite("delta_b", delta_b)?;
    let g = g_coefficient(p, decays);
    if !(g > 0.0) {
        return Err(ModelError::Calibration(format!("coefficient G = {g} must be positive")));
    }
    let (g1, g2) = (decays.gamma1, decays.gamma2);
    let k = 2.0 * g1 + g2;
    let a = k * k;
    let b = 2.0 * g1 * g * delta_b;
    let c = -(g1 * g) * (g1 * g);
    let disc = b * b - 4.0 * a * c;
    // c < 0 < a, so the quadratic in f_p² has exactly one positive root
    let u = if b >= 0.0 {
        -2.0 * c / (b + disc.sqrt())
    } else {
        (-b + disc.sqrt()) / (2.0 * a)
    };
    if !(u > 0.0) || !u.is_finite() {
        return Err(ModelError::Calibration(format!("no positive root for f_p^2 (got {u})")));
    }
    Ok(u.sqrt())
}
