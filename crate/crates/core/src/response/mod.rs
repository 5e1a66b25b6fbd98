//! Stationary states of mode 1 under a resonant drive while the pump is on,
//! their stability, and sweeps of the drive frequency and amplitude.
//!
//! In the frame rotating with the drive, stationarity requires
//!
//! ```text
//! u₂ = −i f_p u₁*² / Z₂              (upper)   u₂ = −i f_p u₁² / Z₂   (lower)
//! u₁ = −i f_d / W,   W = Z₁ − 2f_p²|u₁|²/Z₂*   (upper)   W = Z₁ + 2f_p²|u₁|²/Z₂   (lower)
//! Z₁ = Γ₁ + iν − iΛ₁₁|u₁|² − iΛ₁₂|u₂|²,   Z₂ = Γ₂ + is,   s = Δ ∓ 2ν − Λ₁₂|u₁|² − Λ₂₂|u₂|²
//! ```
//!
//! The squared amplitudes lie on the slaving curve
//! `|u₂|²(Γ₂² + s²) = f_p²|u₁|⁴`, parameterized here by `t = Λ₁₂|u₁|² + Λ₂₂|u₂|²`,
//! along which every point is unique. Roots of `|u₁|²|W|² = f_d²` along the
//! curve are bracketed on a logarithmic grid and refined by bisection.

pub mod merge;
pub mod sweep;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{ModelError, Result};
use crate::linearize::{classify, RotatingFrame, StabilityReport};
use crate::params::{Decays, RwaParams, Sideband};

pub use merge::{isola_drive_interval, locate_branch_merge, IsolaInterval, MergeResult};
pub use sweep::{
    force_sweep, frequency_sweep, frequency_sweep_on_grid, gamma_peak_curve, peak_sharpening_check, BranchSummary,
    Fold, GammaPeakCurve, GammaPeakPoint, ResponseSummary, SharpeningReport, SweepOptions, SweepResult,
};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Points of the logarithmic scan along the slaving curve.
pub const GRID_POINTS: usize = 8000;
pub(crate) const X1_LOW: f64 = 1e-10;
pub(crate) const X1_HIGH: f64 = 1e4;
const DUPLICATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriveConfig {
    /// Scaled drive amplitude (s⁻¹).
    pub f_d1: f64,
    /// `ω_d1 − ω₁` (rad/s).
    pub detune: f64,
}

impl DriveConfig {
    pub fn new(f_d1: f64, detune: f64) -> Self {
        Self { f_d1, detune }
    }

    pub fn validate(&self, omega1: f64) -> Result<()> {
        if !(self.f_d1 >= 0.0) || !self.f_d1.is_finite() {
            return Err(ModelError::Domain(format!(
                "f_d1 must be finite and >= 0, got {}",
                self.f_d1
            )));
        }
        if !(self.detune.abs() < omega1 / 100.0) {
            return Err(ModelError::Domain(format!(
                "|detune| = {} rad/s is not small compared to omega1",
                self.detune.abs()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseState {
    pub u1_sq: f64,
    pub u2_sq: f64,
    #[serde(skip)]
    pub u1: Complex64,
    #[serde(skip)]
    pub u2: Complex64,
    pub stable: bool,
    pub unstable_count: usize,
    /// Real part of the eigenvalue closest to the imaginary axis.
    pub critical_re: f64,
    /// Branch label assigned by sweeps; 0 for isolated calls.
    pub branch_id: usize,
    /// Largest normalized residual of the stationarity conditions.
    pub residual: f64,
    /// Position along the slaving curve (`t`, or `|u₁|²` when the curve is
    /// explicit); orders the states consistently across sweeps.
    pub curve_param: f64,
}

#[derive(Debug, Clone, Copy)]
struct CurvePoint {
    x1: f64,
    x2: f64,
    s: f64,
    w: Complex64,
}

/// The slaving curve at fixed drive frequency.
pub(crate) struct SlavingCurve<'a> {
    p: &'a RwaParams,
    decays: Decays,
    nu: f64,
    /// `Δ ∓ 2ν`
    a: f64,
    /// Curve parameterized by `|u₁|²` directly (no `Λ₂₂ f_p²` feedback).
    explicit: bool,
}

impl<'a> SlavingCurve<'a> {
    pub(crate) fn new(p: &'a RwaParams, decays: Decays, nu: f64) -> Result<Self> {
        let explicit = p.f_p == 0.0 || p.lambda22 == 0.0;
        if !explicit && (p.lambda12 < 0.0 || p.lambda22 < 0.0) {
            return Err(ModelError::Domain(
                "stationary-state enumeration requires lambda12 >= 0 and lambda22 >= 0".into(),
            ));
        }
        Ok(Self {
            p,
            decays,
            nu,
            a: p.delta - 2.0 * p.sideband.sign() * nu,
            explicit,
        })
    }

    fn point(&self, param: f64) -> CurvePoint {
        let p = self.p;
        let fp2 = p.f_p * p.f_p;
        let g2sq = self.decays.gamma2 * self.decays.gamma2;
        let (x1, x2, s) = if self.explicit {
            let x1 = param;
            let s = self.a - p.lambda12 * x1;
            (x1, fp2 * x1 * x1 / (g2sq + s * s), s)
        } else {
            let t = param;
            let s = self.a - t;
            let c = p.lambda22 * fp2 / (g2sq + s * s);
            let x1 = 2.0 * t / (p.lambda12 + (p.lambda12 * p.lambda12 + 4.0 * c * t).sqrt());
            (x1, fp2 * x1 * x1 / (g2sq + s * s), s)
        };
        let z1 = Complex64::new(self.decays.gamma1, self.nu - p.lambda11 * x1 - p.lambda12 * x2);
        let z2 = Complex64::new(self.decays.gamma2, s);
        let w = match p.sideband {
            Sideband::Upper => z1 - 2.0 * fp2 * x1 / z2.conj(),
            Sideband::Lower => z1 + 2.0 * fp2 * x1 / z2,
        };
        CurvePoint { x1, x2, s, w }
    }

    /// `|u₁|²|W|²` at a curve parameter.
    pub(crate) fn h(&self, param: f64) -> f64 {
        let pt = self.point(param);
        pt.x1 * pt.w.norm_sqr()
    }

    pub(crate) fn param_for_x1(&self, x1: f64) -> f64 {
        if self.explicit {
            x1
        } else {
            // t ≥ Λ₁₂x₁ with equality as x₁ → 0; the largest curvature
            // correction is bounded by Λ₂₂f_p²/Γ₂²
            let c_max = self.p.lambda22 * self.p.f_p * self.p.f_p / (self.decays.gamma2 * self.decays.gamma2);
            if self.p.lambda12 > 0.0 {
                self.p.lambda12 * x1 + c_max * x1 * x1
            } else {
                c_max * x1 * x1
            }
        }
    }

    /// Parameter range covering `|u₁|² ∈ [1e-10, 1e4]`, widened until `h`
    /// brackets `target` at both ends.
    pub(crate) fn range(&self, target: f64) -> (f64, f64) {
        let mut x_lo = X1_LOW;
        let mut lo = self.param_for_x1(x_lo);
        let mut tries = 0;
        while self.h(lo) >= target && tries < 20 {
            x_lo *= 1e-2;
            lo = self.param_for_x1(x_lo);
            tries += 1;
        }
        let mut x_hi = X1_HIGH;
        let mut hi = self.param_for_x1(x_hi);
        tries = 0;
        while self.h(hi) <= target && tries < 10 {
            x_hi *= 1e2;
            hi = self.param_for_x1(x_hi);
            tries += 1;
        }
        (lo, hi)
    }

    pub(crate) fn grid(&self, target: f64) -> Vec<f64> {
        let (lo, hi) = self.range(target);
        let (a, b) = (lo.ln(), hi.ln());
        (0..GRID_POINTS)
            .map(|i| (a + (b - a) * i as f64 / (GRID_POINTS - 1) as f64).exp())
            .collect()
    }

    /// All parameters where `h = target`, in increasing order.
    pub(crate) fn roots(&self, target: f64) -> Vec<f64> {
        let grid = self.grid(target);
        let g: Vec<f64> = grid.iter().map(|&t| self.h(t) / target - 1.0).collect();
        let f = |t: f64| self.h(t) / target - 1.0;
        let mut roots = Vec::new();
        for i in 0..grid.len() - 1 {
            if g[i] == 0.0 {
                roots.push(grid[i]);
                continue;
            }
            if g[i].signum() != g[i + 1].signum() && g[i + 1] != 0.0 {
                roots.push(bisect(&f, grid[i], grid[i + 1], g[i]));
            } else if i > 0
                && g[i - 1].signum() == g[i].signum()
                && g[i].abs() < g[i - 1].abs()
                && g[i].abs() <= g[i + 1].abs()
            {
                // a close pair of roots may hide between grid points
                let sign = g[i].signum();
                let (tm, gm) = golden_min(|t| sign * f(t), grid[i - 1], grid[i + 1], 0.0);
                if gm < 0.0 {
                    roots.push(bisect(&f, grid[i - 1], tm, g[i - 1]));
                    roots.push(bisect(&f, tm, grid[i + 1], -g[i - 1]));
                } else if gm == 0.0 {
                    roots.push(tm);
                }
            }
        }
        roots.sort_by(f64::total_cmp);
        roots
    }
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    let s_lo = f_lo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || (hi - lo) <= 1e-15 * hi.abs() {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section minimization on `[a, b]`; returns the best point seen.
/// Stops early once a value below `stop_below` is found.
pub(crate) fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, stop_below: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        if fc < stop_below || fd < stop_below {
            break;
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn build_state(
    curve: &SlavingCurve,
    param: f64,
    d: DriveConfig,
    p: &RwaParams,
    decays: Decays,
) -> Result<ResponseState> {
    let pt = curve.point(param);
    let fp2 = p.f_p * p.f_p;
    let u1 = -I * d.f_d1 / pt.w;
    let z2 = Complex64::new(decays.gamma2, pt.s);
    let u2 = match p.sideband {
        Sideband::Upper => -I * p.f_p * u1.conj() * u1.conj() / z2,
        Sideband::Lower => -I * p.f_p * u1 * u1 / z2,
    };
    let f2 = d.f_d1 * d.f_d1;
    let r_mod = (pt.x1 * pt.w.norm_sqr() - f2).abs() / f2;
    let r_slave = if fp2 == 0.0 {
        0.0
    } else {
        (pt.x2 * (decays.gamma2.powi(2) + pt.s * pt.s) - fp2 * pt.x1 * pt.x1).abs() / (fp2 * pt.x1 * pt.x1)
    };
    let frame = RotatingFrame::new(p, decays, d.detune, d.f_d1);
    let (d1, d2) = frame.field(u1, u2);
    let r_field = d1.norm().max(d2.norm()) / d.f_d1;
    let report = classify(&frame.jacobian(u1, u2), 1e-9 * decays.gamma2, false)?;
    Ok(ResponseState {
        u1_sq: pt.x1,
        u2_sq: pt.x2,
        u1,
        u2,
        stable: report.stable,
        unstable_count: report.unstable_count,
        critical_re: critical_re(&report),
        branch_id: 0,
        residual: r_mod.max(r_slave).max(r_field),
        curve_param: param,
    })
}

fn critical_re(report: &StabilityReport) -> f64 {
    report
        .eigenvalues
        .iter()
        .map(|z| z.re)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(f64::NAN)
}

/// Every stationary state at the given drive, ordered along the slaving
/// curve (increasing response for the usual single-valued slaving).
pub fn stationary_states(d: DriveConfig, p: &RwaParams, decays: Decays) -> Result<Vec<ResponseState>> {
    if !(d.f_d1 > 0.0) || !d.f_d1.is_finite() {
        return Err(ModelError::Domain(format!("f_d1 must be positive, got {}", d.f_d1)));
    }
    let curve = SlavingCurve::new(p, decays, d.detune)?;
    let target = d.f_d1 * d.f_d1;
    let mut states: Vec<ResponseState> = Vec::new();
    for t in curve.roots(target) {
        let s = build_state(&curve, t, d, p, decays)?;
        let duplicate = states.last().is_some_and(|prev| {
            let scale1 = prev.u1_sq.max(s.u1_sq);
            let scale2 = prev.u2_sq.max(s.u2_sq);
            (prev.u1_sq - s.u1_sq).abs() <= DUPLICATE_TOL * scale1
                && (prev.u2_sq - s.u2_sq).abs() <= DUPLICATE_TOL * scale2.max(f64::MIN_POSITIVE)
        });
        if !duplicate {
            states.push(s);
        }
    }
    if states.is_empty() {
        return Err(ModelError::Solver {
            message: format!(
                "no stationary state found at detune {} rad/s, f_d1 {}",
                d.detune, d.f_d1
            ),
            residual: f64::NAN,
        });
    }
    Ok(states)
}

/// Number of stationary states, without building them.
pub(crate) fn count_states(d: DriveConfig, p: &RwaParams, decays: Decays) -> Result<usize> {
    let curve = SlavingCurve::new(p, decays, d.detune)?;
    Ok(curve.roots(d.f_d1 * d.f_d1).len())
}

/// Linear stability of a stationary state in the drive frame.
pub fn stability_of_state(s: &ResponseState, d: DriveConfig, p: &RwaParams, decays: Decays) -> Result<StabilityReport> {
    let frame = RotatingFrame::new(p, decays, d.detune, d.f_d1);
    classify(&frame.jacobian(s.u1, s.u2), 1e-9 * decays.gamma2, false)
}
