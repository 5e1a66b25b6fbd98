//! Amplitude-dependent decay rate of mode 1 when mode 2 adiabatically
//! follows it.
//!
//! Writing `v₁ = ṽ₁ e^{iφ}` with slowly varying real `ṽ₁` and eliminating
//! the fast mode gives, with `x = ṽ₁²`, `y = |ṽ₂|²` and `σ = ±1` for the
//! upper/lower sideband,
//!
//! ```text
//! D      = Γ₂ + i(Δ − 2σφ̇ − Λ₁₂x − Λ₂₂y)
//! y      = f_p² x² / |D|²
//! φ̇      = Λ₁₁x + Λ₁₂y − 2 f_p² x Im D⁻¹
//! Γ_ad   = Γ₁ − 2σ f_p² x Re D⁻¹
//! ```
//!
//! The first three equations are solved self-consistently for `(φ̇, y)`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{ModelError, Result};
use crate::params::{alpha_beta, amplitude_from_scaled, Decays, ModeParams, RwaParams, ScalingConfig, Sideband};

const FIXED_POINT_DAMPING: f64 = 0.5;
const FIXED_POINT_MAX_ITER: usize = 1000;
const NEWTON_MAX_ITER: usize = 100;
const TOLERANCE: f64 = 1e-10;

/// `Γ₁ + αx`
pub fn gamma_ad_simple(x: f64, p: &RwaParams, decays: Decays) -> f64 {
    decays.gamma1 + alpha_beta(p, decays.gamma2).alpha * x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdiabaticState {
    pub x: f64,
    pub y: f64,
    pub phi_dot: f64,
    #[serde(serialize_with = "serialize_complex")]
    pub d_value: Complex64,
    pub gamma_ad: f64,
    /// Largest relative residual of the `y` and `φ̇` equations.
    pub residual: f64,
}

fn serialize_complex<S: serde::Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

impl AdiabaticState {
    pub fn is_valid(&self) -> bool {
        self.gamma_ad < 0.1 * self.d_value.norm()
    }

    /// Slaved mode-2 amplitude for a real, positive `ṽ₁ = √x`.
    pub fn slaved_v2(&self, p: &RwaParams) -> Complex64 {
        let v1 = Complex64::new(self.x.sqrt(), 0.0);
        let pump = match p.sideband {
            Sideband::Upper => v1.conj() * v1.conj(),
            Sideband::Lower => v1 * v1,
        };
        -Complex64::i() * p.f_p * pump / self.d_value
    }
}

struct Equations<'a> {
    p: &'a RwaParams,
    decays: Decays,
    x: f64,
}

impl Equations<'_> {
    fn d_value(&self, phi_dot: f64, y: f64) -> Complex64 {
        let p = self.p;
        let im = p.delta - 2.0 * p.sideband.sign() * phi_dot - p.lambda12 * self.x - p.lambda22 * y;
        Complex64::new(self.decays.gamma2, im)
    }

    /// Right-hand sides `(φ̇, y)` of the self-consistency equations.
    fn map(&self, phi_dot: f64, y: f64) -> (f64, f64) {
        let p = self.p;
        let d = self.d_value(phi_dot, y);
        let fp2 = p.f_p * p.f_p;
        let y_new = fp2 * self.x * self.x / d.norm_sqr();
        let phi_new = p.lambda11 * self.x + p.lambda12 * y - 2.0 * fp2 * self.x * d.inv().im;
        (phi_new, y_new)
    }

    fn residual(&self, phi_dot: f64, y: f64) -> f64 {
        let (phi_new, y_new) = self.map(phi_dot, y);
        let phi_scale = phi_new.abs().max(phi_dot.abs()).max(self.decays.gamma1);
        let r_phi = if phi_new == phi_dot {
            0.0
        } else {
            (phi_new - phi_dot).abs() / phi_scale
        };
        let y_scale = y_new.max(y).max(f64::MIN_POSITIVE);
        let r_y = if y_new == y { 0.0 } else { (y_new - y).abs() / y_scale };
        r_phi.max(r_y)
    }

    fn state(&self, phi_dot: f64, y: f64) -> AdiabaticState {
        let d = self.d_value(phi_dot, y);
        let fp2 = self.p.f_p * self.p.f_p;
        AdiabaticState {
            x: self.x,
            y,
            phi_dot,
            d_value: d,
            gamma_ad: self.decays.gamma1 - 2.0 * self.p.sideband.sign() * fp2 * self.x * d.inv().re,
            residual: self.residual(phi_dot, y),
        }
    }

    fn fixed_point(&self, seed: (f64, f64)) -> Option<(f64, f64)> {
        let (mut phi, mut y) = seed;
        for _ in 0..FIXED_POINT_MAX_ITER {
            let (phi_new, y_new) = self.map(phi, y);
            if !phi_new.is_finite() || !y_new.is_finite() {
                return None;
            }
            phi += FIXED_POINT_DAMPING * (phi_new - phi);
            y += FIXED_POINT_DAMPING * (y_new - y);
            if self.residual(phi, y) < TOLERANCE {
                return Some((phi, y));
            }
        }
        None
    }

    /// Newton iteration on `map(z) − z` with a finite-difference Jacobian
    /// and step halving.
    fn newton(&self, seed: (f64, f64)) -> std::result::Result<(f64, f64), f64> {
        let g = |phi: f64, y: f64| {
            let (a, b) = self.map(phi, y);
            (a - phi, b - y)
        };
        let (mut phi, mut y) = seed;
        let mut res = self.residual(phi, y);
        for _ in 0..NEWTON_MAX_ITER {
            if res < TOLERANCE {
                return Ok((phi, y));
            }
            let (g0, g1) = g(phi, y);
            let hp = 1e-7 * phi.abs().max(1.0);
            let hy = 1e-7 * y.abs().max(1e-12);
            let (a0, a1) = g(phi + hp, y);
            let (b0, b1) = g(phi, y + hy);
            let j = [[(a0 - g0) / hp, (b0 - g0) / hy], [(a1 - g1) / hp, (b1 - g1) / hy]];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det == 0.0 || !det.is_finite() {
                return Err(res);
            }
            let dphi = -(j[1][1] * g0 - j[0][1] * g1) / det;
            let dy = -(-j[1][0] * g0 + j[0][0] * g1) / det;
            let mut lambda = 1.0;
            loop {
                let (pt, yt) = (phi + lambda * dphi, (y + lambda * dy).max(0.0));
                let rt = self.residual(pt, yt);
                if rt < res || lambda < 1e-6 {
                    phi = pt;
                    y = yt;
                    res = rt;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if res < TOLERANCE {
            Ok((phi, y))
        } else {
            Err(res)
        }
    }

    fn solve(&self, seed: (f64, f64)) -> Result<AdiabaticState> {
        if self.x == 0.0 {
            return Ok(self.state(0.0, 0.0));
        }
        if let Some((phi, y)) = self.fixed_point(seed) {
            return Ok(self.state(phi, y));
        }
        match self.newton(seed) {
            Ok((phi, y)) => Ok(self.state(phi, y)),
            Err(residual) => Err(ModelError::Solver {
                message: format!("adiabatic self-consistency at x = {}", self.x),
                residual,
            }),
        }
    }
}

fn check_x(x: f64) -> Result<()> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(ModelError::Domain(format!(
            "x must be finite and non-negative, got {x}"
        )));
    }
    Ok(())
}

/// Solves at `x` starting from the state at a nearby point.
pub fn solve_extended_adiabatic_from(
    x: f64,
    p: &RwaParams,
    decays: Decays,
    seed: &AdiabaticState,
) -> Result<AdiabaticState> {
    check_x(x)?;
    Equations { p, decays, x }.solve((seed.phi_dot, seed.y))
}

/// Solution at `x` on the branch continuously connected to `x = 0`,
/// reached by geometric continuation from small amplitude.
pub fn solve_extended_adiabatic(x: f64, p: &RwaParams, decays: Decays) -> Result<AdiabaticState> {
    check_x(x)?;
    let mut state = Equations { p, decays, x: 0.0 }.solve((0.0, 0.0))?;
    if x == 0.0 {
        return Ok(state);
    }
    let mut xi = x.min(1e-6);
    loop {
        state = solve_extended_adiabatic_from(xi, p, decays, &state)?;
        if xi >= x {
            return Ok(state);
        }
        xi = (xi * 1.25).min(x);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdiabaticCurve {
    pub grid: Vec<f64>,
    pub gamma_ad: Vec<f64>,
    pub phi_dot: Vec<f64>,
    pub y: Vec<f64>,
    pub validity: Vec<bool>,
}

/// Γ_ad on a strictly increasing grid, following the branch from `x = 0`.
pub fn adiabatic_curve(grid: &[f64], p: &RwaParams, decays: Decays) -> Result<AdiabaticCurve> {
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ModelError::Domain("grid must be strictly increasing".into()));
    }
    let states = follow(grid, p, decays)?;
    Ok(AdiabaticCurve {
        grid: grid.to_vec(),
        gamma_ad: states.iter().map(|s| s.gamma_ad).collect(),
        phi_dot: states.iter().map(|s| s.phi_dot).collect(),
        y: states.iter().map(|s| s.y).collect(),
        validity: states.iter().map(AdiabaticState::is_valid).collect(),
    })
}

fn follow(grid: &[f64], p: &RwaParams, decays: Decays) -> Result<Vec<AdiabaticState>> {
    let mut out = Vec::with_capacity(grid.len());
    let mut prev: Option<AdiabaticState> = None;
    for &x in grid {
        let s = match &prev {
            None => solve_extended_adiabatic(x, p, decays)?,
            Some(seed) => {
                // insert intermediate steps where the grid is coarse
                let mut state = *seed;
                let mut xi = seed.x;
                while xi < x {
                    xi = if xi == 0.0 { x.min(1e-6) } else { (xi * 1.25).min(x) };
                    state = solve_extended_adiabatic_from(xi, p, decays, &state)?;
                }
                state
            }
        };
        prev = Some(s);
        out.push(s);
    }
    Ok(out)
}

/// Log-spaced grid of `n` points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1).max(1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub exists: bool,
    /// Threshold amplitude of mode 1 (m).
    pub a_th: Option<f64>,
    /// Stable self-sustained amplitude of mode 1 (m).
    pub a_st: Option<f64>,
    pub x_th: Option<f64>,
    pub x_st: Option<f64>,
}

const THRESHOLD_GRID: (f64, f64, usize) = (1e-4, 1e3, 400);

/// Zero crossings of Γ_ad: the activation threshold and the stable
/// self-sustained amplitude.
pub fn thresholds(p: &RwaParams, decays: Decays, mode1: &ModeParams, sc: &ScalingConfig) -> Result<ThresholdResult> {
    if p.sideband != Sideband::Upper {
        return Err(ModelError::Domain("thresholds require upper-sideband pumping".into()));
    }
    let none = ThresholdResult {
        exists: false,
        a_th: None,
        a_st: None,
        x_th: None,
        x_st: None,
    };
    if p.f_p == 0.0 {
        return Ok(none);
    }
    let (lo, hi, n) = THRESHOLD_GRID;
    let grid = log_grid(lo, hi, n);
    let states = follow(&grid, p, decays)?;
    let mut roots = Vec::new();
    for w in states.windows(2) {
        if (w[0].gamma_ad > 0.0) != (w[1].gamma_ad > 0.0) {
            roots.push(bisect_zero(&w[0], &w[1], p, decays)?);
        }
    }
    match roots.len() {
        0 => Ok(none),
        2 => {
            let to_m = |x: f64| amplitude_from_scaled(x.sqrt(), mode1, sc);
            Ok(ThresholdResult {
                exists: true,
                a_th: Some(to_m(roots[0])),
                a_st: Some(to_m(roots[1])),
                x_th: Some(roots[0]),
                x_st: Some(roots[1]),
            })
        }
        _ => Err(ModelError::Ambiguous {
            message: format!(
                "expected 0 or 2 sign changes of the adiabatic rate, found {}",
                roots.len()
            ),
            roots,
        }),
    }
}

fn bisect_zero(a: &AdiabaticState, b: &AdiabaticState, p: &RwaParams, decays: Decays) -> Result<f64> {
    let (mut lo, mut hi) = (*a, *b);
    while hi.x - lo.x > 1e-12 {
        let mid_x = 0.5 * (lo.x + hi.x);
        if mid_x <= lo.x || mid_x >= hi.x {
            break;
        }
        let mid = solve_extended_adiabatic_from(mid_x, p, decays, &lo)?;
        if (mid.gamma_ad > 0.0) == (lo.gamma_ad > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo.x + hi.x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{hz_to_rad, SystemParams};
    use crate::selfsustained::{delta_b, solve_limit_cycles, Branch};
    use approx::assert_relative_eq;

    fn setup(delta_hz: f64) -> (SystemParams, RwaParams, Decays) {
        let sys = SystemParams::paper_device();
        let p = sys.rwa.with_delta(hz_to_rad(delta_hz));
        let d = sys.decays();
        (sys, p, d)
    }

    fn check_consistency(s: &AdiabaticState, p: &RwaParams) {
        assert_eq!(s.d_value.re, 187.57);
        let lhs = s.y * s.d_value.norm_sqr();
        let rhs = p.f_p * p.f_p * s.x * s.x;
        assert!(
            (lhs - rhs).abs() <= 1e-10 * rhs.max(f64::MIN_POSITIVE),
            "{lhs} vs {rhs}"
        );
        assert!(s.residual < 1e-10);
    }

    #[test]
    fn simple_rate_crossing() {
        let (_, p, d) = setup(-35.0);
        assert_eq!(gamma_ad_simple(0.0, &p, d), 3.26);
        let alpha = alpha_beta(&p, d.gamma2).alpha;
        // bisection on the line
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gamma_ad_simple(mid, &p, d) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(lo, 3.26 / alpha.abs(), max_relative = 1e-12);
        assert!((lo - 2.160).abs() < 2e-3);
        let lower = p.with_sideband(Sideband::Lower);
        assert!(gamma_ad_simple(1.0, &lower, d) > 3.26);
    }

    #[test]
    fn zero_amplitude() {
        let (_, p, d) = setup(-35.0);
        let s = solve_extended_adiabatic(0.0, &p, d).unwrap();
        assert_eq!((s.y, s.phi_dot, s.gamma_ad), (0.0, 0.0, 3.26));
    }

    #[test]
    fn reduces_to_simple_without_nonlinearity_at_zero_detuning() {
        let (_, p, d) = setup(0.0);
        let p = p.without_nonlinearity();
        for x in [0.1, 1.0, 5.0, 30.0] {
            let s = solve_extended_adiabatic(x, &p, d).unwrap();
            assert_eq!(s.phi_dot, 0.0);
            assert_relative_eq!(s.gamma_ad, gamma_ad_simple(x, &p, d), max_relative = 1e-14);
        }
    }

    #[test]
    fn self_consistent_states() {
        for sideband in [Sideband::Upper, Sideband::Lower] {
            for delta_hz in [-200.0, -35.0, 0.0, 20.0] {
                let (_, p, d) = setup(delta_hz);
                let p = p.with_sideband(sideband);
                for x in [1e-3, 0.5, 3.0, 20.0, 200.0] {
                    let s = solve_extended_adiabatic(x, &p, d).unwrap();
                    check_consistency(&s, &p);
                }
            }
        }
    }

    #[test]
    fn small_amplitude_slope_is_alpha() {
        let (_, p, d) = setup(-35.0);
        let x = 1e-6;
        let s = solve_extended_adiabatic(x, &p, d).unwrap();
        let slope = (s.gamma_ad - d.gamma1) / x;
        let alpha = alpha_beta(&p, d.gamma2).alpha;
        assert_relative_eq!(slope, alpha, max_relative = 1e-6);
        assert!(s.gamma_ad < d.gamma1);
    }

    #[test]
    fn rate_returns_toward_linear_value() {
        let (_, p, d) = setup(-35.0);
        let curve = adiabatic_curve(&log_grid(1e-3, 1e3, 200), &p, d).unwrap();
        let (imin, gmin) = curve
            .gamma_ad
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &g)| if g < acc.1 { (i, g) } else { acc });
        assert!(imin > 0 && imin < curve.grid.len() - 1);
        assert!(gmin < d.gamma1);
        let last = *curve.gamma_ad.last().unwrap();
        assert!(last > gmin && (last - d.gamma1).abs() < (gmin - d.gamma1).abs());
    }

    #[test]
    fn curve_from_zero_starts_at_gamma1() {
        let (_, p, d) = setup(-35.0);
        let curve = adiabatic_curve(&[0.0, 0.1, 1.0], &p, d).unwrap();
        assert_eq!(curve.gamma_ad[0], 3.26);
        assert!(curve.validity.iter().all(|&v| v));
        assert!(adiabatic_curve(&[1.0, 0.5], &p, d).is_err());
    }

    #[test]
    fn no_pump_no_thresholds() {
        let (sys, p, d) = setup(-35.0);
        let r = thresholds(&p.with_pump(0.0), d, &sys.modes.mode1, &sys.scaling).unwrap();
        assert!(!r.exists);
    }

    #[test]
    fn thresholds_match_limit_cycles() {
        // Γ_ad = 0 with the slaved mode 2 is exactly the stationary cycle
        let (sys, p, d) = setup(0.0);
        let p = p.with_pump(14.5);
        let r = thresholds(&p, d, &sys.modes.mode1, &sys.scaling).unwrap();
        assert!(r.exists);
        let cycles = solve_limit_cycles(&p, d).unwrap();
        let plus = cycles.iter().find(|c| c.branch == Branch::Plus).unwrap();
        let minus = cycles.iter().find(|c| c.branch == Branch::Minus).unwrap();
        assert_relative_eq!(r.x_st.unwrap(), plus.c1_sq, max_relative = 1e-9);
        assert_relative_eq!(r.x_th.unwrap(), minus.c1_sq, max_relative = 1e-9);
        assert!(r.a_th.unwrap() < r.a_st.unwrap());
    }

    #[test]
    fn thresholds_near_and_below_bifurcation() {
        let (sys, p, d) = setup(0.0);
        let db = delta_b(&p, d).unwrap().delta_b;
        let above = thresholds(&p.with_delta(db + 2.0), d, &sys.modes.mode1, &sys.scaling).unwrap();
        assert!(above.exists);
        let (th, st) = (above.x_th.unwrap(), above.x_st.unwrap());
        assert!(th < st && (st - th) / st < 0.5);
        let below = thresholds(&p.with_delta(hz_to_rad(-200.0)), d, &sys.modes.mode1, &sys.scaling).unwrap();
        assert!(!below.exists);
    }

    #[test]
    fn lower_sideband_thresholds_rejected() {
        let (sys, p, d) = setup(-35.0);
        assert!(thresholds(&p.with_sideband(Sideband::Lower), d, &sys.modes.mode1, &sys.scaling).is_err());
    }
}
