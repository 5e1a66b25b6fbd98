//! Self-sustained vibrations of the pumped pair in the absence of a resonant
//! drive: closed-form amplitudes and frequencies of the two limit cycles,
//! their stability, the bifurcational pump detuning, and the saddle-node
//! normal form near it.
//!
//! Substituting `v₁ = c₁ e^{iδω t}`, `v₂ = c₂ e^{−2iδω t}` and requiring
//! stationarity gives `Γ₁|c₁|² = 2Γ₂|c₂|²`, a linear relation between
//! `δω` and `|c₁|²`, and a quadratic for `|c₁|²`.

use num_complex::Complex64;
use serde::Serialize;

use crate::calibration::least_squares_line;
use crate::error::{ModelError, Result};
use crate::linearize::{classify, RotatingFrame, StabilityReport};
use crate::params::{Decays, RwaParams, Sideband};

/// `G = (Γ₁ + Γ₂)Λ₁₂ + 2Γ₂Λ₁₁ + ½Γ₁Λ₂₂`
pub fn g_coefficient(p: &RwaParams, decays: Decays) -> f64 {
    let Decays { gamma1, gamma2 } = decays;
    (gamma1 + gamma2) * p.lambda12 + 2.0 * gamma2 * p.lambda11 + 0.5 * gamma1 * p.lambda22
}

/// Argument of the square root in the limit-cycle amplitude,
/// `2Γ₁ f_p² G Δ + (2Γ₁+Γ₂)² f_p⁴ − Γ₁² G²`. Limit cycles exist where it is
/// non-negative.
pub fn existence_discriminant(p: &RwaParams, decays: Decays) -> f64 {
    let g = g_coefficient(p, decays);
    let g1 = decays.gamma1;
    let k = 2.0 * g1 + decays.gamma2;
    let fp2 = p.f_p * p.f_p;
    2.0 * g1 * fp2 * g * p.delta + k * k * fp2 * fp2 - g1 * g1 * g * g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Plus => "plus",
            Branch::Minus => "minus",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfSustainedSolution {
    pub c1_sq: f64,
    pub c2_sq: f64,
    /// Frequency offset of mode 1 from `ω₁` (rad/s).
    pub delta_omega: f64,
    pub stable: bool,
    pub branch: Branch,
}

impl SelfSustainedSolution {
    /// Complex amplitudes with the phase of `c₁` fixed to zero.
    pub fn amplitudes(&self, p: &RwaParams, decays: Decays) -> (Complex64, Complex64) {
        let x1 = self.c1_sq;
        if x1 == 0.0 || p.f_p == 0.0 {
            return (Complex64::new(x1.sqrt(), 0.0), Complex64::new(0.0, 0.0));
        }
        let x2 = self.c2_sq;
        // c₁*² c₂* = r + i s
        let r = x1 * (-self.delta_omega + p.lambda11 * x1 + p.lambda12 * x2) / (2.0 * p.f_p);
        let s = decays.gamma1 * x1 / (2.0 * p.f_p);
        (Complex64::new(x1.sqrt(), 0.0), Complex64::new(r, -s) / x1)
    }
}

/// Largest component of `(ċ₁, ċ₂)` at a candidate stationary state.
pub fn stationarity_residual(c1: Complex64, c2: Complex64, delta_omega: f64, p: &RwaParams, decays: Decays) -> f64 {
    let (d1, d2) = RotatingFrame::new(p, decays, delta_omega, 0.0).field(c1, c2);
    d1.norm().max(d2.norm())
}

fn delta_omega_at(x1: f64, p: &RwaParams, decays: Decays) -> f64 {
    let Decays { gamma1: g1, gamma2: g2 } = decays;
    let h = 0.5 * g1 * p.lambda12 + 0.5 * (g1 * g1 / g2) * p.lambda22 - g2 * p.lambda11;
    (g1 * p.delta - x1 * h) / (2.0 * g1 + g2)
}

fn require_upper(p: &RwaParams) -> Result<()> {
    if p.sideband != Sideband::Upper {
        return Err(ModelError::Domain(
            "self-sustained vibrations require upper-sideband pumping".into(),
        ));
    }
    Ok(())
}

/// Both limit cycles at the given pump, or none. At a double root a single
/// `Plus` solution is returned.
pub fn solve_limit_cycles(p: &RwaParams, decays: Decays) -> Result<Vec<SelfSustainedSolution>> {
    require_upper(p)?;
    if p.f_p == 0.0 {
        return Ok(Vec::new());
    }
    let Decays { gamma1: g1, gamma2: g2 } = decays;
    let g = g_coefficient(p, decays);
    let k = 2.0 * g1 + g2;
    let fp2 = p.f_p * p.f_p;
    let disc = existence_discriminant(p, decays);
    let scale = k * k * fp2 * fp2 + (g1 * g).powi(2) + (2.0 * g1 * fp2 * g * p.delta).abs();
    let double_root = disc.abs() <= 1e-12 * scale;
    let mut roots: Vec<(f64, Branch)> = Vec::new();
    if g == 0.0 {
        // quadratic degenerates to a linear equation: a single cycle
        let x1 = g2 * g1 * (p.delta * p.delta / (k * k) + 1.0) / (2.0 * fp2);
        roots.push((x1, Branch::Plus));
    } else {
        if disc < 0.0 && !double_root {
            return Ok(Vec::new());
        }
        let root = disc.max(0.0).sqrt();
        let pref = (g2 / g1) / (g * g);
        let plus = pref * (g1 * g * p.delta + k * k * fp2 + k * root);
        roots.push((plus, Branch::Plus));
        if !double_root {
            // product of the roots of A x² + B x + C: C/A
            let a = (g1 * g / (g2 * k)).powi(2);
            let c = g1 * g1 * (p.delta * p.delta / (k * k) + 1.0);
            let minus = c / a / plus;
            roots.push((minus, Branch::Minus));
        }
    }
    let mut out = Vec::new();
    for (x1, branch) in roots {
        if !(x1 > 0.0) || !x1.is_finite() {
            continue;
        }
        let mut sol = SelfSustainedSolution {
            c1_sq: x1,
            c2_sq: g1 * x1 / (2.0 * g2),
            delta_omega: delta_omega_at(x1, p, decays),
            stable: false,
            branch,
        };
        sol.stable = stability_of_cycle(&sol, p, decays)?.stable;
        out.push(sol);
    }
    Ok(out)
}

/// `(ω₁ + δω, ω_F − 2ω₁ − 2δω)`
pub fn oscillation_frequencies(sol: &SelfSustainedSolution, omega1: f64, omega_f: f64) -> (f64, f64) {
    (omega1 + sol.delta_omega, omega_f - 2.0 * omega1 - 2.0 * sol.delta_omega)
}

/// Linearization in the frame co-rotating with the cycle. The phase
/// symmetry `c₁ → c₁e^{iθ}, c₂ → c₂e^{−2iθ}` contributes one zero
/// eigenvalue, which is excluded from the decision.
pub fn stability_of_cycle(sol: &SelfSustainedSolution, p: &RwaParams, decays: Decays) -> Result<StabilityReport> {
    let (c1, c2) = sol.amplitudes(p, decays);
    let frame = RotatingFrame::new(p, decays, sol.delta_omega, 0.0);
    let exclude = sol.c1_sq > 0.0;
    classify(&frame.jacobian(c1, c2), 1e-9 * decays.gamma2, exclude)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BifurcationKind {
    SaddleNodeOfCycles,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BifurcationResult {
    /// rad/s
    pub delta_b: f64,
    pub kind: BifurcationKind,
}

/// Pump detuning below which no limit cycle exists:
/// `Δ_B = (Γ₁²G² − (2Γ₁+Γ₂)² f_p⁴) / (2Γ₁ f_p² G)`.
pub fn delta_b(p: &RwaParams, decays: Decays) -> Result<BifurcationResult> {
    let g = g_coefficient(p, decays);
    if !(g > 0.0) {
        return Err(ModelError::Domain(format!("G = {g} must be positive")));
    }
    if !(p.f_p > 0.0) {
        return Err(ModelError::Domain("f_p must be positive".into()));
    }
    let g1 = decays.gamma1;
    let k = 2.0 * g1 + decays.gamma2;
    let fp2 = p.f_p * p.f_p;
    Ok(BifurcationResult {
        delta_b: ((g1 * g).powi(2) - k * k * fp2 * fp2) / (2.0 * g1 * fp2 * g),
        kind: BifurcationKind::SaddleNodeOfCycles,
    })
}

/// Fit of the cycle radius `|c₁|` near the bifurcation to
/// `r₀ ± √(k(Δ − Δ_B))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalFormFit {
    pub delta_b: f64,
    /// Radius at the bifurcation.
    pub r0: f64,
    /// `k` in `(r₊ − r₋)²/4 = k(Δ − Δ_B)`.
    pub k: f64,
    /// Linear drift of the branch midpoint with `Δ`.
    pub midpoint_slope: f64,
    /// Log–log slope of the branch separation against `Δ − Δ_B`.
    pub exponent: f64,
    /// RMS residual of the square-root law.
    pub residual: f64,
    pub points_used: usize,
}

/// Fits samples `(Δ, r₊, r₋)`; samples at or below `delta_b` are ignored.
pub fn fit_normal_form(samples: &[(f64, f64, f64)], delta_b: f64) -> Result<NormalFormFit> {
    let usable: Vec<_> = samples
        .iter()
        .copied()
        .filter(|&(d, rp, rm)| d > delta_b && rp > rm)
        .collect();
    if usable.len() < 3 {
        return Err(ModelError::Fit(format!(
            "need at least 3 two-branch samples above the bifurcation, got {}",
            usable.len()
        )));
    }
    let (mut see, mut sye) = (0.0, 0.0);
    for &(d, rp, rm) in &usable {
        let e = d - delta_b;
        let y = 0.25 * (rp - rm).powi(2);
        see += e * e;
        sye += y * e;
    }
    let k = sye / see;
    let residual = (usable
        .iter()
        .map(|&(d, rp, rm)| (0.25 * (rp - rm).powi(2) - k * (d - delta_b)).powi(2))
        .sum::<f64>()
        / usable.len() as f64)
        .sqrt();
    let mid: Vec<(f64, f64)> = usable
        .iter()
        .map(|&(d, rp, rm)| (d - delta_b, 0.5 * (rp + rm)))
        .collect();
    let mid_fit = least_squares_line(&mid)?;
    let loglog: Vec<(f64, f64)> = usable
        .iter()
        .map(|&(d, rp, rm)| ((d - delta_b).ln(), (rp - rm).ln()))
        .collect();
    let exponent = least_squares_line(&loglog)?.slope;
    Ok(NormalFormFit {
        delta_b,
        r0: mid_fit.intercept,
        k,
        midpoint_slope: mid_fit.slope,
        exponent,
        residual,
        points_used: usable.len(),
    })
}

/// Samples both cycle branches on `n` detunings in `window` and fits the
/// saddle-node normal form.
pub fn normal_form_fit(p: &RwaParams, decays: Decays, window: (f64, f64), n: usize) -> Result<NormalFormFit> {
    let bif = delta_b(p, decays)?;
    let (lo, hi) = window;
    if !(lo < hi) || n < 2 {
        return Err(ModelError::Fit("empty detuning window".into()));
    }
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let d = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let sols = solve_limit_cycles(&p.with_delta(d), decays)?;
        let plus = sols.iter().find(|s| s.branch == Branch::Plus);
        let minus = sols.iter().find(|s| s.branch == Branch::Minus);
        if let (Some(a), Some(b)) = (plus, minus) {
            samples.push((d, a.c1_sq.sqrt(), b.c1_sq.sqrt()));
        }
    }
    fit_normal_form(&samples, bif.delta_b)
}
