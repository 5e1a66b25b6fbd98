//! Autonomous rotating-frame equations shared by the limit-cycle and the
//! forced-response analyses, their analytic Jacobian, and eigenvalue-based
//! stability classification.
//!
//! In a frame where mode 1 rotates at `ν` relative to the slow amplitude
//! `v₁` (and mode 2 at `−2σν`, `σ = ±1` for the upper/lower sideband):
//!
//! ```text
//! u̇₁ = −(Γ₁ + iν) u₁ + i(Λ₁₁|u₁|² + Λ₁₂|u₂|²) u₁ + P₁ − i f_d
//! u̇₂ = −(Γ₂ + iΔ − 2iσν) u₂ + i(Λ₁₂|u₁|² + Λ₂₂|u₂|²) u₂ + P₂
//! ```
//!
//! with `P₁ = −2i f_p u₁* u₂*`, `P₂ = −i f_p u₁*²` (upper) or
//! `P₁ = −2i f_p u₁* u₂`, `P₂ = −i f_p u₁²` (lower).

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{ModelError, Result};
use crate::params::{Decays, RwaParams, Sideband};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Rotating-frame vector field with a constant frame rate and drive.
#[derive(Debug, Clone, Copy)]
pub struct RotatingFrame<'a> {
    pub params: &'a RwaParams,
    pub decays: Decays,
    /// Frame rate of mode 1 (rad/s): drive detuning or `δω`.
    pub nu: f64,
    /// Scaled resonant drive on mode 1 (0 for free dynamics).
    pub f_d: f64,
}

impl<'a> RotatingFrame<'a> {
    pub fn new(params: &'a RwaParams, decays: Decays, nu: f64, f_d: f64) -> Self {
        Self {
            params,
            decays,
            nu,
            f_d,
        }
    }

    fn sigma(&self) -> f64 {
        self.params.sideband.sign()
    }

    pub fn field(&self, u1: Complex64, u2: Complex64) -> (Complex64, Complex64) {
        let p = self.params;
        let (x1, x2) = (u1.norm_sqr(), u2.norm_sqr());
        let (pump1, pump2) = match p.sideband {
            Sideband::Upper => (
                -2.0 * I * p.f_p * u1.conj() * u2.conj(),
                -I * p.f_p * u1.conj() * u1.conj(),
            ),
            Sideband::Lower => (-2.0 * I * p.f_p * u1.conj() * u2, -I * p.f_p * u1 * u1),
        };
        let d1 = -(self.decays.gamma1 + I * self.nu) * u1 + I * (p.lambda11 * x1 + p.lambda12 * x2) * u1 + pump1
            - I * self.f_d;
        let d2 = -(self.decays.gamma2 + I * p.delta - 2.0 * I * self.sigma() * self.nu) * u2
            + I * (p.lambda12 * x1 + p.lambda22 * x2) * u2
            + pump2;
        (d1, d2)
    }

    /// Real 4×4 Jacobian in the ordering `(Re u₁, Im u₁, Re u₂, Im u₂)`.
    pub fn jacobian(&self, u1: Complex64, u2: Complex64) -> Matrix4<f64> {
        let p = self.params;
        let (x1, x2) = (u1.norm_sqr(), u2.norm_sqr());
        // Wirtinger derivatives: a[i][j] = ∂fᵢ/∂uⱼ, b[i][j] = ∂fᵢ/∂uⱼ*
        let mut a = [[Complex64::new(0.0, 0.0); 2]; 2];
        let mut b = [[Complex64::new(0.0, 0.0); 2]; 2];
        a[0][0] = -(self.decays.gamma1 + I * self.nu) + I * (2.0 * p.lambda11 * x1 + p.lambda12 * x2);
        b[0][0] = I * p.lambda11 * u1 * u1;
        a[0][1] = I * p.lambda12 * u1 * u2.conj();
        b[0][1] = I * p.lambda12 * u1 * u2;
        a[1][0] = I * p.lambda12 * u1.conj() * u2;
        b[1][0] = I * p.lambda12 * u1 * u2;
        a[1][1] = -(self.decays.gamma2 + I * p.delta - 2.0 * I * self.sigma() * self.nu)
            + I * (p.lambda12 * x1 + 2.0 * p.lambda22 * x2);
        b[1][1] = I * p.lambda22 * u2 * u2;
        match p.sideband {
            Sideband::Upper => {
                b[0][0] += -2.0 * I * p.f_p * u2.conj();
                b[0][1] += -2.0 * I * p.f_p * u1.conj();
                b[1][0] += -2.0 * I * p.f_p * u1.conj();
            }
            Sideband::Lower => {
                b[0][0] += -2.0 * I * p.f_p * u2;
                a[0][1] += -2.0 * I * p.f_p * u1.conj();
                a[1][0] += -2.0 * I * p.f_p * u1;
            }
        }
        let mut j = Matrix4::zeros();
        for r in 0..2 {
            for c in 0..2 {
                let dx = a[r][c] + b[r][c];
                let dy = I * (a[r][c] - b[r][c]);
                j[(2 * r, 2 * c)] = dx.re;
                j[(2 * r + 1, 2 * c)] = dx.im;
                j[(2 * r, 2 * c + 1)] = dy.re;
                j[(2 * r + 1, 2 * c + 1)] = dy.im;
            }
        }
        j
    }
}

/// Result of linear stability analysis of a stationary state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub stable: bool,
    /// Some eigenvalue real part lies within the margin of zero.
    pub marginal: bool,
    /// Eigenvalues with positive real part beyond the margin.
    pub unstable_count: usize,
    /// All four eigenvalues, sorted by descending real part.
    #[serde(serialize_with = "serialize_complex")]
    pub eigenvalues: Vec<Complex64>,
    /// Eigenvalue removed as the neutral phase mode, when one was excluded.
    #[serde(serialize_with = "serialize_complex_opt")]
    pub neutral: Option<Complex64>,
}

fn serialize_complex<S: serde::Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

fn serialize_complex_opt<S: serde::Serializer>(v: &Option<Complex64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(z) => s.serialize_some(&[z.re, z.im]),
        None => s.serialize_none(),
    }
}

pub fn eigenvalues(j: &Matrix4<f64>) -> Result<Vec<Complex64>> {
    if j.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Eigen("non-finite Jacobian entry".into()));
    }
    let ev = j.complex_eigenvalues();
    let mut out: Vec<Complex64> = ev.iter().map(|z| Complex64::new(z.re, z.im)).collect();
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(ModelError::Eigen(
            "eigenvalue iteration produced non-finite values".into(),
        ));
    }
    out.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(out)
}

/// Classifies a Jacobian. With `exclude_neutral`, the eigenvalue closest to
/// zero is treated as the neutral mode of a continuous symmetry and left out
/// of the decision.
pub fn classify(j: &Matrix4<f64>, margin: f64, exclude_neutral: bool) -> Result<StabilityReport> {
    let eigenvalues = eigenvalues(j)?;
    let mut considered = eigenvalues.clone();
    let neutral = if exclude_neutral {
        let (idx, _) = considered
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .expect("four eigenvalues");
        Some(considered.remove(idx))
    } else {
        None
    };
    let unstable_count = considered.iter().filter(|z| z.re > margin).count();
    let marginal = considered.iter().any(|z| z.re.abs() <= margin);
    Ok(StabilityReport {
        stable: unstable_count == 0 && !marginal,
        marginal,
        unstable_count,
        eigenvalues,
        neutral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SystemParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_jacobian(frame: &RotatingFrame, u1: Complex64, u2: Complex64) -> Matrix4<f64> {
        let h = 1e-6;
        let base = [u1.re, u1.im, u2.re, u2.im];
        let eval = |y: [f64; 4]| {
            let (d1, d2) = frame.field(Complex64::new(y[0], y[1]), Complex64::new(y[2], y[3]));
            [d1.re, d1.im, d2.re, d2.im]
        };
        let mut j = Matrix4::zeros();
        for c in 0..4 {
            let mut yp = base;
            let mut ym = base;
            yp[c] += h;
            ym[c] -= h;
            let (fp, fm) = (eval(yp), eval(ym));
            for r in 0..4 {
                j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        j
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let sys = SystemParams::paper_device();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for sideband in [Sideband::Upper, Sideband::Lower] {
            let p = sys.rwa.with_sideband(sideband);
            for _ in 0..20 {
                let frame = RotatingFrame::new(&p, sys.decays(), rng.random_range(-10.0..10.0), 1.3);
                let u1 = Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                let u2 = Complex64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
                let ja = frame.jacobian(u1, u2);
                let jf = fd_jacobian(&frame, u1, u2);
                let scale = ja.abs().max();
                assert!((ja - jf).abs().max() < 1e-6 * scale, "{ja} vs {jf}");
            }
        }
    }

    #[test]
    fn zero_state_without_pump() {
        let sys = SystemParams::paper_device();
        let p = sys.rwa.with_pump(0.0);
        let frame = RotatingFrame::new(&p, sys.decays(), 0.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let report = classify(&frame.jacobian(zero, zero), 1e-9, false).unwrap();
        assert!(report.stable);
        let mut re: Vec<f64> = report.eigenvalues.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        for (got, want) in re.iter().zip([-187.57, -187.57, -3.26, -3.26]) {
            assert!((got - want).abs() < 1e-9);
        }
    }
}
