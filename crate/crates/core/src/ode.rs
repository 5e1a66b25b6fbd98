//! Explicit Runge–Kutta integrators: adaptive Dormand–Prince 5(4) with
//! continuous output, and classical fixed-step RK4.

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }
}

impl StepControl {
    pub fn with_tolerance(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub times: Vec<f64>,
    pub states: Vec<[f64; N]>,
    /// Sum over accepted steps of the max-norm local error estimate.
    pub error_estimate: f64,
    pub accepted: usize,
    pub rejected: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn combine<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end`, sampling the continuous
/// extension at `t0 + k·dt` for every `k` with `t0 + k·dt ≤ t_end`.
pub fn dopri5<const N: usize, F>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    dt: f64,
    ctrl: &StepControl,
) -> Result<Trajectory<N>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    if !(t_end > t0) || !(dt > 0.0) {
        return Err(ModelError::Domain(
            "integration interval and sample step must be positive".into(),
        ));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Domain("initial state must be finite".into()));
    }
    let n_samples = ((t_end - t0) / dt * (1.0 + 1e-12)).floor() as usize + 1;
    let mut out = Trajectory {
        times: Vec::with_capacity(n_samples),
        states: Vec::with_capacity(n_samples),
        error_estimate: 0.0,
        accepted: 0,
        rejected: 0,
    };
    out.times.push(t0);
    out.states.push(y0);
    let mut next_sample = 1usize;

    let scale = |a: &[f64; N], b: &[f64; N], i: usize| ctrl.atol + ctrl.rtol * a[i].abs().max(b[i].abs());
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = match ctrl.h_init {
        Some(h) => h,
        None => {
            let d0 = rms(&y, |i| y[i] / scale(&y, &y, i));
            let d1 = rms(&y, |i| k1[i] / scale(&y, &y, i));
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            h0.min(t_end - t0)
        }
    }
    .min(ctrl.h_max);

    while next_sample < n_samples {
        if out.accepted + out.rejected >= ctrl.max_steps {
            return Err(ModelError::Solver {
                message: format!("step limit reached at t = {t}"),
                residual: f64::NAN,
            });
        }
        let h_min = 16.0 * f64::EPSILON * t.abs().max(t_end.abs()).max(1e-300);
        if h < h_min {
            return Err(ModelError::Stiffness {
                t,
                h,
                state: y.to_vec(),
            });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let k2 = f(t + C2 * h, &combine(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &combine(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(t + C4 * h, &combine(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(
            t + C5 * h,
            &combine(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + h,
            &combine(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y1 = combine(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + h, &y1);
        let mut err_vec = [0.0; N];
        for i in 0..N {
            err_vec[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let err = rms(&y, |i| err_vec[i] / scale(&y, &y1, i));
        if !err.is_finite() || y1.iter().any(|v| !v.is_finite()) {
            out.rejected += 1;
            h *= 0.1;
            continue;
        }
        if err <= 1.0 {
            // continuous extension on [t, t + h]
            let mut r = [[0.0; N]; 5];
            for i in 0..N {
                let dy = y1[i] - y[i];
                let bspl = h * k1[i] - dy;
                r[0][i] = y[i];
                r[1][i] = dy;
                r[2][i] = bspl;
                r[3][i] = dy - h * k7[i] - bspl;
                r[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let t_new = if last { t_end } else { t + h };
            while next_sample < n_samples {
                let ts = t0 + next_sample as f64 * dt;
                if ts > t_new && !(last && next_sample == n_samples - 1) {
                    break;
                }
                let theta = ((ts - t) / h).clamp(0.0, 1.0);
                let th1 = 1.0 - theta;
                let mut ys = [0.0; N];
                for i in 0..N {
                    ys[i] = r[0][i] + theta * (r[1][i] + th1 * (r[2][i] + theta * (r[3][i] + th1 * r[4][i])));
                }
                out.times.push(ts);
                out.states.push(ys);
                next_sample += 1;
            }
            out.error_estimate += err_vec.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            out.accepted += 1;
            t = t_new;
            y = y1;
            k1 = k7;
            if last {
                break;
            }
        } else {
            out.rejected += 1;
        }
        let fac = if err == 0.0 {
            10.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 10.0)
        };
        h = (h * fac).min(ctrl.h_max);
    }
    Ok(out)
}

fn rms<const N: usize>(_: &[f64; N], term: impl Fn(usize) -> f64) -> f64 {
    ((0..N).map(|i| term(i).powi(2)).sum::<f64>() / N as f64).sqrt()
}

/// Classical RK4 with a fixed step; `observe(step_index, t, y)` is called at
/// the start and after every step.
pub fn rk4<const N: usize, F, O>(mut f: F, t0: f64, y0: [f64; N], h: f64, n_steps: usize, mut observe: O) -> [f64; N]
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    O: FnMut(usize, f64, &[f64; N]),
{
    let mut y = y0;
    observe(0, t0, &y);
    for n in 0..n_steps {
        let t = t0 + n as f64 * h;
        let k1 = f(t, &y);
        let k2 = f(t + 0.5 * h, &combine(&y, h, &[(0.5, &k1)]));
        let k3 = f(t + 0.5 * h, &combine(&y, h, &[(0.5, &k2)]));
        let k4 = f(t + h, &combine(&y, h, &[(1.0, &k3)]));
        y = combine(
            &y,
            h,
            &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)],
        );
        observe(n + 1, t0 + (n + 1) as f64 * h, &y);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_decay() {
        let tr = dopri5(
            |_, y: &[f64; 1]| [-3.26 * y[0]],
            0.0,
            [1.0],
            1.0,
            1e-3,
            &StepControl::default(),
        )
        .unwrap();
        assert_eq!(tr.times.len(), 1001);
        for (t, y) in tr.times.iter().zip(&tr.states) {
            assert_relative_eq!(y[0], (-3.26 * t).exp(), max_relative = 1e-8);
        }
        assert_eq!(*tr.times.last().unwrap(), 1.0);
    }

    #[test]
    fn dense_output_of_oscillator() {
        // samples between steps come from the continuous extension
        let w = 50.0;
        let tr = dopri5(
            |_, y: &[f64; 2]| [y[1], -w * w * y[0]],
            0.0,
            [1.0, 0.0],
            2.0,
            1.7e-4,
            &StepControl::default(),
        )
        .unwrap();
        assert!(tr.accepted < tr.times.len());
        for (t, y) in tr.times.iter().zip(&tr.states) {
            assert!((y[0] - (w * t).cos()).abs() < 1e-7, "t = {t}");
        }
    }

    #[test]
    fn error_estimate_bounds_tolerance_halving() {
        let f = |_: f64, y: &[f64; 2]| [y[1], -y[0] - 0.1 * y[1] + y[0].powi(3) * 0.2];
        let a = dopri5(
            f,
            0.0,
            [0.8, 0.0],
            20.0,
            0.5,
            &StepControl::default().with_tolerance(1e-8, 1e-10),
        )
        .unwrap();
        let b = dopri5(
            f,
            0.0,
            [0.8, 0.0],
            20.0,
            0.5,
            &StepControl::default().with_tolerance(5e-9, 5e-11),
        )
        .unwrap();
        let (ya, yb) = (a.states.last().unwrap(), b.states.last().unwrap());
        let diff = (ya[0] - yb[0]).abs().max((ya[1] - yb[1]).abs());
        assert!(diff < a.error_estimate, "{diff} vs {}", a.error_estimate);
    }

    #[test]
    fn blow_up_reports_stiffness() {
        let r = dopri5(
            |_, y: &[f64; 1]| [y[0] * y[0]],
            0.0,
            [1.0],
            2.0,
            0.1,
            &StepControl::default(),
        );
        assert!(matches!(r, Err(ModelError::Stiffness { .. })), "{r:?}");
    }

    #[test]
    fn rk4_fourth_order() {
        let run = |n: usize| rk4(|_, y: &[f64; 1]| [-y[0]], 0.0, [1.0], 1.0 / n as f64, n, |_, _, _| {})[0];
        let e1 = (run(20) - (-1.0f64).exp()).abs();
        let e2 = (run(40) - (-1.0f64).exp()).abs();
        assert!((e1 / e2 - 16.0).abs() < 1.0);
    }
}
