//! Option sets and runners of the individual experiments. Every option can
//! be given on the command line or in the experiment's table of the config
//! file; frequencies are in Hz and forces in pN at this boundary.

use clap::Subcommand;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::output::{Cell, Csv};
use super::CliError;
use crate::adiabatic::{adiabatic_curve, log_grid, thresholds};
use crate::calibration::{
    calibrate_fp_from_bifurcation, calibrate_mass_from_drive, fit_dispersive_slope, least_squares_line, CalibrationData,
};
use crate::error::ModelError;
use crate::params::{hz_to_rad, scaled_from_amplitude, Sideband, SystemParams};
use crate::response::{
    force_sweep, frequency_sweep, gamma_peak_curve, isola_drive_interval, locate_branch_merge, SweepOptions,
    SweepResult,
};
use crate::selfsustained::{delta_b, g_coefficient, solve_limit_cycles};
use crate::timedomain::full::compare_with_rwa;
use crate::timedomain::{classify_basin, initial_state, ringdown, BasinOutcome, RingdownOptions};

macro_rules! options {
    ($(#[$m:meta])* $name:ident { $($(#[$fm:meta])* $field:ident : $ty:ty = $default:expr),* $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Default, PartialEq, clap::Args, serde::Deserialize, serde::Serialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            $($(#[$fm])* #[arg(long, allow_negative_numbers = true)] pub $field: Option<$ty>,)*
        }

        impl $name {
            /// Fills unset options from `file`, then from the defaults.
            pub fn resolve(self, file: Self) -> Self {
                Self { $($field: self.$field.or(file.$field).or($default),)* }
            }
        }
    };
}

options! {
    RingdownArgs {
        /// Initial amplitude of mode 1 (nm)
        a1_nm: f64 = Some(40.0),
        /// Integration horizon (s)
        horizon_s: f64 = Some(2.0),
        /// Sampling interval (s)
        sample_dt_s: f64 = Some(1e-3),
        /// Samples per rate-fit window (odd)
        window: usize = Some(51),
        /// Start mode 2 at rest instead of at its slaved value
        v2_at_rest: bool = Some(false),
    }
}

options! {
    AdiabaticArgs {
        /// Smallest |v1|^2 on the log grid
        x_min: f64 = Some(1e-3),
        /// Largest |v1|^2 on the log grid
        x_max: f64 = Some(1e2),
        /// Grid points
        points: usize = Some(400),
    }
}

options! {
    SelfSustainedArgs {
        /// First pump detuning (Hz)
        delta_start_hz: f64 = Some(-30.0),
        /// Last pump detuning (Hz)
        delta_stop_hz: f64 = Some(0.0),
        /// Detuning points
        points: usize = Some(301),
    }
}

options! {
    BasinArgs {
        /// Smallest initial amplitude (nm)
        a1_start_nm: f64 = Some(1.0),
        /// Largest initial amplitude (nm)
        a1_stop_nm: f64 = Some(60.0),
        /// Initial amplitudes
        points: usize = Some(60),
        /// Integration horizon (s); default 20/Gamma1
        horizon_s: f64 = None,
    }
}

options! {
    ForcedResponseArgs {
        /// Drive force on mode 1 (pN)
        fd1_pn: f64 = Some(0.70),
        /// First drive detuning from omega1 (Hz)
        sweep_start_hz: f64 = Some(-12.7),
        /// Last drive detuning from omega1 (Hz)
        sweep_stop_hz: f64 = Some(14.3),
        /// Detuning points
        points: usize = Some(681),
    }
}

options! {
    ForceSweepArgs {
        /// Drive detuning from omega1 (Hz)
        detune_hz: f64 = Some(0.4),
        /// Smallest drive force (pN)
        fd1_start_pn: f64 = Some(0.1),
        /// Largest drive force (pN)
        fd1_stop_pn: f64 = Some(3.0),
        /// Force points
        points: usize = Some(300),
    }
}

options! {
    GammaPeakArgs {
        /// Smallest drive force (pN)
        fd1_start_pn: f64 = Some(0.3),
        /// Largest drive force (pN)
        fd1_stop_pn: f64 = Some(1.5),
        /// Number of drive forces
        drives: usize = Some(25),
        /// First drive detuning (Hz)
        sweep_start_hz: f64 = Some(-12.7),
        /// Last drive detuning (Hz)
        sweep_stop_hz: f64 = Some(14.3),
        /// Detuning points per frequency sweep
        points: usize = Some(681),
    }
}

options! {
    BranchMergeArgs {
        /// First drive detuning searched (Hz)
        sweep_start_hz: f64 = Some(-3.2),
        /// Last drive detuning searched (Hz)
        sweep_stop_hz: f64 = Some(4.8),
        /// Detuning points of the emitted sweeps
        points: usize = Some(801),
    }
}

options! {
    CalibrateArgs {
        /// Known drive force (pN)
        force_pn: f64 = Some(0.70),
        /// Scaled drive observed for that force (1/s)
        fd1_per_s: f64 = Some(1.717),
        /// Measured onset detuning of self-sustained vibrations (Hz)
        delta_b_hz: f64 = Some(-24.1),
        /// CSV with squared amplitude (m^2) and frequency shift (rad/s) columns
        dispersive_data: String = None,
    }
}

options! {
    FullEomArgs {
        /// Initial amplitude of mode 1 (nm)
        a1_nm: f64 = Some(20.0),
        /// Horizon (ms)
        horizon_ms: f64 = Some(10.0),
        /// Sampling interval (s)
        sample_dt_s: f64 = Some(1e-4),
        /// Integration steps per period of mode 2
        steps_per_period: f64 = Some(200.0),
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum Experiment {
    /// Free decay of mode 1 and its instantaneous decay rate
    Ringdown(RingdownArgs),
    /// Extended adiabatic decay rate and frequency shift against |v1|^2
    AdiabaticCurve(AdiabaticArgs),
    /// Self-sustained vibration branches against the pump detuning
    SelfSustainedSweep(SelfSustainedArgs),
    /// Final state of free evolution against the initial amplitude
    Basin(BasinArgs),
    /// Stationary response to a resonant drive against its frequency
    ForcedResponse(ForcedResponseArgs),
    /// Stationary response against the drive force at fixed frequency
    ForceSweep(ForceSweepArgs),
    /// Peak response rate Gamma_peak of each branch against the drive force
    GammaPeak(GammaPeakArgs),
    /// Drive at which the isolated branch merges with the main resonance
    BranchMerge(BranchMergeArgs),
    /// Drive-to-force scale, pump from bifurcation, dispersive slope
    Calibrate(CalibrateArgs),
    /// Full equations of motion against the slow-amplitude equations
    FullEomCheck(FullEomArgs),
}

pub const NAMES: &[&str] = &[
    "ringdown",
    "adiabatic-curve",
    "self-sustained-sweep",
    "basin",
    "forced-response",
    "force-sweep",
    "gamma-peak",
    "branch-merge",
    "calibrate",
    "full-eom-check",
];

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Ringdown(_) => NAMES[0],
            Experiment::AdiabaticCurve(_) => NAMES[1],
            Experiment::SelfSustainedSweep(_) => NAMES[2],
            Experiment::Basin(_) => NAMES[3],
            Experiment::ForcedResponse(_) => NAMES[4],
            Experiment::ForceSweep(_) => NAMES[5],
            Experiment::GammaPeak(_) => NAMES[6],
            Experiment::BranchMerge(_) => NAMES[7],
            Experiment::Calibrate(_) => NAMES[8],
            Experiment::FullEomCheck(_) => NAMES[9],
        }
    }
}

/// Outputs of one experiment before they are written.
pub struct Report {
    pub files: Vec<(String, String)>,
    pub options: Value,
    pub results: Value,
}

fn solver(e: ModelError) -> CliError {
    CliError::Solver(e.to_string())
}

fn invalid(path: String, msg: &str) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn file_options<T: serde::de::DeserializeOwned + Default>(name: &str, table: Option<&Value>) -> Result<T, CliError> {
    match table {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| CliError::Config(format!("{name}: {e}"))),
    }
}

fn require_upper(sys: &SystemParams, experiment: &str) -> Result<(), CliError> {
    if sys.rwa.sideband != Sideband::Upper {
        return Err(CliError::Config(format!(
            "rwa.sideband: {experiment} requires \"upper\" sideband pumping"
        )));
    }
    Ok(())
}

fn positive(name: &str, field: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(invalid(
            format!("{name}.{field}"),
            &format!("must be positive, got {x}"),
        ))
    }
}

fn range(name: &str, fields: (&str, &str), lo: f64, hi: f64) -> Result<(f64, f64), CliError> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok((lo, hi))
    } else {
        Err(invalid(
            format!("{name}.{}", fields.1),
            &format!("must exceed {} ({lo} >= {hi})", fields.0),
        ))
    }
}

fn points(name: &str, field: &str, n: usize, min: usize) -> Result<usize, CliError> {
    if n >= min {
        Ok(n)
    } else {
        Err(invalid(
            format!("{name}.{field}"),
            &format!("must be at least {min}, got {n}"),
        ))
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn run(exp: Experiment, sys: &SystemParams, table: Option<&Value>) -> Result<Report, CliError> {
    let name = exp.name();
    match exp {
        Experiment::Ringdown(a) => run_ringdown(name, a.resolve(file_options(name, table)?), sys),
        Experiment::AdiabaticCurve(a) => run_adiabatic(name, a.resolve(file_options(name, table)?), sys),
        Experiment::SelfSustainedSweep(a) => run_self_sustained(name, a.resolve(file_options(name, table)?), sys),
        Experiment::Basin(a) => run_basin(name, a.resolve(file_options(name, table)?), sys),
        Experiment::ForcedResponse(a) => run_forced(name, a.resolve(file_options(name, table)?), sys),
        Experiment::ForceSweep(a) => run_force_sweep(name, a.resolve(file_options(name, table)?), sys),
        Experiment::GammaPeak(a) => run_gamma_peak(name, a.resolve(file_options(name, table)?), sys),
        Experiment::BranchMerge(a) => run_branch_merge(name, a.resolve(file_options(name, table)?), sys),
        Experiment::Calibrate(a) => run_calibrate(name, a.resolve(file_options(name, table)?), sys),
        Experiment::FullEomCheck(a) => run_full_eom(name, a.resolve(file_options(name, table)?), sys),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("options serialize")
}

fn run_ringdown(name: &str, a: RingdownArgs, sys: &SystemParams) -> Result<Report, CliError> {
    let a1 = positive(name, "a1_nm", a.a1_nm.unwrap())? * 1e-9;
    let horizon = positive(name, "horizon_s", a.horizon_s.unwrap())?;
    let sample_dt = positive(name, "sample_dt_s", a.sample_dt_s.unwrap())?;
    let window = a.window.unwrap();
    if window < 3 || window.is_multiple_of(2) {
        return Err(invalid(format!("{name}.window"), "must be odd and at least 3"));
    }
    let opts = RingdownOptions {
        horizon,
        sample_dt,
        window,
        v2_at_rest: a.v2_at_rest.unwrap(),
        ..RingdownOptions::default()
    };
    let v1 = scaled_from_amplitude(a1, &sys.modes.mode1, &sys.scaling);
    let tr = ringdown(sys, v1, &opts).map_err(solver)?;
    let mut csv = Csv::new(&[
        "t_s",
        "a1_m",
        "a2_m",
        "re_v1",
        "im_v1",
        "re_v2",
        "im_v2",
        "gamma_inst_per_s",
    ]);
    for i in 0..tr.times.len() {
        csv.row(&[
            Cell::Num(tr.times[i]),
            Cell::Num(tr.a1[i]),
            Cell::Num(tr.a2[i]),
            Cell::Num(tr.v1[i].re),
            Cell::Num(tr.v1[i].im),
            Cell::Num(tr.v2[i].re),
            Cell::Num(tr.v2[i].im),
            Cell::Opt(tr.gamma_inst[i]),
        ]);
    }
    let log_points: Vec<(f64, f64)> = tr
        .times
        .iter()
        .zip(&tr.a1)
        .filter(|(_, &a)| a > 0.0)
        .map(|(&t, &a)| (t, a.ln()))
        .collect();
    let fit = least_squares_line(&log_points).map_err(solver)?;
    Ok(Report {
        files: vec![(format!("{name}.csv"), csv.into_string())],
        options: to_json(&a),
        results: json!({
            "fitted_decay_rate_per_s": -fit.slope,
            "error_estimate": tr.error_estimate,
        }),
    })
}

fn run_adiabatic(name: &str, a: AdiabaticArgs, sys: &SystemParams) -> Result<Report, CliError> {
    let lo = positive(name, "x_min", a.x_min.unwrap())?;
    let (lo, hi) = range(name, ("x_min", "x_max"), lo, a.x_max.unwrap())?;
    let n = points(name, "points", a.points.unwrap(), 2)?;
    let decays = sys.decays();
    let curve = adiabatic_curve(&log_grid(lo, hi, n), &sys.rwa, decays).map_err(solver)?;
    let mut csv = Csv::new(&["x", "gamma_ad_per_s", "phi_dot_rad_s", "y", "valid"]);
    for i in 0..curve.grid.len() {
        csv.row(&[
            Cell::Num(curve.grid[i]),
            Cell::Num(curve.gamma_ad[i]),
            Cell::Num(curve.phi_dot[i]),
            Cell::Num(curve.y[i]),
            Cell::Bool(curve.validity[i]),
        ]);
    }
    let th = match sys.rwa.sideband {
        Sideband::Upper => Some(thresholds(&sys.rwa, decays, &sys.modes.mode1, &sys.scaling).map_err(solver)?),
        Sideband::Lower => None,
    };
    Ok(Report {
        files: vec![(format!("{name}.csv"), csv.into_string())],
        options: to_json(&a),
        results: json!({ "thresholds": th }),
    })
}

fn run_self_sustained(name: &str, a: SelfSustainedArgs, sys: &SystemParams) -> Result<Report, CliError> {
    require_upper(sys, name)?;
    let (lo, hi) = range(
        name,
        ("delta_start_hz", "delta_stop_hz"),
        a.delta_start_hz.unwrap(),
        a.delta_stop_hz.unwrap(),
    )?;
    let n = points(name, "points", a.points.unwrap(), 2)?;
    let decays = sys.decays();
    let mut csv = Csv::new(&[
        "delta_rad_s",
        "branch",
        "c1_sq",
        "c2_sq",
        "a1_m",
        "a2_m",
        "delta_omega_rad_s",
        "stable",
    ]);
    for d in linspace(hz_to_rad(lo), hz_to_rad(hi), n) {
        let p = sys.rwa.with_delta(d);
        if p.validate(sys.modes.mode1.omega).is_err() {
            return Err(invalid(
                format!("{name}.delta_start_hz"),
                "detuning range leaves the valid window",
            ));
        }
        for s in solve_limit_cycles(&p, decays).map_err(solver)? {
            csv.row(&[
                Cell::Num(d),
                Cell::Text(s.branch.as_str()),
                Cell::Num(s.c1_sq),
                Cell::Num(s.c2_sq),
                Cell::Num(sys.a1(s.c1_sq.sqrt())),
                Cell::Num(sys.a2(s.c2_sq.sqrt())),
                Cell::Num(s.delta_omega),
                Cell::Bool(s.stable),
            ]);
        }
    }
    let bif = delta_b(&sys.rwa, decays).ok();
    Ok(Report {
        files: vec![(format!("{name}.csv"), csv.into_string())],
        options: to_json(&a),
        results: json!({
            "delta_b_rad_s": bif.map(|b| b.delta_b),
            "g_coefficient_per_s": g_coefficient(&sys.rwa, decays),
        }),
    })
}

fn run_basin(name: &str, a: BasinArgs, sys: &SystemParams) -> Result<Report, CliError> {
    require_upper(sys, name)?;
    let lo = positive(name, "a1_start_nm", a.a1_start_nm.unwrap())?;
    let (lo, hi) = range(name, ("a1_start_nm", "a1_stop_nm"), lo, a.a1_stop_nm.unwrap())?;
    let n = points(name, "points", a.points.unwrap(), 2)?;
    if let Some(h) = a.horizon_s {
        positive(name, "horizon_s", h)?;
    }
    let ctrl = crate::ode::StepControl::default();
    let amps: Vec<f64> = linspace(lo * 1e-9, hi * 1e-9, n);
    let outcomes: Vec<BasinOutcome> = amps
        .par_iter()
        .map(|&a1| classify_basin(a1, sys, a.horizon_s, &ctrl))
        .collect::<Result<_, _>>()
        .map_err(solver)?;
    let mut csv = Csv::new(&["a1_initial_m", "outcome", "final_amplitude_m"]);
    for (a1, o) in amps.iter().zip(&outcomes) {
        let (label, amp) = match o {
            BasinOutcome::DecaysToZero { final_amplitude } => ("decays-to-zero", *final_amplitude),
            BasinOutcome::SettlesToLimitCycle { amplitude } => ("settles-to-limit-cycle", *amplitude),
            BasinOutcome::Undecided { final_amplitude } => ("undecided", *final_amplitude),
        };
        csv.row(&[Cell::Num(*a1), Cell::Text(label), Cell::Num(amp)]);
    }
    let th = thresholds(&sys.rwa, sys.decays(), &sys.modes.mode1, &sys.scaling).map_err(solver)?;
    Ok(Report {
        files: vec![(format!("{name}.csv"), csv.into_string())],
        options: to_json(&a),
        results: json!({ "thresholds": th }),
    })
}

fn sweep_csv(control_column: &str, sweep: &SweepResult, sys: &SystemParams) -> String {
    let mut csv = Csv::new(&[
        control_column,
        "branch_id",
        "a1_m",
        "a2_m",
        "u1_sq",
        "u2_sq",
        "stable",
        "residual",
    ]);
    for (c, s) in sweep.rows() {
        csv.row(&[
            Cell::Num(c),
            Cell::Int(s.branch_id),
            Cell::Num(sys.a1(s.u1_sq.sqrt())),
            Cell::Num(sys.a2(s.u2_sq.sqrt())),
            Cell::Num(s.u1_sq),
            Cell::Num(s.u2_sq),
            Cell::Bool(s.stable),
            Cell::Num(s.residual),
        ]);
    }
    csv.into_string()
}

fn sweep_summary(sweep: &SweepResult) -> Value {
    json!({
        "omega_l_rad_s": sweep.summary.omega_l,
        "omega_h_rad_s": sweep.summary.omega_h,
        "isolated_branch": sweep.summary.isolated_branch,
        "hysteretic": sweep.hysteretic,
        "window_margin_ok": sweep.summary.window_margin_ok,
        "ambiguous_links": sweep.summary.ambiguous_links,
        "branches": sweep.summary.branches,
        "folds": sweep.folds,
    })
}

fn run_forced(name: &str, a: ForcedResponseArgs, sys: &SystemParams) -> Result<Report, CliError> {
    let fd1 = positive(name, "fd1_pn", a.fd1_pn.unwrap())?;
    let (lo, hi) = range(
        name,
        ("sweep_start_hz", "sweep_stop_hz"),
        a.sweep_start_hz.unwrap(),
        a.sweep_stop_hz.unwrap(),
    )?;
    let n = points(name, "points", a.points.unwrap(), 2)?;
    let f_d1 = fd1 * 1e-12 * sys.drive_per_newton();
    let sweep =
        frequency_sweep(sys, f_d1, (hz_to_rad(lo), hz_to_rad(hi)), n, &SweepOptions::default()).map_err(solver)?;
    let mut results = sweep_summary(&sweep);
    results["f_d1_per_s"] = json!(f_d1);
    Ok(Report {
        files: vec![(format!("{name}.csv"), sweep_csv("detune_rad_s", &sweep, sys))],
        options: to_json(&a),
        results,
    })
}

fn run_force_sweep(name: &str, a: ForceSweepArgs, sys: &SystemParams) -> Result<Report, CliError> {
    let lo = positive(name, "fd1_start_pn", a.fd1_start_pn.unwrap())?;
    let (lo, hi) = range(name, ("fd1_start_pn", "fd1_stop_pn"), lo, a.fd1_stop_pn.unwrap())?;
    let n = points(name, "points", a.points.unwrap(), 2)?;
    let per_pn = 1e-12 * sys.drive_per_newton();
    let detune = hz_to_rad(a.detune_hz.unwrap());
    let sweep = force_sweep(sys, detune, (lo * per_pn, hi * per_pn), n, &SweepOptions::default()).map_err(solver)?;
    Ok(Report {
        files: vec![(format!("{name}.csv"), sweep_csv("f_d1_per_s", &sweep, sys))],
        options: to_json(&a),
        results: sweep_summary(&sweep),
    })
}

fn run_gamma_peak(name: &str, a: GammaPeakArgs, sys: &SystemParams) -> Result<Report, CliError> {
    let lo = positive(name, "fd1_start_pn", a.fd1_start_pn.unwrap())?;
    let (lo, hi) = range(name, ("fd1_start_pn", "fd1_stop_pn"), lo, a.fd1_stop_pn.unwrap())?;
    let drives = points(name, "drives", a.drives.unwrap(), 2)?;
    let (s_lo, s_hi) = range(
        name,
        ("sweep_start_hz", "sweep_stop_hz"),
        a.sweep_start_hz.unwrap(),
        a.sweep_stop_hz.unwrap(),
    )?;
    let n = points(name, "points", a.points.unwrap(), 2)?;
    let per_pn = 1e-12 * sys.drive_per_newton();
    let forces = linspace(lo, hi, drives);
    let f_values: Vec<f64> = forces.iter().map(|f| f * per_pn).collect();
    let window = (hz_to_rad(s_lo), hz_to_rad(s_hi));
    let curve = gamma_peak_curve(sys, &f_values, window, n, &SweepOptions::default()).map_err(solver)?;
    let mut csv = Csv::new(&[
        "fd1_pn",
        "f_d1_per_s",
        "branch_id",
        "isolated",
        "a1_max_m",
        "gamma_peak_per_s",
    ]);
    for pt in &curve.points {
        csv.row(&[
            Cell::Num(pt.f_d1 / per_pn),
            Cell::Num(pt.f_d1),
            Cell::Int(pt.branch_id),
            Cell::Bool(pt.isolated),
            Cell::Num(pt.a1_max_m),
            Cell::Num(pt.gamma_peak_per_s),
        ]);
    }
    let interval = match isola_drive_interval(&sys.rwa, sys.decays(), window) {
        Ok(iv) => json!({
            "from_pn": iv.birth_f_d1 / per_pn,
            "to_pn": iv.merge_f_d1 / per_pn,
            "birth_detune_rad_s": iv.birth_detune,
            "merge_detune_rad_s": iv.merge_detune,
        }),
        Err(ModelError::NotApplicable(_)) => Value::Null,
        Err(e) => return Err(solver(e)),
    };
    Ok(Report {
        files: vec![(format!("{name}.csv"), csv.into_string())],
        options: to_json(&a),
        results: json!({
            "multivalued_sampled_pn": curve.multivalued_range.map(|(a, b)| [a / per_pn, b / per_pn]),
            "multivalued_interval": interval,
            "narrow_windows": curve.narrow_windows,
        }),
    })
}

fn run_branch_merge(name: &str, a: BranchMergeArgs, sys: &SystemParams) -> Result<Report, CliError> {
    let (lo, hi) = range(
        name,
        ("sweep_start_hz", "sweep_stop_hz"),
        a.sweep_start_hz.unwrap(),
        a.sweep_stop_hz.unwrap(),
    )?;
    let n = points(name, "points", a.points.unwrap(), 2)?;
    let window = (hz_to_rad(lo), hz_to_rad(hi));
    let opts = SweepOptions::default();
    let r = locate_branch_merge(sys, window, &opts).map_err(solver)?;
    let per_pn = 1e-12 * sys.drive_per_newton();
    let mut files = Vec::new();
    for (label, factor) in [
        ("below", 1.0 - crate::response::merge::STRADDLE),
        ("above", 1.0 + crate::response::merge::STRADDLE),
    ] {
        let sweep = frequency_sweep(sys, r.f_d1_critical * factor, window, n, &opts).map_err(solver)?;
        files.push((format!("{name}-{label}.csv"), sweep_csv("detune_rad_s", &sweep, sys)));
    }
    Ok(Report {
        files,
        options: to_json(&a),
        results: json!({
            "f_d1_critical_per_s": r.f_d1_critical,
            "fd1_critical_pn": r.f_d1_critical / per_pn,
            "omega_c_rad_s": r.omega_c,
            "bisection_bracket_per_s": [r.bracket.0, r.bracket.1],
            "birth_f_d1_per_s": r.birth_f_d1,
            "birth_fd1_pn": r.birth_f_d1 / per_pn,
            "isolated_below": r.isolated_below,
            "merged_above": r.merged_above,
            "gap_width_ratio": r.gap_width_ratio,
            "normal_form_ok": r.normal_form_ok,
        }),
    })
}

fn read_dispersive(path: &str) -> Result<CalibrationData, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {path}: {e}")))?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |s: &str| s.parse::<f64>().ok();
        match (
            cells.len(),
            cells.first().and_then(|s| parse(s)),
            cells.get(1).and_then(|s| parse(s)),
        ) {
            (2, Some(x), Some(y)) => points.push((x, y)),
            _ => {
                return Err(CliError::Config(format!(
                    "{path}:{}: expected two numeric columns",
                    i + 1
                )))
            }
        }
    }
    Ok(CalibrationData {
        gamma12_slope: None,
        gamma21_slope: None,
        points,
    })
}

fn run_calibrate(name: &str, a: CalibrateArgs, sys: &SystemParams) -> Result<Report, CliError> {
    let force = positive(name, "force_pn", a.force_pn.unwrap())? * 1e-12;
    let f_d1 = positive(name, "fd1_per_s", a.fd1_per_s.unwrap())?;
    let decays = sys.decays();
    let m1 = calibrate_mass_from_drive(force, f_d1, sys.modes.mode1.omega, &sys.scaling).map_err(solver)?;
    let mut calibrated = *sys;
    calibrated.modes.mode1.mass = m1;
    let mut csv = Csv::new(&["quantity", "value"]);
    csv.row(&[Cell::Text("mass1_kg"), Cell::Num(m1)]);
    csv.row(&[
        Cell::Text("drive_per_pn_per_s"),
        Cell::Num(calibrated.drive_per_newton() * 1e-12),
    ]);
    csv.row(&[Cell::Text("mode1_amplitude_per_unit_m"), Cell::Num(calibrated.a1(1.0))]);
    let mut results = json!({
        "mass1_kg": m1,
        "drive_per_pn_per_s": calibrated.drive_per_newton() * 1e-12,
        "mode1_amplitude_per_unit_m": calibrated.a1(1.0),
    });
    if let Some(db) = a.delta_b_hz {
        let fp = calibrate_fp_from_bifurcation(hz_to_rad(db), &sys.rwa, decays).map_err(solver)?;
        csv.row(&[Cell::Text("fp_per_s"), Cell::Num(fp)]);
        results["fp_per_s"] = json!(fp);
    }
    if let Some(path) = &a.dispersive_data {
        let fit = fit_dispersive_slope(&read_dispersive(path)?).map_err(solver)?;
        csv.row(&[Cell::Text("dispersive_slope"), Cell::Num(fit.slope)]);
        csv.row(&[Cell::Text("dispersive_intercept"), Cell::Num(fit.intercept)]);
        results["dispersive_fit"] = to_json(&fit);
    }
    Ok(Report {
        files: vec![(format!("{name}.csv"), csv.into_string())],
        options: to_json(&a),
        results,
    })
}

fn run_full_eom(name: &str, a: FullEomArgs, sys: &SystemParams) -> Result<Report, CliError> {
    let a1 = positive(name, "a1_nm", a.a1_nm.unwrap())? * 1e-9;
    let horizon = positive(name, "horizon_ms", a.horizon_ms.unwrap())? * 1e-3;
    let sample_dt = positive(name, "sample_dt_s", a.sample_dt_s.unwrap())?;
    let steps = positive(name, "steps_per_period", a.steps_per_period.unwrap())?;
    let v1 = scaled_from_amplitude(a1, &sys.modes.mode1, &sys.scaling);
    let s0 = initial_state(v1, &sys.rwa, sys.decays(), false).map_err(solver)?;
    let r = compare_with_rwa(sys, s0.v1, s0.v2, horizon, sample_dt, steps).map_err(|e| match e {
        ModelError::Domain(m) => invalid(format!("{name}.horizon_ms"), &m),
        e => solver(e),
    })?;
    let mut csv = Csv::new(&["t_s", "full_abs_v1", "rwa_abs_v1", "relative_deviation"]);
    for i in 0..r.times.len() {
        csv.row(&[
            Cell::Num(r.times[i]),
            Cell::Num(r.full_v1[i]),
            Cell::Num(r.rwa_v1[i]),
            Cell::Num((r.full_v1[i] - r.rwa_v1[i]).abs() / r.rwa_v1[i]),
        ]);
    }
    Ok(Report {
        files: vec![(format!("{name}.csv"), csv.into_string())],
        options: to_json(&a),
        results: json!({ "max_relative_deviation": r.max_relative_deviation }),
    })
}
