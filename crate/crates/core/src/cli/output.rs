//! CSV tables, the run manifest, and writing them atomically as a set.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::CliError;
use crate::params::{alpha_beta, rad_to_hz, SystemParams};
use crate::selfsustained::{delta_b, g_coefficient};

pub enum Cell {
    Num(f64),
    Opt(Option<f64>),
    Bool(bool),
    Int(usize),
    Text(&'static str),
}

fn format_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV table with one header row and numbers at 17 significant digits.
pub struct Csv {
    columns: usize,
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            columns: header.len(),
            text: header.join(",") + "\n",
        }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.columns);
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match cell {
                Cell::Num(x) => self.text.push_str(&format_num(*x)),
                Cell::Opt(Some(x)) => self.text.push_str(&format_num(*x)),
                Cell::Opt(None) => {}
                Cell::Bool(b) => self.text.push_str(if *b { "true" } else { "false" }),
                Cell::Int(n) => {
                    let _ = write!(self.text, "{n}");
                }
                Cell::Text(s) => self.text.push_str(s),
            }
        }
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

fn entry(value: Option<f64>, formula: &str) -> Value {
    json!({ "value": value, "formula": formula })
}

/// Derived constants of the resolved parameters, each tagged with the
/// formula that produced it.
pub fn derived_constants(sys: &SystemParams) -> Value {
    let decays = sys.decays();
    let ab = alpha_beta(&sys.rwa, decays.gamma2);
    let bif = delta_b(&sys.rwa, decays).ok();
    json!({
        "alpha_per_s": entry(Some(ab.alpha), "alpha = -sigma 2 f_p^2 Gamma2 / (Gamma2^2 + Delta^2)"),
        "beta_per_s": entry(Some(ab.beta), "beta = Lambda11 + 2 f_p^2 Delta / (Gamma2^2 + Delta^2)"),
        "g_coefficient_per_s": entry(
            Some(g_coefficient(&sys.rwa, decays)),
            "G = (Gamma1 + Gamma2) Lambda12 + 2 Gamma2 Lambda11 + Gamma1 Lambda22 / 2",
        ),
        "delta_b_rad_s": entry(
            bif.map(|b| b.delta_b),
            "Delta_B = (Gamma1^2 G^2 - (2 Gamma1 + Gamma2)^2 f_p^4) / (2 Gamma1 f_p^2 G)",
        ),
        "delta_b_hz": entry(bif.map(|b| rad_to_hz(b.delta_b)), "Delta_B / (2 pi)"),
        "drive_per_pn_per_s": entry(
            Some(sys.drive_per_newton() * 1e-12),
            "f_d1 / F_d1 = (8 m1 omega1 C_sc)^(-1/2)",
        ),
        "mode1_amplitude_per_unit_m": entry(Some(sys.a1(1.0)), "A1 = (2 C_sc / (m1 omega1))^(1/2) |v1|"),
        "mode2_amplitude_per_unit_m": entry(Some(sys.a2(1.0)), "A2 = (2 C_sc / (m2 omega2))^(1/2) |v2|"),
        "omega1_over_gamma2": entry(Some(sys.modes.mode1.omega / decays.gamma2), "omega1 / Gamma2"),
    })
}

pub fn parameters(sys: &SystemParams) -> Value {
    let m = |mode: &crate::params::ModeParams| json!({ "omega_rad_s": mode.omega, "gamma_rad_s": mode.gamma, "mass_kg": mode.mass });
    json!({
        "mode1": m(&sys.modes.mode1),
        "mode2": m(&sys.modes.mode2),
        "rwa": {
            "lambda11_per_s": sys.rwa.lambda11,
            "lambda22_per_s": sys.rwa.lambda22,
            "lambda12_per_s": sys.rwa.lambda12,
            "fp_per_s": sys.rwa.f_p,
            "delta_rad_s": sys.rwa.delta,
            "delta_hz": rad_to_hz(sys.rwa.delta),
            "sideband": sys.rwa.sideband.as_str(),
        },
        "scaling": { "c_sc_joule_s": sys.scaling.c_sc },
    })
}

pub struct ManifestInput<'a> {
    pub experiment: &'a str,
    pub sys: &'a SystemParams,
    pub options: Value,
    pub results: Value,
    pub files: Vec<String>,
    pub timestamp: Option<u64>,
}

pub fn manifest(m: ManifestInput) -> String {
    let mut v = json!({
        "experiment": m.experiment,
        "parameters": parameters(m.sys),
        "derived": derived_constants(m.sys),
        "options": m.options,
        "results": m.results,
        "outputs": m.files,
    });
    if let Some(t) = m.timestamp {
        v["generated_unix_s"] = json!(t);
    }
    serde_json::to_string_pretty(&v).expect("JSON values serialize") + "\n"
}

/// Writes a set of files; if any write fails, every file written so far is
/// removed.
pub fn write_all(dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create output directory {}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = dir.join(name);
        if let Err(e) = std::fs::write(&path, contents) {
            remove_all(&written);
            let _ = std::fs::remove_file(&path);
            return Err(CliError::Io(format!("cannot write {}: {e}", path.display())));
        }
        written.push(path);
    }
    Ok(written)
}

fn remove_all(paths: &[PathBuf]) {
    for p in paths {
        let _ = std::fs::remove_file(p);
    }
}
