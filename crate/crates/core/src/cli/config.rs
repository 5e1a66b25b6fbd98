//! Run configuration: a TOML file with parameter sections and one table of
//! options per experiment, overridden by command-line flags.
//!
//! ```toml
//! preset = "paper-device"
//!
//! [rwa]
//! delta_hz = -35.0
//! sideband = "upper"
//!
//! [forced-response]
//! fd1_pn = 0.70
//! ```

use std::path::Path;

use clap::Args;
use toml::{Table, Value};

use super::CliError;
use crate::params::{hz_to_rad, Sideband, SystemParams, PAPER_DEVICE};

/// Parameter overrides accepted on the command line for every experiment.
#[derive(Debug, Clone, Default, Args)]
pub struct ParamOverrides {
    /// Pump detuning Δ (Hz)
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub delta_hz: Option<f64>,
    /// Scaled pump amplitude f_p (1/s)
    #[arg(long, global = true)]
    pub fp_per_s: Option<f64>,
    /// Duffing coefficient of mode 1 (1/s)
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub lambda11_per_s: Option<f64>,
    /// Duffing coefficient of mode 2 (1/s)
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub lambda22_per_s: Option<f64>,
    /// Dispersive coupling (1/s)
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub lambda12_per_s: Option<f64>,
    /// Pumped sideband: upper or lower
    #[arg(long, global = true)]
    pub sideband: Option<String>,
    /// Effective mass of mode 1 (kg)
    #[arg(long, global = true)]
    pub m1_kg: Option<f64>,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("mode1", &["omega_rad_s", "gamma_rad_s", "mass_kg"]),
    ("mode2", &["omega_rad_s", "gamma_rad_s", "mass_kg"]),
    (
        "rwa",
        &[
            "lambda11_per_s",
            "lambda22_per_s",
            "lambda12_per_s",
            "fp_per_s",
            "delta_hz",
            "sideband",
        ],
    ),
    ("scaling", &["c_sc_joule_s"]),
];

pub fn load(path: &Path) -> Result<Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Rejects top-level keys that are neither parameter sections nor
/// experiment tables.
pub fn check_top_level(table: &Table, experiments: &[&str]) -> Result<(), CliError> {
    for key in table.keys() {
        let known = key == "preset" || SECTIONS.iter().any(|(s, _)| s == key) || experiments.contains(&key.as_str());
        if !known {
            return Err(CliError::Config(format!("{key}: unknown configuration key")));
        }
    }
    Ok(())
}

fn number(value: &Value, path: &str) -> Result<f64, CliError> {
    match value {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(CliError::Config(format!(
            "{path}: expected a number, got {}",
            other.type_str()
        ))),
    }
}

fn sideband(text: &str, path: &str) -> Result<Sideband, CliError> {
    text.parse()
        .map_err(|_| CliError::Config(format!("{path}: expected \"upper\" or \"lower\", got \"{text}\"")))
}

/// Builds the system parameters from a preset, the file's parameter
/// sections and the command-line overrides, in increasing precedence.
pub fn resolve_system(
    preset: Option<&str>,
    table: Option<&Table>,
    overrides: &ParamOverrides,
) -> Result<SystemParams, CliError> {
    let file_preset = match table.and_then(|t| t.get("preset")) {
        Some(Value::String(s)) => Some(s.as_str()),
        Some(other) => {
            return Err(CliError::Config(format!(
                "preset: expected a string, got {}",
                other.type_str()
            )))
        }
        None => None,
    };
    let name = preset.or(file_preset).unwrap_or(PAPER_DEVICE);
    let mut sys =
        SystemParams::preset(name).ok_or_else(|| CliError::Config(format!("preset: unknown preset \"{name}\"")))?;

    if let Some(table) = table {
        for (section, keys) in SECTIONS {
            let Some(value) = table.get(*section) else {
                continue;
            };
            let Value::Table(entries) = value else {
                return Err(CliError::Config(format!("{section}: expected a table")));
            };
            for (key, value) in entries {
                let path = format!("{section}.{key}");
                if !keys.contains(&key.as_str()) {
                    return Err(CliError::Config(format!("{path}: unknown key")));
                }
                if *section == "rwa" && key == "sideband" {
                    let Value::String(s) = value else {
                        return Err(CliError::Config(format!("{path}: expected a string")));
                    };
                    sys.rwa.sideband = sideband(s, &path)?;
                    continue;
                }
                let x = number(value, &path)?;
                let mode = match *section {
                    "mode1" => Some(&mut sys.modes.mode1),
                    "mode2" => Some(&mut sys.modes.mode2),
                    _ => None,
                };
                match (mode, key.as_str()) {
                    (Some(m), "omega_rad_s") => m.omega = x,
                    (Some(m), "gamma_rad_s") => m.gamma = x,
                    (Some(m), "mass_kg") => m.mass = x,
                    (None, "lambda11_per_s") => sys.rwa.lambda11 = x,
                    (None, "lambda22_per_s") => sys.rwa.lambda22 = x,
                    (None, "lambda12_per_s") => sys.rwa.lambda12 = x,
                    (None, "fp_per_s") => sys.rwa.f_p = x,
                    (None, "delta_hz") => sys.rwa.delta = hz_to_rad(x),
                    (None, "c_sc_joule_s") => sys.scaling.c_sc = x,
                    _ => unreachable!("key list and match agree"),
                }
            }
        }
    }

    let o = overrides;
    if let Some(x) = o.delta_hz {
        sys.rwa.delta = hz_to_rad(x);
    }
    if let Some(x) = o.fp_per_s {
        sys.rwa.f_p = x;
    }
    if let Some(x) = o.lambda11_per_s {
        sys.rwa.lambda11 = x;
    }
    if let Some(x) = o.lambda22_per_s {
        sys.rwa.lambda22 = x;
    }
    if let Some(x) = o.lambda12_per_s {
        sys.rwa.lambda12 = x;
    }
    if let Some(s) = &o.sideband {
        sys.rwa.sideband = sideband(s, "rwa.sideband")?;
    }
    if let Some(x) = o.m1_kg {
        sys.modes.mode1.mass = x;
    }
    sys.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(sys)
}
