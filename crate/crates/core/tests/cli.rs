use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sideband-friction"))
        .arg("--out")
        .arg(out)
        .arg("--no-timestamp")
        .args(args)
        .output()
        .expect("binary runs")
}

fn manifest(out: &Path, experiment: &str) -> Value {
    let text = std::fs::read_to_string(out.join(format!("{experiment}.manifest.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn header(out: &Path, file: &str) -> String {
    let text = std::fs::read_to_string(out.join(file)).unwrap();
    text.lines().next().unwrap().to_string()
}

#[test]
fn linear_ringdown_rate() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "--fp-per-s",
            "0",
            "--lambda11-per-s",
            "0",
            "ringdown",
            "--horizon-s",
            "1.0",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path(), "ringdown");
    let rate = m["results"]["fitted_decay_rate_per_s"].as_f64().unwrap();
    assert!((rate - 3.26).abs() < 1e-6, "{rate}");
    assert_eq!(
        header(dir.path(), "ringdown.csv"),
        "t_s,a1_m,a2_m,re_v1,im_v1,re_v2,im_v2,gamma_inst_per_s"
    );
}

#[test]
fn forced_response_drive_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["--delta-hz", "-35", "forced-response", "--fd1-pn", "0.70"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path(), "forced-response");
    let f = m["results"]["f_d1_per_s"].as_f64().unwrap();
    assert!((f / 1.717 - 1.0).abs() < 1e-3, "{f}");
    assert_eq!(m["results"]["isolated_branch"], Value::Bool(true));
    assert_eq!(m["options"]["fd1_pn"].as_f64(), Some(0.70));
    let alpha = m["derived"]["alpha_per_s"]["value"].as_f64().unwrap();
    assert!((alpha + 1.509).abs() < 1e-3, "{alpha}");
    assert_eq!(
        header(dir.path(), "forced-response.csv"),
        "detune_rad_s,branch_id,a1_m,a2_m,u1_sq,u2_sq,stable,residual"
    );
}

#[test]
fn beta_at_zero_detuning() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--delta-hz", "0", "calibrate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path(), "calibrate");
    let beta = m["derived"]["beta_per_s"]["value"].as_f64().unwrap();
    assert!((beta - 2.201).abs() < 1e-12, "{beta}");
    assert_eq!(header(dir.path(), "calibrate.csv"), "quantity,value");
}

#[test]
fn bad_sideband_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--sideband", "middle", "ringdown"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rwa.sideband"));

    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[rwa]\nsideband = \"middle\"\n").unwrap();
    let o = run(dir.path(), &["--config", cfg.to_str().unwrap(), "ringdown"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rwa.sideband"));
    assert!(!dir.path().join("ringdown.csv").exists());
}

#[test]
fn config_file_options_and_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[adiabatic-curve]\npoints = 7\n").unwrap();
    let o = run(dir.path(), &["--config", cfg.to_str().unwrap(), "adiabatic-curve"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("adiabatic-curve.csv")).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert_eq!(text.lines().next().unwrap(), "x,gamma_ad_per_s,phi_dot_rad_s,y,valid");

    std::fs::write(&cfg, "[adiabatic-curve]\npionts = 7\n").unwrap();
    let o = run(dir.path(), &["--config", cfg.to_str().unwrap(), "adiabatic-curve"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pionts"));
}

#[test]
fn invalid_option_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["forced-response", "--sweep-start-hz", "5", "--sweep-stop-hz", "1"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("forced-response.sweep_stop_hz"));
}

#[test]
fn upper_sideband_only_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--sideband", "lower", "self-sustained-sweep"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rwa.sideband"));
}

#[test]
fn unwritable_output_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let o = run(&blocker, &["calibrate"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn output_is_byte_identical_without_timestamp() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--delta-hz", "-35", "force-sweep", "--points", "40"];
    assert!(run(a.path(), &args).status.success());
    assert!(run(b.path(), &args).status.success());
    for f in ["force-sweep.csv", "force-sweep.manifest.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
    assert!(header(a.path(), "force-sweep.csv").starts_with("f_d1_per_s,branch_id"));
}

#[test]
fn remaining_experiment_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&[&str], &str, &str); 4] = [
        (
            &[
                "--delta-hz",
                "-10",
                "self-sustained-sweep",
                "--points",
                "5",
                "--delta-start-hz",
                "-20",
            ],
            "self-sustained-sweep.csv",
            "delta_rad_s,branch,c1_sq,c2_sq,a1_m,a2_m,delta_omega_rad_s,stable",
        ),
        (
            &[
                "--delta-hz",
                "0",
                "--fp-per-s",
                "14.5",
                "basin",
                "--points",
                "3",
                "--horizon-s",
                "2",
            ],
            "basin.csv",
            "a1_initial_m,outcome,final_amplitude_m",
        ),
        (
            &["gamma-peak", "--drives", "2", "--points", "201"],
            "gamma-peak.csv",
            "fd1_pn,f_d1_per_s,branch_id,isolated,a1_max_m,gamma_peak_per_s",
        ),
        (
            &["full-eom-check", "--horizon-ms", "1"],
            "full-eom-check.csv",
            "t_s,full_abs_v1,rwa_abs_v1,relative_deviation",
        ),
    ];
    for (args, file, expected) in cases {
        let o = run(dir.path(), args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(header(dir.path(), file), expected);
    }
}
