use std::path::Path;
use std::process::{Command, Output};

use ofbm_cli::io::read_paths_csv;
use serde_json::Value;

fn ofbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ofbm"))
        .args(args)
        .env("OFBM_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn validate_accepts_mason_xiao_spec() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"D": [[0.7, 0], [0, 0.6]], "A1": [[1, 0], [0, 1]], "A2": [[0, 0], [0, 0]]}"#,
    );
    let out = ofbm(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn validate_rejects_exponent_outside_window() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"D": [[1.2]]}"#);
    assert_eq!(ofbm(&["validate", "--config", &cfg]).status.code(), Some(4));
}

#[test]
fn gamma_prints_pi_for_brownian_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"d": 1, "D": [[0.5]]}"#);
    let out = ofbm(&["gamma", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "3.141593");
}

#[test]
fn parse_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"D": [[0.5]], "typo": 1}"#);
    assert_eq!(ofbm(&["gamma", "--config", &cfg]).status.code(), Some(2));
    let bad = write_config(dir.path(), "bad.json", "{not json");
    assert_eq!(ofbm(&["gamma", "--config", &bad]).status.code(), Some(2));
    assert_eq!(ofbm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ofbm(&["verify", "--levels", "ten"]).status.code(), Some(2));
}

#[test]
fn exact_sampling_of_non_reversible_spec_is_an_invalid_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"D": [[0.7, 0], [0, 0.6]], "A1": [[1, 0], [0, 1]], "A2": [[0, 1], [0, 0]]}"#,
    );
    let out = dir.path().join("o");
    assert_eq!(
        ofbm(&["exact", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .code(),
        Some(4)
    );
}

#[test]
fn singular_gamma_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"D": [[0.7, 0], [0, 0.6]], "gamma": [[1, 2], [2, 1]], "replicates": 10}"#,
    );
    let out = dir.path().join("o");
    assert_eq!(
        ofbm(&["exact", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn sampling_commands_write_parseable_paths() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, json) in [
        ("exact", r#"{"D": [[0.7, 0], [0, 0.6]], "replicates": 20}"#),
        (
            "telegraph",
            r#"{"D": [[0.6]], "levels": [20], "replicates": 20, "quadrature": {"x_max": 8}}"#,
        ),
        ("partial-sums", r#"{"hurst": [0.3], "levels": [64], "replicates": 20}"#),
    ] {
        let cfg = write_config(dir.path(), &format!("{cmd}.json"), json);
        let out = dir.path().join(cmd);
        let o = ofbm(&[cmd, "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "3"]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let paths = read_paths_csv(&out.join("paths.csv")).unwrap();
        assert_eq!(paths.len(), 20);
        assert_eq!(paths[0].grid, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert!(paths.iter().all(|p| p.values[0].iter().all(|&v| v == 0.0)));
    }
}

#[test]
fn replicate_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = ofbm(&[
        "partial-sums",
        "--replicates",
        "7",
        "--levels",
        "32",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_paths_csv(&out.join("paths.csv")).unwrap().len(), 7);
}

#[test]
fn verify_partial_sums_on_default_config_passes_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out_s = out.to_str().unwrap();
    let o = ofbm(&["verify", "--scheme", "partial-sums", "--out", out_s]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["scheme"], "partial-sums");
    assert_eq!(report["levels"].as_array().unwrap().len(), 3);
    for key in ["max_abs_err", "max_se", "max_z", "pass", "level"] {
        assert!(report["levels"][0].get(key).is_some(), "missing {key}");
    }
    for key in ["self_similarity_z", "reversibility_z", "holder_slope", "gaussianity_z"] {
        assert!(report["structural"].get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["config_echo"]["replicates"], 5000);
    assert_eq!(report["tool_version"], env!("CARGO_PKG_VERSION"));

    assert_eq!(
        ofbm(&["partial-sums", "--replicates", "5", "--out", out_s])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(ofbm(&["plot", "--out", out_s]).status.code(), Some(0));
    for svg in ["paths.svg", "convergence.svg"] {
        let text = std::fs::read_to_string(out.join(svg)).unwrap();
        assert!(text.starts_with("<svg") && text.contains("<polyline"), "{svg}");
    }
}

#[test]
fn plot_without_inputs_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty");
    assert_eq!(ofbm(&["plot", "--out", out.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn echoed_config_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = ofbm(&[
        "verify",
        "--scheme",
        "exact",
        "--replicates",
        "300",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(matches!(o.status.code(), Some(0 | 1)));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let echo = serde_json::to_string(&report["config_echo"]).unwrap();
    let cfg = ofbm_cli::RunConfig::from_json(&echo).unwrap();
    assert_eq!(cfg.replicates, Some(300));
    assert_eq!(cfg.scheme, Some(ofbm_cli::Scheme::Exact));
}
