use std::path::Path;
use std::process::{Command, Output};

fn psr(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psr"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("PSR_THREADS")
        .output()
        .expect("psr binary runs")
}

fn manifest(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).expect("manifest written");
    serde_json::from_str(&text).expect("manifest is JSON")
}

#[test]
fn fig1_profile_writes_csv_and_segments() {
    let tmp = tempfile::tempdir().unwrap();
    let out = psr(&["profile", "--scenario", "fig1"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("profile.csv")).unwrap();
    assert!(csv.starts_with("xi,R,L,r1,r2,r3,deta,W_invariant_h,invariant_l\n"));
    assert_eq!(csv.lines().count(), 4002);
    assert!(csv.ends_with('\n'));
    let seg = std::fs::read_to_string(tmp.path().join("segments.csv")).unwrap();
    let tags: Vec<&str> = seg.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert!(tags.len() > 10);
    assert!(tags.windows(2).all(|w| (w[0] == "E" && w[1] == "A") || (w[0] == "A" && w[1] == "E")));
    let m = manifest(tmp.path());
    assert_eq!(m["status"], "ok");
    assert_eq!(m["residual"]["stencil_order"], 4);
    assert!(m["files"].as_array().unwrap().iter().any(|f| f == "profile.csv"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("chain A-E-A-E"), "{stdout}");
}

#[test]
fn units_preset_reports_scale_length() {
    let tmp = tempfile::tempdir().unwrap();
    let out = psr(&["units", "--preset", "para-h2", "--n", "1e21"], tmp.path());
    assert!(out.status.success());
    let m = manifest(tmp.path());
    let ct0 = m["units"]["ct0_mm"].as_f64().unwrap();
    assert!((ct0 - 0.03).abs() < 0.0045, "ct0 = {ct0}");
    assert_eq!(m["units"]["params"]["gamma_minus"], 0.64);
    let from_alpha = m["units"]["gamma_minus_from_alpha"].as_f64().unwrap();
    assert!((from_alpha - 0.7246).abs() < 1e-4);
}

#[test]
fn density_flag_rescales_units() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(psr(&["units", "--n", "1e21"], &a).status.success());
    assert!(psr(&["units", "--n", "4e21"], &b).status.success());
    let (ma, mb) = (manifest(&a), manifest(&b));
    let ratio = ma["units"]["t0_s"].as_f64().unwrap() / mb["units"]["t0_s"].as_f64().unwrap();
    assert!((ratio - 2.0).abs() < 1e-12);
}

#[test]
fn invalid_override_exits_one_naming_key() {
    let tmp = tempfile::tempdir().unwrap();
    let out = psr(&["profile", "--scenario", "fig1", "--override", "tau2=-1"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau2"));
    assert!(!tmp.path().join("profile.csv").exists());
}

#[test]
fn unknown_scenario_and_key_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = psr(&["profile", "--scenario", "nope"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
    let out = psr(&["profile", "--scenario", "fig1", "--override", "boundary.R1=2"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("boundary.R1"));
    let out = psr(&["eigen", "--scenario", "fig1"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn singular_boundary_exits_two_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let out = psr(&["profile", "--scenario", "fig1", "--override", "formulation=flux", "--override", "R0=0"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("xi = 0"));
    let m = manifest(tmp.path());
    assert_eq!(m["status"], "failed");
    assert_eq!(m["exit_code"], 2);
}

#[test]
fn unconverged_iteration_exits_two_but_writes_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = psr(&["eigen", "--scenario", "condensate", "--override", "max_iter=4"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let levels = std::fs::read_to_string(tmp.path().join("levels.csv")).unwrap();
    assert!(levels.starts_with("k,h_sq,nodes,converged\n"));
    assert!(levels.lines().nth(1).unwrap().ends_with(",false"));
    assert_eq!(manifest(tmp.path())["status"], "failed");
}

#[test]
fn eigen_writes_levels_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = psr(&["eigen", "--scenario", "well"], tmp.path());
    assert!(out.status.success());
    let levels = std::fs::read_to_string(tmp.path().join("levels.csv")).unwrap();
    let rows: Vec<&str> = levels.lines().collect();
    assert_eq!(rows[0], "k,h_sq,nodes,converged");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("1,7.44"));
    let level = std::fs::read_to_string(tmp.path().join("level_02.csv")).unwrap();
    assert!(level.starts_with("xi,psi_R,psi_L,r3,W\n"));
}

#[test]
fn config_file_scenario_with_base_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[scenario.short]\nbase = \"fig3\"\nprofile.span = [-5.0, 5.0]\nprofile.samples = 101\n",
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let out = psr(
        &["profile", "--config", cfg.to_str().unwrap(), "--scenario", "short", "--override", "samples=51"],
        &out_dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("profile.csv")).unwrap();
    assert_eq!(csv.lines().count(), 52);
    assert!(csv.lines().nth(1).unwrap().starts_with("-5.0,"));
    let m = manifest(&out_dir);
    assert_eq!(m["settings"]["boundary.h"], -1.8);
    assert_eq!(m["settings"]["profile.samples"], 51);
}

#[test]
fn malformed_config_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[scenario.x]\nmode = \"profile\"\nwell.Delta = \"wide\"\n").unwrap();
    let out = psr(&["profile", "--config", cfg.to_str().unwrap(), "--scenario", "x"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("well.Delta"));
}

#[test]
fn sweep_respects_thread_variable() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_psr"))
        .args(["sweep", "--scenario", "well-size", "--out"])
        .arg(tmp.path())
        .env("PSR_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    let m = manifest(tmp.path());
    assert_eq!(m["diagnostics"]["workers"], 2);
    let bad = Command::new(env!("CARGO_BIN_EXE_psr"))
        .args(["sweep", "--scenario", "well-size", "--out"])
        .arg(tmp.path())
        .env("PSR_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("PSR_THREADS"));
}

#[test]
fn bloch_scan_writes_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = psr(&["bloch-scan", "--scenario", "bloch", "--override", "scan.steps=5"], tmp.path());
    assert!(out.status.success());
    let csv = std::fs::read_to_string(tmp.path().join("bloch_scan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 26);
    let m = manifest(tmp.path());
    assert!(m["diagnostics"]["max_relative_deviation"].as_f64().unwrap() < 1e-12);
}
