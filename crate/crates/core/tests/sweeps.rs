use std::path::Path;

use psr::run::{self, Command, RunRequest};

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
}

#[test]
fn bound_state_count_grows_with_well_size() {
    let tmp = tempfile::tempdir().unwrap();
    let mut req = RunRequest::new(Command::Sweep, "well-size", tmp.path());
    req.threads = Some(2);
    let o = run::run(&req).unwrap();
    assert_eq!(o.exit_code, 0);
    let counts: Vec<usize> = column(&read(tmp.path(), "sweep.csv"), "bound_states").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(counts.len(), 4);
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    assert!(counts[3] > counts[0]);
}

#[test]
fn single_cell_sweep_matches_direct_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("one.toml");
    std::fs::write(&cfg, "[scenario.one]\nbase = \"fig3\"\nsweep.axes = [{ key = \"tau2\", values = [10.0] }]\n").unwrap();
    let mut sweep = RunRequest::new(Command::Sweep, "one", tmp.path().join("sweep"));
    sweep.config = Some(cfg);
    assert_eq!(run::run(&sweep).unwrap().exit_code, 0);
    let direct = tmp.path().join("direct");
    assert_eq!(run::run(&RunRequest::new(Command::Profile, "fig3", &direct)).unwrap().exit_code, 0);
    for f in ["profile.csv", "segments.csv"] {
        assert_eq!(read(&tmp.path().join("sweep/cell_0000"), f), read(&direct, f), "{f}");
    }
}

#[test]
fn activity_grows_with_coherence_time() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run::run(&RunRequest::new(Command::Sweep, "coherence", tmp.path())).unwrap();
    assert_eq!(o.exit_code, 0);
    let peaks: Vec<f64> = column(&read(tmp.path(), "sweep.csv"), "max_deta").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(peaks.len(), 3);
    assert!(peaks[0] < peaks[1] && peaks[1] < peaks[2], "{peaks:?}");
    let segs = read(tmp.path(), "sweep_segments.csv");
    assert!(segs.starts_with("cell,segment,tag,xi_start,xi_end,eta\n"));
    assert!(segs.lines().count() > 3);
}

#[test]
fn failing_cells_are_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("mixed.toml");
    // R0 = 0 makes the flux form singular at the centre; R0 = 1e-4 is regular
    std::fs::write(
        &cfg,
        "[scenario.mixed]\nbase = \"fig1\"\nprofile.formulation = \"flux\"\nprofile.span = [0.0, 2.0]\nsweep.axes = [{ key = \"R0\", values = [0.0, 1e-4] }]\n",
    )
    .unwrap();
    let mut req = RunRequest::new(Command::Sweep, "mixed", tmp.path().join("out"));
    req.config = Some(cfg.clone());
    let o = run::run(&req).unwrap();
    assert_eq!(o.exit_code, 0);
    let status = column(&read(&tmp.path().join("out"), "sweep.csv"), "status");
    assert_eq!(status, ["failed", "ok"]);

    std::fs::write(
        &cfg,
        "[scenario.mixed]\nbase = \"fig1\"\nprofile.formulation = \"flux\"\nsweep.axes = [{ key = \"R0\", values = [0.0] }, { key = \"L0\", values = [0.0, 1.0] }]\n",
    )
    .unwrap();
    let o = run::run(&req).unwrap();
    assert_eq!(o.exit_code, 2);
}

#[test]
fn oversized_sweep_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut req = RunRequest::new(Command::Sweep, "well-size", tmp.path());
    req.overrides = vec!["sweep.max_cells=3".into()];
    let e = run::run(&req).unwrap_err();
    assert_eq!(e.exit_code(), 1);
    assert!(e.to_string().contains("sweep.max_cells"));
}
