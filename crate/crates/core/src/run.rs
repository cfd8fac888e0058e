//! Command execution: resolves a scenario, runs the solver, writes artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::bloch::{self, FieldPair};
use crate::eigenwell::{self, EigenResult};
use crate::error::{PsrError, Result};
use crate::master::{self, ResidualReport};
use crate::output::{self, Csv, ResidualSummary, RunManifest, RunStatus, UnitsReport};
use crate::profile::{self, SolitonSegment};
use crate::scenario::{Mode, Scenario, ScenarioSet};
use crate::units;

/// Environment variable capping the number of sweep workers.
pub const THREADS_ENV: &str = "PSR_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Units,
    BlochScan,
    Profile,
    Eigen,
    Sweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Units => "units",
            Command::BlochScan => "bloch-scan",
            Command::Profile => "profile",
            Command::Eigen => "eigen",
            Command::Sweep => "sweep",
        }
    }

    fn mode(&self) -> Option<Mode> {
        match self {
            Command::Units => Some(Mode::Units),
            Command::BlochScan => Some(Mode::BlochScan),
            Command::Profile => Some(Mode::Profile),
            Command::Eigen => Some(Mode::Eigen),
            Command::Sweep => None,
        }
    }
}

/// Everything the front end collects from the command line.
#[derive(Debug, Clone)]
pub struct RunRequest {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub scenario: Option<String>,
    pub overrides: Vec<String>,
    pub out: PathBuf,
    /// Worker cap for sweeps; `None` reads `PSR_THREADS`.
    pub threads: Option<usize>,
}

impl RunRequest {
    pub fn new(command: Command, scenario: &str, out: impl Into<PathBuf>) -> Self {
        Self { command, config: None, scenario: Some(scenario.to_string()), overrides: Vec::new(), out: out.into(), threads: None }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub manifest: RunManifest,
    pub out_dir: PathBuf,
    /// Human-readable summary for the terminal.
    pub report: String,
    pub summary: CellSummary,
}

/// Headline numbers of one solve, used in sweep summaries.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CellSummary {
    pub period: Option<f64>,
    pub period_cv: Option<f64>,
    pub max_deta: Option<f64>,
    pub chain: Option<String>,
    pub segments: Vec<SolitonSegment>,
    pub bound_states: Option<usize>,
    pub h_sq: Vec<f64>,
    pub converged: Option<bool>,
}

struct Artifacts {
    files: Vec<String>,
    units: Option<UnitsReport>,
    diagnostics: serde_json::Value,
    residual: Option<ResidualSummary>,
    flags: Vec<String>,
    /// Solver finished but did not meet its own criterion (exit 2).
    unconverged: bool,
    summary: CellSummary,
    report: String,
}

impl Artifacts {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            units: None,
            diagnostics: serde_json::Value::Null,
            residual: None,
            flags: Vec::new(),
            unconverged: false,
            summary: CellSummary::default(),
            report: String::new(),
        }
    }

    fn write(&mut self, dir: &Path, name: &str, contents: &str) -> Result<()> {
        output::write_file(dir, name, contents)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Resolves the request's scenario.
pub fn resolve(req: &RunRequest) -> Result<Scenario> {
    let set = match &req.config {
        Some(p) => ScenarioSet::load(p)?,
        None => ScenarioSet::builtin(),
    };
    let name = match (&req.scenario, req.command) {
        (Some(n), _) => n.clone(),
        (None, Command::Units) => "para-h2".to_string(),
        (None, _) => {
            return Err(PsrError::Config(format!(
                "--scenario is required (available: {})",
                set.names().join(", ")
            )))
        }
    };
    set.resolve(&name, &req.overrides, req.command.mode())
}

/// Runs a request. Configuration errors are returned as `Err`; solver
/// failures produce an outcome with exit code 2 and a failed manifest.
pub fn run(req: &RunRequest) -> Result<RunOutcome> {
    let scenario = resolve(req)?;
    match req.command {
        Command::Sweep => run_sweep(&scenario, &req.out, req.threads),
        c => run_single(&scenario, &req.out, c.name()),
    }
}

/// Executes one resolved scenario into `dir`.
pub fn run_single(scenario: &Scenario, dir: &Path, command: &str) -> Result<RunOutcome> {
    let start = Instant::now();
    std::fs::create_dir_all(dir).map_err(|e| output::io_error(dir, e))?;
    let result = execute(scenario, dir);
    let (art, exit_code, status, error) = match result {
        Ok(a) => {
            let status = if a.unconverged {
                RunStatus::Failed
            } else if a.flags.is_empty() {
                RunStatus::Ok
            } else {
                RunStatus::Flagged
            };
            let code = if a.unconverged { 2 } else { 0 };
            (a, code, status, None)
        }
        Err(e) if e.exit_code() == 1 => return Err(e),
        Err(e @ PsrError::Io { .. }) => return Err(e),
        Err(e) => {
            let mut a = Artifacts::new();
            a.report = format!("solver error: {e}\n");
            (a, 2, RunStatus::Failed, Some(e.to_string()))
        }
    };
    let mut files = art.files;
    files.push("manifest.json".to_string());
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        scenario: scenario.name.clone(),
        mode: scenario.mode.name().to_string(),
        status,
        exit_code,
        error,
        flags: art.flags,
        settings: scenario.settings_json(),
        units: art.units.or_else(|| units_report(scenario).ok()),
        diagnostics: merge_summary(art.diagnostics.clone(), &art.summary),
        residual: art.residual,
        files,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    manifest.write(dir)?;
    Ok(RunOutcome { exit_code, manifest, out_dir: dir.to_path_buf(), report: art.report, summary: art.summary })
}

fn merge_summary(diag: serde_json::Value, summary: &CellSummary) -> serde_json::Value {
    let mut obj = match diag {
        serde_json::Value::Object(m) => m,
        serde_json::Value::Null => serde_json::Map::new(),
        other => {
            let mut m = serde_json::Map::new();
            m.insert("detail".into(), other);
            m
        }
    };
    obj.insert("summary".into(), serde_json::to_value(summary).unwrap_or_default());
    serde_json::Value::Object(obj)
}

fn execute(s: &Scenario, dir: &Path) -> Result<Artifacts> {
    match s.mode {
        Mode::Units => execute_units(s),
        Mode::BlochScan => execute_bloch_scan(s, dir),
        Mode::Profile => execute_profile(s, dir),
        Mode::Eigen => execute_eigen(s, dir),
    }
}

fn units_report(s: &Scenario) -> Result<UnitsReport> {
    let u = units::derive_units(&s.medium)?;
    let from_alpha = units::dimensionless_params(&s.medium)?;
    Ok(UnitsReport::new(&u, &s.params, &from_alpha, s.medium.warnings()))
}

fn execute_units(s: &Scenario) -> Result<Artifacts> {
    let mut a = Artifacts::new();
    let r = units_report(s)?;
    a.flags.extend(r.warnings.iter().cloned());
    a.report = format!(
        "t0 = {:.4e} s\nc t0 = {:.4} mm\nE0^2 = {:.4} TW/mm^2\ngamma_plus = {}, gamma_minus = {} (alpha matrix: {:.4}, {:.4})\ntau1 = {}, tau2 = {}\n",
        r.t0_s,
        r.ct0_mm,
        r.e0_sq_tw_per_mm2,
        r.params.gamma_plus,
        r.params.gamma_minus,
        r.gamma_plus_from_alpha,
        r.gamma_minus_from_alpha,
        r.params.tau1,
        r.params.tau2
    );
    a.diagnostics = json!({ "density_cm3": s.medium.n });
    a.units = Some(r);
    Ok(a)
}

fn execute_bloch_scan(s: &Scenario, dir: &Path) -> Result<Artifacts> {
    let mut a = Artifacts::new();
    let p = &s.params;
    p.validate()?;
    let sc = &s.scan;
    let axis = |max: f64, i: usize| if sc.steps == 1 { max } else { max * i as f64 / (sc.steps - 1) as f64 };
    let mut csv = Csv::new(output::BLOCH_COLUMNS);
    let (mut worst, mut max_norm, mut min_r3, mut max_r3) = (0.0f64, 0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..sc.steps {
        for j in 0..sc.steps {
            let (r, l) = (axis(sc.r_max, i), axis(sc.l_max, j));
            let f = FieldPair::from_complex(Complex64::new(r.sqrt(), 0.0), Complex64::from_polar(l.sqrt(), sc.phase));
            let closed = bloch::steady_state_closed_form(&f, p);
            let exact = bloch::steady_state_matrix(&f, p)?;
            let dev = [(closed.r1, exact.r1), (closed.r2, exact.r2), (closed.r3, exact.r3)]
                .iter()
                .map(|(x, y)| (x - y).abs() / y.abs().max(1e-300).max(x.abs()).max(f64::MIN_POSITIVE))
                .map(|d| if d.is_finite() { d } else { 0.0 })
                .fold(0.0, f64::max);
            worst = worst.max(dev);
            max_norm = max_norm.max(closed.norm_sq());
            min_r3 = min_r3.min(closed.r3);
            max_r3 = max_r3.max(closed.r3);
            csv.numbers(&[r, l, closed.r1, closed.r2, closed.r3, closed.coherence_sq() * (r + l), dev]);
        }
    }
    a.write(dir, "bloch_scan.csv", csv.as_str())?;
    a.diagnostics = json!({
        "points": sc.steps * sc.steps,
        "max_relative_deviation": worst,
        "max_norm_sq": max_norm,
        "min_r3": min_r3,
        "max_r3": max_r3,
    });
    a.report = format!(
        "{} points, closed form vs 3x3 solve max relative deviation {worst:.3e}\nr3 in [{min_r3:.6}, {max_r3:.6}], max |r|^2 = {max_norm:.6}\n",
        sc.steps * sc.steps
    );
    Ok(a)
}

fn execute_profile(s: &Scenario, dir: &Path) -> Result<Artifacts> {
    let mut a = Artifacts::new();
    let pc = &s.profile;
    let grid = profile::integrate_profile(&pc.center, pc.span, &s.params, pc.formulation, &pc.options)?;
    let report = profile::extract_solitons_with(&grid, pc.segment_tol, pc.pairing_fraction);
    let period = profile::detect_period(&grid).ok();
    let offset = profile::maxima_offset(&grid).ok();
    let cons = profile::conserved_quantities(&grid);
    let residual = master::static_residual(&grid, &s.params);

    a.write(dir, "profile.csv", &output::profile_csv(&grid))?;
    a.write(dir, "segments.csv", &output::segments_csv(&report))?;

    let drift = cons.h_drift.max(cons.l_drift);
    if cons.defined && drift > pc.drift_tol {
        a.flags.push(format!("conserved-quantity drift {drift:.3e} exceeds profile.drift_tol = {:e}", pc.drift_tol));
    }
    if let Some(n) = &report.note {
        a.flags.push(format!("segmentation: {n}"));
    }
    match &residual {
        Ok(r) => a.residual = Some(ResidualSummary::from(r)),
        Err(e) => a.flags.push(format!("static residual unavailable: {e}")),
    }
    let max_rl = grid.points.iter().map(|p| (p.r - p.l).abs()).fold(0.0, f64::max);
    a.diagnostics = json!({
        "formulation": pc.formulation.name(),
        "grid": grid.diagnostics,
        "conservation": cons,
        "period": period,
        "maxima_offset": offset,
        "max_abs_r_minus_l": max_rl,
        "max_r": grid.max_r(),
        "residual_detail": residual.as_ref().ok(),
    });
    a.summary = CellSummary {
        period: period.as_ref().map(|p| p.period),
        period_cv: period.as_ref().map(|p| p.cv),
        max_deta: Some(grid.max_deta()),
        chain: Some(report.chain()),
        segments: report.segments.clone(),
        ..CellSummary::default()
    };
    let mut text = format!(
        "{} samples on [{}, {}] ({} formulation), {} accepted steps\n",
        grid.len(),
        pc.span.0,
        pc.span.1,
        pc.formulation.name(),
        grid.diagnostics.accepted_steps
    );
    if let Some(p) = &period {
        text.push_str(&format!("period {:.6} (cv {:.2e})\n", p.period, p.cv));
    }
    text.push_str(&format!("max deta/dxi {:.6e}\nchain {}\n", grid.max_deta(), report.chain()));
    text.push_str(&output::segment_table(&report));
    a.report = text;
    Ok(a)
}

fn execute_eigen(s: &Scenario, dir: &Path) -> Result<Artifacts> {
    let mut a = Artifacts::new();
    let ec = &s.eigen;
    let well = s.well();
    well.validate()?;
    a.flags.extend(well.warnings());
    let pot = eigenwell::r3_ansatz(&well);
    let levels = eigenwell::solve_linear_bound_states(&pot, &s.params, ec.max_levels)?;
    let square = if ec.delta > 0.0 { eigenwell::square_well_estimates(&s.params, ec.delta).ok() } else { None };
    let wkb = eigenwell::wkb_levels(&pot);
    let tails: Vec<_> = levels.iter().map(|l| l.tail_slope(&s.params)).collect();

    let linear_name = if ec.selfconsistent { "linear_levels.csv" } else { "levels.csv" };
    a.write(dir, linear_name, &output::levels_csv(&levels))?;
    for l in &levels {
        a.write(dir, &format!("level_{:02}.csv", l.level), &output::eigen_csv(l))?;
    }

    let mut text = format!("{} bound state(s) for Delta = {}, d = {}\n", levels.len(), ec.delta, ec.d);
    for l in &levels {
        text.push_str(&format!("  k = {:2}  h^2 = {:.10}  nodes = {}\n", l.level, l.h_sq, l.nodes));
    }
    let mut scf_info = serde_json::Value::Null;
    let mut converged = None;
    if ec.selfconsistent {
        let r = eigenwell::selfconsistent_iterate(&well, &ec.hl, &ec.iteration)?;
        a.write(dir, "levels.csv", &output::levels_csv(std::slice::from_ref(&r)))?;
        a.write(dir, "selfconsistent.csv", &output::eigen_csv(&r))?;
        let mut it = Csv::new(&["iteration", "change"]);
        for (i, c) in r.iterations.iter().enumerate() {
            it.row(&[(i + 1).to_string(), output::num(*c)]);
        }
        a.write(dir, "iterations.csv", it.as_str())?;
        let residual = scf_residual(&r, &s.params);
        match &residual {
            Ok(res) => a.residual = Some(ResidualSummary::from(res)),
            Err(e) => a.flags.push(format!("static residual unavailable: {e}")),
        }
        if !r.converged {
            a.flags.push(format!(
                "self-consistent iteration did not converge in {} iterations (last change {:.3e})",
                r.iterations.len(),
                r.iterations.last().copied().unwrap_or(f64::NAN)
            ));
            a.unconverged = true;
        }
        let mid = r.r3.len() / 2;
        text.push_str(&format!(
            "self-consistent level {}: h^2 = {:.10}, converged = {} after {} iterations, r3(0) = {:.6}\n",
            r.level,
            r.h_sq,
            r.converged,
            r.iterations.len(),
            r.r3[mid]
        ));
        scf_info = json!({
            "level": r.level,
            "h_sq": r.h_sq,
            "h_sq_components": r.h_sq_components,
            "nodes": r.nodes,
            "converged": r.converged,
            "iterations": r.iterations.len(),
            "final_change": r.iterations.last(),
            "fixed_point_residual": r.fixed_point_residual,
            "damping": r.damping,
            "i_peak": r.i_peak,
            "center_r3": r.r3[mid],
            "edge_r3": [r.r3[0], r.r3[r.r3.len() - 1]],
            "residual_detail": residual.as_ref().ok(),
        });
        converged = Some(r.converged);
    }
    a.diagnostics = json!({
        "bound_states": levels.len(),
        "h_sq": levels.iter().map(|l| l.h_sq).collect::<Vec<_>>(),
        "nodes": levels.iter().map(|l| l.nodes).collect::<Vec<_>>(),
        "window": pot.window(),
        "tail_slopes": tails,
        "square_well": square,
        "wkb_levels": wkb,
        "selfconsistent": scf_info,
    });
    a.summary = CellSummary {
        bound_states: Some(levels.len()),
        h_sq: levels.iter().map(|l| l.h_sq).collect(),
        converged,
        ..CellSummary::default()
    };
    a.report = text;
    Ok(a)
}

fn scf_residual(r: &EigenResult, params: &units::DimensionlessParams) -> Result<ResidualReport> {
    let (er, el) = r.fields();
    master::static_residual_fields(&r.xi, &er, &el, params)
}

/// Worker count: explicit cap, else `PSR_THREADS`, else rayon's default.
pub fn worker_count(explicit: Option<usize>) -> Result<usize> {
    if let Some(n) = explicit {
        return Ok(n.max(1));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| PsrError::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// Result of one sweep cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellRecord {
    pub index: usize,
    pub values: Vec<(String, f64)>,
    pub dir: String,
    pub exit_code: i32,
    pub status: RunStatus,
    pub error: Option<String>,
    pub summary: CellSummary,
}

/// Runs every cell of the scenario's sweep on a bounded pool.
pub fn run_sweep(scenario: &Scenario, out: &Path, threads: Option<usize>) -> Result<RunOutcome> {
    let start = Instant::now();
    let workers = worker_count(threads)?;
    let cells = scenario.sweep_cells();
    std::fs::create_dir_all(out).map_err(|e| output::io_error(out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PsrError::Config(format!("cannot start {workers} workers: {e}")))?;
    let records: Vec<CellRecord> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, values)| run_cell(scenario, out, i, values))
            .collect()
    });

    let axes: Vec<&str> = scenario.sweep.iter().map(|a| a.key.as_str()).collect();
    let mut header = vec!["cell"];
    header.extend(&axes);
    header.extend(["status", "period", "period_cv", "max_deta", "segments", "chain", "bound_states", "h_sq_1", "converged"]);
    let mut table = Csv::new(&header);
    let mut seg_table = Csv::new(&["cell", "segment", "tag", "xi_start", "xi_end", "eta"]);
    let opt = |x: Option<f64>| x.map(output::num).unwrap_or_default();
    for r in &records {
        let mut row = vec![r.index.to_string()];
        row.extend(r.values.iter().map(|(_, v)| output::num(*v)));
        let s = &r.summary;
        row.push(format!("{:?}", r.status).to_lowercase());
        row.push(opt(s.period));
        row.push(opt(s.period_cv));
        row.push(opt(s.max_deta));
        row.push(if s.chain.is_some() { s.segments.len().to_string() } else { String::new() });
        row.push(s.chain.clone().unwrap_or_default());
        row.push(s.bound_states.map(|n| n.to_string()).unwrap_or_default());
        row.push(opt(s.h_sq.first().copied()));
        row.push(s.converged.map(|c| c.to_string()).unwrap_or_default());
        table.row(&row);
        for (j, seg) in s.segments.iter().enumerate() {
            seg_table.row(&[
                r.index.to_string(),
                (j + 1).to_string(),
                seg.tag.letter().to_string(),
                output::num(seg.xi_start),
                output::num(seg.xi_end),
                output::num(seg.eta),
            ]);
        }
    }
    output::write_file(out, "sweep.csv", table.as_str())?;
    output::write_file(out, "sweep_segments.csv", seg_table.as_str())?;

    let failed = records.iter().filter(|r| r.exit_code != 0).count();
    let exit_code = if !records.is_empty() && failed == records.len() { 2 } else { 0 };
    let status = match (failed, exit_code) {
        (0, _) => RunStatus::Ok,
        (_, 2) => RunStatus::Failed,
        _ => RunStatus::Flagged,
    };
    let mut flags = Vec::new();
    if failed > 0 {
        flags.push(format!("{failed} of {} cells failed", records.len()));
    }
    let mut files = vec!["sweep.csv".to_string(), "sweep_segments.csv".to_string()];
    files.extend(records.iter().map(|r| format!("{}/manifest.json", r.dir)));
    files.push("manifest.json".to_string());
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: "sweep".into(),
        scenario: scenario.name.clone(),
        mode: scenario.mode.name().to_string(),
        status,
        exit_code,
        error: None,
        flags,
        settings: scenario.settings_json(),
        units: units_report(scenario).ok(),
        diagnostics: json!({ "workers": workers, "cells": records }),
        residual: None,
        files,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    manifest.write(out)?;
    let mut report = format!("{} cell(s), {failed} failed, {workers} worker(s)\n", records.len());
    for r in &records {
        let vals: Vec<String> = r.values.iter().map(|(k, v)| format!("{k}={v}")).collect();
        report.push_str(&format!("  cell {:4} [{}] {:?}", r.index, vals.join(" "), r.status));
        if let Some(e) = &r.error {
            report.push_str(&format!(": {e}"));
        }
        report.push('\n');
    }
    Ok(RunOutcome { exit_code, manifest, out_dir: out.to_path_buf(), report, summary: CellSummary::default() })
}

fn run_cell(scenario: &Scenario, out: &Path, index: usize, values: &[(String, f64)]) -> CellRecord {
    let name = format!("cell_{index:04}");
    let dir = out.join(&name);
    let failed = |error: String| CellRecord {
        index,
        values: values.to_vec(),
        dir: name.clone(),
        exit_code: 2,
        status: RunStatus::Failed,
        error: Some(error),
        summary: CellSummary::default(),
    };
    let cell = match scenario.cell(values) {
        Ok(c) => c,
        Err(e) => return failed(e.to_string()),
    };
    match run_single(&cell, &dir, "sweep") {
        Ok(o) => CellRecord {
            index,
            values: values.to_vec(),
            dir: name,
            exit_code: o.exit_code,
            status: o.manifest.status,
            error: o.manifest.error.clone().or_else(|| if o.exit_code != 0 { o.manifest.flags.first().cloned() } else { None }),
            summary: o.summary,
        },
        Err(e) => failed(e.to_string()),
    }
}
