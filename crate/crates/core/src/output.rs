//! CSV and JSON artifacts.
//!
//! Numbers are written in the shortest decimal form that reads back to the
//! same `f64`, so identical runs give byte-identical files. Every file has a
//! header line and ends with a newline.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::eigenwell::EigenResult;
use crate::error::{PsrError, Result};
use crate::master::ResidualReport;
use crate::profile::{ProfileGrid, SolitonReport};
use crate::units::{DerivedUnits, DimensionlessParams};

pub const PROFILE_COLUMNS: &[&str] = &["xi", "R", "L", "r1", "r2", "r3", "deta", "W_invariant_h", "invariant_l"];
pub const SEGMENT_COLUMNS: &[&str] = &["index", "xi_start", "xi_end", "tag", "eta", "delta_R", "delta_L"];
pub const EIGEN_COLUMNS: &[&str] = &["xi", "psi_R", "psi_L", "r3", "W"];
pub const LEVEL_COLUMNS: &[&str] = &["k", "h_sq", "nodes", "converged"];
pub const BLOCH_COLUMNS: &[&str] = &["R", "L", "r1", "r2", "r3", "deta", "matrix_deviation"];

/// Shortest round-trip representation of `x`.
pub fn num(x: f64) -> String {
    ryu::Buffer::new().format(x).to_string()
}

/// Builds a CSV document row by row.
#[derive(Debug, Clone)]
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text, columns: header.len() }
    }

    /// Appends a row of preformatted cells.
    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        debug_assert_eq!(cells.len(), self.columns, "row width must match the header");
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            self.text.push_str(c.as_ref());
        }
        self.text.push('\n');
    }

    /// Appends a row of numbers.
    pub fn numbers(&mut self, values: &[f64]) {
        let mut buf = ryu::Buffer::new();
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            self.text.push_str(buf.format(*v));
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Profile samples with columns [`PROFILE_COLUMNS`].
pub fn profile_csv(grid: &ProfileGrid) -> String {
    let mut csv = Csv::new(PROFILE_COLUMNS);
    for p in &grid.points {
        csv.numbers(&[p.xi, p.r, p.l, p.bloch.r1, p.bloch.r2, p.bloch.r3, p.deta, p.h_local, p.l_local]);
    }
    csv.into_string()
}

/// Soliton segment table.
pub fn segments_csv(report: &SolitonReport) -> String {
    let mut csv = Csv::new(SEGMENT_COLUMNS);
    for (i, s) in report.segments.iter().enumerate() {
        csv.row(&[
            (i + 1).to_string(),
            num(s.xi_start),
            num(s.xi_end),
            s.tag.letter().to_string(),
            num(s.eta),
            num(s.delta_r),
            num(s.delta_l),
        ]);
    }
    csv.into_string()
}

/// Fields, population difference and potential of one level.
pub fn eigen_csv(result: &EigenResult) -> String {
    let mut csv = Csv::new(EIGEN_COLUMNS);
    for i in 0..result.xi.len() {
        csv.numbers(&[result.xi[i], result.psi_r[i], result.psi_l[i], result.r3[i], result.w[i]]);
    }
    csv.into_string()
}

/// One row per level: `k,h_sq,nodes,converged`.
pub fn levels_csv(levels: &[EigenResult]) -> String {
    let mut csv = Csv::new(LEVEL_COLUMNS);
    for r in levels {
        csv.row(&[r.level.to_string(), num(r.h_sq), r.nodes.to_string(), r.converged.to_string()]);
    }
    csv.into_string()
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
    Ok(path)
}

pub fn io_error(path: &Path, e: std::io::Error) -> PsrError {
    PsrError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Scale units as reported in manifests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitsReport {
    pub t0_s: f64,
    pub ct0_m: f64,
    pub ct0_mm: f64,
    pub e0_sq_w_per_m2: f64,
    pub e0_sq_tw_per_mm2: f64,
    pub params: DimensionlessParams,
    /// Ratios computed directly from the polarizability matrix.
    pub gamma_plus_from_alpha: f64,
    pub gamma_minus_from_alpha: f64,
    pub warnings: Vec<String>,
}

impl UnitsReport {
    pub fn new(u: &DerivedUnits, params: &DimensionlessParams, from_alpha: &DimensionlessParams, warnings: Vec<String>) -> Self {
        Self {
            t0_s: u.t0,
            ct0_m: u.l0,
            ct0_mm: u.ct0_mm(),
            e0_sq_w_per_m2: u.e0_sq,
            e0_sq_tw_per_mm2: u.e0_sq_tw_per_mm2(),
            params: *params,
            gamma_plus_from_alpha: from_alpha.gamma_plus,
            gamma_minus_from_alpha: from_alpha.gamma_minus,
            warnings,
        }
    }
}

/// Residual block of a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualSummary {
    pub rms_residual: f64,
    pub max_residual: f64,
    pub grid_points: usize,
    pub stencil_order: usize,
}

impl From<&ResidualReport> for ResidualSummary {
    fn from(r: &ResidualReport) -> Self {
        Self { rms_residual: r.rms_residual, max_residual: r.max_residual, grid_points: r.grid_points, stencil_order: r.stencil_order }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Flagged,
    Failed,
}

/// Record of one run, written as `manifest.json` next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub scenario: String,
    pub mode: String,
    pub status: RunStatus,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub flags: Vec<String>,
    /// Layered settings the scenario was resolved from.
    pub settings: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub units: Option<UnitsReport>,
    pub diagnostics: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<ResidualSummary>,
    pub files: Vec<String>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        write_file(dir, "manifest.json", &self.to_json())
    }
}

/// Plain-text listing of segments for terminal output.
pub fn segment_table(report: &SolitonReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>4} {:>12} {:>12} {:>3} {:>14}", "#", "xi_start", "xi_end", "tag", "eta");
    for (i, seg) in report.segments.iter().enumerate() {
        let _ = writeln!(s, "{:>4} {:>12.5} {:>12.5} {:>3} {:>14.6e}", i + 1, seg.xi_start, seg.xi_end, seg.tag.letter(), seg.eta);
    }
    if let Some(n) = &report.note {
        let _ = writeln!(s, "note: {n}");
    }
    s
}
