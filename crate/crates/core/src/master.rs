//! Time-dependent master equations at the midpoint frequency, used as a
//! residual functional to certify static solutions.
//!
//! ```text
//! d_t r_T = -2i gamma_minus (|e_R|^2 + |e_L|^2) r_T + 4i (e_R e_L)* r3 - r_T / tau2
//! d_t r3  = -4 Im(e_R e_L r_T) - (r3 + 1) / tau1
//! (d_t^2 - d_xi^2) e_a = (1/2) [(gamma_plus + gamma_minus r3) e_a + r_T* e_b*]
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::{self, FieldPair};
use crate::error::{PsrError, Result};
use crate::profile::ProfileGrid;
use crate::units::DimensionlessParams;

/// Order of the central-difference stencil for `d_xi^2`.
pub const STENCIL_ORDER: usize = 4;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Medium and field variables on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterState {
    pub xi: Vec<f64>,
    pub e_r: Vec<Complex64>,
    pub e_l: Vec<Complex64>,
    pub r_t: Vec<Complex64>,
    pub r3: Vec<f64>,
    /// `d_t^2 e_R`; zero when `None`.
    pub d2t_e_r: Option<Vec<Complex64>>,
    /// `d_t^2 e_L`; zero when `None`.
    pub d2t_e_l: Option<Vec<Complex64>>,
}

impl MasterState {
    /// Static state with the medium in its steady state for the given fields.
    pub fn steady(xi: Vec<f64>, e_r: Vec<Complex64>, e_l: Vec<Complex64>, params: &DimensionlessParams) -> Self {
        let (r_t, r3) = e_r
            .iter()
            .zip(&e_l)
            .map(|(a, b)| {
                let bv = bloch::steady_state_closed_form(&FieldPair::from_complex(*a, *b), params);
                (bv.r_t(), bv.r3)
            })
            .unzip();
        Self { xi, e_r, e_l, r_t, r3, d2t_e_r: None, d2t_e_l: None }
    }

    /// Static state from a sampled profile.
    pub fn from_grid(grid: &ProfileGrid) -> Self {
        let xi = grid.points.iter().map(|p| p.xi).collect();
        let e_r = grid.points.iter().map(|p| Complex64::new(p.state.e[0], p.state.e[1])).collect();
        let e_l = grid.points.iter().map(|p| Complex64::new(p.state.e[2], p.state.e[3])).collect();
        let r_t = grid.points.iter().map(|p| p.bloch.r_t()).collect();
        let r3 = grid.points.iter().map(|p| p.bloch.r3).collect();
        Self { xi, e_r, e_l, r_t, r3, d2t_e_r: None, d2t_e_l: None }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    fn spacing(&self) -> Result<f64> {
        let n = self.xi.len();
        for (name, len) in [("e_R", self.e_r.len()), ("e_L", self.e_l.len()), ("r_T", self.r_t.len()), ("r3", self.r3.len())] {
            if len != n {
                return Err(PsrError::Resolution(format!("{name} has {len} samples, grid has {n}")));
            }
        }
        if n < 2 * (STENCIL_ORDER / 2) + 1 {
            return Err(PsrError::Resolution(format!(
                "{n} grid points; the order-{STENCIL_ORDER} stencil needs at least {}",
                STENCIL_ORDER + 1
            )));
        }
        let dx = (self.xi[n - 1] - self.xi[0]) / (n - 1) as f64;
        if !(dx > 0.0) {
            return Err(PsrError::Resolution("grid must be strictly increasing".into()));
        }
        for (i, w) in self.xi.windows(2).enumerate() {
            if ((w[1] - w[0]) - dx).abs() > 1e-6 * dx {
                return Err(PsrError::Resolution(format!("non-uniform spacing at index {i} (xi = {})", w[0])));
            }
        }
        Ok(dx)
    }
}

/// Time derivatives of the medium and field-equation residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterDerivatives {
    pub dt_r_t: Vec<Complex64>,
    pub dt_r3: Vec<f64>,
    /// Field residuals; defined on `interior` only (zero elsewhere).
    pub field_res_r: Vec<Complex64>,
    pub field_res_l: Vec<Complex64>,
    pub interior: std::ops::Range<usize>,
}

/// Fourth-order central second derivative at interior index `i`.
fn d2(f: &[Complex64], i: usize, dx: f64) -> Complex64 {
    (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]) / (12.0 * dx * dx)
}

/// Evaluates the master equations on the grid.
pub fn master_rhs(state: &MasterState, params: &DimensionlessParams) -> Result<MasterDerivatives> {
    let dx = state.spacing()?;
    let n = state.len();
    let (gp, gm) = (params.gamma_plus, params.gamma_minus);
    let mut dt_r_t = Vec::with_capacity(n);
    let mut dt_r3 = Vec::with_capacity(n);
    for i in 0..n {
        let (er, el, rt, r3) = (state.e_r[i], state.e_l[i], state.r_t[i], state.r3[i]);
        let s = er.norm_sqr() + el.norm_sqr();
        let z = er * el;
        dt_r_t.push(-2.0 * I * gm * s * rt + 4.0 * I * z.conj() * r3 - rt / params.tau2);
        dt_r3.push(-4.0 * (z * rt).im - (r3 + 1.0) / params.tau1);
    }
    let half = STENCIL_ORDER / 2;
    let interior = half..n - half;
    let zero = Complex64::new(0.0, 0.0);
    let mut res_r = vec![zero; n];
    let mut res_l = vec![zero; n];
    for i in interior.clone() {
        let (er, el, rt, r3) = (state.e_r[i], state.e_l[i], state.r_t[i], state.r3[i]);
        let g = gp + gm * r3;
        let tr = state.d2t_e_r.as_ref().map_or(zero, |v| v[i]);
        let tl = state.d2t_e_l.as_ref().map_or(zero, |v| v[i]);
        res_r[i] = tr - d2(&state.e_r, i, dx) - 0.5 * (g * er + rt.conj() * el.conj());
        res_l[i] = tl - d2(&state.e_l, i, dx) - 0.5 * (g * el + rt.conj() * er.conj());
    }
    Ok(MasterDerivatives { dt_r_t, dt_r3, field_res_r: res_r, field_res_l: res_l, interior })
}

/// Residual norms of the static master equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Interior RMS over all four equations, relative to `gamma_plus max|e| / 2`.
    pub rms_residual: f64,
    /// Interior maximum over all four equations, same normalization.
    pub max_residual: f64,
    /// RMS of the two field equations alone, same normalization.
    pub field_rms: f64,
    /// Largest absolute medium residual (`d_t r_T`, `d_t r3`).
    pub medium_max: f64,
    pub grid_points: usize,
    pub stencil_order: usize,
    pub scale: f64,
}

/// Residuals of a state with all time derivatives set to zero.
pub fn state_residual(state: &MasterState, params: &DimensionlessParams) -> Result<ResidualReport> {
    let d = master_rhs(state, params)?;
    let max_e = state.e_r.iter().chain(&state.e_l).map(|z| z.norm()).fold(0.0, f64::max);
    let scale = 0.5 * params.gamma_plus * max_e;
    let mut sum = 0.0;
    let mut field_sum = 0.0;
    let mut max: f64 = 0.0;
    let mut medium_max: f64 = 0.0;
    for i in d.interior.clone() {
        let terms = [d.field_res_r[i].norm(), d.field_res_l[i].norm(), d.dt_r_t[i].norm(), d.dt_r3[i].abs()];
        for t in terms {
            sum += t * t;
            max = max.max(t);
        }
        field_sum += terms[0] * terms[0] + terms[1] * terms[1];
        medium_max = medium_max.max(terms[2]).max(terms[3]);
    }
    let count = d.interior.len() as f64;
    let norm = |x: f64| if scale > 0.0 { x / scale } else { x };
    Ok(ResidualReport {
        rms_residual: norm((sum / (4.0 * count)).sqrt()),
        max_residual: norm(max),
        field_rms: norm((field_sum / (2.0 * count)).sqrt()),
        medium_max,
        grid_points: state.len(),
        stencil_order: STENCIL_ORDER,
        scale,
    })
}

/// Certifies a sampled profile: static residual of all four master equations.
pub fn static_residual(grid: &ProfileGrid, params: &DimensionlessParams) -> Result<ResidualReport> {
    state_residual(&MasterState::from_grid(grid), params)
}

/// Certifies explicit field samples with the medium in its steady state.
pub fn static_residual_fields(
    xi: &[f64],
    e_r: &[Complex64],
    e_l: &[Complex64],
    params: &DimensionlessParams,
) -> Result<ResidualReport> {
    state_residual(&MasterState::steady(xi.to_vec(), e_r.to_vec(), e_l.to_vec(), params), params)
}
