//! Finite targets: bound states of the population-difference potential well
//! and the self-consistent nonlinear eigenvalue iteration.
//!
//! With `psi = sqrt(R)` the static equation at `l = 0` becomes the linear
//! problem `-psi'' + (W/2) psi = 0`, `W = 2h^2 - (gamma_plus + gamma_minus r3)`,
//! with `h^2` as the eigenvalue. Levels are bound for
//! `(gamma_plus - gamma_minus)/2 < h^2 < gamma_plus/2`; the ground state has
//! the largest `h^2` and every further node lowers it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch;
use crate::error::{PsrError, Result};
use crate::profile::{ConservedPair, INTENSITY_FLOOR};
use crate::units::DimensionlessParams;

/// Grid points of the eigenvalue problem.
pub const GRID_POINTS: usize = 10_001;

/// Default peak intensity of self-consistent iterations.
pub const DEFAULT_I_PEAK: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellSpec {
    /// Plateau width.
    pub delta: f64,
    /// Width of the transition regions.
    pub d: f64,
    pub params: DimensionlessParams,
}

impl WellSpec {
    pub fn new(delta: f64, d: f64, params: DimensionlessParams) -> Self {
        Self { delta, d, params }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(PsrError::InvalidSpec(format!("well.Delta must be non-negative, got {}", self.delta)));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(PsrError::InvalidSpec(format!("well.d must be positive, got {}", self.d)));
        }
        self.params.validate()
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.d >= self.delta / 10.0 {
            w.push(format!(
                "transition width d = {} is not small against the plateau width Delta = {}",
                self.d, self.delta
            ));
        }
        w
    }

    /// Half-length `Delta + 20 d + 10` of the computational box.
    pub fn half_width(&self) -> f64 {
        self.delta + 20.0 * self.d + 10.0
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.half_width(), GRID_POINTS)
    }
}

fn uniform_grid(x: f64, n: usize) -> Vec<f64> {
    let dx = 2.0 * x / (n - 1) as f64;
    (0..n).map(|i| if i == n - 1 { x } else { -x + dx * i as f64 }).collect()
}

/// Population difference along the target and the potential it generates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialProfile {
    pub xi: Vec<f64>,
    pub r3: Vec<f64>,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
}

impl PotentialProfile {
    pub fn new(xi: Vec<f64>, r3: Vec<f64>, params: &DimensionlessParams) -> Self {
        Self { xi, r3, gamma_plus: params.gamma_plus, gamma_minus: params.gamma_minus }
    }

    /// `gamma_plus + gamma_minus r3`.
    pub fn g(&self) -> Vec<f64> {
        self.r3.iter().map(|r| self.gamma_plus + self.gamma_minus * r).collect()
    }

    /// `W = 2h^2 - (gamma_plus + gamma_minus r3)`.
    pub fn w(&self, h_sq: f64) -> Vec<f64> {
        self.g().into_iter().map(|g| 2.0 * h_sq - g).collect()
    }

    /// Bound window `((gamma_plus - gamma_minus)/2, gamma_plus/2)` for `h^2`.
    pub fn window(&self) -> (f64, f64) {
        bound_window(self.gamma_plus, self.gamma_minus)
    }
}

pub fn bound_window(gamma_plus: f64, gamma_minus: f64) -> (f64, f64) {
    (0.5 * (gamma_plus - gamma_minus), 0.5 * gamma_plus)
}

/// Plateau `r3 = 0` of width `Delta` joined smoothly over `d` to `r3 = -1`.
pub fn r3_ansatz_at(xi: f64, delta: f64, d: f64) -> f64 {
    let a = ((xi + 0.5 * delta) / d).atan();
    let b = ((xi - 0.5 * delta) / d).atan();
    (a - b) / std::f64::consts::PI - 1.0
}

pub fn r3_ansatz(well: &WellSpec) -> PotentialProfile {
    let xi = well.grid();
    let r3 = xi.iter().map(|x| r3_ansatz_at(*x, well.delta, well.d)).collect();
    PotentialProfile::new(xi, r3, &well.params)
}

/// Converged (or flagged) bound state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    /// Level index, 1 for the ground state.
    pub level: usize,
    pub h_sq: f64,
    /// Eigenvalues of the right and left components (equal for `l = 0`).
    pub h_sq_components: [f64; 2],
    pub xi: Vec<f64>,
    pub psi_r: Vec<f64>,
    pub psi_l: Vec<f64>,
    pub r3: Vec<f64>,
    pub w: Vec<f64>,
    pub nodes: usize,
    /// Sup-norm change of `r3` per iteration.
    pub iterations: Vec<f64>,
    pub converged: bool,
    /// Sup-norm of `r3_from_fields(psi) - r3` at the returned state.
    pub fixed_point_residual: f64,
    pub damping: f64,
    /// Peak intensity the amplitudes are scaled to (1 for linear solutions).
    pub i_peak: f64,
    /// Sign of `h` used to attach phases.
    pub h_sign: f64,
}

impl EigenResult {
    /// Fields `e_R = psi_R e^{-i h xi}`, `e_L = psi_L e^{i h xi}`.
    pub fn fields(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        let h = self.h_sign * self.h_sq.max(0.0).sqrt();
        let er = self.xi.iter().zip(&self.psi_r).map(|(x, p)| Complex64::from_polar(*p, -h * x)).collect();
        let el = self.xi.iter().zip(&self.psi_l).map(|(x, p)| Complex64::from_polar(*p, h * x)).collect();
        (er, el)
    }

    /// Outermost classical turning point on the right.
    pub fn right_turning_point(&self) -> Option<f64> {
        self.w.iter().rposition(|w| *w < 0.0).map(|i| self.xi[i])
    }

    /// Fitted slope of `log|psi_R|` beyond the right turning point, and the
    /// expected `-sqrt(W_out/2)`.
    pub fn tail_slope(&self, params: &DimensionlessParams) -> Option<(f64, f64)> {
        let kappa_sq = self.h_sq - 0.5 * (params.gamma_plus - params.gamma_minus);
        if !(kappa_sq > 0.0) {
            return None;
        }
        let kappa = kappa_sq.sqrt();
        let tp = self.right_turning_point()?;
        let end = *self.xi.last()?;
        let (a, b) = (tp + 1.0 / kappa, end - 3.0 / kappa);
        let pts: Vec<(f64, f64)> = self
            .xi
            .iter()
            .zip(&self.psi_r)
            .filter(|(x, p)| **x >= a && **x <= b && p.abs() > 0.0)
            .map(|(x, p)| (*x, p.abs().ln()))
            .collect();
        if pts.len() < 10 {
            return None;
        }
        Some((linear_fit_slope(&pts), -kappa))
    }
}

fn linear_fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Linear Schrödinger-type operator `psi'' = (h^2 + q(xi)) psi` on a
/// uniform grid with Dirichlet ends, discretized by Numerov's method.
#[derive(Debug, Clone)]
pub struct NumerovProblem {
    pub xi: Vec<f64>,
    pub q: Vec<f64>,
    dx: f64,
}

impl NumerovProblem {
    pub fn new(xi: Vec<f64>, q: Vec<f64>) -> Self {
        let dx = (xi[xi.len() - 1] - xi[0]) / (xi.len() - 1) as f64;
        Self { xi, q, dx }
    }

    /// Largest `f = h^2 + q` for which the scheme stays well conditioned.
    pub fn stability_cap(&self) -> f64 {
        6.0 / (self.dx * self.dx)
    }

    fn f(&self, i: usize, h_sq: f64) -> f64 {
        (h_sq + self.q[i]).min(self.stability_cap())
    }

    /// Shot from the left end up to index `stop` (inclusive); returns the
    /// values and the number of sign changes.
    fn shoot_left(&self, h_sq: f64, stop: usize) -> (Vec<f64>, usize) {
        let c = self.dx * self.dx / 12.0;
        let mut psi = vec![0.0; stop + 1];
        if stop == 0 {
            return (psi, 0);
        }
        psi[1] = 1e-12;
        let mut nodes = 0;
        for i in 1..stop {
            let (fm, f0, fp) = (self.f(i - 1, h_sq), self.f(i, h_sq), self.f(i + 1, h_sq));
            psi[i + 1] = (2.0 * psi[i] * (1.0 + 5.0 * c * f0) - psi[i - 1] * (1.0 - c * fm)) / (1.0 - c * fp);
            if psi[i + 1] * psi[i] < 0.0 {
                nodes += 1;
            }
            if psi[i + 1].abs() > 1e200 {
                for v in psi[..=i + 1].iter_mut() {
                    *v *= 1e-200;
                }
            }
        }
        (psi, nodes)
    }

    fn shoot_right(&self, h_sq: f64, stop: usize) -> Vec<f64> {
        let n = self.xi.len();
        let c = self.dx * self.dx / 12.0;
        let mut psi = vec![0.0; n];
        psi[n - 2] = 1e-12;
        let mut i = n - 2;
        while i > stop {
            let (fp, f0, fm) = (self.f(i + 1, h_sq), self.f(i, h_sq), self.f(i - 1, h_sq));
            psi[i - 1] = (2.0 * psi[i] * (1.0 + 5.0 * c * f0) - psi[i + 1] * (1.0 - c * fp)) / (1.0 - c * fm);
            if psi[i - 1].abs() > 1e200 {
                for v in psi[i - 1..].iter_mut() {
                    *v *= 1e-200;
                }
            }
            i -= 1;
        }
        psi
    }

    /// Sign changes of the full-length forward shot: the number of levels
    /// with eigenvalue above `h_sq`.
    pub fn node_count(&self, h_sq: f64) -> usize {
        self.shoot_left(h_sq, self.xi.len() - 1).1
    }

    /// Number of levels inside `(lo, hi)`.
    pub fn count_in(&self, lo: f64, hi: f64) -> usize {
        self.node_count(lo).saturating_sub(self.node_count(hi))
    }

    /// Eigenvalue of level `k` (1-based) inside `(lo, hi)` by bisection on the node count.
    pub fn eigenvalue(&self, k: usize, lo: f64, hi: f64) -> Option<f64> {
        let above_hi = self.node_count(hi);
        let target = above_hi + k;
        if self.node_count(lo) < target {
            return None;
        }
        let (mut a, mut b) = (lo, hi);
        while b - a > 1e-14 * b.abs().max(1.0) {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if self.node_count(m) >= target {
                a = m;
            } else {
                b = m;
            }
        }
        Some(0.5 * (a + b))
    }

    /// Eigenfunction at `h_sq` by shooting from both ends and matching at the
    /// right-most classical turning point; unit peak, largest lobe positive.
    pub fn eigenfunction(&self, h_sq: f64) -> Vec<f64> {
        let n = self.xi.len();
        let m = (0..n).rev().find(|&i| h_sq + self.q[i] < 0.0).unwrap_or(n / 2).clamp(2, n - 3);
        let (left, _) = self.shoot_left(h_sq, m);
        let right = self.shoot_right(h_sq, m);
        let scale = if right[m] != 0.0 { left[m] / right[m] } else { 1.0 };
        let mut psi: Vec<f64> = (0..n).map(|i| if i <= m { left[i] } else { right[i] * scale }).collect();
        let vmax = psi.iter().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
        if vmax != 0.0 {
            for v in psi.iter_mut() {
                *v /= vmax;
            }
        }
        psi
    }
}

/// Interior sign changes ignoring values below `1e-10` of the peak.
pub fn count_nodes(psi: &[f64]) -> usize {
    let peak = psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let thr = 1e-10 * peak;
    let mut last = 0.0;
    let mut nodes = 0;
    for v in psi {
        if v.abs() <= thr {
            continue;
        }
        if last != 0.0 && last * v < 0.0 {
            nodes += 1;
        }
        last = *v;
    }
    nodes
}

fn linear_problem(pot: &PotentialProfile) -> NumerovProblem {
    let q = pot.g().into_iter().map(|g| -0.5 * g).collect();
    NumerovProblem::new(pot.xi.clone(), q)
}

fn require_well(params: &DimensionlessParams) -> Result<()> {
    if !(params.gamma_minus > 0.0) {
        return Err(PsrError::NoWell(params.gamma_minus));
    }
    Ok(())
}

fn open_window(lo: f64, hi: f64) -> (f64, f64) {
    let eps = 1e-12 * hi.abs().max(1.0);
    (lo + eps, hi - eps)
}

fn linear_result(pot: &PotentialProfile, level: usize, h_sq: f64, psi: Vec<f64>) -> EigenResult {
    let nodes = count_nodes(&psi);
    EigenResult {
        level,
        h_sq,
        h_sq_components: [h_sq, h_sq],
        xi: pot.xi.clone(),
        psi_l: psi.clone(),
        psi_r: psi,
        r3: pot.r3.clone(),
        w: pot.w(h_sq),
        nodes,
        iterations: Vec::new(),
        converged: true,
        fixed_point_residual: f64::NAN,
        damping: f64::NAN,
        i_peak: 1.0,
        h_sign: -1.0,
    }
}

/// Bound states of the well generated by `pot`, ground state first.
pub fn solve_linear_bound_states(
    pot: &PotentialProfile,
    params: &DimensionlessParams,
    max_levels: usize,
) -> Result<Vec<EigenResult>> {
    require_well(params)?;
    let prob = linear_problem(pot);
    let (lo, hi) = open_window(pot.window().0, pot.window().1);
    let count = prob.count_in(lo, hi).min(max_levels);
    let mut out = Vec::with_capacity(count);
    for k in 1..=count {
        let h_sq = prob.eigenvalue(k, lo, hi).ok_or(PsrError::NoBoundState { level: k, iteration: 0 })?;
        out.push(linear_result(pot, k, h_sq, prob.eigenfunction(h_sq)));
    }
    Ok(out)
}

/// Number of bound states of the well by node counting.
pub fn count_bound_states(pot: &PotentialProfile, params: &DimensionlessParams) -> Result<usize> {
    require_well(params)?;
    let (lo, hi) = open_window(pot.window().0, pot.window().1);
    Ok(linear_problem(pot).count_in(lo, hi))
}

/// Square-well estimates for a plateau of width `Delta` and depth `gamma_minus/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareWellEstimate {
    /// `ceil(sqrt(gamma_minus) Delta / pi)`.
    pub ceiling_count: usize,
    /// `ceil(sqrt(gamma_minus / 2) Delta / pi)`, the count of the linearized equation.
    pub consistent_count: usize,
    /// Level energies `h^2` of the finite square well, ground state first.
    pub levels: Vec<f64>,
    /// Soliton sizes `Delta / k`, `k = 1..consistent_count`, in units of `c t0`.
    pub size_ladder: Vec<f64>,
}

impl SquareWellEstimate {
    pub fn size_ladder_mm(&self, ct0_mm: f64) -> Vec<f64> {
        self.size_ladder.iter().map(|s| s * ct0_mm).collect()
    }
}

fn bisect(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

pub fn square_well_estimates(params: &DimensionlessParams, delta: f64) -> Result<SquareWellEstimate> {
    require_well(params)?;
    if !(delta > 0.0) {
        return Err(PsrError::InvalidSpec(format!("well.Delta must be positive, got {delta}")));
    }
    let pi = std::f64::consts::PI;
    let gm = params.gamma_minus;
    let ceiling_count = (gm.sqrt() * delta / pi).ceil() as usize;
    let consistent_count = ((0.5 * gm).sqrt() * delta / pi).ceil() as usize;

    // even: z tan z = sqrt(z0^2 - z^2); odd: -z cot z = sqrt(z0^2 - z^2)
    let a = 0.5 * delta;
    let z0 = a * (0.5 * gm).sqrt();
    let lo = 0.5 * (params.gamma_plus - gm);
    let mut levels = Vec::new();
    let mut n = 0usize;
    loop {
        let start = n as f64 * 0.5 * pi;
        if start >= z0 {
            break;
        }
        let end = ((n + 1) as f64 * 0.5 * pi).min(z0);
        let tiny = 1e-15 * end.max(1.0);
        let z = if n.is_multiple_of(2) {
            bisect(start + tiny, end - tiny, |z| z * z.tan() - (z0 * z0 - z * z).max(0.0).sqrt())
        } else {
            bisect(start + tiny, end - tiny, |z| -z / z.tan() - (z0 * z0 - z * z).max(0.0).sqrt())
        };
        levels.push(lo + (z0 * z0 - z * z) / (a * a));
        n += 1;
    }
    let size_ladder = (1..=consistent_count).map(|k| delta / k as f64).collect();
    Ok(SquareWellEstimate { ceiling_count, consistent_count, levels, size_ladder })
}

/// WKB levels `integral sqrt(g/2 - h^2) d xi = (n + 1/2) pi`, ground state first.
pub fn wkb_levels(pot: &PotentialProfile) -> Vec<f64> {
    let g = pot.g();
    let dx = (pot.xi[pot.xi.len() - 1] - pot.xi[0]) / (pot.xi.len() - 1) as f64;
    let action = |h_sq: f64| g.iter().map(|g| (0.5 * g - h_sq).max(0.0).sqrt()).sum::<f64>() * dx;
    let (lo, hi) = open_window(pot.window().0, pot.window().1);
    let pi = std::f64::consts::PI;
    let s_max = action(lo);
    let mut out = Vec::new();
    let mut n = 0usize;
    while (n as f64 + 0.5) * pi < s_max {
        let target = (n as f64 + 0.5) * pi;
        out.push(bisect(lo, hi, |h| action(h) - target));
        n += 1;
    }
    out
}

/// Pointwise population difference for amplitudes `psi_R`, `psi_L`.
pub fn r3_from_fields(psi_r: &[f64], psi_l: &[f64], params: &DimensionlessParams) -> Vec<f64> {
    psi_r
        .iter()
        .zip(psi_l)
        .map(|(a, b)| bloch::population_difference(a * a, b * b, params))
        .collect()
}

/// Controls for [`selfconsistent_iterate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationOptions {
    /// Level to follow, 1 for the ground state.
    pub level: usize,
    pub max_iter: usize,
    pub damping: f64,
    pub tol: f64,
    pub i_peak: f64,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self { level: 1, max_iter: 50, damping: 0.5, tol: 1e-6, i_peak: DEFAULT_I_PEAK }
    }
}

impl IterationOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(PsrError::InvalidSpec(format!("eigen.damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(PsrError::InvalidSpec(format!("eigen.tol must be positive, got {}", self.tol)));
        }
        if !(self.i_peak > 0.0 && self.i_peak.is_finite()) {
            return Err(PsrError::InvalidSpec(format!("well.I_peak must be positive, got {}", self.i_peak)));
        }
        if self.level == 0 {
            return Err(PsrError::InvalidSpec("eigen.level counts from 1".into()));
        }
        if self.max_iter == 0 {
            return Err(PsrError::InvalidSpec("eigen.max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Potential of one component for `l != 0` built from the previous iterate:
/// `q = -g/2 + l^2/R^2 -/+ 2 l h / R`.
#[allow(clippy::too_many_arguments)]
fn component_potential(
    well: &WellSpec,
    g: &[f64],
    xi: &[f64],
    intensity: &[f64],
    l: f64,
    h: f64,
    field: &'static str,
    sign: f64,
    cap: f64,
) -> Result<Vec<f64>> {
    let mut q = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let r = intensity[i];
        if r <= INTENSITY_FLOOR {
            if xi[i].abs() < 0.5 * well.delta {
                return Err(PsrError::Singularity { xi: xi[i], field, floor: INTENSITY_FLOOR });
            }
            q.push(cap);
            continue;
        }
        let v = -0.5 * g[i] + l * l / (r * r) - sign * 2.0 * l * h / r;
        q.push(v.min(cap));
    }
    Ok(q)
}

/// Bracket for `h^2` when the flux terms reshape the well: the intensity
/// walls confine every level, so the window runs from the deepest point of
/// the well down by `gamma_plus`.
fn shifted_window(prob: &NumerovProblem, params: &DimensionlessParams) -> (f64, f64) {
    let top = prob.q.iter().fold(f64::NEG_INFINITY, |m, q| m.max(-q));
    open_window(top - params.gamma_plus, top)
}

fn sup_change(new: &[f64], old: &[f64]) -> (f64, f64) {
    new.iter().zip(old).fold((0.0, 0.0), |(m, s), (a, b)| {
        let d = a - b;
        if d.abs() > m {
            (d.abs(), d)
        } else {
            (m, s)
        }
    })
}

/// Self-consistent iteration for the finite-target soliton condensate.
///
/// Each step solves the linear problem with the current `r3`, scales the
/// level to peak intensity `i_peak`, recomputes `r3` from the fields and
/// mixes `r3 <- (1 - lambda) r3 + lambda r3_new`. The damping is halved when
/// the signed largest change alternates sign over four iterations.
/// Non-convergence is reported in the result, not as an error.
pub fn selfconsistent_iterate(well: &WellSpec, hl: &ConservedPair, opts: &IterationOptions) -> Result<EigenResult> {
    well.validate()?;
    opts.validate()?;
    let params = &well.params;
    require_well(params)?;
    let pot0 = r3_ansatz(well);
    let xi = pot0.xi.clone();
    let (lo, hi) = open_window(pot0.window().0, pot0.window().1);
    let h_sign = if hl.h > 0.0 { 1.0 } else { -1.0 };

    let mut r3 = pot0.r3.clone();
    let mut lambda = opts.damping;
    let mut history = Vec::new();
    let mut signed = Vec::new();
    let mut prev: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    let mut converged = false;
    let mut last = None;

    for it in 1..=opts.max_iter {
        let pot = PotentialProfile::new(xi.clone(), r3.clone(), params);
        let base = linear_problem(&pot);
        let cap = base.stability_cap();
        let prob_pair = match (&prev, hl.l != 0.0) {
            (Some((rr, ll, h_sq)), true) => {
                let h = h_sign * h_sq.max(0.0).sqrt();
                let g = pot.g();
                let qr = component_potential(well, &g, &xi, rr, hl.l, h, "R", 1.0, cap)?;
                let ql = component_potential(well, &g, &xi, ll, hl.l, h, "L", -1.0, cap)?;
                Some((NumerovProblem::new(xi.clone(), qr), NumerovProblem::new(xi.clone(), ql)))
            }
            _ => None,
        };
        let (hr, psi_r, hl_sq, psi_l) = match &prob_pair {
            None => {
                let h_sq = base
                    .eigenvalue(opts.level, lo, hi)
                    .ok_or(PsrError::NoBoundState { level: opts.level, iteration: it })?;
                let psi = base.eigenfunction(h_sq);
                (h_sq, psi.clone(), h_sq, psi)
            }
            Some((pr, pl)) => {
                let solve = |prob: &NumerovProblem| {
                    let (a, b) = shifted_window(prob, params);
                    prob.eigenvalue(opts.level, a, b).ok_or(PsrError::NoBoundState { level: opts.level, iteration: it })
                };
                let a = solve(pr)?;
                let b = solve(pl)?;
                (a, pr.eigenfunction(a), b, pl.eigenfunction(b))
            }
        };
        let amp = opts.i_peak.sqrt();
        let psi_r: Vec<f64> = psi_r.iter().map(|v| v * amp).collect();
        let psi_l: Vec<f64> = psi_l.iter().map(|v| v * amp).collect();
        let r3_new = r3_from_fields(&psi_r, &psi_l, params);
        let residual = sup_change(&r3_new, &r3).0;
        let h_sq = 0.5 * (hr + hl_sq);
        let nodes = count_nodes(&psi_r);
        last = Some(EigenResult {
            level: opts.level,
            h_sq,
            h_sq_components: [hr, hl_sq],
            xi: xi.clone(),
            psi_r: psi_r.clone(),
            psi_l: psi_l.clone(),
            r3: r3.clone(),
            w: pot.w(h_sq),
            nodes,
            iterations: Vec::new(),
            converged: false,
            fixed_point_residual: residual,
            damping: lambda,
            i_peak: opts.i_peak,
            h_sign,
        });

        let mixed: Vec<f64> = r3.iter().zip(&r3_new).map(|(o, n)| (1.0 - lambda) * o + lambda * n).collect();
        let (change, signed_change) = sup_change(&mixed, &r3);
        history.push(change);
        signed.push(signed_change);
        if change < opts.tol {
            converged = true;
            break;
        }
        r3 = mixed;
        let rr: Vec<f64> = psi_r.iter().map(|v| v * v).collect();
        let ll: Vec<f64> = psi_l.iter().map(|v| v * v).collect();
        prev = Some((rr, ll, h_sq));

        if signed.len() >= 4 {
            let w = &signed[signed.len() - 4..];
            if w.windows(2).all(|p| p[0] * p[1] < 0.0) {
                lambda *= 0.5;
                signed.clear();
            }
        }
    }
    let mut res = last.expect("at least one iteration runs");
    res.iterations = history;
    res.converged = converged;
    res.damping = lambda;
    Ok(res)
}
