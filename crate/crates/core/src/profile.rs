//! Static profile equations for an infinitely long target.
//!
//! Two formulations are provided:
//!
//! * the exact four-component system `-e'' = M e` for the real field array
//!   `e = (Re e_R, Im e_R, Re e_L, Im e_L)`;
//! * the reduced system in the right/left moving intensities `R`, `L` with the
//!   constants `(h, l)` entering as parameters. It is integrated either in the
//!   intensities themselves ([`Formulation::ReducedFlux`]) or in the
//!   amplitudes `psi = sqrt(R)` ([`Formulation::Reduced`]), which is the same
//!   equation written without the `1/R` singularity at field nodes.
//!
//! Both directions from the center of the target are integrated and joined.

use std::sync::Arc;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::bloch::{self, BlochVector, FieldPair};
use crate::error::{PsrError, Result};
use crate::ode::{self, Options, Solution, System};
use crate::units::DimensionlessParams;

/// Hard floor on intensities entering `1/R`, `1/L` terms.
pub const INTENSITY_FLOOR: f64 = 1e-30;

/// Fraction of the median stationary-point spacing within which stationary
/// points of `R` and `L` are paired into one joint boundary.
pub const DEFAULT_PAIRING_FRACTION: f64 = 0.4;

/// The two constants `h = W'/(R+L)` and `l = (XY' - YX')/(R+L)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConservedPair {
    pub h: f64,
    pub l: f64,
}

impl ConservedPair {
    pub fn new(h: f64, l: f64) -> Self {
        Self { h, l }
    }
}

/// Fields and their first derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldState4 {
    pub e: [f64; 4],
    pub de: [f64; 4],
}

impl FieldState4 {
    pub fn from_array(y: &[f64; 8]) -> Self {
        Self { e: [y[0], y[1], y[2], y[3]], de: [y[4], y[5], y[6], y[7]] }
    }

    pub fn to_array(&self) -> [f64; 8] {
        let (e, d) = (self.e, self.de);
        [e[0], e[1], e[2], e[3], d[0], d[1], d[2], d[3]]
    }

    pub fn fields(&self) -> FieldPair {
        FieldPair { e: self.e }
    }

    pub fn r(&self) -> f64 {
        self.fields().r()
    }

    pub fn l(&self) -> f64 {
        self.fields().l()
    }

    /// `R' = 2 (e1 e1' + e2 e2')`.
    pub fn dr(&self) -> f64 {
        2.0 * (self.e[0] * self.de[0] + self.e[1] * self.de[1])
    }

    /// `L' = 2 (e3 e3' + e4 e4')`.
    pub fn dl(&self) -> f64 {
        2.0 * (self.e[2] * self.de[2] + self.e[3] * self.de[3])
    }

    /// Right-mover flux `J_R = Im(e_R* e_R')`.
    pub fn flux_r(&self) -> f64 {
        self.e[0] * self.de[1] - self.e[1] * self.de[0]
    }

    /// Left-mover flux `J_L = Im(e_L* e_L')`.
    pub fn flux_l(&self) -> f64 {
        self.e[2] * self.de[3] - self.e[3] * self.de[2]
    }

    /// `W' = e1' e2 - e2' e1 - e3' e4 + e4' e3 = J_L - J_R`.
    pub fn w_prime(&self) -> f64 {
        let (e, d) = (self.e, self.de);
        d[0] * e[1] - d[1] * e[0] - d[2] * e[3] + d[3] * e[2]
    }

    /// `X Y' - Y X'` with `X + iY = e_R e_L`.
    pub fn xy_winding(&self) -> f64 {
        let (e, d) = (self.e, self.de);
        let x = e[0] * e[2] - e[1] * e[3];
        let y = e[0] * e[3] + e[1] * e[2];
        let dx = d[0] * e[2] + e[0] * d[2] - d[1] * e[3] - e[1] * d[3];
        let dy = d[0] * e[3] + e[0] * d[3] + d[1] * e[2] + e[1] * d[2];
        x * dy - y * dx
    }

    /// Pointwise `(h, l)`, undefined where `R + L` is below the floor.
    pub fn conserved(&self) -> Option<ConservedPair> {
        let s = self.r() + self.l();
        if s <= INTENSITY_FLOOR {
            return None;
        }
        Some(ConservedPair { h: self.w_prime() / s, l: self.xy_winding() / s })
    }
}

/// Intensities and their first derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FluxState {
    pub r: f64,
    pub l: f64,
    pub dr: f64,
    pub dl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    FourComponent,
    /// Reduced equations integrated in amplitudes `sqrt(R)`, `sqrt(L)`.
    Reduced,
    /// Reduced equations integrated directly in `R`, `L`.
    ReducedFlux,
}

impl Formulation {
    pub fn name(&self) -> &'static str {
        match self {
            Formulation::FourComponent => "four_component",
            Formulation::Reduced => "reduced",
            Formulation::ReducedFlux => "reduced_flux",
        }
    }
}

/// The symmetric matrix `M` of `-e'' = M e`.
pub fn force_matrix(fields: &FieldPair, params: &DimensionlessParams) -> Matrix4<f64> {
    let b = bloch::steady_state_closed_form(fields, params);
    force_matrix_from(&b, params)
}

fn force_matrix_from(b: &BlochVector, params: &DimensionlessParams) -> Matrix4<f64> {
    let g = params.gamma_plus + params.gamma_minus * b.r3;
    let (r1, r2) = (b.r1, b.r2);
    0.5 * Matrix4::new(
        g, 0.0, r1, -r2, //
        0.0, g, -r2, -r1, //
        r1, -r2, g, 0.0, //
        -r2, -r1, 0.0, g,
    )
}

/// Right-hand side of the four-component system: returns `(e', e'')`.
pub fn rhs_four_component(state: &FieldState4, params: &DimensionlessParams) -> FieldState4 {
    let e = state.e;
    let b = bloch::steady_state_closed_form(&state.fields(), params);
    let g = params.gamma_plus + params.gamma_minus * b.r3;
    let (r1, r2) = (b.r1, b.r2);
    let dde = [
        -0.5 * (g * e[0] + r1 * e[2] - r2 * e[3]),
        -0.5 * (g * e[1] - r2 * e[2] - r1 * e[3]),
        -0.5 * (r1 * e[0] - r2 * e[1] + g * e[2]),
        -0.5 * (-r2 * e[0] - r1 * e[1] + g * e[3]),
    ];
    FieldState4 { e: state.de, de: dde }
}

/// The term `S = 8 tau2^2 gamma_minus R L (R + L) / D` of the reduced equations.
pub fn small_term(r: f64, l: f64, params: &DimensionlessParams) -> f64 {
    let t = bloch::steady_state_terms(r, l, params);
    8.0 * params.tau2 * params.tau2 * params.gamma_minus * r * l * (r + l) / t.denominator
}

/// Right-hand side of the reduced equations in `(R, L)`: returns `(R', L', R'', L'')`
/// packed as a [`FluxState`] with `r = R'`, `l = L'`, `dr = R''`, `dl = L''`.
pub fn rhs_reduced(
    xi: f64,
    state: &FluxState,
    hl: &ConservedPair,
    params: &DimensionlessParams,
) -> Result<FluxState> {
    if !(state.r > INTENSITY_FLOOR) {
        return Err(PsrError::Singularity { xi, field: "R", floor: INTENSITY_FLOOR });
    }
    if !(state.l > INTENSITY_FLOOR) {
        return Err(PsrError::Singularity { xi, field: "L", floor: INTENSITY_FLOOR });
    }
    Ok(reduced_second_derivatives(state, hl, params))
}

fn reduced_second_derivatives(state: &FluxState, hl: &ConservedPair, params: &DimensionlessParams) -> FluxState {
    let FluxState { r, l, dr, dl } = *state;
    let g = params.gamma_plus + params.gamma_minus * bloch::population_difference(r, l, params);
    let s = small_term(r, l, params);
    let jr = hl.l - hl.h * r;
    let jl = hl.l + hl.h * l;
    FluxState {
        r: dr,
        l: dl,
        dr: dr * dr / (2.0 * r) - g * r + 2.0 * jr * jr / r + s,
        dl: dl * dl / (2.0 * l) - g * l + 2.0 * jl * jl / l + s,
    }
}

/// Four-component system for the integrator; state `(e, e')`.
#[derive(Debug, Clone, Copy)]
pub struct FourComponentSystem {
    pub params: DimensionlessParams,
}

impl System<8> for FourComponentSystem {
    fn deriv(&self, _x: f64, y: &[f64; 8]) -> [f64; 8] {
        rhs_four_component(&FieldState4::from_array(y), &self.params).to_array()
    }
}

/// Reduced equations in amplitudes; state `(psi_R, psi_R', psi_L, psi_L', phi_R, phi_L)`.
///
/// With `R = psi_R^2` the intensity equation becomes
/// `psi_R'' = -g psi_R / 2 + (l - h R)^2 / psi_R^3 + S / (2 psi_R)`, and the
/// phases follow from the fluxes, `phi_R' = l/R - h`, `phi_L' = l/L + h`.
/// For `l = 0` the amplitudes may pass through zero.
#[derive(Debug, Clone, Copy)]
pub struct AmplitudeSystem {
    pub params: DimensionlessParams,
    pub hl: ConservedPair,
}

impl AmplitudeSystem {
    fn phase_rates(&self, r: f64, l: f64) -> (f64, f64) {
        let ConservedPair { h, l: ll } = self.hl;
        if ll == 0.0 {
            (-h, h)
        } else {
            (ll / r - h, ll / l + h)
        }
    }
}

impl System<6> for AmplitudeSystem {
    fn deriv(&self, _x: f64, y: &[f64; 6]) -> [f64; 6] {
        let p = &self.params;
        let ConservedPair { h, l: ll } = self.hl;
        let (a, da, b, db) = (y[0], y[1], y[2], y[3]);
        let (r, l) = (a * a, b * b);
        let t = bloch::steady_state_terms(r, l, p);
        let g = p.gamma_plus + p.gamma_minus * bloch::population_difference(r, l, p);
        // S / (2 psi_R) = k L psi_R
        let k = 4.0 * p.tau2 * p.tau2 * p.gamma_minus * (r + l) / t.denominator;
        let mut dda = (-0.5 * g + h * h + k * l) * a;
        let mut ddb = (-0.5 * g + h * h + k * r) * b;
        if ll != 0.0 {
            dda += ll * ll / (a * r) - 2.0 * ll * h / a;
            ddb += ll * ll / (b * l) + 2.0 * ll * h / b;
        }
        let (pr, pl) = self.phase_rates(r, l);
        [da, dda, db, ddb, pr, pl]
    }

    fn check(&self, x: f64, y: &[f64; 6]) -> Result<()> {
        if self.hl.l != 0.0 {
            if !(y[0] * y[0] > INTENSITY_FLOOR) {
                return Err(PsrError::Singularity { xi: x, field: "R", floor: INTENSITY_FLOOR });
            }
            if !(y[2] * y[2] > INTENSITY_FLOOR) {
                return Err(PsrError::Singularity { xi: x, field: "L", floor: INTENSITY_FLOOR });
            }
        }
        Ok(())
    }
}

/// Reduced equations in intensities; state `(R, R', L, L', phi_R, phi_L)`.
#[derive(Debug, Clone, Copy)]
pub struct FluxSystem {
    pub params: DimensionlessParams,
    pub hl: ConservedPair,
}

impl System<6> for FluxSystem {
    fn deriv(&self, _x: f64, y: &[f64; 6]) -> [f64; 6] {
        let st = FluxState { r: y[0], l: y[2], dr: y[1], dl: y[3] };
        // below the floor the stage values are still finite; the check hook
        // rejects any accepted state that crosses it
        let d = reduced_second_derivatives(&st, &self.hl, &self.params);
        let ConservedPair { h, l: ll } = self.hl;
        [d.r, d.dr, d.l, d.dl, ll / st.r - h, ll / st.l + h]
    }

    fn check(&self, x: f64, y: &[f64; 6]) -> Result<()> {
        let st = FluxState { r: y[0], l: y[2], dr: y[1], dl: y[3] };
        rhs_reduced(x, &st, &self.hl, &self.params).map(|_| ())
    }
}

/// Boundary data at the center of the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterData {
    pub xi0: f64,
    pub r: f64,
    pub l: f64,
    pub dr: f64,
    pub dl: f64,
    pub hl: ConservedPair,
    /// Complete field state, when the boundary was given as a field array.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<FieldState4>,
}

impl CenterData {
    /// Stationary center `R' = L' = 0` at `xi = 0`.
    pub fn stationary(r: f64, l: f64, hl: ConservedPair) -> Self {
        Self { xi0: 0.0, r, l, dr: 0.0, dl: 0.0, hl, explicit: None }
    }

    /// Center given by the full field state; `(h, l)` are read off the state.
    pub fn from_field_state(xi0: f64, state: FieldState4) -> Result<Self> {
        let hl = state.conserved().ok_or_else(|| {
            PsrError::InvalidSpec(format!("boundary.e has R + L below the floor {INTENSITY_FLOOR:e}"))
        })?;
        Ok(Self { xi0, r: state.r(), l: state.l(), dr: state.dr(), dl: state.dl(), hl, explicit: Some(state) })
    }

    /// Real fields at the center with fluxes `J_R = l - hR`, `J_L = l + hL`,
    /// or the explicit state if one was given.
    pub fn field_state(&self) -> FieldState4 {
        if let Some(s) = self.explicit {
            return s;
        }
        let (a, b) = (self.r.sqrt(), self.l.sqrt());
        let jr = self.hl.l - self.hl.h * self.r;
        let jl = self.hl.l + self.hl.h * self.l;
        let div = |x: f64, y: f64| if y > 0.0 { x / y } else { 0.0 };
        FieldState4 {
            e: [a, 0.0, b, 0.0],
            de: [div(self.dr, 2.0 * a), div(jr, a), div(self.dl, 2.0 * b), div(jl, b)],
        }
    }

    /// Same data with `R <-> L` and `h -> -h`.
    pub fn swapped(&self) -> Self {
        Self {
            xi0: self.xi0,
            r: self.l,
            l: self.r,
            dr: self.dl,
            dl: self.dr,
            hl: ConservedPair { h: -self.hl.h, l: self.hl.l },
            explicit: self.explicit.map(|s| FieldState4 {
                e: [s.e[2], s.e[3], s.e[0], s.e[1]],
                de: [s.de[2], s.de[3], s.de[0], s.de[1]],
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("R0", self.r), ("L0", self.l)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(PsrError::InvalidSpec(format!("boundary.{name} must be a non-negative number, got {v}")));
            }
        }
        for (name, v) in [("dR0", self.dr), ("dL0", self.dl), ("h", self.hl.h), ("l", self.hl.l), ("xi0", self.xi0)] {
            if !v.is_finite() {
                return Err(PsrError::InvalidSpec(format!("boundary.{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// One sample of a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub xi: f64,
    pub state: FieldState4,
    pub r: f64,
    pub l: f64,
    pub dr: f64,
    pub dl: f64,
    pub bloch: BlochVector,
    pub deta: f64,
    /// Pointwise `W'/(R+L)`; NaN where undefined.
    pub h_local: f64,
    /// Pointwise `(XY' - YX')/(R+L)`; NaN where undefined.
    pub l_local: f64,
}

impl ProfilePoint {
    pub fn from_fields(xi: f64, state: FieldState4, params: &DimensionlessParams) -> Self {
        let f = state.fields();
        let bloch = bloch::steady_state_closed_form(&f, params);
        let (r, l) = (f.r(), f.l());
        let hl = state.conserved();
        Self {
            xi,
            state,
            r,
            l,
            dr: state.dr(),
            dl: state.dl(),
            bloch,
            deta: bloch.coherence_sq() * (r + l),
            h_local: hl.map_or(f64::NAN, |c| c.h),
            l_local: hl.map_or(f64::NAN, |c| c.l),
        }
    }

    /// Sample with only intensities known (fields taken real).
    pub fn from_intensities(xi: f64, r: f64, l: f64, dr: f64, dl: f64, params: &DimensionlessParams) -> Self {
        let f = FieldPair::from_intensities(r, l);
        let bloch = bloch::steady_state_closed_form(&f, params);
        Self {
            xi,
            state: FieldState4 { e: f.e, de: [0.0; 4] },
            r,
            l,
            dr,
            dl,
            bloch,
            deta: bloch.coherence_sq() * (r + l),
            h_local: f64::NAN,
            l_local: f64::NAN,
        }
    }
}

#[derive(Debug, Clone)]
enum Branch {
    Four(Arc<Solution<8>>),
    Amplitude(Arc<Solution<6>>, AmplitudeSystem),
    Flux(Arc<Solution<6>>, FluxSystem),
}

impl Branch {
    fn stats(&self) -> ode::Stats {
        match self {
            Branch::Four(s) => s.stats,
            Branch::Amplitude(s, _) | Branch::Flux(s, _) => s.stats,
        }
    }

    fn point(&self, xi: f64, params: &DimensionlessParams) -> ProfilePoint {
        match self {
            Branch::Four(s) => ProfilePoint::from_fields(xi, FieldState4::from_array(&s.eval(xi)), params),
            Branch::Amplitude(s, sys) => {
                let y = s.eval(xi);
                let (r, l) = (y[0] * y[0], y[2] * y[2]);
                let (pr, pl) = sys.phase_rates(r, l);
                let state = polar_state(y[0], y[1], pr, y[4], y[2], y[3], pl, y[5]);
                ProfilePoint::from_fields(xi, state, params)
            }
            Branch::Flux(s, sys) => {
                let y = s.eval(xi);
                let (r, l) = (y[0].max(0.0), y[2].max(0.0));
                let (a, b) = (r.sqrt(), l.sqrt());
                let ConservedPair { h, l: ll } = sys.hl;
                let da = if a > 0.0 { y[1] / (2.0 * a) } else { 0.0 };
                let db = if b > 0.0 { y[3] / (2.0 * b) } else { 0.0 };
                let state = polar_state(a, da, ll / r - h, y[4], b, db, ll / l + h, y[5]);
                let mut p = ProfilePoint::from_fields(xi, state, params);
                p.dr = y[1];
                p.dl = y[3];
                p
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn polar_state(a: f64, da: f64, pa: f64, phase_a: f64, b: f64, db: f64, pb: f64, phase_b: f64) -> FieldState4 {
    let (sa, ca) = phase_a.sin_cos();
    let (sb, cb) = phase_b.sin_cos();
    FieldState4 {
        e: [a * ca, a * sa, b * cb, b * sb],
        de: [
            da * ca - a * pa * sa,
            da * sa + a * pa * ca,
            db * cb - b * pb * sb,
            db * sb + b * pb * cb,
        ],
    }
}

/// Dense representation of an integrated profile, valid over its span.
#[derive(Debug, Clone)]
pub struct Trajectory {
    xi0: f64,
    forward: Option<Branch>,
    backward: Option<Branch>,
    params: DimensionlessParams,
}

impl Trajectory {
    pub fn point(&self, xi: f64) -> ProfilePoint {
        let branch = if xi >= self.xi0 {
            self.forward.as_ref().or(self.backward.as_ref())
        } else {
            self.backward.as_ref().or(self.forward.as_ref())
        };
        branch.expect("trajectory has at least one branch").point(xi, &self.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GridDiagnostics {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub evaluations: usize,
    /// Largest deviation of pointwise `h` from its mean.
    pub h_drift: f64,
    /// Largest deviation of pointwise `l` from its mean.
    pub l_drift: f64,
    /// Samples where `(h, l)` is undefined.
    pub undefined_points: usize,
    pub min_r3: f64,
    pub max_r3: f64,
    pub min_deta: f64,
}

/// Sampled static solution.
#[derive(Debug, Clone)]
pub struct ProfileGrid {
    pub points: Vec<ProfilePoint>,
    /// Constants the run was started with.
    pub hl: ConservedPair,
    pub params: DimensionlessParams,
    pub formulation: Option<Formulation>,
    pub diagnostics: GridDiagnostics,
    pub trajectory: Option<Arc<Trajectory>>,
}

impl ProfileGrid {
    /// Grid from externally produced samples (no dense interpolant).
    pub fn from_points(points: Vec<ProfilePoint>, hl: ConservedPair, params: DimensionlessParams) -> Self {
        let mut g = Self { points, hl, params, formulation: None, diagnostics: GridDiagnostics::default(), trajectory: None };
        g.refresh_diagnostics();
        g
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xi(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.xi).collect()
    }

    pub fn r(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.r).collect()
    }

    pub fn l(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.l).collect()
    }

    pub fn max_r(&self) -> f64 {
        self.points.iter().map(|p| p.r).fold(0.0, f64::max)
    }

    pub fn max_deta(&self) -> f64 {
        self.points.iter().map(|p| p.deta).fold(0.0, f64::max)
    }

    /// Point at `xi`, from the dense interpolant if present, otherwise by
    /// linear interpolation of the samples.
    pub fn point_at(&self, xi: f64) -> Option<ProfilePoint> {
        if let Some(t) = &self.trajectory {
            return Some(t.point(xi));
        }
        let i = self.points.partition_point(|p| p.xi < xi);
        if i == 0 {
            return self.points.first().copied();
        }
        if i >= self.points.len() {
            return self.points.last().copied();
        }
        let (a, b) = (&self.points[i - 1], &self.points[i]);
        let w = (xi - a.xi) / (b.xi - a.xi);
        let mix = |u: f64, v: f64| u + w * (v - u);
        let mut p = *a;
        p.xi = xi;
        p.r = mix(a.r, b.r);
        p.l = mix(a.l, b.l);
        p.dr = mix(a.dr, b.dr);
        p.dl = mix(a.dl, b.dl);
        p.deta = mix(a.deta, b.deta);
        Some(p)
    }

    fn refresh_diagnostics(&mut self) {
        let report = conserved_quantities(self);
        let d = &mut self.diagnostics;
        d.h_drift = report.h_drift;
        d.l_drift = report.l_drift;
        d.undefined_points = report.undefined_points;
        d.min_r3 = self.points.iter().map(|p| p.bloch.r3).fold(f64::INFINITY, f64::min);
        d.max_r3 = self.points.iter().map(|p| p.bloch.r3).fold(f64::NEG_INFINITY, f64::max);
        d.min_deta = self.points.iter().map(|p| p.deta).fold(f64::INFINITY, f64::min);
    }
}

/// Controls for [`integrate_profile`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Number of uniform output samples over the span (endpoints included).
    pub samples: usize,
    pub max_steps: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, samples: 2001, max_steps: 2_000_000 }
    }
}

impl ProfileOptions {
    pub fn with_tol(rtol: f64) -> Self {
        Self { rtol, atol: rtol * 1e-3, ..Self::default() }
    }

    pub fn samples(mut self, n: usize) -> Self {
        self.samples = n;
        self
    }
}

fn integrate_branch(
    center: &CenterData,
    x_end: f64,
    params: &DimensionlessParams,
    formulation: Formulation,
    opts: &Options,
) -> Result<Branch> {
    let x0 = center.xi0;
    Ok(match formulation {
        Formulation::FourComponent => {
            let sys = FourComponentSystem { params: *params };
            Branch::Four(Arc::new(ode::integrate(&sys, x0, center.field_state().to_array(), x_end, opts)?))
        }
        Formulation::Reduced => {
            let sys = AmplitudeSystem { params: *params, hl: center.hl };
            let (a, b) = (center.r.sqrt(), center.l.sqrt());
            let da = if a > 0.0 { center.dr / (2.0 * a) } else { 0.0 };
            let db = if b > 0.0 { center.dl / (2.0 * b) } else { 0.0 };
            let y0 = [a, da, b, db, 0.0, 0.0];
            Branch::Amplitude(Arc::new(ode::integrate(&sys, x0, y0, x_end, opts)?), sys)
        }
        Formulation::ReducedFlux => {
            let sys = FluxSystem { params: *params, hl: center.hl };
            let y0 = [center.r, center.dr, center.l, center.dl, 0.0, 0.0];
            Branch::Flux(Arc::new(ode::integrate(&sys, x0, y0, x_end, opts)?), sys)
        }
    })
}

/// Integrates the profile equations over `span` starting from `center`.
///
/// If the span straddles the center both directions are integrated and the
/// samples concatenated in increasing `xi`.
pub fn integrate_profile(
    center: &CenterData,
    span: (f64, f64),
    params: &DimensionlessParams,
    formulation: Formulation,
    opts: &ProfileOptions,
) -> Result<ProfileGrid> {
    params.validate()?;
    center.validate()?;
    let (a, b) = span;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(PsrError::InvalidSpec(format!("profile span must satisfy start < end, got [{a}, {b}]")));
    }
    if !(opts.rtol > 0.0) {
        return Err(PsrError::InvalidSpec(format!("integration tolerance must be positive, got {}", opts.rtol)));
    }
    if opts.samples < 2 {
        return Err(PsrError::InvalidSpec("profile needs at least 2 output samples".into()));
    }
    if formulation == Formulation::ReducedFlux && !(center.r > INTENSITY_FLOOR && center.l > INTENSITY_FLOOR) {
        return Err(PsrError::Singularity {
            xi: center.xi0,
            field: if center.r > INTENSITY_FLOOR { "L" } else { "R" },
            floor: INTENSITY_FLOOR,
        });
    }
    let ode_opts = Options { rtol: opts.rtol, atol: opts.atol, h0: None, h_max: None, max_steps: opts.max_steps };
    let x0 = center.xi0;
    let forward = if b > x0 { Some(integrate_branch(center, b, params, formulation, &ode_opts)?) } else { None };
    let backward = if a < x0 { Some(integrate_branch(center, a, params, formulation, &ode_opts)?) } else { None };

    let mut diagnostics = GridDiagnostics::default();
    for br in forward.iter().chain(backward.iter()) {
        let s = br.stats();
        diagnostics.accepted_steps += s.accepted;
        diagnostics.rejected_steps += s.rejected;
        diagnostics.evaluations += s.evals;
    }
    let trajectory = Arc::new(Trajectory { xi0: x0, forward, backward, params: *params });

    let n = opts.samples;
    let dx = (b - a) / (n - 1) as f64;
    let points: Vec<ProfilePoint> = (0..n)
        .map(|i| {
            let xi = if i == n - 1 { b } else { a + dx * i as f64 };
            trajectory.point(xi)
        })
        .collect();

    let mut grid = ProfileGrid {
        points,
        hl: center.hl,
        params: *params,
        formulation: Some(formulation),
        diagnostics,
        trajectory: Some(trajectory),
    };
    grid.refresh_diagnostics();
    Ok(grid)
}

/// Mean constants and their drift along a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    /// Mean over points where the constants are defined.
    pub mean: ConservedPair,
    pub h_drift: f64,
    pub l_drift: f64,
    pub undefined_points: usize,
    /// False when no point had `R + L` above the floor.
    pub defined: bool,
}

/// Pointwise `(h, l)` from the fields, their means and largest deviations.
pub fn conserved_quantities(grid: &ProfileGrid) -> ConservationReport {
    let vals: Vec<ConservedPair> = grid.points.iter().filter_map(|p| p.state.conserved()).collect();
    let undefined = grid.points.len() - vals.len();
    if vals.is_empty() {
        return ConservationReport {
            mean: ConservedPair { h: f64::NAN, l: f64::NAN },
            h_drift: f64::NAN,
            l_drift: f64::NAN,
            undefined_points: undefined,
            defined: false,
        };
    }
    let n = vals.len() as f64;
    let mh = vals.iter().map(|c| c.h).sum::<f64>() / n;
    let ml = vals.iter().map(|c| c.l).sum::<f64>() / n;
    let hd = vals.iter().map(|c| (c.h - mh).abs()).fold(0.0, f64::max);
    let ld = vals.iter().map(|c| (c.l - ml).abs()).fold(0.0, f64::max);
    ConservationReport { mean: ConservedPair { h: mh, l: ml }, h_drift: hd, l_drift: ld, undefined_points: undefined, defined: true }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremum {
    Maximum,
    Minimum,
    /// Stationary without a sign change (inflection or constant).
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    pub xi: f64,
    pub value: f64,
    pub kind: Extremum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    R,
    L,
}

fn channel_value(p: &ProfilePoint, c: Channel) -> (f64, f64) {
    match c {
        Channel::R => (p.r, p.dr),
        Channel::L => (p.l, p.dl),
    }
}

/// Stationary points of `R` or `L`: sign changes of the derivative between
/// samples, refined by bisection on the dense output to
/// `|R'| < rel_tol * max|R'|`.
pub fn stationary_points(grid: &ProfileGrid, channel: Channel, rel_tol: f64) -> Vec<StationaryPoint> {
    let pts = &grid.points;
    if pts.len() < 2 {
        return Vec::new();
    }
    let ds: Vec<f64> = pts.iter().map(|p| channel_value(p, channel).1).collect();
    let scale = ds.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let zero_tol = rel_tol * scale;
    let deriv_at = |xi: f64| -> f64 {
        let p = grid.point_at(xi).expect("grid is not empty");
        channel_value(&p, channel).1
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < pts.len() {
        let d = ds[i];
        if d.abs() <= zero_tol {
            // stationary exactly at a sample; classify from the neighbours
            let before = if i > 0 { ds[i - 1] } else { f64::NAN };
            let after = if i + 1 < pts.len() { ds[i + 1] } else { f64::NAN };
            let kind = classify(before, after);
            out.push(StationaryPoint { xi: pts[i].xi, value: channel_value(&pts[i], channel).0, kind });
            i += 2;
            continue;
        }
        if i + 1 < pts.len() {
            let dn = ds[i + 1];
            if dn.abs() > zero_tol && d.signum() != dn.signum() {
                let (mut lo, mut hi) = (pts[i].xi, pts[i + 1].xi);
                let mut dlo = d;
                let mut mid = 0.5 * (lo + hi);
                for _ in 0..200 {
                    mid = 0.5 * (lo + hi);
                    let dm = deriv_at(mid);
                    if dm.abs() <= zero_tol || hi - lo <= 4.0 * f64::EPSILON * mid.abs().max(1.0) {
                        break;
                    }
                    if dm.signum() == dlo.signum() {
                        lo = mid;
                        dlo = dm;
                    } else {
                        hi = mid;
                    }
                }
                let p = grid.point_at(mid).expect("grid is not empty");
                let kind = if d > 0.0 { Extremum::Maximum } else { Extremum::Minimum };
                out.push(StationaryPoint { xi: mid, value: channel_value(&p, channel).0, kind });
            }
        }
        i += 1;
    }
    out
}

fn classify(before: f64, after: f64) -> Extremum {
    match (before.is_nan(), after.is_nan()) {
        (false, false) if before > 0.0 && after < 0.0 => Extremum::Maximum,
        (false, false) if before < 0.0 && after > 0.0 => Extremum::Minimum,
        (true, false) if after < 0.0 => Extremum::Maximum,
        (true, false) if after > 0.0 => Extremum::Minimum,
        (false, true) if before > 0.0 => Extremum::Maximum,
        (false, true) if before < 0.0 => Extremum::Minimum,
        _ => Extremum::Flat,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolitonTag {
    Emitter,
    Absorber,
    Symmetric,
}

impl SolitonTag {
    pub fn letter(&self) -> char {
        match self {
            SolitonTag::Emitter => 'E',
            SolitonTag::Absorber => 'A',
            SolitonTag::Symmetric => 'S',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonSegment {
    pub xi_start: f64,
    pub xi_end: f64,
    pub tag: SolitonTag,
    /// Integrated activity over the segment.
    pub eta: f64,
    pub delta_r: f64,
    pub delta_l: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolitonReport {
    pub segments: Vec<SolitonSegment>,
    /// Constant profile: a single segment covering the grid.
    pub degenerate: bool,
    pub note: Option<String>,
}

impl SolitonReport {
    /// Tag chain such as `E-A-E-A`.
    pub fn chain(&self) -> String {
        self.segments.iter().map(|s| s.tag.letter().to_string()).collect::<Vec<_>>().join("-")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Joint {
    xi: f64,
    r: f64,
    l: f64,
}

/// Splits the grid into solitons bounded by adjacent joint stationary points
/// of `R` and `L`, with the default pairing fraction.
pub fn extract_solitons(grid: &ProfileGrid, tol: f64) -> SolitonReport {
    extract_solitons_with(grid, tol, DEFAULT_PAIRING_FRACTION)
}

/// As [`extract_solitons`]; stationary points of `R` and `L` closer than
/// `pairing_fraction` times the median spacing of `R` stationary points are
/// treated as one joint boundary.
pub fn extract_solitons_with(grid: &ProfileGrid, tol: f64, pairing_fraction: f64) -> SolitonReport {
    let sr = stationary_points(grid, Channel::R, tol);
    let sl = stationary_points(grid, Channel::L, tol);
    let max_dr = grid.points.iter().map(|p| p.dr.abs().max(p.dl.abs())).fold(0.0, f64::max);
    let scale = grid.points.iter().map(|p| p.r.max(p.l)).fold(0.0, f64::max);

    if grid.points.len() >= 2 && max_dr <= 1e-12 * scale.max(1e-300) {
        let (a, b) = (grid.points[0].xi, grid.points[grid.points.len() - 1].xi);
        return SolitonReport {
            segments: vec![SolitonSegment {
                xi_start: a,
                xi_end: b,
                tag: SolitonTag::Symmetric,
                eta: segment_eta(grid, a, b),
                delta_r: 0.0,
                delta_l: 0.0,
            }],
            degenerate: true,
            note: Some("constant profile: single degenerate segment".into()),
        };
    }
    if sr.is_empty() || sl.is_empty() {
        return SolitonReport {
            segments: Vec::new(),
            degenerate: false,
            note: Some("no stationary points of both R and L on the grid".into()),
        };
    }

    let spacing = median_spacing(&sr.iter().map(|s| s.xi).collect::<Vec<_>>())
        .or_else(|| median_spacing(&sl.iter().map(|s| s.xi).collect::<Vec<_>>()))
        .unwrap_or(grid.points[grid.points.len() - 1].xi - grid.points[0].xi);
    let window = pairing_fraction * spacing;

    // greedy nearest pairing in increasing xi
    let mut joints = Vec::new();
    let mut j = 0;
    for a in &sr {
        while j < sl.len() && sl[j].xi < a.xi - window {
            j += 1;
        }
        let mut best: Option<usize> = None;
        let mut k = j;
        while k < sl.len() && sl[k].xi <= a.xi + window {
            if best.is_none_or(|b| (sl[k].xi - a.xi).abs() < (sl[b].xi - a.xi).abs()) {
                best = Some(k);
            }
            k += 1;
        }
        if let Some(b) = best {
            joints.push(Joint { xi: 0.5 * (a.xi + sl[b].xi), r: a.value, l: sl[b].value });
            j = b + 1;
        }
    }
    if joints.len() < 2 {
        return SolitonReport {
            segments: Vec::new(),
            degenerate: false,
            note: Some(format!("found {} joint stationary point(s); need two to bound a soliton", joints.len())),
        };
    }

    let eps = 1e-9 * scale;
    let segments = joints
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let delta_r = b.r - a.r;
            let delta_l = b.l - a.l;
            let tag = if delta_r > eps && delta_l < -eps {
                SolitonTag::Emitter
            } else if delta_l > eps && delta_r < -eps {
                SolitonTag::Absorber
            } else {
                SolitonTag::Symmetric
            };
            SolitonSegment { xi_start: a.xi, xi_end: b.xi, tag, eta: segment_eta(grid, a.xi, b.xi), delta_r, delta_l }
        })
        .collect();
    SolitonReport { segments, degenerate: false, note: None }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn median_spacing(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let mut d: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    Some(median(&mut d))
}

/// Integral of `d eta / d xi` over `[a, b]` by composite Simpson on the
/// dense output, or trapezoid on the samples without one.
pub fn segment_eta(grid: &ProfileGrid, a: f64, b: f64) -> f64 {
    if let Some(t) = &grid.trajectory {
        let n = 512;
        let h = (b - a) / n as f64;
        let mut s = t.point(a).deta + t.point(b).deta;
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * t.point(a + h * i as f64).deta;
        }
        return s * h / 3.0;
    }
    let mut s = 0.0;
    for w in grid.points.windows(2) {
        let (lo, hi) = (w[0].xi.max(a), w[1].xi.min(b));
        if hi > lo {
            s += 0.5 * (w[0].deta + w[1].deta) * (hi - lo);
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodEstimate {
    /// Median spacing of successive maxima of `R`.
    pub period: f64,
    /// Coefficient of variation of the spacings.
    pub cv: f64,
    pub maxima: Vec<f64>,
}

/// Period of the structure from the maxima of `R`.
pub fn detect_period(grid: &ProfileGrid) -> Result<PeriodEstimate> {
    let maxima: Vec<f64> =
        stationary_points(grid, Channel::R, 1e-9).into_iter().filter(|s| s.kind == Extremum::Maximum).map(|s| s.xi).collect();
    if maxima.len() < 3 {
        return Err(PsrError::InsufficientData(format!(
            "period detection needs at least 3 maxima of R, found {}",
            maxima.len()
        )));
    }
    let mut d: Vec<f64> = maxima.windows(2).map(|w| w[1] - w[0]).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let cv = var.sqrt() / mean;
    Ok(PeriodEstimate { period: median(&mut d), cv, maxima })
}

/// Largest distance from a maximum of `R` to the nearest maximum of `L`, as
/// a fraction of the period of `R`.
pub fn maxima_offset(grid: &ProfileGrid) -> Result<f64> {
    let period = detect_period(grid)?;
    let ml: Vec<f64> =
        stationary_points(grid, Channel::L, 1e-9).into_iter().filter(|s| s.kind == Extremum::Maximum).map(|s| s.xi).collect();
    if ml.is_empty() {
        return Err(PsrError::InsufficientData("no maxima of L".into()));
    }
    let worst = period
        .maxima
        .iter()
        .map(|x| ml.iter().map(|y| (x - y).abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    Ok(worst / period.period)
}
