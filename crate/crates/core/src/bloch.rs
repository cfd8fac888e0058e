//! Steady-state Bloch vector of the two-level medium under static fields.
//!
//! The steady state solves `Rm r = (0, 0, 1)` where
//! `Rm = tau1 A - diag(tau1/tau2, tau1/tau2, 1)` and `A` is antisymmetric
//! with `a = 2 gamma_minus (R + L)`, `b = -4 Y`, `c = 4 X`. Two routes are
//! provided: an explicit 3x3 solve, used as the reference, and closed forms.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PsrError, Result};
use crate::units::DimensionlessParams;

/// Real components `(Re e_R, Im e_R, Re e_L, Im e_L)` in units of `E0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldPair {
    pub e: [f64; 4],
}

impl FieldPair {
    pub fn new(e_r_re: f64, e_r_im: f64, e_l_re: f64, e_l_im: f64) -> Self {
        Self { e: [e_r_re, e_r_im, e_l_re, e_l_im] }
    }

    pub fn from_complex(e_r: Complex64, e_l: Complex64) -> Self {
        Self::new(e_r.re, e_r.im, e_l.re, e_l.im)
    }

    /// Real fields `e_R = sqrt(R)`, `e_L = sqrt(L)`.
    pub fn from_intensities(r: f64, l: f64) -> Self {
        Self::new(r.max(0.0).sqrt(), 0.0, l.max(0.0).sqrt(), 0.0)
    }

    pub fn e_r(&self) -> Complex64 {
        Complex64::new(self.e[0], self.e[1])
    }

    pub fn e_l(&self) -> Complex64 {
        Complex64::new(self.e[2], self.e[3])
    }

    /// Right-mover intensity `R = |e_R|^2`.
    pub fn r(&self) -> f64 {
        self.e[0] * self.e[0] + self.e[1] * self.e[1]
    }

    /// Left-mover intensity `L = |e_L|^2`.
    pub fn l(&self) -> f64 {
        self.e[2] * self.e[2] + self.e[3] * self.e[3]
    }

    /// `X = Re(e_R e_L)`.
    pub fn x(&self) -> f64 {
        self.e[0] * self.e[2] - self.e[1] * self.e[3]
    }

    /// `Y = Im(e_R e_L)`.
    pub fn y(&self) -> f64 {
        self.e[0] * self.e[3] + self.e[1] * self.e[2]
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.e[2], self.e[3], self.e[0], self.e[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochVector {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl BlochVector {
    pub const GROUND: BlochVector = BlochVector { r1: 0.0, r2: 0.0, r3: -1.0 };

    /// Coherence `r_T = r1 + i r2`.
    pub fn r_t(&self) -> Complex64 {
        Complex64::new(self.r1, self.r2)
    }

    pub fn coherence_sq(&self) -> f64 {
        self.r1 * self.r1 + self.r2 * self.r2
    }

    pub fn norm_sq(&self) -> f64 {
        self.coherence_sq() + self.r3 * self.r3
    }
}

/// Entries `a, b, c` of the antisymmetric matrix.
pub fn coupling_entries(fields: &FieldPair) -> (f64, f64, f64, f64) {
    // gamma_minus is applied by the caller; returned is (R + L, b, c, R L)
    let s = fields.r() + fields.l();
    (s, -4.0 * fields.y(), 4.0 * fields.x(), fields.r() * fields.l())
}

/// `Rm = tau1 A - diag(tau1/tau2, tau1/tau2, 1)`.
pub fn build_bloch_matrix(fields: &FieldPair, params: &DimensionlessParams) -> Matrix3<f64> {
    let (s, b, c, _) = coupling_entries(fields);
    let a = 2.0 * params.gamma_minus * s;
    let t1 = params.tau1;
    let p = params.tau_ratio();
    Matrix3::new(
        -p,
        t1 * a,
        -t1 * b,
        -t1 * a,
        -p,
        t1 * c,
        t1 * b,
        -t1 * c,
        -1.0,
    )
}

/// Reference steady state by LU solve of the 3x3 system.
pub fn steady_state_matrix(fields: &FieldPair, params: &DimensionlessParams) -> Result<BlochVector> {
    let m = build_bloch_matrix(fields, params);
    let sol = m
        .lu()
        .solve(&Vector3::new(0.0, 0.0, 1.0))
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .ok_or(PsrError::SingularMatrix { tau1: params.tau1, tau2: params.tau2 })?;
    Ok(BlochVector { r1: sol[0], r2: sol[1], r3: sol[2] })
}

/// Pieces of the closed-form solution shared by several callers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateTerms {
    /// `1 + 4 gamma_minus^2 tau2^2 (R + L)^2`
    pub numerator: f64,
    /// `numerator + 16 tau1 tau2 R L`
    pub denominator: f64,
    /// `a tau2 = 2 gamma_minus tau2 (R + L)`
    pub a_tau2: f64,
}

/// `numerator` and `D` from intensities alone.
pub fn steady_state_terms(r: f64, l: f64, params: &DimensionlessParams) -> SteadyStateTerms {
    let a_tau2 = 2.0 * params.gamma_minus * params.tau2 * (r + l);
    let numerator = 1.0 + a_tau2 * a_tau2;
    let denominator = numerator + 16.0 * params.tau1 * params.tau2 * (r * l);
    SteadyStateTerms { numerator, denominator, a_tau2 }
}

/// Population difference from intensities:
/// `r3 = -(1 + 4 gamma_minus^2 tau2^2 (R+L)^2) / D`.
pub fn population_difference(r: f64, l: f64, params: &DimensionlessParams) -> f64 {
    let t = steady_state_terms(r, l, params);
    // -1 / (1 + q) keeps r3 in [-1, 0] even when both terms overflow-prone
    let q = 16.0 * params.tau1 * params.tau2 * (r * l) / t.numerator;
    -1.0 / (1.0 + q)
}

/// Closed-form steady state.
pub fn steady_state_closed_form(fields: &FieldPair, params: &DimensionlessParams) -> BlochVector {
    let (r, l) = (fields.r(), fields.l());
    let (x, y) = (fields.x(), fields.y());
    let t = steady_state_terms(r, l, params);
    let q = 16.0 * params.tau1 * params.tau2 * (r * l) / t.numerator;
    let scale = -4.0 * params.tau2 / (t.numerator * (1.0 + q));
    BlochVector {
        r1: scale * (y + t.a_tau2 * x),
        r2: scale * (x - t.a_tau2 * y),
        r3: -1.0 / (1.0 + q),
    }
}

/// Activity integrand `(r1^2 + r2^2)(R + L)`.
pub fn eta_integrand(fields: &FieldPair, params: &DimensionlessParams) -> f64 {
    let b = steady_state_closed_form(fields, params);
    b.coherence_sq() * (fields.r() + fields.l())
}

/// Expanded form `16 tau2^2 R L (R+L) (1 + a^2 tau2^2) / D^2` of [`eta_integrand`].
pub fn eta_integrand_expanded(r: f64, l: f64, params: &DimensionlessParams) -> f64 {
    let t = steady_state_terms(r, l, params);
    16.0 * params.tau2 * params.tau2 * r * l * (r + l) * t.numerator
        / (t.denominator * t.denominator)
}

/// The same expression with the prefactor 8 instead of 16, kept for
/// comparison with the half-size normalization.
pub fn eta_integrand_half(r: f64, l: f64, params: &DimensionlessParams) -> f64 {
    0.5 * eta_integrand_expanded(r, l, params)
}
