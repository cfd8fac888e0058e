//! Scale units and dimensionless parameters of a two-level target.
//!
//! Every solver in this crate works in the dimensionless system where time is
//! measured in `t0`, length in `c t0` and field strength squared in `E0^2`.
//! The only parameters that survive the reduction are the polarizability
//! ratios `gamma_plus`, `gamma_minus` and the relaxation times `tau1`, `tau2`.

use serde::{Deserialize, Serialize};

use crate::error::{PsrError, Result};

/// Reduced Planck constant, eV s.
pub const HBAR_EV_S: f64 = 6.582_119_569_51e-16;
/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Joules per electron volt.
pub const JOULE_PER_EV: f64 = 1.602_176_634_00e-19;

/// Relaxation times, either already in units of `t0` or in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "convention", rename_all = "snake_case")]
pub enum Relaxation {
    Dimensionless { tau1: f64, tau2: f64 },
    Seconds { t1: f64, t2: f64 },
}

/// Physical description of the target medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumSpec {
    /// Polarizability matrix elements, cm^3.
    pub alpha_ee: f64,
    pub alpha_gg: f64,
    pub alpha_ge: f64,
    /// Transition energy, eV.
    pub epsilon_eg: f64,
    /// Number density, cm^-3.
    pub n: f64,
    pub relaxation: Relaxation,
}

impl MediumSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(PsrError::InvalidSpec(format!("{name} must be positive, got {v}")))
            }
        };
        positive("alpha_ge", self.alpha_ge)?;
        positive("epsilon_eg", self.epsilon_eg)?;
        positive("n", self.n)?;
        for (name, v) in [("alpha_ee", self.alpha_ee), ("alpha_gg", self.alpha_gg)] {
            if !v.is_finite() || v < 0.0 {
                return Err(PsrError::InvalidSpec(format!("{name} must be non-negative, got {v}")));
            }
        }
        match self.relaxation {
            Relaxation::Dimensionless { tau1, tau2 } => {
                positive("tau1", tau1)?;
                positive("tau2", tau2)?;
            }
            Relaxation::Seconds { t1, t2 } => {
                positive("T1_s", t1)?;
                positive("T2_s", t2)?;
            }
        }
        Ok(())
    }

    /// Non-fatal issues with the specification (currently only T1 < T2).
    pub fn warnings(&self) -> Vec<String> {
        let (a, b) = match self.relaxation {
            Relaxation::Dimensionless { tau1, tau2 } => (tau1, tau2),
            Relaxation::Seconds { t1, t2 } => (t1, t2),
        };
        if a < b {
            vec![format!("T1 < T2 ({a} < {b}); equations remain defined but the medium is unusual")]
        } else {
            Vec::new()
        }
    }

    /// Same medium at density `n * factor`.
    pub fn rescaled_density(&self, factor: f64) -> Self {
        Self { n: self.n * factor, ..*self }
    }
}

/// Basic scale units derived from the medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedUnits {
    /// Time unit, s.
    pub t0: f64,
    /// Length unit `c t0`, m.
    pub l0: f64,
    /// Field strength squared expressed as an intensity, W m^-2.
    pub e0_sq: f64,
}

impl DerivedUnits {
    pub fn ct0_mm(&self) -> f64 {
        self.l0 * 1e3
    }

    pub fn e0_sq_tw_per_mm2(&self) -> f64 {
        self.e0_sq * 1e-6 * 1e-12
    }
}

/// The dimensionless parameter set entering every profile equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessParams {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl DimensionlessParams {
    pub fn new(gamma_plus: f64, gamma_minus: f64, tau1: f64, tau2: f64) -> Self {
        Self { gamma_plus, gamma_minus, tau1, tau2 }
    }

    /// Figure-grade para-H2 set: gamma_plus = 15, gamma_minus = 0.64.
    pub fn para_h2(tau1: f64, tau2: f64) -> Self {
        Self::new(PARA_H2_GAMMA_PLUS, PARA_H2_GAMMA_MINUS_QUOTED, tau1, tau2)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau1", self.tau1), ("tau2", self.tau2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(PsrError::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("gamma_plus", self.gamma_plus), ("gamma_minus", self.gamma_minus)] {
            if !v.is_finite() {
                return Err(PsrError::InvalidSpec(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    /// `tau1 / tau2 = T1 / T2`.
    pub fn tau_ratio(&self) -> f64 {
        self.tau1 / self.tau2
    }
}

/// `t0 = (eps/2 sqrt(alpha_ge n))^-1`, `l0 = c t0`, `E0^2 = eps sqrt(n / alpha_ge)`.
pub fn derive_units(spec: &MediumSpec) -> Result<DerivedUnits> {
    spec.validate()?;
    // alpha_ge * n is dimensionless (cm^3 * cm^-3).
    let coupling = (spec.alpha_ge * spec.n).sqrt();
    let t0 = HBAR_EV_S / (0.5 * spec.epsilon_eg * coupling);
    let l0 = SPEED_OF_LIGHT * t0;
    // eps * n / sqrt(alpha n) is an energy density; times c gives W m^-2.
    let n_per_m3 = spec.n * 1e6;
    let e0_sq = SPEED_OF_LIGHT * spec.epsilon_eg * JOULE_PER_EV * n_per_m3 / coupling;
    Ok(DerivedUnits { t0, l0, e0_sq })
}

/// Polarizability ratios and relaxation times in units of `t0`.
pub fn dimensionless_params(spec: &MediumSpec) -> Result<DimensionlessParams> {
    spec.validate()?;
    let two_ge = 2.0 * spec.alpha_ge;
    let gamma_plus = (spec.alpha_ee + spec.alpha_gg) / two_ge;
    let gamma_minus = (spec.alpha_ee - spec.alpha_gg) / two_ge;
    let (tau1, tau2) = match spec.relaxation {
        Relaxation::Dimensionless { tau1, tau2 } => (tau1, tau2),
        Relaxation::Seconds { t1, t2 } => {
            let t0 = derive_units(spec)?.t0;
            (t1 / t0, t2 / t0)
        }
    };
    Ok(DimensionlessParams { gamma_plus, gamma_minus, tau1, tau2 })
}

pub const PARA_H2_ALPHA_EE: f64 = 1.1e-23;
pub const PARA_H2_ALPHA_GG: f64 = 1.0e-23;
pub const PARA_H2_ALPHA_GE: f64 = 0.069e-23;
pub const PARA_H2_EPSILON_EG: f64 = 0.52;
pub const PARA_H2_GAMMA_PLUS: f64 = 15.0;
/// Quoted value used by all figure scenarios. The polarizability matrix
/// itself gives (1.1 - 1.0) / (2 * 0.069) = 0.7246; both are exposed.
pub const PARA_H2_GAMMA_MINUS_QUOTED: f64 = 0.64;
pub const DEFAULT_DENSITY: f64 = 1e21;

/// Para-H2 v = 0 <-> 1 preset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParaH2Preset {
    pub spec: MediumSpec,
    /// Quoted figure-grade parameters (gamma_plus = 15, gamma_minus = 0.64).
    pub params: DimensionlessParams,
    /// Parameters computed directly from the polarizability matrix.
    pub params_from_alpha: DimensionlessParams,
}

/// Para-H2 preset at `n = 1e21 cm^-3` with `tau1 = 1000`, `tau2 = 10`.
///
/// The relaxation times are placeholders; callers override them per scenario.
pub fn preset_para_h2() -> (MediumSpec, DimensionlessParams) {
    let p = para_h2_preset(DEFAULT_DENSITY, 1000.0, 10.0);
    (p.spec, p.params)
}

pub fn para_h2_preset(n: f64, tau1: f64, tau2: f64) -> ParaH2Preset {
    let spec = MediumSpec {
        alpha_ee: PARA_H2_ALPHA_EE,
        alpha_gg: PARA_H2_ALPHA_GG,
        alpha_ge: PARA_H2_ALPHA_GE,
        epsilon_eg: PARA_H2_EPSILON_EG,
        n,
        relaxation: Relaxation::Dimensionless { tau1, tau2 },
    };
    let params_from_alpha = DimensionlessParams {
        gamma_plus: (PARA_H2_ALPHA_EE + PARA_H2_ALPHA_GG) / (2.0 * PARA_H2_ALPHA_GE),
        gamma_minus: (PARA_H2_ALPHA_EE - PARA_H2_ALPHA_GG) / (2.0 * PARA_H2_ALPHA_GE),
        tau1,
        tau2,
    };
    ParaH2Preset { spec, params: DimensionlessParams::para_h2(tau1, tau2), params_from_alpha }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn para_h2_scale_units() {
        let (spec, _) = preset_para_h2();
        let u = derive_units(&spec).unwrap();
        assert!(rel(u.ct0_mm(), 0.03) < 0.15, "ct0 = {} mm", u.ct0_mm());
        assert!(rel(u.e0_sq_tw_per_mm2(), 1.0) < 0.30, "E0^2 = {}", u.e0_sq_tw_per_mm2());
    }

    #[test]
    fn density_scaling_is_power_law() {
        let (spec, _) = preset_para_h2();
        let a = derive_units(&spec).unwrap();
        let b = derive_units(&spec.rescaled_density(4.0)).unwrap();
        assert!(rel(b.t0, 0.5 * a.t0) < 1e-14);
        assert!(rel(b.e0_sq, 2.0 * a.e0_sq) < 1e-14);
    }

    #[test]
    fn gamma_ratios_from_alpha() {
        let (spec, quoted) = preset_para_h2();
        let p = dimensionless_params(&spec).unwrap();
        assert!((p.gamma_plus - 2.1 / 0.138).abs() < 1e-12);
        assert!((p.gamma_plus - 15.22).abs() < 0.01);
        assert!((p.gamma_minus - 0.1 / 0.138).abs() < 1e-12);
        assert!((p.gamma_minus - 0.725).abs() < 1e-3);
        assert_eq!(quoted.gamma_plus, 15.0);
        assert_eq!(quoted.gamma_minus, 0.64);
        assert_eq!(spec.epsilon_eg, 0.52);
    }

    #[test]
    fn symmetric_polarizability_has_no_gamma_minus() {
        let (mut spec, _) = preset_para_h2();
        spec.alpha_gg = spec.alpha_ee;
        assert_eq!(dimensionless_params(&spec).unwrap().gamma_minus, 0.0);
    }

    #[test]
    fn seconds_convention_round_trips_ratio() {
        let (mut spec, _) = preset_para_h2();
        spec.relaxation = Relaxation::Seconds { t1: 3.7e-9, t2: 2.9e-11 };
        let p = dimensionless_params(&spec).unwrap();
        assert!(rel(p.tau1 / p.tau2, 3.7e-9 / 2.9e-11) < 1e-15);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let (spec, _) = preset_para_h2();
        for bad in [
            MediumSpec { alpha_ge: 0.0, ..spec },
            MediumSpec { n: -1.0, ..spec },
            MediumSpec { epsilon_eg: 0.0, ..spec },
            MediumSpec { relaxation: Relaxation::Dimensionless { tau1: 1.0, tau2: -1.0 }, ..spec },
        ] {
            assert!(matches!(derive_units(&bad), Err(PsrError::InvalidSpec(_))));
        }
    }

    #[test]
    fn t1_below_t2_only_warns() {
        let (mut spec, _) = preset_para_h2();
        spec.relaxation = Relaxation::Dimensionless { tau1: 1.0, tau2: 10.0 };
        assert_eq!(spec.warnings().len(), 1);
        assert!(dimensionless_params(&spec).is_ok());
    }
}
