//! Scenario configuration.
//!
//! A configuration file is TOML with `[scenario.NAME]` tables using dotted
//! keys (`boundary.R0 = 1e-4`). Settings are layered: built-in defaults, the
//! chain of `base` scenarios, the scenario itself, then `--override K=V`
//! pairs in order (last wins). Every key is checked against a registry so
//! that errors name the offending key.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Serialize;
use toml::Value;

use crate::eigenwell::{IterationOptions, WellSpec};
use crate::error::{PsrError, Result};
use crate::profile::{CenterData, ConservedPair, FieldState4, Formulation, ProfileOptions};
use crate::units::{self, DimensionlessParams, MediumSpec, Relaxation};

/// Built-in scenarios shipped with the tool.
pub const PRESETS: &str = include_str!("presets.toml");

/// Flattened settings of one scenario, keyed by dotted name.
pub type Settings = BTreeMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Float,
    Int,
    Bool,
    Str,
    Floats(usize),
    Axes,
}

const KEYS: &[(&str, Kind)] = &[
    ("base", Kind::Str),
    ("mode", Kind::Str),
    ("description", Kind::Str),
    ("medium.alpha_ee", Kind::Float),
    ("medium.alpha_gg", Kind::Float),
    ("medium.alpha_ge", Kind::Float),
    ("medium.epsilon_eg", Kind::Float),
    ("medium.n", Kind::Float),
    ("medium.tau1", Kind::Float),
    ("medium.tau2", Kind::Float),
    ("medium.T1_s", Kind::Float),
    ("medium.T2_s", Kind::Float),
    ("medium.gamma_plus", Kind::Float),
    ("medium.gamma_minus", Kind::Float),
    ("medium.gamma_from_alpha", Kind::Bool),
    ("boundary.R0", Kind::Float),
    ("boundary.L0", Kind::Float),
    ("boundary.dR0", Kind::Float),
    ("boundary.dL0", Kind::Float),
    ("boundary.h", Kind::Float),
    ("boundary.l", Kind::Float),
    ("boundary.xi0", Kind::Float),
    ("boundary.e", Kind::Floats(8)),
    ("profile.span", Kind::Floats(2)),
    ("profile.samples", Kind::Int),
    ("profile.rtol", Kind::Float),
    ("profile.atol", Kind::Float),
    ("profile.max_steps", Kind::Int),
    ("profile.formulation", Kind::Str),
    ("profile.segment_tol", Kind::Float),
    ("profile.pairing_fraction", Kind::Float),
    ("profile.drift_tol", Kind::Float),
    ("well.Delta", Kind::Float),
    ("well.d", Kind::Float),
    ("well.I_peak", Kind::Float),
    ("eigen.max_levels", Kind::Int),
    ("eigen.level", Kind::Int),
    ("eigen.damping", Kind::Float),
    ("eigen.tol", Kind::Float),
    ("eigen.max_iter", Kind::Int),
    ("eigen.selfconsistent", Kind::Bool),
    ("scan.R_max", Kind::Float),
    ("scan.L_max", Kind::Float),
    ("scan.steps", Kind::Int),
    ("scan.phase", Kind::Float),
    ("sweep.axes", Kind::Axes),
    ("sweep.max_cells", Kind::Int),
];

const ALIASES: &[(&str, &str)] = &[
    ("tau1", "medium.tau1"),
    ("tau2", "medium.tau2"),
    ("T1_s", "medium.T1_s"),
    ("T2_s", "medium.T2_s"),
    ("n", "medium.n"),
    ("gamma_plus", "medium.gamma_plus"),
    ("gamma_minus", "medium.gamma_minus"),
    ("R0", "boundary.R0"),
    ("L0", "boundary.L0"),
    ("dR0", "boundary.dR0"),
    ("dL0", "boundary.dL0"),
    ("h", "boundary.h"),
    ("l", "boundary.l"),
    ("xi0", "boundary.xi0"),
    ("span", "profile.span"),
    ("samples", "profile.samples"),
    ("rtol", "profile.rtol"),
    ("formulation", "profile.formulation"),
    ("Delta", "well.Delta"),
    ("d", "well.d"),
    ("I_peak", "well.I_peak"),
    ("max_levels", "eigen.max_levels"),
    ("level", "eigen.level"),
    ("damping", "eigen.damping"),
    ("max_iter", "eigen.max_iter"),
];

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, kind)| *kind)
}

/// Canonical dotted name for `key`, resolving short aliases.
pub fn canonical_key(key: &str) -> Result<String> {
    let key = key.trim();
    if kind_of(key).is_some() {
        return Ok(key.to_string());
    }
    if let Some((_, full)) = ALIASES.iter().find(|(a, _)| *a == key) {
        return Ok(full.to_string());
    }
    Err(PsrError::Config(format!("unknown key `{key}`")))
}

/// What a scenario computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Units,
    BlochScan,
    Profile,
    Eigen,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Units => "units",
            Mode::BlochScan => "bloch-scan",
            Mode::Profile => "profile",
            Mode::Eigen => "eigen",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "units" => Some(Mode::Units),
            "bloch-scan" => Some(Mode::BlochScan),
            "profile" => Some(Mode::Profile),
            "eigen" => Some(Mode::Eigen),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileConfig {
    pub center: CenterData,
    pub span: (f64, f64),
    pub options: ProfileOptions,
    #[serde(serialize_with = "serialize_formulation")]
    pub formulation: Formulation,
    pub segment_tol: f64,
    pub pairing_fraction: f64,
    pub drift_tol: f64,
}

fn serialize_formulation<S: serde::Serializer>(f: &Formulation, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(f.name())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenConfig {
    pub delta: f64,
    pub d: f64,
    pub max_levels: usize,
    pub selfconsistent: bool,
    pub hl: ConservedPair,
    pub iteration: IterationOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanConfig {
    pub r_max: f64,
    pub l_max: f64,
    pub steps: usize,
    /// Relative phase of `e_L` against `e_R`, radians.
    pub phase: f64,
}

/// One sweep dimension: a numeric key and the values it takes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<f64>,
}

/// Fully resolved scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub description: Option<String>,
    pub mode: Mode,
    pub medium: MediumSpec,
    pub params: DimensionlessParams,
    pub profile: ProfileConfig,
    pub eigen: EigenConfig,
    pub scan: ScanConfig,
    pub sweep: Vec<SweepAxis>,
    pub max_cells: usize,
    /// The layered settings the scenario was built from.
    #[serde(skip)]
    pub settings: Settings,
}

impl Scenario {
    pub fn well(&self) -> WellSpec {
        WellSpec::new(self.eigen.delta, self.eigen.d, self.params)
    }

    /// Settings as a JSON object for manifests.
    pub fn settings_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.settings).unwrap_or(serde_json::Value::Null)
    }

    /// Cartesian product of the sweep axes; the first axis varies slowest.
    pub fn sweep_cells(&self) -> Vec<Vec<(String, f64)>> {
        let mut cells: Vec<Vec<(String, f64)>> = vec![Vec::new()];
        for axis in &self.sweep {
            cells = cells
                .into_iter()
                .flat_map(|c| {
                    axis.values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push((axis.key.clone(), *v));
                        c
                    })
                })
                .collect();
        }
        cells
    }

    /// Scenario for one sweep cell: the same settings with the cell values
    /// applied and the sweep removed.
    pub fn cell(&self, values: &[(String, f64)]) -> Result<Scenario> {
        let mut s = self.settings.clone();
        s.remove("sweep.axes");
        for (k, v) in values {
            s.insert(k.clone(), Value::Float(*v));
        }
        Scenario::from_settings(&self.name, s, Some(self.mode))
    }

    /// Builds and validates a scenario from layered settings. `command`
    /// supplies the mode when the settings do not.
    pub fn from_settings(name: &str, settings: Settings, command: Option<Mode>) -> Result<Scenario> {
        let view = View { s: &settings };
        let mode = match (view.opt_str("mode")?, command) {
            (Some(m), cmd) => {
                let m = Mode::parse(m).ok_or_else(|| {
                    PsrError::Config(format!("mode must be one of units, bloch-scan, profile, eigen; got `{m}`"))
                })?;
                if let Some(c) = cmd {
                    if c != m {
                        return Err(PsrError::Config(format!(
                            "scenario `{name}` has mode = {m} but the {c} command was requested"
                        )));
                    }
                }
                m
            }
            (None, Some(c)) => c,
            (None, None) => return Err(PsrError::Config(format!("scenario `{name}` does not set a mode"))),
        };

        let medium = view.medium()?;
        let params = view.params(&medium)?;
        let profile = view.profile()?;
        let eigen = view.eigen()?;
        let scan = view.scan()?;
        let sweep = view.sweep()?;
        let max_cells = view.int("sweep.max_cells")?;
        let count: usize = sweep.iter().map(|a| a.values.len()).product();
        if count > max_cells {
            return Err(PsrError::Config(format!(
                "sweep has {count} cells, above sweep.max_cells = {max_cells}"
            )));
        }
        Ok(Scenario {
            name: name.to_string(),
            description: view.opt_str("description")?.map(str::to_string),
            mode,
            medium,
            params,
            profile,
            eigen,
            scan,
            sweep,
            max_cells,
            settings,
        })
    }
}

struct View<'a> {
    s: &'a Settings,
}

impl View<'_> {
    fn get(&self, key: &str) -> Result<&Value> {
        self.s.get(key).ok_or_else(|| PsrError::Config(format!("missing key `{key}`")))
    }

    fn float(&self, key: &str) -> Result<f64> {
        as_float(key, self.get(key)?)
    }

    fn opt_float(&self, key: &str) -> Result<Option<f64>> {
        self.s.get(key).map(|v| as_float(key, v)).transpose()
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v = self.float(key)?;
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(PsrError::Config(format!("{key} must be positive, got {v}")))
        }
    }

    fn finite(&self, key: &str) -> Result<f64> {
        let v = self.float(key)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(PsrError::Config(format!("{key} must be finite, got {v}")))
        }
    }

    fn non_negative(&self, key: &str) -> Result<f64> {
        let v = self.float(key)?;
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(PsrError::Config(format!("{key} must be non-negative, got {v}")))
        }
    }

    fn int(&self, key: &str) -> Result<usize> {
        let v = self.get(key)?;
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as usize),
            Value::Float(f) if *f >= 0.0 && f.fract() == 0.0 && *f <= u32::MAX as f64 => Ok(*f as usize),
            _ => Err(PsrError::Config(format!("{key} must be a non-negative integer, got {v}"))),
        }
    }

    fn boolean(&self, key: &str) -> Result<bool> {
        match self.get(key)? {
            Value::Boolean(b) => Ok(*b),
            v => Err(PsrError::Config(format!("{key} must be true or false, got {v}"))),
        }
    }

    fn opt_str(&self, key: &str) -> Result<Option<&str>> {
        match self.s.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(v) => Err(PsrError::Config(format!("{key} must be a string, got {v}"))),
        }
    }

    fn floats(&self, key: &str, n: usize) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.s.get(key) else { return Ok(None) };
        let arr = match v {
            Value::Array(a) if a.len() == n => a,
            _ => return Err(PsrError::Config(format!("{key} must be an array of {n} numbers, got {v}"))),
        };
        let out = arr.iter().map(|x| as_float(key, x)).collect::<Result<Vec<f64>>>()?;
        if let Some(bad) = out.iter().find(|x| !x.is_finite()) {
            return Err(PsrError::Config(format!("{key} entries must be finite, got {bad}")));
        }
        Ok(Some(out))
    }

    fn medium(&self) -> Result<MediumSpec> {
        let relaxation = match (self.opt_float("medium.T1_s")?, self.opt_float("medium.T2_s")?) {
            (Some(_), Some(_)) => Relaxation::Seconds { t1: self.positive("medium.T1_s")?, t2: self.positive("medium.T2_s")? },
            (Some(_), None) => return Err(PsrError::Config("medium.T1_s is set but medium.T2_s is missing".into())),
            (None, Some(_)) => return Err(PsrError::Config("medium.T2_s is set but medium.T1_s is missing".into())),
            (None, None) => Relaxation::Dimensionless { tau1: self.positive("medium.tau1")?, tau2: self.positive("medium.tau2")? },
        };
        let spec = MediumSpec {
            alpha_ee: self.non_negative("medium.alpha_ee")?,
            alpha_gg: self.non_negative("medium.alpha_gg")?,
            alpha_ge: self.positive("medium.alpha_ge")?,
            epsilon_eg: self.positive("medium.epsilon_eg")?,
            n: self.positive("medium.n")?,
            relaxation,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn params(&self, spec: &MediumSpec) -> Result<DimensionlessParams> {
        let from_alpha = units::dimensionless_params(spec)?;
        if self.boolean("medium.gamma_from_alpha")? {
            return Ok(from_alpha);
        }
        let p = DimensionlessParams {
            gamma_plus: self.finite("medium.gamma_plus")?,
            gamma_minus: self.finite("medium.gamma_minus")?,
            tau1: from_alpha.tau1,
            tau2: from_alpha.tau2,
        };
        p.validate()?;
        Ok(p)
    }

    fn profile(&self) -> Result<ProfileConfig> {
        let xi0 = self.finite("boundary.xi0")?;
        let center = match self.floats("boundary.e", 8)? {
            Some(e) => {
                let y: [f64; 8] = e.try_into().expect("length checked");
                CenterData::from_field_state(xi0, FieldState4::from_array(&y))
                    .map_err(|e| PsrError::Config(e.to_string()))?
            }
            None => CenterData {
                xi0,
                r: self.non_negative("boundary.R0")?,
                l: self.non_negative("boundary.L0")?,
                dr: self.finite("boundary.dR0")?,
                dl: self.finite("boundary.dL0")?,
                hl: ConservedPair::new(self.finite("boundary.h")?, self.finite("boundary.l")?),
                explicit: None,
            },
        };
        let span = self.floats("profile.span", 2)?.ok_or_else(|| PsrError::Config("missing key `profile.span`".into()))?;
        if !(span[0] < span[1]) {
            return Err(PsrError::Config(format!("profile.span must satisfy start < end, got [{}, {}]", span[0], span[1])));
        }
        let samples = self.int("profile.samples")?;
        if samples < 2 {
            return Err(PsrError::Config(format!("profile.samples must be at least 2, got {samples}")));
        }
        let formulation = match self.opt_str("profile.formulation")?.unwrap_or("reduced") {
            "reduced" => Formulation::Reduced,
            "flux" | "reduced-flux" => Formulation::ReducedFlux,
            "four-component" => Formulation::FourComponent,
            other => {
                return Err(PsrError::Config(format!(
                    "profile.formulation must be reduced, flux or four-component; got `{other}`"
                )))
            }
        };
        let pairing_fraction = self.positive("profile.pairing_fraction")?;
        if pairing_fraction >= 1.0 {
            return Err(PsrError::Config(format!("profile.pairing_fraction must be below 1, got {pairing_fraction}")));
        }
        Ok(ProfileConfig {
            center,
            span: (span[0], span[1]),
            options: ProfileOptions {
                rtol: self.positive("profile.rtol")?,
                atol: self.positive("profile.atol")?,
                samples,
                max_steps: self.int("profile.max_steps")?.max(1),
            },
            formulation,
            segment_tol: self.positive("profile.segment_tol")?,
            pairing_fraction,
            drift_tol: self.positive("profile.drift_tol")?,
        })
    }

    fn eigen(&self) -> Result<EigenConfig> {
        let delta = self.non_negative("well.Delta")?;
        let d = self.positive("well.d")?;
        let level = self.int("eigen.level")?;
        if level == 0 {
            return Err(PsrError::Config("eigen.level counts from 1, got 0".into()));
        }
        let damping = self.positive("eigen.damping")?;
        if damping > 1.0 {
            return Err(PsrError::Config(format!("eigen.damping must lie in (0, 1], got {damping}")));
        }
        let max_levels = self.int("eigen.max_levels")?;
        if max_levels == 0 {
            return Err(PsrError::Config("eigen.max_levels must be at least 1".into()));
        }
        let max_iter = self.int("eigen.max_iter")?;
        if max_iter == 0 {
            return Err(PsrError::Config("eigen.max_iter must be at least 1".into()));
        }
        Ok(EigenConfig {
            delta,
            d,
            max_levels,
            selfconsistent: self.boolean("eigen.selfconsistent")?,
            hl: ConservedPair::new(self.finite("boundary.h")?, self.finite("boundary.l")?),
            iteration: IterationOptions {
                level,
                max_iter,
                damping,
                tol: self.positive("eigen.tol")?,
                i_peak: self.positive("well.I_peak")?,
            },
        })
    }

    fn scan(&self) -> Result<ScanConfig> {
        let steps = self.int("scan.steps")?;
        if steps < 1 {
            return Err(PsrError::Config("scan.steps must be at least 1".into()));
        }
        Ok(ScanConfig {
            r_max: self.non_negative("scan.R_max")?,
            l_max: self.non_negative("scan.L_max")?,
            steps,
            phase: self.finite("scan.phase")?,
        })
    }

    fn sweep(&self) -> Result<Vec<SweepAxis>> {
        let Some(v) = self.s.get("sweep.axes") else { return Ok(Vec::new()) };
        let arr = v.as_array().ok_or_else(|| PsrError::Config(format!("sweep.axes must be an array of tables, got {v}")))?;
        arr.iter().enumerate().map(|(i, a)| parse_axis(i, a)).collect()
    }
}

fn parse_axis(index: usize, v: &Value) -> Result<SweepAxis> {
    let at = format!("sweep.axes[{index}]");
    let t = v.as_table().ok_or_else(|| PsrError::Config(format!("{at} must be a table, got {v}")))?;
    for k in t.keys() {
        if !matches!(k.as_str(), "key" | "values" | "min" | "max" | "steps" | "spacing") {
            return Err(PsrError::Config(format!("unknown key `{at}.{k}`")));
        }
    }
    let raw = t
        .get("key")
        .and_then(Value::as_str)
        .ok_or_else(|| PsrError::Config(format!("{at}.key must name a parameter")))?;
    let key = canonical_key(raw).map_err(|_| PsrError::Config(format!("{at}.key references unknown parameter `{raw}`")))?;
    if kind_of(&key) != Some(Kind::Float) {
        return Err(PsrError::Config(format!("{at}.key `{key}` is not a numeric scalar parameter")));
    }
    let num = |name: &str| -> Result<f64> {
        let v = t.get(name).ok_or_else(|| PsrError::Config(format!("{at}.{name} is missing")))?;
        as_float(&format!("{at}.{name}"), v)
    };
    let values = if let Some(vals) = t.get("values") {
        if t.contains_key("min") || t.contains_key("max") || t.contains_key("steps") {
            return Err(PsrError::Config(format!("{at} gives both values and min/max/steps")));
        }
        let a = vals
            .as_array()
            .ok_or_else(|| PsrError::Config(format!("{at}.values must be an array of numbers")))?;
        a.iter().map(|x| as_float(&format!("{at}.values"), x)).collect::<Result<Vec<f64>>>()?
    } else {
        let (lo, hi) = (num("min")?, num("max")?);
        let steps = match t.get("steps") {
            Some(Value::Integer(n)) if *n >= 1 => *n as usize,
            Some(other) => return Err(PsrError::Config(format!("{at}.steps must be a positive integer, got {other}"))),
            None => return Err(PsrError::Config(format!("{at}.steps is missing"))),
        };
        let log = match t.get("spacing").map(|s| s.as_str()) {
            None | Some(Some("linear")) => false,
            Some(Some("log")) => true,
            Some(_) => return Err(PsrError::Config(format!("{at}.spacing must be linear or log"))),
        };
        if log && !(lo > 0.0 && hi > 0.0) {
            return Err(PsrError::Config(format!("{at} log spacing needs positive min and max")));
        }
        axis_values(lo, hi, steps, log)
    };
    if values.is_empty() {
        return Err(PsrError::Config(format!("{at} has no values")));
    }
    if let Some(bad) = values.iter().find(|x| !x.is_finite()) {
        return Err(PsrError::Config(format!("{at} value {bad} is not finite")));
    }
    Ok(SweepAxis { key, values })
}

fn axis_values(lo: f64, hi: f64, steps: usize, log: bool) -> Vec<f64> {
    if steps == 1 {
        return vec![lo];
    }
    let (a, b) = if log { (lo.ln(), hi.ln()) } else { (lo, hi) };
    (0..steps)
        .map(|i| {
            let x = if i == steps - 1 { b } else { a + (b - a) * i as f64 / (steps - 1) as f64 };
            if log {
                if i == 0 {
                    lo
                } else if i == steps - 1 {
                    hi
                } else {
                    x.exp()
                }
            } else {
                x
            }
        })
        .collect()
}

fn as_float(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(PsrError::Config(format!("{key} must be a number, got {v}"))),
    }
}

fn check_value(key: &str, v: &Value) -> Result<()> {
    let kind = kind_of(key).ok_or_else(|| PsrError::Config(format!("unknown key `{key}`")))?;
    let ok = match kind {
        Kind::Float => matches!(v, Value::Float(_) | Value::Integer(_)),
        Kind::Int => matches!(v, Value::Integer(_)) || matches!(v, Value::Float(f) if f.fract() == 0.0),
        Kind::Bool => v.is_bool(),
        Kind::Str => v.is_str(),
        Kind::Floats(n) => v.as_array().is_some_and(|a| a.len() == n),
        Kind::Axes => v.is_array(),
    };
    if ok {
        Ok(())
    } else {
        let want = match kind {
            Kind::Float => "a number".to_string(),
            Kind::Int => "an integer".to_string(),
            Kind::Bool => "true or false".to_string(),
            Kind::Str => "a string".to_string(),
            Kind::Floats(n) => format!("an array of {n} numbers"),
            Kind::Axes => "an array of axis tables".to_string(),
        };
        Err(PsrError::Config(format!("{key} must be {want}, got {v}")))
    }
}

fn flatten_into(prefix: &str, table: &toml::Table, out: &mut Settings) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) if kind_of(&key).is_none() => flatten_into(&key, t, out)?,
            _ => {
                check_value(&key, v)?;
                out.insert(key, v.clone());
            }
        }
    }
    Ok(())
}

/// Parses `KEY=VALUE`. The value is read as a TOML value when possible; bare
/// words are taken as strings.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| PsrError::Config(format!("override `{s}` must have the form KEY=VALUE")))?;
    let key = canonical_key(k)?;
    let text = v.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {text}")) {
        Ok(mut t) => t.remove("v").expect("parsed table has key v"),
        Err(_) => Value::String(text.to_string()),
    };
    check_value(&key, &value)?;
    Ok((key, value))
}

/// A set of named scenarios with shared defaults.
#[derive(Debug, Clone, Default)]
pub struct ScenarioSet {
    defaults: Settings,
    scenarios: BTreeMap<String, Settings>,
}

impl ScenarioSet {
    /// Built-in presets.
    pub fn builtin() -> Self {
        Self::parse(PRESETS, "built-in presets").expect("built-in presets are valid")
    }

    /// Parses a configuration document; `origin` is used in messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| PsrError::Config(format!("{origin}: {e}")))?;
        let mut set = ScenarioSet::default();
        for (k, v) in &doc {
            match (k.as_str(), v) {
                ("defaults", Value::Table(t)) => flatten_into("", t, &mut set.defaults)?,
                ("scenario", Value::Table(t)) => {
                    for (name, body) in t {
                        let body = body
                            .as_table()
                            .ok_or_else(|| PsrError::Config(format!("{origin}: scenario.{name} must be a table")))?;
                        let mut s = Settings::new();
                        flatten_into("", body, &mut s)
                            .map_err(|e| PsrError::Config(format!("{origin}: scenario.{name}: {}", strip(&e))))?;
                        set.scenarios.insert(name.clone(), s);
                    }
                }
                _ => return Err(PsrError::Config(format!("{origin}: unexpected top-level key `{k}`"))),
            }
        }
        Ok(set)
    }

    /// Built-in presets overlaid by the contents of `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PsrError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let user = Self::parse(&text, &path.display().to_string())?;
        let mut set = Self::builtin();
        set.defaults.extend(user.defaults);
        set.scenarios.extend(user.scenarios);
        Ok(set)
    }

    pub fn names(&self) -> Vec<&str> {
        self.scenarios.keys().map(String::as_str).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.scenarios.contains_key(name)
    }

    /// Layered settings of `name`: defaults, its `base` chain, itself.
    pub fn settings(&self, name: &str) -> Result<Settings> {
        let mut chain = Vec::new();
        let mut cur = name.to_string();
        loop {
            if chain.contains(&cur) {
                return Err(PsrError::Config(format!("scenario `{name}` has a cyclic base chain through `{cur}`")));
            }
            let s = self.scenarios.get(&cur).ok_or_else(|| {
                if cur == name {
                    PsrError::Config(format!("unknown scenario `{name}` (available: {})", self.names().join(", ")))
                } else {
                    PsrError::Config(format!("scenario `{}` has base = `{cur}`, which does not exist", chain.last().unwrap()))
                }
            })?;
            chain.push(cur.clone());
            match s.get("base") {
                Some(Value::String(b)) => cur = b.clone(),
                _ => break,
            }
        }
        let mut out = self.defaults.clone();
        for n in chain.iter().rev() {
            // a base's mode is inherited unless the child overrides it
            out.extend(self.scenarios[n].clone());
        }
        out.remove("base");
        Ok(out)
    }

    /// Resolves `name` with `overrides` applied in order.
    pub fn resolve(&self, name: &str, overrides: &[String], command: Option<Mode>) -> Result<Scenario> {
        let mut s = self.settings(name)?;
        for o in overrides {
            let (k, v) = parse_override(o)?;
            s.insert(k, v);
        }
        Scenario::from_settings(name, s, command)
    }
}

fn strip(e: &PsrError) -> String {
    match e {
        PsrError::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_presets_resolve() {
        let set = ScenarioSet::builtin();
        for name in set.names() {
            let s = set.resolve(name, &[], None).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
        }
    }

    #[test]
    fn figure_presets_carry_expected_parameters() {
        let set = ScenarioSet::builtin();
        let f1 = set.resolve("fig1", &[], None).unwrap();
        assert_eq!(f1.mode, Mode::Profile);
        assert_eq!((f1.profile.center.r, f1.profile.center.l), (1e-4, 1.0));
        assert_eq!((f1.profile.center.hl.h, f1.profile.center.hl.l), (-1.0, 0.01));
        assert_eq!((f1.params.tau1, f1.params.tau2), (1000.0, 10.0));
        let f6 = set.resolve("fig6", &[], None).unwrap();
        assert_eq!((f6.params.tau1, f6.params.tau2), (10.0, 10.0));
        assert_eq!((f6.profile.center.hl.h, f6.profile.center.hl.l), (-1.0, 1.0));
        assert_eq!((f6.profile.center.r, f6.profile.center.l), (0.05, 1.0));
        let f3 = set.resolve("fig3", &[], None).unwrap();
        assert_eq!((f3.profile.center.hl.h, f3.profile.center.hl.l), (-1.8, 0.0));
    }

    #[test]
    fn overrides_last_wins_and_aliases() {
        let set = ScenarioSet::builtin();
        let s = set.resolve("fig1", &["tau2=3".into(), "medium.tau2=4.5".into(), "h=0.5".into()], None).unwrap();
        assert_eq!(s.params.tau2, 4.5);
        assert_eq!(s.profile.center.hl.h, 0.5);
    }

    #[test]
    fn bad_override_names_key() {
        let set = ScenarioSet::builtin();
        let e = set.resolve("fig1", &["tau2=-1".into()], None).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("tau2"), "{e}");
        let e = set.resolve("fig1", &["bogus=1".into()], None).unwrap_err();
        assert!(e.to_string().contains("bogus"));
        let e = set.resolve("fig1", &["profile.samples=abc".into()], None).unwrap_err();
        assert!(e.to_string().contains("profile.samples"));
    }

    #[test]
    fn mode_conflict_is_config_error() {
        let set = ScenarioSet::builtin();
        let e = set.resolve("fig1", &[], Some(Mode::Eigen)).unwrap_err();
        assert!(e.to_string().contains("mode"));
    }

    #[test]
    fn sweep_cells_are_cartesian() {
        let text = r#"
            [scenario.grid]
            base = "well"
            sweep.axes = [
                { key = "Delta", values = [5, 10] },
                { key = "well.d", min = 0.1, max = 0.3, steps = 3 },
            ]
        "#;
        let set = ScenarioSet::parse(text, "test").unwrap();
        let mut all = ScenarioSet::builtin();
        all.scenarios.extend(set.scenarios);
        let s = all.resolve("grid", &[], None).unwrap();
        let cells = s.sweep_cells();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0][0], ("well.Delta".to_string(), 5.0));
        assert_eq!(cells[5][1], ("well.d".to_string(), 0.3));
        let c = s.cell(&cells[4]).unwrap();
        assert_eq!((c.eigen.delta, c.eigen.d), (10.0, 0.2));
        assert!(c.sweep.is_empty());
    }

    #[test]
    fn sweep_axis_must_reference_parameter() {
        let text = r#"
            [scenario.bad]
            mode = "eigen"
            sweep.axes = [{ key = "well.width", values = [1] }]
        "#;
        let e = ScenarioSet::parse(text, "test").and_then(|s| {
            let mut all = ScenarioSet::builtin();
            all.scenarios.extend(s.scenarios);
            all.resolve("bad", &[], None)
        });
        assert!(e.unwrap_err().to_string().contains("well.width"));
    }

    #[test]
    fn seconds_relaxation_converts_through_t0() {
        let set = ScenarioSet::builtin();
        let s = set.resolve("para-h2", &["T1_s=1e-9".into(), "T2_s=1e-11".into()], None).unwrap();
        let t0 = units::derive_units(&s.medium).unwrap().t0;
        assert!((s.params.tau1 - 1e-9 / t0).abs() < 1e-12 * s.params.tau1);
        let e = set.resolve("para-h2", &["T1_s=1e-9".into()], None).unwrap_err();
        assert!(e.to_string().contains("T2_s"));
    }

    #[test]
    fn cyclic_base_is_rejected() {
        let set = ScenarioSet::parse("[scenario.a]\nbase = \"b\"\n[scenario.b]\nbase = \"a\"\n", "test").unwrap();
        assert!(set.settings("a").unwrap_err().to_string().contains("cyclic"));
    }

    #[test]
    fn log_axis_hits_endpoints() {
        let v = axis_values(1.0, 100.0, 3, true);
        assert_eq!(v[0], 1.0);
        assert_eq!(v[2], 100.0);
        assert!((v[1] - 10.0).abs() < 1e-12);
    }
}
