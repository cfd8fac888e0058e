use thiserror::Error;

/// Errors raised by the solvers and the scenario front end.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PsrError {
    #[error("invalid medium specification: {0}")]
    InvalidSpec(String),

    #[error("singular Bloch matrix (tau1 = {tau1}, tau2 = {tau2})")]
    SingularMatrix { tau1: f64, tau2: f64 },

    #[error("intensity fell below floor {floor:e} in the {field} field at xi = {xi}")]
    Singularity { xi: f64, field: &'static str, floor: f64 },

    #[error("step size underflow at xi = {xi} (h = {h:e})")]
    StepSizeUnderflow { xi: f64, h: f64 },

    #[error("maximum number of integration steps ({0}) exceeded")]
    MaxSteps(usize),

    #[error("no potential well: gamma_minus = {0} must be positive")]
    NoWell(f64),

    #[error("no bound state at level {level} (iteration {iteration})")]
    NoBoundState { level: usize, iteration: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("grid resolution: {0}")]
    Resolution(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl PsrError {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            PsrError::Config(_) | PsrError::InvalidSpec(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, PsrError>;
