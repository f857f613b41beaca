use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A quantum-number rule failed; `rule` names it.
    #[error("invalid quantum numbers: {rule} ({detail})")]
    InvalidQuantumNumbers { rule: &'static str, detail: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("spin mismatch: quantum numbers carry s={qn}, model parameters carry s={params}")]
    SpinMismatch { qn: f64, params: f64 },

    #[error("Coulomb singularity: r = {0}")]
    Singularity(f64),

    #[error("infeasible triangle: arccos argument {0} outside [-1, 1]")]
    InfeasibleTriangle(f64),

    #[error("no bound orbit: {0}")]
    NoBoundOrbit(String),

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("precession ratio undefined: g = 1, the orbital plane does not precess")]
    UndefinedRatio,

    #[error("capture orbit: r fell to {r:.3e} at t = {t:.6e}")]
    Capture { t: f64, r: f64 },

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("step budget of {0} steps exhausted")]
    MaxSteps(usize),

    #[error("drift budget exceeded: {quantity} drifted by {drift:.3e} (budget {budget:.3e})")]
    DriftExceeded {
        quantity: &'static str,
        drift: f64,
        budget: f64,
    },

    #[error("insufficient events: need {need} pericentres, found {found}")]
    InsufficientEvents { need: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    /// Process exit code for the command-line front end: 2 for
    /// validation failures, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidQuantumNumbers { .. }
            | Error::InvalidParameter(_)
            | Error::SpinMismatch { .. }
            | Error::InfeasibleTriangle(_)
            | Error::Config(_)
            | Error::Io { .. } => 2,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
