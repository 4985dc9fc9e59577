use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty schedule")]
    EmptySchedule,

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("degenerate arm: S(1) and S(0) must both be positive")]
    DegenerateArm,

    #[error("probability out of open interval (0, 1): {0}")]
    ProbabilityOutOfRange(f64),

    #[error("positivity violated at round {round}: p = {p}")]
    PositivityViolated { round: usize, p: f64 },

    #[error("horizon too short for default schedule: T = {0} (need T >= 2)")]
    HorizonTooShort(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("enumeration cap exceeded: T = {horizon} > {cap}")]
    EnumerationCap { horizon: usize, cap: usize },

    #[error("interval level out of range: {0}")]
    InvalidLevel(f64),

    #[error("invalid design spec `{spec}`: {reason}")]
    DesignSpec { spec: String, reason: String },

    #[error("unknown synthetic kind `{0}`")]
    UnknownSynthetic(String),

    #[error("horizon {horizon} exceeds schedule length {available}")]
    HorizonExceedsData { horizon: usize, available: usize },

    #[error("{path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

/// Rejects probabilities outside the open unit interval.
pub(crate) fn check_open_unit(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange(p))
    }
}
