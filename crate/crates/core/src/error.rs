use thiserror::Error;

/// Errors raised by the analysis pipeline.
///
/// Each variant belongs to one stage (loading, assignment, balance testing,
/// estimation, simulation, configuration) so callers can report the module
/// alongside the message.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("load error: {0}")]
    Load(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("assignment error: {0}")]
    Assignment(String),

    #[error("support too large ({size} assignments, limit {limit}); use Monte Carlo mode")]
    SupportTooLarge { size: f64, limit: f64 },

    #[error("rejection sampling exhausted {attempts} attempts (estimated acceptance rate {acceptance:.3e})")]
    RejectionBudget { attempts: u64, acceptance: f64 },

    #[error("propensity fit failed: {0}")]
    Separation(String),

    #[error("design matrix is rank deficient; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("balance error: {0}")]
    Balance(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("weak compliance: itt_w = {itt_w} is below the threshold {threshold}")]
    WeakCompliance { itt_w: f64, threshold: f64 },

    #[error("one-sided noncompliance violated: unit {row} has w = 1 with z = 0")]
    NoncomplianceViolation { row: usize },

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Name of the module that raised the error, used in CLI diagnostics.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Load(_) | Error::MissingColumn(_) => "data",
            Error::Argument(_) => "argument",
            Error::Assignment(_)
            | Error::SupportTooLarge { .. }
            | Error::RejectionBudget { .. }
            | Error::Separation(_)
            | Error::RankDeficient(_) => "assignment",
            Error::Balance(_) => "balance",
            Error::Estimation(_) | Error::WeakCompliance { .. } | Error::NoncomplianceViolation { .. } => {
                "estimation"
            }
            Error::Simulation(_) => "simulation",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
