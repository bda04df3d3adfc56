use std::path::PathBuf;

/// Rejected grid configuration.
#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error(
        "unstable discretisation: {reason} (frequency-update coefficient {coefficient:.6} must lie in (-1, 1])"
    )]
    StabilityViolation { coefficient: f64, reason: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum SimError {
    #[error("horizon {horizon} is shorter than the ROCOF window M = {window}")]
    HorizonTooShort { horizon: usize, window: usize },
}

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum SynthError {
    #[error("injection {dp_a} p.u. exceeds the attacker capability bound {bound} p.u.")]
    CapabilityExceeded { dp_a: f64, bound: f64 },

    #[error("feasibility is not monotone in the injection magnitude ({detail}); use the exhaustive backend")]
    NonMonotoneFeasibility { detail: String },

    #[error("solver backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("solver certificate failed replay: {0}")]
    CertificateMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Errors from reading or writing configuration, traces and result files.
#[derive(thiserror::Error, Debug)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: ConfigError,
    },
}
