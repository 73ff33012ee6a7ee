//! Error types shared across the crate.

use thiserror::Error;

/// Problems found while reading or validating a scenario configuration.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("malformed line {line}: `{text}` (expected key = value)")]
    Malformed { line: usize, text: String },
    #[error("io error reading {path}: {reason}")]
    Io { path: String, reason: String },
}

impl ConfigError {
    pub fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::InvalidValue {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    /// The config key the error refers to, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey(k) => Some(k),
            ConfigError::InvalidValue { key, .. } => Some(key),
            _ => None,
        }
    }
}

/// Errors raised by the analytic collision model and the V tuning rule.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("nonpositive denominator a_j + Q_i*R = {value:e} for pair {pair}, level {level}")]
    Domain { pair: usize, level: usize, value: f64 },
    #[error("V(epsilon) undefined in this regime: {0}")]
    Regime(String),
    #[error("invalid input: {0}")]
    Input(String),
}

/// Feedback plane errors: capacity arithmetic, map construction, frame assembly.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeedbackError {
    #[error("delta_shift {delta_shift} does not divide 12*N_OC = {mux}")]
    NonDivisibleShift { delta_shift: usize, mux: usize },
    #[error("feedback capacity parameter `{0}` must be >= 1")]
    ZeroParameter(&'static str),
    #[error("reversed or empty mapping bounds: v_min = {v_min}, v_max = {v_max}")]
    ReversedBounds { v_min: f64, v_max: f64 },
    #[error("indexing map needs at least 2 levels, got {0}")]
    TooFewLevels(usize),
    #[error("pair {0} placed more than once in a feedback frame")]
    DuplicatePair(usize),
}
