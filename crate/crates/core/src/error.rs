//! Error type shared across the engine.

use thiserror::Error;

/// Engine-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A row of an input file could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// Input failed a validation rule (duplicate ids, unknown references,
    /// out-of-range values, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Two receiver rows share the same id.
    #[error("duplicate receiver id `{0}`")]
    DuplicateReceiver(String),

    /// A detection references a receiver that is not in the receiver table.
    #[error("unknown receiver id `{0}`")]
    UnknownReceiver(String),

    /// Endpoint rejection sampling cannot terminate in reasonable time.
    #[error("endpoint enforcement infeasible: in-radius acceptance probability {0:.3e} is below 1e-6")]
    EndpointEnforcement(f64),

    /// A draw failed an internal consistency check (latent replay or
    /// segment chaining), so its likelihood is undefined.
    #[error("inconsistent draw: {0}")]
    InconsistentDraw(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
