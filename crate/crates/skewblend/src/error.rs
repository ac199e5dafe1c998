use thiserror::Error;

/// Errors raised by the verification and construction routines.
///
/// Verification *failures* (an uncovered point, an escaping cone vector) are
/// not errors: they are reported inside the returned certificate. Errors are
/// reserved for malformed input, exhausted resources and broken preconditions.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("insufficient depth: {0}")]
    Depth(String),
    #[error("certificate invalid: {0}")]
    CertificateInvalid(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("unsupported structure: {0}")]
    Unsupported(String),
    #[error("lift refused: {0}")]
    LiftRefused(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
