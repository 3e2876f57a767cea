use thiserror::Error;

use crate::certificates::EviCertificate;

/// Errors raised by bodies, solvers and generators.
#[derive(Debug, Error, Clone)]
pub enum MintyError {
    #[error("well-boundedness violated: {0}")]
    WellBoundednessViolation(String),
    #[error("unsupported body: {0}")]
    UnsupportedBody(String),
    #[error("oracle failure: {0}")]
    OracleFailure(String),
    #[error("body has empty interior")]
    EmptyInterior,
    #[error("affine map is singular")]
    SingularMap,
    #[error("cut direction degenerates at the working precision")]
    DegenerateDirection,
    #[error("precision exhausted at step {step} with {bits} bits")]
    PrecisionExhausted { step: usize, bits: u32 },
    #[error("assumption violated: {0}")]
    AssumptionViolation(String),
    #[error("weak-Minty parameter too large: margin {margin} is not positive")]
    RhoTooLarge { margin: f64 },
    #[error("certificate gap {gap} exceeds the required bound {required}")]
    CertificateShortfall { gap: f64, required: f64, best: Box<EviCertificate> },
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("malformed clause: {0}")]
    MalformedClause(String),
    #[error("game too large for the explicit LP: {0} joint profiles")]
    CapExceeded(usize),
    #[error("game is not harmonic: a strict EVI certificate verified")]
    NotHarmonic,
    #[error("best-response computation failed: {0}")]
    BestResponseFailure(String),
    #[error("no center ever lay inside the body")]
    NoInBodyCenter,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<crate::scalar::ParseError> for MintyError {
    fn from(e: crate::scalar::ParseError) -> Self {
        MintyError::Parse(e.0)
    }
}

impl From<std::io::Error> for MintyError {
    fn from(e: std::io::Error) -> Self {
        MintyError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for MintyError {
    fn from(e: serde_json::Error) -> Self {
        MintyError::Parse(e.to_string())
    }
}

pub type Result<T, E = MintyError> = std::result::Result<T, E>;
