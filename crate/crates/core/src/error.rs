use thiserror::Error;

use crate::hilbert::RegisterId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state vector has zero norm")]
    ZeroNorm,

    #[error("unknown register {0}")]
    UnknownRegister(RegisterId),

    #[error("register {0} appears more than once")]
    DuplicateRegister(RegisterId),

    #[error("matrix is not unitary (max |U^dag U - I| = {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("register {register} has the wrong role: expected {expected}")]
    WrongRole { register: RegisterId, expected: &'static str },

    #[error("measurement has numerically zero total probability")]
    ZeroProbability,

    #[error("reduced density requested over an empty register set")]
    EmptyKeep,

    #[error("layouts of the two states differ")]
    LayoutMismatch,

    #[error("pointer register {0} is not in the fiducial |0> state")]
    NotFiducial(RegisterId),

    #[error("invalid protocol spec: {0}")]
    InvalidSpec(String),

    #[error("size limit exceeded: n = {n} in {mode} mode (limit {limit})")]
    SizeLimit { n: usize, mode: &'static str, limit: usize },

    #[error("a correction table is required but none was supplied")]
    MissingCorrectionTable,

    #[error("no per-site Pauli correction exists for d = {d:?} (best channel fidelity {best_fidelity:.12})")]
    NoPauliCorrection { d: Vec<u8>, best_fidelity: f64 },

    #[error("correction table failed validation at d = {d:?}, input {input}: infidelity {infidelity:e}")]
    ValidationFailure { d: Vec<u8>, input: String, infidelity: f64 },

    #[error("correction table has no entry for d = {0:?}")]
    MissingEntry(Vec<u8>),

    #[error("odd pointer difference observed: d = {0:?}")]
    OddDifference(Vec<u8>),

    #[error("correction table fingerprint {found} does not match protocol {expected}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("inputs differ at more than one site: {0:?}")]
    InputsDifferAtMultipleSites(Vec<usize>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
