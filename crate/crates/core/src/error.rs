use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid modulus: {0}")]
    InvalidModulus(String),

    #[error("dimension mismatch in {context}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("operands use different moduli")]
    ModulusMismatch,

    #[error("matrix is singular over Z_q")]
    SingularMatrix,

    #[error("matrix does not have full row rank: expected {expected}, rank {rank}")]
    NotFullRowRank { expected: usize, rank: usize },

    #[error("row vector is zero and has no right inverse")]
    ZeroRow,

    #[error("invalid plant model: {0}")]
    InvalidModel(String),

    #[error("closed loop A+BK is not Schur stable (spectral radius {spectral_radius:.6})")]
    UnstableClosedLoop { spectral_radius: f64 },

    #[error("canonical decomposition of sensor {sensor} failed: residual {residual:e} exceeds {tolerance:e}")]
    ConsistencyFailure {
        sensor: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("redundant observability violated: subset {subset:?} gives rank {rank} < n")]
    RedundancyViolation { subset: Vec<usize>, rank: usize },

    #[error("no sensor subsets of size p-k exist (p = {p}, k = {k})")]
    EmptySubsetFamily { p: usize, k: usize },

    #[error("relative degree undefined for residue channel {channel}: all Markov parameters vanish")]
    RelativeDegreeUndefined { channel: usize },

    #[error("ciphertext width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("ciphertext kinds differ")]
    KindMismatch,

    #[error("encryptor session already produced its initial ciphertexts")]
    SessionNotFresh,

    #[error("encryptor session has not been initialized")]
    SessionNotInitialized,

    #[error("scale factor is not invertible modulo q")]
    NonInvertibleScale,

    #[error("transcript too short: step {step} needs residues up to {needed}, only {available} recorded")]
    HorizonTooShort {
        step: usize,
        needed: usize,
        available: usize,
    },

    #[error("channels disagree on the randomness block at step {step:?}")]
    InconsistentRandomness { step: Option<usize> },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("codec error: {0}")]
    Codec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
