use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("chain of {n_spins} spins exceeds the cap of {cap}")]
    DimensionCap { n_spins: usize, cap: usize },

    #[error("degenerate ground state (gap {gap:e})")]
    DegenerateGroundState { gap: f64 },

    #[error("value {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("step count {steps} too small: doubling changed m_phi by {drift:e}")]
    StepCountTooSmall { steps: usize, drift: f64 },

    #[error("degenerate couplings: {0}")]
    DegenerateCouplings(String),

    #[error("unphysical durations: {0}")]
    UnphysicalDurations(String),

    #[error("too few converged rows: need {needed}, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("length mismatch: {observed} observed vs {theory} theory values")]
    LengthMismatch { observed: usize, theory: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
