use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("system size {0} outside supported range {1}..={2}")]
    Size(usize, usize, usize),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("no ladder decomposition for term `{term}` under the {scheme} scheme")]
    UnsupportedSplit { term: String, scheme: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("initial state is not annihilated by H⁻ (‖H⁻v₀‖ = {0:e})")]
    SchemeMismatch(f64),

    #[error("argument outside the formula's domain: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dense eigensolver capacity exceeded: dim {dim} > {limit}")]
    Capacity { dim: usize, limit: usize },

    #[error("fit failed: {0}")]
    Fit(String),
}
