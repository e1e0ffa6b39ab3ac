use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (e.g. `t < 0`).
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// A computed quantity violated an identity it must satisfy.
    #[error("internal consistency error: {0}")]
    Consistency(String),
    #[error("integration error: {0}")]
    Integration(String),
    #[error("no sign change on [{a}, {b}] (f(a) = {fa}, f(b) = {fb})")]
    NoSignChange { a: f64, b: f64, fa: f64, fb: f64 },
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("non-uniform binning: {0}")]
    NonUniformBinning(String),
    #[error("schema error at line {line}: {message}")]
    Schema { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
