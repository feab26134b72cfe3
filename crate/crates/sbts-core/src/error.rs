use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum SbtsError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("non-finite entry at sample {sample}, time index {t_index}, feature {feature}")]
    NonFiniteEntry {
        sample: usize,
        t_index: usize,
        feature: usize,
    },

    #[error("non-increasing grid at index {0}")]
    NonIncreasingGrid(usize),

    #[error("drift query at or past the right endpoint: t = {t}, t_next = {t_next}")]
    BridgeSingularity { t: f64, t_next: f64 },

    #[error("all kernel weights vanished (total mass below floor)")]
    DegenerateWeights,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate feature {0}: {1}")]
    DegenerateFeature(usize, String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SbtsError>;
