use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty projection")]
    EmptyProjection,
    #[error("null reweighting: density integrates to zero")]
    NullReweighting,
    #[error("invalid measure at {path}: {msg}")]
    InvalidMeasure { path: String, msg: String },
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),
    #[error("weight/component mismatch: {weights} weights for {components} components")]
    WeightMismatch { weights: usize, components: usize },
    #[error("invalid fuzzy partition: {0}")]
    InvalidPartition(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{what} exceeds cap ({size} > {cap}); {hint}")]
    CapExceeded {
        what: String,
        size: usize,
        cap: usize,
        hint: String,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate weight: {0}")]
    DegenerateWeight(String),
    #[error("internal solver error: {0}")]
    InternalSolver(String),
    #[error("sampling exhausted at m = {m} without acceptance; best TV {best_tv}")]
    SamplingExhausted { best_tv: f64, m: usize },
    #[error("carve failed: {inequality} ({detail})")]
    CarveFailed { inequality: String, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid JSON at {path}: {msg}")]
    Json { path: String, msg: String },
}

impl Error {
    /// True for errors caused by caller input rather than exhausted budgets or bugs.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::EmptyProjection
                | Error::NullReweighting
                | Error::InvalidMeasure { .. }
                | Error::SpaceMismatch(_)
                | Error::WeightMismatch { .. }
                | Error::InvalidPartition(_)
                | Error::LengthMismatch(..)
                | Error::InvalidParameter(_)
                | Error::DegenerateWeight(_)
                | Error::Json { .. }
        )
    }

    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::CapExceeded { .. } | Error::SamplingExhausted { .. } | Error::CarveFailed { .. }
        )
    }
}
