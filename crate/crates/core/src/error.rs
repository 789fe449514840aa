use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid label distribution: {0}")]
    InvalidDistribution(String),

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("class count mismatch: expected {expected}, found {found}")]
    ClassCountMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The posterior normalizer collapsed to (numerical) zero.
    #[error("degenerate posterior normalizer K = {normalizer:e}")]
    DegenerateNormalizer { normalizer: f64 },

    /// A log argument is non-positive for a class that carries posterior mass.
    #[error(
        "log domain error: class {class} has posterior mass {mass} but log argument {argument}"
    )]
    LogDomain {
        class: usize,
        mass: f64,
        argument: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset has no clean labels")]
    MissingCleanLabels,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("weak model relabeled every instance as class {0}")]
    DegenerateRelabeling(usize),

    #[error("non-finite classifier parameters at epoch {epoch}, step {step}")]
    NonFinite {
        epoch: usize,
        step: usize,
        /// Checkpoint JSON of the last finite state.
        snapshot: Box<String>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn out_of_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Self {
        Error::OutOfRange {
            name,
            value,
            lo,
            hi,
        }
    }
}
