use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("mixture weights sum to {0}, expected 1 within 1e-12")]
    WeightSum(f64),

    #[error("density is undefined for a point-mass (sigma = 0) component")]
    UndefinedDensity,

    #[error("invalid mode subset: {0}")]
    InvalidSubset(String),

    #[error("malformed query: {0}")]
    MalformedQuery(String),

    #[error("mode count {modes} outside supported range {min}..={max}")]
    ModesOutOfRange { modes: usize, min: usize, max: usize },

    #[error("behavior is signaling (worst marginal discrepancy {0:e}); covariance matrix is ill-defined")]
    Signaling(f64),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("value {value} is not within 1e-6 of an integer (residue {residue:e})")]
    IntegerResidue { value: f64, residue: f64 },

    #[error("invalid scan configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Errors that indicate an internal consistency failure rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::IntegerResidue { .. })
    }
}
