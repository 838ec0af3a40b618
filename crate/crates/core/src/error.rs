use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0}, expected 2 or 3")]
    InvalidDimension(usize),
    #[error("number of refinement levels must be at least 1, got {0}")]
    InvalidLevels(usize),
    #[error("unsupported refinement ratio {0}, only 1/2 is implemented")]
    UnsupportedRatio(String),
    #[error("invalid polynomial degree parameters: {0}")]
    InvalidDegree(String),
    #[error("point {0:?} lies outside the domain")]
    PointOutsideDomain(Vec<f64>),
    #[error("mesh is not 1-irregular at element {element}, axis {axis}")]
    NotOneIrregular { element: usize, axis: usize },
    #[error("quadrature order {0} out of range 1..=64")]
    QuadratureOrder(usize),
    #[error("potential r^-{alpha} is not integrable in dimension {dim}")]
    NonIntegrable { alpha: f64, dim: usize },
    #[error("non-finite quadrature value on element {0}")]
    NonFiniteQuadrature(usize),
    #[error("non-positive mass entry at index {0}")]
    NonPositiveMass(usize),
    #[error("factorization of the shifted operator failed: {0}")]
    Factorization(String),
    #[error("eigensolver did not converge in {iterations} iterations ({converged} of {wanted} pairs converged)")]
    NoConvergence { iterations: usize, converged: usize, wanted: usize },
    #[error("problem of size {size} exceeds the dense limit {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("invalid eigensolver request: {0}")]
    InvalidRequest(String),
    #[error("reference mesh does not refine the solution mesh")]
    NotNested,
    #[error("too few pre-plateau points ({0}, need at least 3)")]
    TooFewPoints(usize),
    #[error("eigenvalue index mismatch: {0} computed vs {1} reference")]
    IndexMismatch(usize, usize),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("level {levels}, stage {stage}: {source}")]
    Stage { levels: usize, stage: &'static str, source: Box<Error> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 2 for configuration and input errors, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Factorization(_)
            | Error::NoConvergence { .. }
            | Error::NonFiniteQuadrature(_)
            | Error::NonPositiveMass(_)
            | Error::NotNested
            | Error::IndexMismatch(..)
            | Error::TooLarge { .. } => 3,
            _ => 2,
        }
    }

    pub fn at(levels: usize, stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage { levels, stage, source: Box::new(e) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
