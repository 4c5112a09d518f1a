use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("jet is not a unit (zero constant term)")]
    NonUnitJet,
    #[error("jet orders differ: {0} vs {1}")]
    ModulusMismatch(usize, usize),
    #[error("jet order {0} outside 1..=8")]
    InvalidOrder(usize),
    #[error("invalid character: {0}")]
    InvalidCharacter(String),
    #[error("degenerate group element: {0}")]
    DegenerateGroupElement(String),
    #[error("coincident coordinates")]
    CoincidentCoordinates,
    #[error("evaluation at a marked point: {0}")]
    EvaluationAtMarkedPoint(String),
    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),
    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),
    #[error("ill-conditioned fit (condition number {0:.3e})")]
    IllConditionedFit(f64),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("degenerate collision schedule: {0}")]
    DegenerateSchedule(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
