use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("momentum has negative imaginary part: {0}")]
    InvalidMomentum(String),
    #[error("evaluation point at the origin is singular")]
    SingularPoint,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("support exceeds grid: {0}")]
    SupportExceedsGrid(String),
    #[error("potential is not Hermitian or not admissible: {0}")]
    NotAdmissible(String),
    #[error("class C violation: {0}")]
    ClassCViolation(String),
    #[error("no critical coupling in bracket [{lo}, {hi}]")]
    NoCriticalCoupling { lo: f64, hi: f64 },
    #[error("solver did not converge: {0}")]
    NoConvergence(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
