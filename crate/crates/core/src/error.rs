use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("kernel singularity: source and target coincide")]
    Singularity,
    #[error("discretization produced an empty field")]
    EmptyField,
    #[error("grid too small: particle at ({0}, {1}) lies outside")]
    GridTooSmall(f64, f64),
    #[error("non-finite particle position at step {0}")]
    BlowUp(usize),
    #[error("gain undefined: particle origins were reset by remeshing")]
    GainUndefined,
    #[error("no root: H(p) does not change sign on [{0}, {1}]")]
    NoRoot(f64, f64),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
