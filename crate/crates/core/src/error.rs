use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid association: violates {0}")]
    Association(String),

    #[error("association matrix is not binary")]
    NotBinary,

    #[error("{count} candidate associations exceed the enumeration limit of {limit}")]
    TooManyAssociations { count: f64, limit: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate linearization reference: {0}")]
    DegenerateReference(String),

    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    Indefinite(f64),

    #[error("no feasible starting point: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
