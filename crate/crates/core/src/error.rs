use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite coordinate in input")]
    NonFinite,
    #[error("degenerate tetrahedron (zero orientation)")]
    DegenerateTetrahedron,
    #[error("input points are coplanar or too few to span 3D")]
    Coplanar,
    #[error("point duplicates existing vertex {0}")]
    DuplicatePoint(usize),
    #[error("invalid direction vector")]
    InvalidDirection,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("ingestion error: {0}")]
    Ingestion(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status for the command-line front end: 2 for bad
    /// configuration, 3 for unusable input, 4 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Ingestion(_)
            | Error::Io(_)
            | Error::EmptyInput(_)
            | Error::NonFinite
            | Error::DuplicatePoint(_) => 3,
            Error::Numerical(_)
            | Error::Coplanar
            | Error::DegenerateTetrahedron
            | Error::InvalidDirection => 4,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.to_string())
        } else {
            Error::Ingestion(format!("json: {e}"))
        }
    }
}
