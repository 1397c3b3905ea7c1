use std::fmt;
use std::io;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Every variant renders as a single line so the
/// CLI can print machine-parseable diagnostics.
#[derive(Debug)]
pub enum Error {
    /// Tensor or layer shapes do not compose.
    Dimension { op: &'static str, detail: String },
    /// An operation was called in an invalid order (e.g. backward before forward).
    State { op: &'static str, detail: &'static str },
    /// A non-finite value was encountered where finite math is required.
    Numeric { op: &'static str, detail: String },
    /// Input data violates a documented precondition.
    Validation(String),
    /// A manifest, view file or other structured input failed to parse.
    Parse(String),
    /// A checkpoint field is missing, corrupt or inconsistent.
    Checkpoint { field: &'static str, detail: String },
    /// An I/O failure, annotated with the file it concerns.
    Io { path: PathBuf, source: io::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, detail } => write!(f, "dimension error in {op}: {detail}"),
            Error::State { op, detail } => write!(f, "state error in {op}: {detail}"),
            Error::Numeric { op, detail } => write!(f, "numeric error in {op}: {detail}"),
            Error::Validation(detail) => write!(f, "validation error: {detail}"),
            Error::Parse(detail) => write!(f, "parse error: {detail}"),
            Error::Checkpoint { field, detail } => {
                write!(f, "checkpoint error ({field}): {detail}")
            }
            Error::Io { path, source } => write!(f, "io error on {}: {source}", path.display()),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
