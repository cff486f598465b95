use std::fmt;

/// Errors shared by all modules.
#[derive(Debug)]
pub enum Error {
    /// Two containers that must agree in shape do not; the message names both shapes.
    ShapeMismatch(String),
    /// The (padded) input is smaller than the kernel, so no output position exists.
    KernelExceedsInput {
        field: usize,
        kernel: usize,
        padding: usize,
    },
    /// A grouping strategy does not evenly divide the channel count.
    GroupingMismatch(String),
    /// A spec/plan/config combination is invalid (wrong connectivity, stale plan, bad flag value).
    InvalidConfig(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::KernelExceedsInput { field, kernel, padding } => write!(
                f,
                "kernel exceeds padded input: kernel {kernel} on {field}x{field} input with padding {padding}"
            ),
            Error::GroupingMismatch(msg) => {
                write!(f, "group size must divide channel count: {msg}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
