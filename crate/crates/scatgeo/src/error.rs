use std::fmt;

/// Errors raised by the simulation and harness layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] scatgeo_core::Error),
    /// Input or configuration outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// Non-finite values, boundary contact or failed convergence.
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Schema,
    Numeric,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use scatgeo_core::Error as C;
        match self {
            Error::Core(C::Numeric(_)) | Error::Core(C::Internal(_)) | Error::Numeric(_) => {
                ErrorClass::Numeric
            }
            Error::Core(_) | Error::Parameter(_) | Error::Json(_) => ErrorClass::Schema,
            Error::Io(_) => ErrorClass::Io,
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorClass::Schema => "schema",
            ErrorClass::Numeric => "numeric",
            ErrorClass::Io => "io",
        })
    }
}

macro_rules! param_err {
    ($($arg:tt)*) => { $crate::error::Error::Parameter(format!($($arg)*)) };
}
macro_rules! numeric_err {
    ($($arg:tt)*) => { $crate::error::Error::Numeric(format!($($arg)*)) };
}
pub(crate) use numeric_err;
pub(crate) use param_err;
