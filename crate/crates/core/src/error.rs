use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("gradient check aborted: {0}")]
    GradCheck(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! arg_err {
    ($($t:tt)*) => { $crate::error::Error::Argument(alloc::format!($($t)*)) };
}
macro_rules! shape_err {
    ($($t:tt)*) => { $crate::error::Error::Shape(alloc::format!($($t)*)) };
}
pub(crate) use arg_err;
pub(crate) use shape_err;
