//! Error type shared by all core modules.

use alloc::string::String;
use core::fmt;

/// Error type for core operations.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// An input violated a documented precondition.
    Domain(String),
    /// Tensor or sequence shapes disagree.
    ShapeMismatch(String),
    /// A stored invariant no longer holds (indicates a bug upstream).
    InvariantViolation(String),
    /// A gradient or parameter became NaN/inf; carries the block name.
    NonFinite(&'static str),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Domain(msg) => write!(f, "domain error: {}", msg),
            CoreError::ShapeMismatch(msg) => write!(f, "shape mismatch: {}", msg),
            CoreError::InvariantViolation(msg) => write!(f, "invariant violation: {}", msg),
            CoreError::NonFinite(block) => write!(f, "non-finite value in block `{}`", block),
        }
    }
}

impl core::error::Error for CoreError {}

pub type Result<T> = core::result::Result<T, CoreError>;

/// Shorthand for `CoreError::Domain` with formatted text.
#[macro_export]
macro_rules! domain_err {
    ($($arg:tt)*) => {
        $crate::error::CoreError::Domain(alloc::format!($($arg)*))
    };
}

/// Shorthand for `CoreError::ShapeMismatch` with formatted text.
#[macro_export]
macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::CoreError::ShapeMismatch(alloc::format!($($arg)*))
    };
}
