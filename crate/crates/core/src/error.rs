use alloc::string::String;

/// Errors raised by the feasibility-testing core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("action lies outside the domain (violation {violation:e})")]
    OutsideDomain { violation: f64 },

    #[error("enumerating {count} extreme points exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("diagnostics unavailable: {0}")]
    DiagnosticsUnavailable(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
