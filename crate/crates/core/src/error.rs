use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UrnError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The urn model violates a structural requirement (integrality,
    /// irreducibility, wrong regime for the requested quantity).
    #[error("model error: {0}")]
    Model(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// A draw or a replacement would leave a negative count.
    #[error("tenability violation: {0}")]
    Tenability(String),
}

pub type Result<T, E = UrnError> = std::result::Result<T, E>;

impl UrnError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        UrnError::InvalidArgument(msg.into())
    }

    pub(crate) fn model(msg: impl Into<String>) -> Self {
        UrnError::Model(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        UrnError::Numeric(msg.into())
    }
}
