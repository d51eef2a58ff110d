use thiserror::Error;

/// Error type shared by all operations in this crate.
///
/// Variants are grouped by how the CLI maps them to exit codes:
/// schema/usage errors, resource ceilings, and oracle refusals are
/// kept distinct because callers react differently to each.
#[derive(Debug, Error)]
pub enum FklError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("group mismatch: {0}")]
    GroupMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resource ceiling `{ceiling}` exceeded: {detail}")]
    ResourceCeiling { ceiling: String, detail: String },

    #[error("oracle refusal: {0}")]
    OracleRefusal(String),
}

impl FklError {
    pub fn ceiling(name: &str, detail: impl Into<String>) -> Self {
        FklError::ResourceCeiling {
            ceiling: name.to_string(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, FklError>;
