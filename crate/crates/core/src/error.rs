use thiserror::Error;

use crate::semantic_tree::TreeError;

/// Errors raised by the numeric and protocol layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Non-finite or otherwise out-of-domain numeric input.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an operation's precondition (shape, membership, ordering).
    #[error("contract violated: {0}")]
    Contract(String),

    #[error("point is off the hyperboloid: time residual {residual:e}")]
    OffManifold { residual: f64 },

    /// Cone aperture is undefined at the origin.
    #[error("degenerate parent: cone apex at the origin has no aperture")]
    DegenerateParent,

    /// Exterior angle is undefined for coincident points.
    #[error("degenerate pair: points coincide")]
    DegeneratePair,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Tree(#[from] TreeError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
