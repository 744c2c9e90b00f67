//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// Agent counts, bounds or other numeric parameters that make no sense.
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    /// A parse failure, with a byte offset into the input.
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("unknown agent `{0}`")]
    UnknownAgent(String),

    #[error("unknown secret `{0}`")]
    UnknownSecret(String),

    /// The formula lies outside the fragment an operation can decide.
    #[error("wrong formula fragment: {0}")]
    WrongFragment(String),

    #[error("index {index} out of range for sequence of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    /// Input violates a documented precondition of the operation.
    #[error("ill-formed input: {0}")]
    IllFormedInput(String),

    /// An incremental update was applied to a state it does not extend.
    #[error("inconsistent state: {0}")]
    InconsistentState(String),

    /// A result failed its own self-check; this is a bug, not bad input.
    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),
}
