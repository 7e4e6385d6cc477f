//! Crate-wide error type.
//!
//! Every fallible operation returns [`Error`]; the CLI maps these onto its
//! exit-code contract (usage/config errors vs. runtime failures).

use thiserror::Error;

/// Errors produced by chiselkit operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument is malformed (shape mismatch, bad axis,
    /// empty input, out-of-range parameter, ...).
    #[error("argument error: {0}")]
    Argument(String),

    /// A text file (tensor, chisel, JSON) failed to parse. `line` is 1-based;
    /// 0 means the location is not line-addressable.
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    /// A requested dense computation exceeds the configured memory budget.
    #[error("size error: {0}")]
    Size(String),

    /// A basis intended to be invertible is numerically singular
    /// (condition estimate above the configured cap).
    #[error("degenerate basis: {0}")]
    DegenerateBasis(String),

    /// An iterative scheme failed to converge; the message carries the
    /// partial state that was reached.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// Projecting the scalar subspace out of the candidate singular vector
    /// left nothing usable; rerun with a larger subspace dimension q.
    #[error("degenerate candidate: {0}")]
    DegenerateCandidate(String),

    /// The residual of a zero derivation tuple or zero tensor is undefined.
    #[error("undefined residual: {0}")]
    UndefinedResidual(String),

    /// No eigenvalue assignment with a nonempty pattern could be sampled.
    #[error("infeasible delta: {0}")]
    InfeasibleDelta(String),

    /// Random basis sampling kept exceeding the conditioning cap.
    #[error("conditioning error: {0}")]
    Conditioning(String),

    /// A numerical subroutine hit a pathological configuration (e.g. a
    /// Schur reordering swap between nearly identical eigenvalues).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A synthesis spec or CLI config file is inconsistent.
    #[error("spec error: {0}")]
    Spec(String),

    /// Wrapped I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for [`Error::Argument`].
    pub fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Shorthand for [`Error::Format`].
    pub fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format { line, msg: msg.into() }
    }
}
