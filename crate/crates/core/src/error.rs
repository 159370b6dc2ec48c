use thiserror::Error;

/// Errors raised by the toolkit. Every fallible operation in the crate
/// returns this type.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("kernel must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("kernel has a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("row {row} is not stochastic: {reason}")]
    NonStochasticRow { row: usize, reason: String },

    #[error("chain is reducible: {0}")]
    ReducibleChain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("observable is not centred under the stationary law (mean {mean:e})")]
    NotCentered { mean: f64 },

    #[error("linear system is singular: {0}")]
    SingularSystem(String),

    #[error("series did not reach its tail tolerance within {terms} terms")]
    SeriesNotConverged { terms: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state {state} at position {position} is out of range for {n_states} states")]
    InvalidState {
        position: usize,
        state: usize,
        n_states: usize,
    },

    #[error("empty batch")]
    EmptyBatch,

    #[error("trace {index} has length {len}, shorter than the requested horizon {needed}")]
    TraceTooShort {
        index: usize,
        len: usize,
        needed: usize,
    },

    #[error("exact enumeration supports at most {cap} states, got {n_states}")]
    StateSpaceTooLarge { n_states: usize, cap: usize },

    #[error("Markov operator is not normal on L2(pi) (commutator norm {defect:e})")]
    NotNormalOperator { defect: f64 },

    #[error("Markov operator is not self-adjoint on L2(pi)")]
    NotReversible,

    #[error("spectral measure carries weight {weight:e} at z = 1")]
    WeightAtOne { weight: f64 },

    #[error("eigenvalue {modulus} lies outside the closed unit disk")]
    EigenvalueOutsideDisk { modulus: f64 },

    #[error("sequence is not regular: E(X_0 | F_-inf) = 0 cannot be certified")]
    NotRegular,

    #[error("long-run variance {variance:e} is degenerate")]
    DegenerateVariance { variance: f64 },

    #[error("identity check failed for {what}: {lhs} vs {rhs}")]
    IdentityMismatch { what: String, lhs: f64, rhs: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
