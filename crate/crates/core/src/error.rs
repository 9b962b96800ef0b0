use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or matrix has the wrong rank or axis lengths for the operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// Paired contraction axes disagree in length.
    #[error(
        "contraction axis mismatch: lhs axis {lhs_axis} has length {lhs_len}, \
         rhs axis {rhs_axis} has length {rhs_len}"
    )]
    AxisMismatch {
        lhs_axis: usize,
        lhs_len: usize,
        rhs_axis: usize,
        rhs_len: usize,
    },

    /// A triangular factor has a diagonal entry below the rank tolerance.
    #[error("rank deficiency: |R[{index},{index}]| = {value:.3e} is below 1e-12")]
    RankDeficient { index: usize, value: f64 },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Conditioning on an assignment whose marginal probability underflows.
    #[error("conditioning on a null event: marginal probability {prob:.3e} is below the floor")]
    NullEvent { prob: f64 },

    #[error("matrix is not isometric: deviation {deviation:.3e} exceeds tolerance {tol:.3e}")]
    NotIsometric { deviation: f64, tol: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("FASTA format error at line {line}: {message}")]
    FastaFormat { line: usize, message: String },

    #[error("checkpoint error in field `{field}`: {message}")]
    Checkpoint { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
