use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate subsystem label `{0}`")]
    DuplicateLabel(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("matrix is not Hermitian (asymmetry {0:e})")]
    NonHermitian(f64),
    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("trace is {0:.17} instead of 1")]
    TraceNotOne(f64),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("Kraus operators have inconsistent shapes: {0}")]
    ShapeMismatch(String),
    #[error("channel is not trace preserving (completeness residual {0:e})")]
    NotTracePreserving(f64),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("input carries weight {0:e} outside the support of the reference marginal")]
    SupportMismatch(f64),
    #[error("state is not Markov (CMI {cmi:e} bits, Petz distance {petz_distance:e})")]
    NotMarkov { cmi: f64, petz_distance: f64 },
    #[error("structure recovery failed: {0}")]
    StructureRecoveryFailed(String),
    #[error("not a two-sided Markov state: {0}")]
    NotTwoSidedMarkov(String),
    #[error("not a local-environment Markov state: {0}")]
    NotLocalEnvMarkov(String),
    #[error("{0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Errors caused by malformed or inconsistent caller input, as opposed
    /// to failures of a computation on valid input.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::NotTracePreserving(_)
                | Error::SupportMismatch(_)
                | Error::NotMarkov { .. }
                | Error::StructureRecoveryFailed(_)
                | Error::NotTwoSidedMarkov(_)
                | Error::NotLocalEnvMarkov(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
