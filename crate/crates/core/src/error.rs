use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is empty")]
    Empty,

    #[error("matrix contains a non-finite entry")]
    NonFinite,

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{field}: {source}")]
    InvalidField {
        field: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("posterior covariance is singular")]
    SingularPosterior,

    #[error("posterior covariance is outside 0 <= K <= prior (violation {violation:e})")]
    InfeasiblePosterior { violation: f64 },

    #[error("posterior covariance was built for a different prior")]
    PriorMismatch,

    #[error("budget {budget} is not above the unreachable floor {floor}")]
    Infeasible { budget: f64, floor: f64 },

    #[error("observation covariance is singular (min eigenvalue {min_eigenvalue:e})")]
    SingularObservation { min_eigenvalue: f64 },

    #[error("semantic noise covariance is singular (min eigenvalue {min_eigenvalue:e})")]
    SemanticNoiseSingular { min_eigenvalue: f64 },

    #[error("{matrix} is not diagonal in a shared orthogonal basis (off-diagonal mass {off_diagonal:e})")]
    NotJointlyDiagonalizable {
        matrix: &'static str,
        off_diagonal: f64,
    },

    #[error("log-det oracle did not converge in {iterations} iterations (KKT residual {kkt_residual:e})")]
    OracleNotConverged { iterations: usize, kkt_residual: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn in_field(self, field: &'static str) -> Error {
        Error::InvalidField {
            field,
            source: Box::new(self),
        }
    }
}
