use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is indefinite (min eigenvalue {min:.3e}, max {max:.3e})")]
    Indefinite { min: f64, max: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular Fisher information matrix: parameters unobservable (rcond {0:.3e})")]
    SingularFim(f64),
    #[error("singular covariance matrix")]
    SingularCovariance,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("target colocated with IRS {0}")]
    ZeroDistance(usize),
    #[error("unknown Q-term kind: {0}")]
    UnknownKind(String),
    #[error("CRB is unbounded for every feasible point (zero information)")]
    UnboundedCrb,
    #[error("solver failed ({status:?}) {context}")]
    Solver {
        status: crate::sdp::Status,
        context: String,
    },
    #[error("anchor point violates the constraints; re-initialize ({0})")]
    InfeasibleAnchor(String),
    #[error("no feasible randomization candidate: {0}")]
    NoFeasibleCandidate(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::ZeroDistance(_) | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
