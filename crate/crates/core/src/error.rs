use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("coefficients are not strictly elliptic: min eigenvalue of sym(a) is {min_eigenvalue}")]
    NonElliptic { min_eigenvalue: f64 },

    #[error("invalid coefficient field: {0}")]
    InvalidField(String),

    #[error("face index {index} out of range (grid has {count} boundary faces)")]
    InvalidFace { index: usize, count: usize },

    #[error("face {face} is assigned by more than one partition part")]
    OverlappingPartition { face: usize },

    #[error("face {face} is not covered by the partition")]
    UncoveredFace { face: usize },

    #[error("singular system in {context}: reciprocal condition estimate {rcond:.3e} below 1e-12")]
    SingularSystem { context: String, rcond: f64 },

    #[error("Neumann series diverges: spectral radius of S_lambda*Phi is {radius}")]
    NeumannDivergence { radius: f64 },

    #[error("spectral report does not classify as Equilibrium (class: {class})")]
    NotEquilibrium { class: String },

    #[error("insufficient decay for rate fit: {0}")]
    InsufficientDecay(String),

    #[error("matrices are not entrywise comparable: {0}")]
    NotComparable(String),

    #[error(
        "principal eigenvalue cluster at s = {spectral_bound} has {cluster_size} members; \
         classification withheld"
    )]
    DefectivePrincipalEigenvalue {
        spectral_bound: f64,
        cluster_size: usize,
    },

    #[error("numerical failure in {context}: {message}")]
    Numerical { context: String, message: String },
}

impl Error {
    pub(crate) fn numerical(context: &str, message: impl ToString) -> Self {
        Error::Numerical {
            context: context.to_string(),
            message: message.to_string(),
        }
    }

    /// Short name of the operation that failed, used by the CLI for its
    /// "numerical failure in <operation>" exit message.
    pub fn operation(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "grid construction",
            Error::NonElliptic { .. } => "ellipticity check",
            Error::InvalidField(_) => "coefficient validation",
            Error::InvalidFace { .. } => "measure pairing",
            Error::OverlappingPartition { .. } | Error::UncoveredFace { .. } => "measure partition",
            Error::SingularSystem { .. } => "linear solve",
            Error::NeumannDivergence { .. } => "Neumann series resolvent",
            Error::NotEquilibrium { .. } => "stationary projection",
            Error::InsufficientDecay(_) => "rate fit",
            Error::NotComparable { .. } => "spectral monotonicity check",
            Error::DefectivePrincipalEigenvalue { .. } => "spectral report",
            Error::Numerical { .. } => "dense linear algebra",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
