use thiserror::Error;

/// Errors raised by the numerical engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("dimension must be positive")]
    ZeroDimension,

    #[error("operator is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("trace is not 1 (got {0})")]
    InvalidTrace(f64),

    #[error("operator is not positive semidefinite (minimum eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("state is not faithful (minimum eigenvalue {0:e})")]
    NotFaithful(f64),

    #[error("generator is not primitive (stationary kernel dimension {kernel_dim}, minimum stationary eigenvalue {min_eigenvalue:?})")]
    NonPrimitive {
        kernel_dim: usize,
        min_eigenvalue: Option<f64>,
    },

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("perturbation is not trace-annihilating (deviation {0:e})")]
    InvalidPerturbation(f64),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("non-finite evaluation: {0}")]
    Evaluation(String),

    #[error("probability vector has non-positive entry {value} at index {index}")]
    Support { index: usize, value: f64 },

    #[error("unsupported divergence `{0}`; only relative entropy is available")]
    UnsupportedDivergence(String),

    #[error("Cartan generators do not commute (commutator trace norm {0:e})")]
    NonCommuting(f64),

    #[error("Cartan set is degenerate (Gram matrix is singular)")]
    DegenerateCartan,

    #[error("invalid context graph: {0}")]
    Graph(String),

    #[error("invalid charge field: {0}")]
    Field(String),

    #[error("assembled self-consistency system is singular")]
    DegenerateSpec,

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("invalid loop: {0}")]
    Loop(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable kebab-case identifier of the error kind, for structured reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotSquare { .. } => "not-square",
            Error::Dimension { .. } => "dimension-mismatch",
            Error::ZeroDimension => "zero-dimension",
            Error::NotHermitian(_) => "not-hermitian",
            Error::InvalidTrace(_) => "invalid-trace",
            Error::NotPositive(_) => "not-positive",
            Error::NotFaithful(_) => "not-faithful",
            Error::NonPrimitive { .. } => "non-primitive",
            Error::InvalidGenerator(_) => "invalid-generator",
            Error::InvalidChannel(_) => "invalid-channel",
            Error::InvalidPerturbation(_) => "invalid-perturbation",
            Error::Domain(_) => "domain",
            Error::Evaluation(_) => "evaluation",
            Error::Support { .. } => "support",
            Error::UnsupportedDivergence(_) => "unsupported-divergence",
            Error::NonCommuting(_) => "non-commuting",
            Error::DegenerateCartan => "degenerate-cartan",
            Error::Graph(_) => "graph",
            Error::Field(_) => "field",
            Error::DegenerateSpec => "degenerate-spec",
            Error::NonConvergence { .. } => "non-convergence",
            Error::Loop(_) => "loop",
            Error::Numerical(_) => "numerical",
        }
    }
}
