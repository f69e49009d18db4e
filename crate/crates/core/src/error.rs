use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Requested configuration is not supported (dimension, quadrature degree, ...).
    #[error("unsupported: {0}")]
    Capability(String),

    /// Mesh or index sizes exceed what the index type can address.
    #[error("size overflow: {0}")]
    Overflow(String),

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("quadrature did not converge: estimate {estimate:e}, achieved relative tolerance {achieved:e}")]
    Accuracy { estimate: f64, achieved: f64 },

    /// A field was evaluated where it blows up.
    #[error("singular evaluation: {0}")]
    Singularity(String),

    /// Matrix is not symmetric positive definite or is structurally invalid.
    #[error("matrix error: {0}")]
    Matrix(String),

    /// Iterative linear solver hit its iteration cap.
    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    /// Optimization loop hit its iteration cap.
    #[error("{method} did not converge after {iterations} iterations (update norm {update_norm:e})")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        update_norm: f64,
        /// Last control iterate.
        last_control: Vec<f64>,
    },

    /// Problem data violate an admissibility requirement.
    #[error("inadmissible data: {0}")]
    Admissibility(String),

    /// Invalid study configuration or CLI input.
    #[error("configuration error: {0}")]
    Config(String),

    /// A convergence study stopped early; the rows computed so far are attached.
    #[error("study aborted at level {level}: {source}")]
    StudyAborted {
        level: usize,
        partial: Box<crate::study::ConvergenceTable>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
