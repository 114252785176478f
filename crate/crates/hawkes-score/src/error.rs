//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, simulation, fitting, and testing.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument lies outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Event data violate the stream invariants (ordering, range, shape).
    #[error("invalid event stream: {0}")]
    InvalidStream(String),

    /// A boost function evaluated to a nonpositive value on the given mark.
    #[error("boost domain error: {0}")]
    BoostDomain(String),

    /// The boost normalization constant is nonpositive.
    #[error("normalization error: E[h] = {0} is not positive")]
    Normalization(f64),

    /// No closed form exists for the requested (mark model, boost family) pair.
    #[error("no closed form for E[h]: {0}")]
    NoClosedForm(String),

    /// Too few events for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The stability condition theta * C < 1 fails.
    #[error("stability violation: theta * g_bound = {product} >= 1")]
    Stability { product: f64 },

    /// The simulated intensity exceeded the configured hard cap.
    #[error("intensity explosion at t = {time}: lambda = {intensity} exceeds cap {cap}")]
    Explosion { time: f64, intensity: f64, cap: f64 },

    /// Optimization failed to converge.
    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    /// The empirical information matrix is singular (degenerate marks or r too large).
    #[error("singular information matrix: {0}")]
    SingularInformation(String),

    /// A numeric routine failed (NaN propagation, series non-convergence).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// File or format problem on ingestion/persistence.
    #[error("i/o error: {0}")]
    Io(String),

    /// Configuration problem (missing or inconsistent settings).
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// CLI exit code: 1 for validation/configuration problems, 2 for
    /// numeric/convergence failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::InvalidStream(_)
            | Error::InsufficientData(_)
            | Error::Stability { .. }
            | Error::Io(_)
            | Error::Config(_) => 1,
            Error::BoostDomain(_)
            | Error::Normalization(_)
            | Error::NoClosedForm(_)
            | Error::Explosion { .. }
            | Error::NonConvergence(_)
            | Error::SingularInformation(_)
            | Error::Numeric(_) => 2,
        }
    }

    /// Stable machine-readable kind tag, used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InvalidStream(_) => "invalid_stream",
            Error::BoostDomain(_) => "boost_domain",
            Error::Normalization(_) => "normalization",
            Error::NoClosedForm(_) => "no_closed_form",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Stability { .. } => "stability",
            Error::Explosion { .. } => "explosion",
            Error::NonConvergence(_) => "non_convergence",
            Error::SingularInformation(_) => "singular_information",
            Error::Numeric(_) => "numeric",
            Error::Io(_) => "io",
            Error::Config(_) => "config",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
