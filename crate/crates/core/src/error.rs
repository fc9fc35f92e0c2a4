use thiserror::Error;

/// Errors shared across the solver pipeline.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("translation error metric undefined for zero ground-truth translation")]
    DegenerateMetric,

    #[error("rotation too close to 180 degrees for the CGR parameterization")]
    SingularParameterization,

    #[error("polynomial is numerically zero; no roots defined")]
    DegeneratePolynomial,

    #[error("polynomial system is degenerate (non-finite solution set)")]
    DegenerateSystem,

    #[error("translation unobservable: {0}")]
    TranslationDegenerate(String),

    #[error("need at least {needed} effective correspondences, got {got}")]
    InsufficientCorrespondences { needed: usize, got: usize },

    #[error("counts (points={np}, lines={nl}, planes={npl}) do not form a minimal configuration")]
    UnsupportedConfiguration { np: usize, nl: usize, npl: usize },

    #[error("degenerate minimal configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("solver produced no usable candidates")]
    SolverFailure,

    #[error("no consensus set with enough effective inliers")]
    NoConsensus,

    #[error("degenerate ambiguity fixture: {0}")]
    DegenerateFixture(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
