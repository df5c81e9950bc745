use thiserror::Error;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular kernel evaluation: target and source coincide")]
    SingularEvaluation,

    #[error("QBX center collision at node {node}: refine the discretization or shrink the radius scale")]
    CenterCollision { node: usize },

    #[error("QBX accuracy violation: source {source_index} lies inside the expansion ball")]
    AccuracyViolation { source_index: usize },

    #[error("geometric precondition violated: {0}")]
    Geometry(String),

    #[error("non-finite entries in matrix")]
    NonFinite,

    #[error("tree depth exceeded the cap of {0} levels")]
    TreeDepth(usize),

    #[error("singular diagonal block {block} at level {level}")]
    SingularBlock { level: usize, block: usize },

    #[error("singular reduced system")]
    SingularReduced,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable numeric code used by the command line and the C interface.
    pub fn code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) => 1,
            Error::SingularEvaluation => 2,
            Error::CenterCollision { .. } => 3,
            Error::AccuracyViolation { .. } => 4,
            Error::Geometry(_) => 5,
            Error::NonFinite => 6,
            Error::TreeDepth(_) => 7,
            Error::SingularBlock { .. } => 8,
            Error::SingularReduced => 9,
            Error::Dimension { .. } => 10,
            Error::Config(_) => 11,
            Error::Io(_) => 12,
            Error::Csv(_) => 13,
        }
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::SingularEvaluation => "singular_evaluation",
            Error::CenterCollision { .. } => "center_collision",
            Error::AccuracyViolation { .. } => "accuracy_violation",
            Error::Geometry(_) => "geometry",
            Error::NonFinite => "non_finite",
            Error::TreeDepth(_) => "tree_depth",
            Error::SingularBlock { .. } => "singular_block",
            Error::SingularReduced => "singular_reduced",
            Error::Dimension { .. } => "dimension",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}
