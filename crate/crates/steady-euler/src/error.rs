use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A jet evaluation hit a pole (division by zero, log/sqrt of a
    /// non-positive base, tan at an odd multiple of pi/2, ...). The caller
    /// should re-sample away from the singular set.
    #[error("singular evaluation: {0}")]
    SingularEvaluation(String),

    #[error("point {0:?} outside chart domain `{1}`")]
    OutsideDomain([f64; 3], &'static str),

    #[error("metric nearly singular (condition estimate {0:.3e} > {1:.3e})")]
    NearSingular(f64, f64),

    #[error("degenerate frame seed: {0}")]
    DegenerateSeed(String),

    #[error("derived frame inconsistent: {0}")]
    FrameInconsistent(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("at least one of the two parameters must be nonzero")]
    BothParametersZero,

    #[error("unknown tag `{0}`")]
    UnknownTag(String),

    #[error("point lies on a coordinate axis circle of the Hopf chart")]
    AxisPoint,

    #[error("derivative order {requested} not supported (maximum {max})")]
    OrderUnsupported { requested: usize, max: usize },

    #[error("profile parse error: {0}")]
    ProfileParse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
