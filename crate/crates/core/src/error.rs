use thiserror::Error;

/// Errors raised by constructors and operations of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid constitutive parameters: {0}")]
    InvalidParams(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("argument must be nonnegative, got {0}")]
    NegativeArgument(f64),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("fields live on different domains")]
    DomainMismatch,

    #[error("point {x} lies outside [{a}, {b}]")]
    OutOfDomain { x: f64, a: f64, b: f64 },

    #[error("point {0} is a jump position; use left_limit/right_limit")]
    AtJump(f64),

    #[error("invalid jump list: {0}")]
    InvalidJumps(String),

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("jump separation violated: gap {found} must exceed {required}")]
    SeparationViolated { required: f64, found: f64 },

    #[error("eps = {eps} too large: must be below {bound}")]
    EpsTooLarge { eps: f64, bound: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("at eps = {eps}: {source}")]
    AtEps {
        eps: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("brute force limited to {max} cells, got {found}")]
    TooManyCells { max: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
