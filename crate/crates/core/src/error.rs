use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Every failure the numeric core can report.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the operation's mathematical domain.
    Domain(String),
    /// The request would need more memory or index range than is available.
    Resource(String),
    /// No neighbour with a positive staircase increment exists around a sample.
    DegenerateStencil { index: usize },
    /// The state became non-finite while integrating.
    Divergence { time: f64 },
    /// A right-hand side term evaluated to a non-finite value.
    Evaluation { term: String },
    /// `S(t) == S(t0)` with `x != y`: the Green function is a delta there.
    DeltaRegime,
    /// Two sampled objects do not share the same time or space grid.
    Alignment(String),
    /// The spatial grid is too coarse for the requested evaluation.
    Resolution { spacing: f64, required: f64 },
    /// The field has not decayed at the boundary of the spatial domain.
    InsufficientDecay { ratio: f64 },
    /// A solver configuration violates its own constraints.
    Config(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Resource(msg) => write!(f, "resource error: {msg}"),
            Error::DegenerateStencil { index } => {
                write!(f, "degenerate stencil at grid index {index}: no neighbour with positive staircase increment")
            }
            Error::Divergence { time } => write!(f, "integration diverged at t = {time}"),
            Error::Evaluation { term } => write!(f, "non-finite value in term `{term}`"),
            Error::DeltaRegime => write!(f, "Green function requested with zero staircase increment"),
            Error::Alignment(msg) => write!(f, "grid alignment error: {msg}"),
            Error::Resolution { spacing, required } => {
                write!(f, "spatial spacing {spacing} exceeds the required {required}")
            }
            Error::InsufficientDecay { ratio } => {
                write!(f, "field does not decay at the domain boundary (boundary/max = {ratio:e})")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
