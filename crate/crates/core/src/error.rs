use core::fmt;

/// Errors shared by the solver modules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Error {
    /// Grid construction rejected the requested geometry.
    InvalidGrid(&'static str),
    /// A cell index lies outside the grid.
    CellOutOfRange,
    /// A position coordinate is NaN or infinite.
    PositionNotFinite,
    /// A field value is NaN or infinite.
    ValueNotFinite,
    /// A time step must be strictly positive.
    NonPositiveTimeStep,
    /// Two containers that must share a grid do not.
    ShapeMismatch,
    /// Particle ids of two snapshots of the same set disagree.
    ParticleIdMismatch,
    /// A flux register entry does not match the particle region it was built for.
    RegionMismatch,
    /// Statistics were requested from fewer samples than the estimator needs.
    InsufficientSamples,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidGrid(why) => write!(f, "invalid grid: {why}"),
            Error::CellOutOfRange => write!(f, "cell index out of range"),
            Error::PositionNotFinite => write!(f, "position is NaN or infinite"),
            Error::ValueNotFinite => write!(f, "field value is NaN or infinite"),
            Error::NonPositiveTimeStep => write!(f, "time step must be > 0"),
            Error::ShapeMismatch => write!(f, "grid shapes do not match"),
            Error::ParticleIdMismatch => write!(f, "particle ids do not match between snapshots"),
            Error::RegionMismatch => write!(f, "flux register does not match the particle region"),
            Error::InsufficientSamples => write!(f, "not enough samples"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
