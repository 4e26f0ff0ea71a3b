use alloc::string::String;
use core::fmt;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Payoffs violate `h > c >= m > g`.
    InvalidStagHunt { h: f64, c: f64, m: f64, g: f64 },
    /// A prosocial weight outside `[0, 1]` (or NaN).
    InvalidWeight(f64),
    /// Reward tables or vectors with inconsistent sizes.
    DimensionMismatch { expected: usize, found: usize },
    /// A strategy or agent index outside the table.
    IndexOutOfBounds { index: usize, len: usize },
    /// An operation that needs a symmetric game got an asymmetric one.
    NotSymmetric,
    /// Strategies must be ordered by non-increasing diagonal payoff.
    UnsortedDiagonal { index: usize },
    /// A documented precondition of the operation does not hold.
    Precondition(&'static str),
    /// A configuration value is out of its legal range.
    InvalidConfig(String),
    /// An empty list where at least one element is required.
    Empty(&'static str),
    /// NaN or infinity where finite values are required.
    NonFinite(String),
    /// Tensor shapes do not line up.
    ShapeMismatch { expected: alloc::vec::Vec<usize>, found: alloc::vec::Vec<usize> },
    /// `step` was called on a finished episode.
    Terminated,
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidStagHunt { h, c, m, g } => write!(
                f,
                "payoffs (h={h}, c={c}, m={m}, g={g}) do not satisfy h > c >= m > g"
            ),
            Error::InvalidWeight(a) => write!(f, "prosocial weight {a} is not in [0, 1]"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::IndexOutOfBounds { index, len } => {
                write!(f, "index {index} out of bounds for length {len}")
            }
            Error::NotSymmetric => write!(f, "game is not symmetric"),
            Error::UnsortedDiagonal { index } => write!(
                f,
                "diagonal payoffs increase at strategy {index}; canonicalize the game first"
            ),
            Error::Precondition(what) => write!(f, "precondition violated: {what}"),
            Error::InvalidConfig(what) => write!(f, "invalid configuration: {what}"),
            Error::Empty(what) => write!(f, "{what} must not be empty"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::ShapeMismatch { expected, found } => {
                write!(f, "shape mismatch: expected {expected:?}, found {found:?}")
            }
            Error::Terminated => write!(f, "episode already terminated"),
        }
    }
}

impl core::error::Error for Error {}
