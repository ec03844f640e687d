use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Box with negative extent or non-finite coordinates.
    InvalidBox([f64; 4]),
    /// Detector confidence outside `[0, 1]`.
    InvalidConfidence(f64),
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    NonFinite(&'static str),
    /// A query had no tokens left after normalization.
    EmptyQuery,
    EmptyInput(&'static str),
    /// A forward pass produced a non-finite value for this box.
    NonFiniteActivation {
        box_index: usize,
    },
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
    },
    InvalidConfig(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidBox(c) => write!(
                f,
                "invalid box [{}, {}, {}, {}]: coordinates must be finite with x2 >= x1 and y2 >= y1",
                c[0], c[1], c[2], c[3]
            ),
            Error::InvalidConfidence(c) => write!(f, "confidence {c} outside [0, 1]"),
            Error::DimensionMismatch { what, expected, found } => {
                write!(f, "{what}: expected dimension {expected}, found {found}")
            }
            Error::NonFinite(what) => write!(f, "{what} contains a non-finite value"),
            Error::EmptyQuery => write!(f, "query has no tokens after normalization"),
            Error::EmptyInput(what) => write!(f, "{what} is empty"),
            Error::NonFiniteActivation { box_index } => {
                write!(f, "non-finite activation while scoring box {box_index}")
            }
            Error::NonFiniteLoss { epoch, batch } => {
                write!(f, "non-finite loss at epoch {epoch}, batch {batch}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
