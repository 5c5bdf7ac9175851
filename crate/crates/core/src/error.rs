//! Error type shared by all pipeline stages.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition.
    InvalidInput(String),
    /// The landmark configuration is degenerate and the similarity fit has
    /// no unique solution.
    SingularFit,
    /// A box lies fully outside the image it is being rasterized into.
    OutOfBounds(String),
    /// Two containers that must agree in shape do not.
    ShapeMismatch { expected: String, got: String },
    /// The training loss became non-finite.
    TrainingDiverged { iteration: u32, loss: f64 },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Stable machine-readable tag, used by CLI error reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::SingularFit => "singular_fit",
            Error::OutOfBounds(_) => "out_of_bounds",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::TrainingDiverged { .. } => "training_diverged",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::SingularFit => write!(f, "degenerate landmark configuration: similarity fit is singular"),
            Error::OutOfBounds(msg) => write!(f, "out of bounds: {msg}"),
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Error::TrainingDiverged { iteration, loss } => {
                write!(f, "training diverged at iteration {iteration} (loss {loss})")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
