use std::fmt;

use x3dugt::{Error, WeightsError};

pub const OK: u8 = 0;
pub const CONFIG: u8 = 2;
pub const IO: u8 = 3;
pub const SHAPE: u8 = 4;
pub const SELFCHECK: u8 = 5;

/// Which artifact was being handled when an error surfaced. Malformed JSON
/// is a config error while loading a config and an I/O error elsewhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Weights,
    Clip,
    Run,
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

pub fn code_for(stage: Stage, e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => CONFIG,
        Error::Json(_) if stage == Stage::Config => CONFIG,
        Error::Json(_) | Error::Io(_) => IO,
        Error::Weights(WeightsError::ShapeMismatch { .. }) => SHAPE,
        Error::Weights(_) => IO,
        Error::Shape { .. } | Error::Contract { .. } | Error::Preprocess(_) | Error::LabelOutOfRange { .. } => SHAPE,
    }
}

pub trait Classify<T> {
    fn at(self, stage: Stage, what: &str) -> Result<T, Failure>;
}

impl<T> Classify<T> for x3dugt::Result<T> {
    fn at(self, stage: Stage, what: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(code_for(stage, &e), format!("{what}: {e}")))
    }
}
