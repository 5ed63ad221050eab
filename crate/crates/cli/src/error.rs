//! Error channel for the CLI with the stable exit-code contract:
//! 0 ok, 1 validation, 2 I/O, 3 parse, 4 shape, 5 numeric.

use std::fmt;

use dils_core::dils::DilsError;
use dils_core::dynamics::{ComposeError, SimError};
use dils_core::learn::LearnError;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
    Parse(String),
    Shape(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Shape(_) => 4,
            CliError::Numeric(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Shape(m) => write!(f, "shape error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<dils_core::dsl::ParseError> for CliError {
    fn from(e: dils_core::dsl::ParseError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<dils_core::csvio::CsvError> for CliError {
    fn from(e: dils_core::csvio::CsvError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Shape(e.to_string()),
        }
    }
}

impl From<ComposeError> for CliError {
    fn from(e: ComposeError) -> Self {
        match e {
            ComposeError::InvalidDiagram(m) => CliError::Validation(m),
            _ => CliError::Shape(e.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::NonFinite(_) | LearnError::NonFiniteLoss { .. } => {
                CliError::Numeric(e.to_string())
            }
            LearnError::InvalidDiagram(m) => CliError::Validation(m),
            _ => CliError::Shape(e.to_string()),
        }
    }
}

impl From<DilsError> for CliError {
    fn from(e: DilsError) -> Self {
        match e {
            DilsError::NonFinite(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Shape(e.to_string()),
        }
    }
}
