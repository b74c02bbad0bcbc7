use std::fmt;

use dagsbm_core::graph::GraphError;
use dagsbm_core::io::IoError;
use dagsbm_core::posterior::PosteriorError;
use dagsbm_core::sampler::SamplerError;
use dagsbm_core::selection::SelectionError;
use dagsbm_core::synth::SynthError;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad or inconsistent command-line arguments (exit 1).
    Usage(String),
    /// Unreadable, malformed or inconsistent input files (exit 2).
    Data(String),
    /// A computation produced a non-finite or undefined result (exit 3).
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PosteriorError> for CliError {
    fn from(e: PosteriorError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::MissingPseudoPriors => CliError::Usage(e.to_string()),
            _ => CliError::Data(format!("configuration: {e}")),
        }
    }
}

impl From<SelectionError> for CliError {
    fn from(e: SelectionError) -> Self {
        match e {
            SelectionError::EmptyPilot(_) | SelectionError::Parse(_) => CliError::Data(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}
