use std::path::Path;

use cdtkit::cdt::CdtError;
use cdtkit::classify::ClassifyError;
use cdtkit::datagen::DatagenError;
use cdtkit::density::DensityError;
use cdtkit::features::FeaturesError;
use thiserror::Error;

/// Failure of a subcommand, split by exit status: bad input (2) or a
/// numerical failure on well-formed input (3).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }

    /// Prefixes the message, keeping the category.
    pub fn context(self, prefix: impl std::fmt::Display) -> Self {
        match self {
            CliError::Input(m) => CliError::Input(format!("{prefix}: {m}")),
            CliError::Numeric(m) => CliError::Numeric(format!("{prefix}: {m}")),
        }
    }
}

impl From<DensityError> for CliError {
    fn from(e: DensityError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<CdtError> for CliError {
    fn from(e: CdtError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        use ClassifyError::*;
        match e {
            RowMismatch { .. }
            | Ragged { .. }
            | NonFinite(_)
            | TooFewClasses(_)
            | NotBinary(_)
            | BadParameter(_)
            | DimensionMismatch(..)
            | EmptySet
            | TooFewSamples { .. } => CliError::Input(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<FeaturesError> for CliError {
    fn from(e: FeaturesError) -> Self {
        match e {
            FeaturesError::Density(d) => d.into(),
            FeaturesError::Classify(c) => c.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<DatagenError> for CliError {
    fn from(e: DatagenError) -> Self {
        match e {
            DatagenError::Classify(c) => c.into(),
            DatagenError::BadFamily(_) | DatagenError::Fixture(_) => CliError::Input(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}
