use std::fmt;

use gina_core::active::ActiveError;
use gina_core::dataio::DataError;
use gina_core::evalsuite::EvalError;
use gina_core::models::ModelError;
use gina_core::synthdata::SynthError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Numeric,
}

/// A failed command, classified by the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Config,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Data,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Numeric => 4,
        }
    }

    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self.kind {
            Kind::Config => "config error",
            Kind::Data => "data error",
            Kind::Numeric => "numeric abort",
        };
        write!(f, "{label}: {}", self.message)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let kind = match &e {
            ModelError::NonFinite { .. } | ModelError::Autodiff(_) | ModelError::Dist(_) => Kind::Numeric,
            ModelError::Spec(_) | ModelError::NoSamples => Kind::Config,
            ModelError::Dim { .. } | ModelError::NoMissingNet | ModelError::Format(_) | ModelError::Data(_) => {
                Kind::Data
            }
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::EmptySample => Self::config(e.to_string()),
            SynthError::DegenerateMask | SynthError::Data(_) => Self::data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) => m.into(),
            other => Self::data(other.to_string()),
        }
    }
}

impl From<ActiveError> for CliError {
    fn from(e: ActiveError) -> Self {
        match e {
            ActiveError::Model(m) => m.into(),
            ActiveError::Dist(d) => Self {
                kind: Kind::Numeric,
                message: d.to_string(),
            },
            ActiveError::TooManySteps { .. } => Self::config(e.to_string()),
            other => Self::data(other.to_string()),
        }
    }
}
