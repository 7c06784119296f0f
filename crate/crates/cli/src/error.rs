use gridsentry::classifiers::ClassifierError;
use gridsentry::comtrade::ComtradeError;
use gridsentry::dataset::DatasetError;
use gridsentry::event_sim::SimError;
use gridsentry::metrics::MetricsError;
use gridsentry::schedule::ScheduleError;
use gridsentry::stream::StreamError;
use thiserror::Error;

/// Command failure, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad options, config or schedule. Exit code 2.
    #[error("{0}")]
    Validation(String),
    /// Filesystem failure. Exit code 3.
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    /// Inputs that parse but are inconsistent with each other. Exit code 4.
    #[error("{0}")]
    Contract(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Io { .. } => 3,
            Self::Contract(_) => 4,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }
}

impl From<ScheduleError> for CliError {
    fn from(e: ScheduleError) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<ComtradeError> for CliError {
    fn from(e: ComtradeError) -> Self {
        match e {
            ComtradeError::Io(source) => Self::io("record", source),
            other => Self::Contract(other.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::BadFraction(_) => Self::Validation(e.to_string()),
            other => Self::Contract(other.to_string()),
        }
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::Hyperparameter(_) | ClassifierError::UnknownModel(_) => {
                Self::Validation(e.to_string())
            }
            ClassifierError::Io(source) => Self::io("model artifact", source),
            other => Self::Contract(other.to_string()),
        }
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        match e {
            StreamError::Config(_) => Self::Validation(e.to_string()),
            StreamError::Io(source) => Self::io("decision trace", source),
            StreamError::Classifier(c) => c.into(),
            other => Self::Contract(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io(source) => Self::io("report", source),
            other => Self::Contract(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Contract(format!("json: {e}"))
    }
}
