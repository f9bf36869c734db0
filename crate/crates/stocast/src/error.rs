use std::path::{Path, PathBuf};

use stocast_core::{
    dataset::DatasetError, eval::EvalError, forecast::ForecastError, geo::GeoError, ingest::IngestError,
    net::NetError, synth::SynthError, train::TrainError,
};

/// Errors surfaced by file formats and commands, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 for bad input or config, 3 for numeric failure,
    /// 4 for a violated internal invariant.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Io { .. } | Error::Format { .. } | Error::Input(_) => 2,
            Error::Numeric(_) => 3,
            Error::Internal(_) => 4,
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn format(path: impl AsRef<Path>, message: impl std::fmt::Display) -> Self {
        Error::Format { path: path.as_ref().to_path_buf(), message: message.to_string() }
    }
}

macro_rules! input_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for Error {
            fn from(e: $t) -> Self {
                Error::Input(e.to_string())
            }
        }
    )*};
}

input_errors!(GeoError, IngestError, DatasetError, EvalError, ForecastError, SynthError);

impl From<NetError> for Error {
    fn from(e: NetError) -> Self {
        match e {
            NetError::CacheMismatch(_) => Error::Internal(e.to_string()),
            NetError::Shape(_) => Error::Input(e.to_string()),
        }
    }
}

impl From<TrainError> for Error {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } | TrainError::NonFiniteGradient { .. } | TrainError::NonFiniteValidation { .. } => {
                Error::Numeric(e.to_string())
            }
            TrainError::Net(n) => n.into(),
            _ => Error::Input(e.to_string()),
        }
    }
}
