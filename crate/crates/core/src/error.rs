use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular geometry: {0}")]
    SingularGeometry(String),

    /// The selection window around a cluster contains no probes, i.e. the
    /// panel extents are too small for this cluster.
    #[error("no probes in sector around ({azimuth:.2}°, {elevation:.2}°)")]
    NoProbesInSector { azimuth: f64, elevation: f64 },

    #[error("snapshot {snapshot}: centroid ({azimuth:.2}°, {elevation:.2}°) lies outside the probe panel")]
    TrajectoryOutOfSector {
        snapshot: usize,
        azimuth: f64,
        elevation: f64,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
