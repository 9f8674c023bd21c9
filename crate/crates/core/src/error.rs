use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("model definition error: {0}")]
    ModelDefinition(String),

    #[error("degenerate balance denominator for population {population} (value {value:e})")]
    DegenerateDenominator { population: usize, value: f64 },

    #[error("CFL condition cannot be met: {0}")]
    CflInfeasible(String),

    #[error("density became negative ({min:e}) at t = {t}")]
    NegativeDensity { t: f64, min: f64 },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("numerical overflow: {0}")]
    Overflow(String),

    #[error("non-finite state at t = {t}")]
    Blowup { t: f64 },

    #[error("missing statistic: {0}")]
    MissingStatistic(String),

    #[error(transparent)]
    Config(#[from] crate::harness::config::ConfigError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
