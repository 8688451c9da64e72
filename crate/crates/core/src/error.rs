use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error(
        "no graph with the target downstream of the environment after {attempts} attempts \
         (d={d}, p_edge={p_edge}, n_int={n_int})"
    )]
    Generation {
        attempts: usize,
        d: usize,
        p_edge: f64,
        n_int: usize,
    },

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("model fit failed: {0}")]
    Fit(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(
        "search scope of {size} covariates exceeds the exhaustive limit of {limit}; \
         pre-select covariates first (e.g. with l2_boost_select)"
    )]
    ScopeTooLarge { size: usize, limit: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
