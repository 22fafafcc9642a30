use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape, range or value problems with caller-supplied data.
    #[error("invalid input: {0}")]
    Input(String),

    /// A parse problem tied to a line of an input file (1-based).
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e} below -{tolerance:e}")]
    NotPsd { eigenvalue: f64, tolerance: f64 },

    /// Input lies outside the domain of a manifold map.
    #[error("domain error: {0}")]
    Domain(String),

    /// The principal matrix logarithm does not exist or is ill-conditioned.
    #[error("log-branch error: rotation angle {angle} is within {margin:e} of pi")]
    LogBranch { angle: f64, margin: f64 },

    #[error("inconsistent factorizations: relative mismatch {mismatch:e} exceeds {tolerance:e}")]
    InconsistentFactorization { mismatch: f64, tolerance: f64 },

    /// Broken internal structure such as mismatched TT bond dimensions.
    #[error("structure error: {0}")]
    Structure(String),

    #[error("gas-law base {base} is not positive at t = {time}")]
    GasLaw { base: f64, time: f64 },

    /// An error raised while processing one parameter sample of a sweep.
    #[error("parameter sample {index}: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn at_sample(index: usize, err: Error) -> Self {
        Error::AtSample {
            index,
            source: Box::new(err),
        }
    }
}
