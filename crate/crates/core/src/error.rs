use thiserror::Error;

/// Errors raised by the toolkit.
///
/// The variants are grouped by how the CLI reports them: parameter and
/// configuration problems, bad input data, and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The interface is not in total internal reflection.
    #[error("not in total internal reflection: sin(theta) = {sin_theta} < n2/n1 = {ratio}")]
    NotTir { sin_theta: f64, ratio: f64 },

    /// Run-config problem, tagged with the offending key path.
    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    /// Input data is malformed or insufficient.
    #[error("data error: {0}")]
    Data(String),

    /// An iterative or numeric procedure could not produce a result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::NotTir { .. } | Error::Config { .. } => 2,
            Error::Data(_) | Error::Io { .. } => 3,
            Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
