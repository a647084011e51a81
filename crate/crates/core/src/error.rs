use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("replication {replication}: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error at {}: {source}", path.display())]
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

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Innermost error, with round/replication context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Round { source, .. } | Error::Replication { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code for the command line front end.
    ///
    /// 1 for configuration, argument and I/O problems, 2 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Numeric(_) | Error::InvalidState(_) => 2,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_root_cause() {
        let nested = Error::Replication {
            replication: 2,
            source: Box::new(Error::Round { round: 7, source: Box::new(Error::numeric("singular")) }),
        };
        assert_eq!(nested.exit_code(), 2);
        assert!(nested.to_string().starts_with("replication 2: round 7:"));
        assert_eq!(Error::Config("x".into()).exit_code(), 1);
        assert_eq!(Error::invalid("x").exit_code(), 1);
        assert_eq!(Error::InvalidState("x".into()).exit_code(), 2);
    }
}
