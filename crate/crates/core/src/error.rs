use std::path::PathBuf;

/// Errors produced anywhere in the co-evolution stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is missing, malformed or out of range.
    #[error("configuration error: {0}")]
    Config(String),
    /// World or dataset generation could not satisfy its constraints.
    #[error("generation error: {0}")]
    Generation(String),
    /// No chain of the requested length starts at the given entity.
    #[error("no valid {hops}-hop chain starts at entity {start}")]
    NoChain { start: u32, hops: usize },
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// A text artifact (world, checkpoint, metrics) failed to parse.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// Two metric streams were produced under different evaluation protocols.
    #[error("comparison error: {0}")]
    Comparison(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
