use std::path::PathBuf;

/// Errors produced anywhere in the translation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum NmtError {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("index error: id {id} at position {position} is outside a table of {rows} rows")]
    Index {
        position: usize,
        id: usize,
        rows: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("sentence of length {len} exceeds the position limit of {limit}")]
    Length { len: usize, limit: usize },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("non-finite loss {loss} at batch {batch}")]
    NonFiniteLoss { batch: usize, loss: f64 },

    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl NmtError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        NmtError::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NmtError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, NmtError>;
