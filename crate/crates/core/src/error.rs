use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid illuminant {rgb:?}: {reason}")]
    InvalidIlluminant { rgb: [f64; 3], reason: &'static str },

    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("{path}:{line}: {msg}")]
    Manifest {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Decode { path: PathBuf, msg: String },

    #[error("fold plan: {0}")]
    Folds(String),

    #[error("clustering infeasible: {0}")]
    InfeasibleClusters(String),

    #[error("no feasible crop after {attempts} attempts")]
    InfeasibleCrop { attempts: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown baseline `{0}`")]
    UnknownBaseline(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("training diverged at iteration {iter} (loss {loss})")]
    Divergence { iter: usize, loss: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool: 2 for data errors,
    /// 3 for numeric divergence. Usage errors (1) never reach this type.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } => 3,
            _ => 2,
        }
    }
}
