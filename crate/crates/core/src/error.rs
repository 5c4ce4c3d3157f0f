use std::path::PathBuf;

/// Position of a vector inside an embedding store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Text(usize),
    Image,
}

impl std::fmt::Display for Slot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Slot::Text(view) => write!(f, "view {view}"),
            Slot::Image => f.write_str("image"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("empty-after-kcore: no interactions survive {k_core}-core filtering")]
    EmptyAfterKcore { k_core: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("duplicate item_id {0:?} in metadata")]
    DuplicateItem(String),
    #[error("template error for view {view:?}: {msg}")]
    Template { view: String, msg: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("checksum mismatch: manifest says {expected:08x}, payload is {actual:08x}")]
    Checksum { expected: u32, actual: u32 },
    #[error("degenerate-embedding: zero-norm vector at item {item}, {slot}")]
    DegenerateEmbedding { item: usize, slot: Slot },
    #[error("degenerate-embedding: zero-norm vector")]
    ZeroNorm,
    #[error("non-finite value at item {item}, {slot}")]
    NonFinite { item: usize, slot: Slot },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("unknown user index {0}")]
    UnknownUser(usize),
    #[error("no evaluable users in the {0} split")]
    NoEvaluableUsers(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// Wraps the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code used by the CLI: 2 usage, 3 data/validation, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Parameter(_) => 2,
            Error::Numeric(_) => 4,
            _ => 3,
        }
    }
}
