use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown segment {segment:?} in form {form:?}")]
    UnknownSegment { segment: String, form: String },

    #[error("invalid alphabet: {0}")]
    Alphabet(String),

    #[error("insufficient taxa: {0}")]
    InsufficientTaxa(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("taxa mismatch: {0}")]
    TaxaMismatch(String),

    #[error("newick syntax error at byte {position}: {message}")]
    Newick { position: usize, message: String },

    #[error("invalid tree: {0}")]
    Tree(String),

    #[error("numerical underflow at site {site}")]
    Underflow { site: usize },

    #[error("undefined distance between {0} and {1}: no shared concepts")]
    UndefinedDistance(String, String),

    #[error("missing external distance for ({lang_a}, {word_a}) / ({lang_b}, {word_b})")]
    MissingDistance {
        lang_a: String,
        word_a: String,
        lang_b: String,
        word_b: String,
    },

    #[error("unknown leaf {0:?}")]
    UnknownLeaf(String),

    #[error("leaf sets differ: only in first {only_first:?}, only in second {only_second:?}")]
    LeafSetMismatch {
        only_first: Vec<String>,
        only_second: Vec<String>,
    },

    #[error("run {run} failed: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Underflow { .. } => true,
            Error::Run { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
