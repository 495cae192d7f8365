use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("document {doc_id}, box {box_id}: {msg}")]
    InvalidBox { doc_id: String, box_id: usize, msg: String },

    #[error("document {doc_id}: {msg}")]
    InvalidDocument { doc_id: String, msg: String },

    #[error("overlapping spans in box {box_id}")]
    OverlappingSpans { box_id: usize },

    #[error("unknown entity type {0:?}")]
    UnknownEntity(String),

    #[error("font rank {rank} out of range for a table of {rows} rows")]
    RankOutOfRange { rank: usize, rows: usize },

    #[error("page has {boxes} boxes but the graph has {nodes} nodes")]
    GraphMismatch { boxes: usize, nodes: usize },

    #[error("empty graph")]
    EmptyGraph,

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("missing gold labels in document {0}")]
    MissingLabels(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("length mismatch: {pred} predicted vs {gold} gold tags")]
    LengthMismatch { pred: usize, gold: usize },

    #[error(transparent)]
    Nn(#[from] layoutie_nn::NnError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}
