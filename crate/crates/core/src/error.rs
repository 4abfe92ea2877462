use thiserror::Error;

/// Errors produced anywhere in the ReGNN pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("no rows remain after ingestion ({dropped} dropped)")]
    EmptyData { dropped: usize },
    #[error("column `{0}` has zero variance")]
    DegenerateColumn(String),
    #[error("unknown level `{level}` for categorical column `{column}`")]
    UnknownLevel { column: String, level: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("collinear design: column `{column}` is linearly dependent on earlier columns")]
    Collinearity { column: String },
    #[error("underdetermined fit: {n} observations for {terms} terms")]
    Underdetermined { n: usize, terms: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("train-mode forward needs at least 2 rows, got {0}")]
    BatchSize(usize),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("non-finite gradient in parameter block `{block}`")]
    NonFinite { block: String },
    #[error("weights sum to zero")]
    DegenerateWeights,
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
    #[error("layout error: {0}")]
    Layout(String),
    #[error("score undefined: {0}")]
    UndefinedScore(String),
    #[error("feature `{0}` is categorical; ALE supports continuous and ordinal only")]
    UnsupportedKind(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user configuration rather than data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Schema(_) | Error::Usage(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
