use thiserror::Error;

/// Every failure the toolkit reports. The `Display` form is
/// `<category>: <detail>`, which the CLI prefixes with `error: `.
#[derive(Debug, Error)]
pub enum FairError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("ingestion: row {row}, column {column}: {detail}")]
    Ingestion {
        row: usize,
        column: String,
        detail: String,
    },
    #[error("shape: {0}")]
    Shape(String),
    #[error("training: {0}")]
    Training(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("metric-undefined: {0}")]
    MetricUndefined(String),
    #[error("degenerate-data: {0}")]
    DegenerateData(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("capability: {0}")]
    Capability(String),
    #[error("aggregation: {0}")]
    Aggregation(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl FairError {
    pub fn category(&self) -> &'static str {
        match self {
            FairError::Config(_) => "configuration",
            FairError::Ingestion { .. } => "ingestion",
            FairError::Shape(_) => "shape",
            FairError::Training(_) => "training",
            FairError::Numerical(_) => "numerical",
            FairError::MetricUndefined(_) => "metric-undefined",
            FairError::DegenerateData(_) => "degenerate-data",
            FairError::Schema(_) => "schema",
            FairError::Capability(_) => "capability",
            FairError::Aggregation(_) => "aggregation",
            FairError::Io(_) => "io",
            FairError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, FairError>;
