use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("wrong image type: expected {expected}, got {actual}")]
    Type { expected: String, actual: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("transform error: {0}")]
    Transform(String),

    #[error("feature error: {0}")]
    Feature(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("query error: {0}")]
    Query(String),

    #[error("registration infeasible: {0}")]
    RegistrationInfeasible(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("search-and-compare infeasible: {0}")]
    NoContext(String),

    #[error("comparator error: {0}")]
    Comparator(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
