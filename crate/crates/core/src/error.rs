use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A carrier challenge cannot satisfy its band or spacing constraints.
    #[error("carrier constraint violated: {0}")]
    Constraint(String),

    /// Superposed tones would exceed full scale.
    #[error("amplitude error: {0}")]
    Amplitude(String),

    /// A time-domain quantity falls outside the interval it must live in.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("enrollment error: {0}")]
    Enrollment(String),

    #[error("state error: {0}")]
    State(String),

    /// The SVM solver was handed data with no usable margin (all samples identical).
    #[error("degenerate margin: {0}")]
    DegenerateMargin(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
