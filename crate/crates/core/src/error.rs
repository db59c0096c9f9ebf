use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no unique steady state for scheme `{scheme}`: {reason}")]
    SingularSteadyState { scheme: String, reason: String },

    #[error("invalid driven system: {0}")]
    InvalidDrivenSystem(String),

    #[error("grid mismatch: source grid {source_points} points / {source_span} MHz, filter grid {filter_points} points / {filter_span} MHz")]
    GridMismatch {
        source_points: usize,
        source_span: f64,
        filter_points: usize,
        filter_span: f64,
    },

    #[error("analysis window too short: {bins} bins, need at least {required}")]
    WindowTooShort { bins: usize, required: usize },

    #[error("degenerate window: {0}")]
    DegenerateWindow(String),

    #[error("invalid scenario: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidScenario(Vec<crate::scheme::Violation>),

    #[error("config: {0}")]
    Config(String),

    #[error("unknown scenario `{name}` (available: {})", .available.join(", "))]
    UnknownScenario {
        name: String,
        available: Vec<String>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
