use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = BacktestError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error(transparent)]
    Core(#[from] trader_company_core::Error),
    #[error("line {line}: {msg}")]
    Data { line: u64, msg: String },
    #[error("unknown symbol {symbol:?}{}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    UnknownSymbol { symbol: String, line: Option<u64> },
    #[error("duplicate timestamp {timestamp} at line {line}")]
    DuplicateTimestamp { timestamp: String, line: u64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("corrupt state file {path}: {msg}")]
    CorruptState { path: PathBuf, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BacktestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
