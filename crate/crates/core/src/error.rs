use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-positive price {price} for stock {stock} at timestamp {timestamp}")]
    NonPositivePrice { stock: usize, timestamp: i64, price: f64 },

    #[error("malformed panel: {0}")]
    Shape(String),

    #[error("insufficient history at t={t}; earliest valid time is {earliest}")]
    InsufficientHistory { t: usize, earliest: usize },

    #[error("time {t} is outside the visible panel (last visible column {last})")]
    OutOfRange { t: usize, last: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}
