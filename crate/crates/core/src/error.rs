use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed protocol spec: {0}")]
    MalformedSpec(String),
    #[error("length error: expected {expected} bits, got {got}")]
    Length { expected: usize, got: usize },
    #[error("message of {len} bits exceeds the 2^{exponent}-bit hash domain")]
    MessageTooLong { len: usize, exponent: u32 },
    #[error("tree code depth {depth} exceeded")]
    DepthExceeded { depth: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
