use thiserror::Error;

/// Errors raised by parameter validation and I/O.
#[derive(Debug, Error)]
pub enum AsepError {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("boundary rate is negative: {name}[{index}] gives total rate {rate}")]
    NegativeRate {
        name: &'static str,
        index: usize,
        rate: f64,
    },
    #[error("no configuration of {len} spins has spin sum {spin_sum}")]
    EmptyHyperplane { len: usize, spin_sum: i64 },
    #[error("state space of {sites} sites exceeds the exact-computation cap of {cap} states")]
    StateSpaceTooLarge { sites: usize, cap: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AsepError>;
