use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KacError {
    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),
    #[error("coupling at distance 0 is undefined (no self-coupling)")]
    SelfCoupling,
    #[error("invalid scales: {0}")]
    InvalidScales(String),
    #[error("domain mismatch: {0}")]
    Domain(String),
    #[error("stale field cache: spin signature {spins:#018x} != cache signature {cache:#018x}")]
    StaleCache { spins: u64, cache: u64 },
    #[error("system too large for exact enumeration: {size} sites (max {max})")]
    TooLarge { size: usize, max: usize },
    #[error("profile value {value} off the grid of level {level}")]
    OffGrid { value: f64, level: usize },
    #[error("magnetization profile is not realizable by any spin configuration")]
    Unrealizable,
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("boundary sampling exhausted {0} retries")]
    RetriesExhausted(usize),
    #[error("unexpected element shape: {0}")]
    Shape(String),
    #[error("unreachable element configuration: {0}")]
    Unreachable(String),
    #[error("optimizer found no feasible point: {0}")]
    Infeasible(String),
    #[error("snapshot format: {0}")]
    Format(String),
    #[error("snapshot CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Crc { stored: u32, computed: u32 },
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u16),
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for KacError {
    fn from(e: std::io::Error) -> Self {
        KacError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, KacError>;
