//! Crate-wide error type. Every fallible operation returns [`Result`].

/// Errors surfaced by games, models, training, estimators, and file I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("player count {0} exceeds the bitmask capacity of {max}", max = crate::game::MAX_PLAYERS)]
    Capacity(usize),

    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("coalition set is over {got} players, expected {expected}")]
    GroundMismatch { expected: usize, got: usize },

    #[error("game value at coalition {coalition} is not finite")]
    NonFiniteValue { coalition: String },

    #[error("game table is not normalized: value at the empty coalition must be exactly 0")]
    NotNormalized,

    #[error("expected a {expected} table, got a {got} table")]
    KindMismatch { expected: &'static str, got: &'static str },

    #[error("non-finite activation at block {block}, unit {unit}")]
    NonFiniteActivation { block: usize, unit: usize },

    #[error("class index {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },

    #[error("operation enumerates 2^n coalitions and is limited to n <= {max}, got n = {n}")]
    EnumerationLimit { n: usize, max: usize },

    #[error("budget {budget} is below the minimum of {minimum} oracle calls")]
    InsufficientBudget { budget: u64, minimum: u64 },

    #[error("regression system is rank deficient: {distinct} distinct coalitions for {players} players")]
    RankDeficient { distinct: usize, players: usize },

    #[error("fixed fan-in {k} exceeds the candidate pool of {pool}")]
    FanIn { k: usize, pool: usize },

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("unsupported format version: {0:?}")]
    VersionMismatch(String),

    #[error("checksum mismatch: file is corrupt or truncated")]
    ChecksumMismatch,

    #[error("model topology is {found}, expected {expected}")]
    TopologyMismatch { expected: &'static str, found: String },

    #[error("parse error: {0}")]
    Format(String),

    #[error("dataset schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
