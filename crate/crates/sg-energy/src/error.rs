use thiserror::Error;

/// Domain errors shared across the crate.
///
/// CLI exit-code mapping: anything here that reaches the top level is a usage
/// or configuration problem (exit 2); failed verification checks are reported
/// through `VerificationReport`, not through this type.
#[derive(Debug, Error)]
pub enum SgError {
    #[error("level must be at least 2, got {0}")]
    LevelTooSmall(u32),

    #[error("level {0} exceeds the {1} backend cap of {2}")]
    LevelOverCap(u32, &'static str, u32),

    #[error("symbol {symbol} out of range 1..={count} for level {level}")]
    SymbolOutOfRange {
        symbol: usize,
        count: usize,
        level: u32,
    },

    #[error("corner index {0} out of range 1..=3")]
    CornerOutOfRange(usize),

    #[error("word of length {len} at {symbols} symbols needs {leaves} leaves, over the cap {cap} (raise --max-leaves)")]
    DepthOverCap {
        len: u32,
        symbols: usize,
        leaves: f64,
        cap: u64,
    },

    #[error("matrix is not a valid boundary operator: {0}")]
    InvalidBoundaryOperator(String),

    #[error("no uniform harmonic structure: Schur complement is not proportional to D ({0})")]
    NoUniformStructure(String),

    #[error("structure level mismatch: model built for level {expected}, got {got}")]
    LevelMismatch { expected: u32, got: u32 },

    #[error("theorem check only applies to level 2, model has level {0}")]
    UnsupportedStructure(u32),

    #[error("frame vectors do not satisfy the energy normalization (residual {0:e})")]
    BadFrame(f64),

    #[error("angular distance needs nonzero vectors")]
    ZeroVector,

    #[error("histogram bins must be {0}, got {1}")]
    BadBinCount(&'static str, usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SgError>;
