use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GfError {
    #[error("unsupported field width {0}")]
    UnsupportedWidth(usize),
    #[error("reduction polynomial is reducible")]
    Reducible,
    #[error("field context mismatch: GF(2^{left}) vs GF(2^{right})")]
    ContextMismatch { left: usize, right: usize },
    #[error("zero has no inverse")]
    ZeroInverse,
    #[error("block({i},{j}) out of range for a {len}-bit string")]
    BlockRange { i: usize, j: usize, len: usize },
    #[error("value does not fit in {bits} bits")]
    ValueTooWide { bits: usize },
    #[error("length mismatch: {left} vs {right} bits")]
    LengthMismatch { left: usize, right: usize },
    #[error("expected {expected} bytes, got {got}")]
    EncodingLength { expected: usize, got: usize },
    #[error("nonzero padding bits")]
    NonzeroPadding,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("invalid source: {0}")]
    Invalid(String),
    #[error("malformed source document: {0}")]
    Json(String),
    #[error("symbol string has length {got}, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("symbol {symbol} outside alphabet of size {size}")]
    Symbol { symbol: usize, size: usize },
    #[error("reconciliation set exceeds cap of {cap} members")]
    ReconCap { cap: usize },
    #[error("enumeration too large: {0}")]
    TooLarge(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IkemError {
    #[error(transparent)]
    Gf(#[from] GfError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("malformed ciphertext: {0}")]
    Wire(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DemError {
    #[error("DEM key must be {expected} bits, got {got}")]
    KeyLength { expected: usize, got: usize },
    #[error("one-time key already used")]
    KeyReused,
    #[error("malformed DEM ciphertext: {0}")]
    Malformed(String),
    #[error(transparent)]
    Gf(#[from] GfError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HybridError {
    #[error("incompatible KEM/DEM pairing: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Ikem(#[from] IkemError),
    #[error(transparent)]
    Dem(#[from] DemError),
    #[error("malformed envelope: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CombinerError {
    #[error(transparent)]
    Gf(#[from] GfError),
    #[error(transparent)]
    Ikem(#[from] IkemError),
    #[error("key length mismatch: {0}")]
    KeyLength(String),
    #[error("input of {bits} bits does not fit a supported field")]
    EncodingOverflow { bits: usize },
    #[error("malformed combined ciphertext: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("oracle budget exhausted: {0}")]
    Budget(String),
    #[error("challenge ciphertext submitted to the decapsulation oracle")]
    BarredQuery,
    #[error("repeated PRF query")]
    DuplicateQuery,
    #[error("invalid game input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Ikem(#[from] IkemError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Gf(#[from] GfError),
    #[error(transparent)]
    Dem(#[from] DemError),
    #[error(transparent)]
    Combiner(#[from] CombinerError),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
}
