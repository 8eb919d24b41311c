use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type. Variants are grouped by the subsystem that raises
/// them; the CLI maps them onto exit codes (data errors -> 2, config -> 3).
#[derive(Debug, Error)]
pub enum Error {
    // ---- dataset ingestion ----
    #[error("empty file: {path}")]
    EmptyFile { path: PathBuf },
    #[error("{path}: ragged rows: line {line} has {got} values, expected {expected}")]
    RaggedRows {
        path: PathBuf,
        line: usize,
        got: usize,
        expected: usize,
    },
    #[error("{path}: non-numeric field at line {line}, column {column}: {text:?}")]
    NonNumericField {
        path: PathBuf,
        line: usize,
        column: usize,
        text: String,
    },
    #[error("{path}: series at line {line} has length {len}, need at least 2")]
    SeriesTooShort {
        path: PathBuf,
        line: usize,
        len: usize,
    },
    #[error("dataset {name:?} contains a single class")]
    SingleClass { name: String },
    #[error("too few instances: {n} cannot be split into {k} folds")]
    TooFewInstances { n: usize, k: usize },

    // ---- pipeline operators ----
    #[error("segment out of range: start {start}, length {len} on input of length {input_len}")]
    OutOfRange {
        start: usize,
        len: usize,
        input_len: usize,
    },
    #[error("input of length {len} is too short to difference")]
    TooShort { len: usize },
    #[error("patch length {patch_len} below minimum 2 (input length {input_len}, divisor {divisor})")]
    PatchTooSmall {
        input_len: usize,
        divisor: usize,
        patch_len: usize,
    },
    #[error("kernel length {c} below minimum {min} for {kind}")]
    KernelTooShort {
        kind: &'static str,
        c: usize,
        min: usize,
    },
    #[error("kernel length {c} exceeds patch length {patch_len}")]
    KernelLongerThanPatch { c: usize, patch_len: usize },
    #[error("empty activation map")]
    EmptyMap,
    #[error("patch of length {len} is too short to extract from")]
    PatchTooShort { len: usize },

    // ---- program trees ----
    #[error("no legal tree within depth {depth} for series length {series_length}")]
    InfeasibleDepth { depth: usize, series_length: usize },
    #[error("invalid program tree: {0}")]
    InvalidTree(String),
    #[error("malformed model: {0}")]
    MalformedModel(String),
    #[error("series length mismatch: model expects {expected}, data has {got}")]
    LengthMismatch { expected: usize, got: usize },

    // ---- classifier ----
    #[error("degenerate training input: {0}")]
    DegenerateInput(String),
    #[error("label {0} was not present in the training data")]
    UnknownLabel(i64),

    // ---- cli ----
    #[error("no files match pattern {pattern:?}")]
    NoMatches { pattern: String },

    // ---- configuration ----
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by user configuration rather than input data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::InvalidConfig(_))
    }
}
