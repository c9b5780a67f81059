//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PamError {
    /// Shape disagreement between tensor operands.
    #[error("dimension mismatch in {op}: left shape {left:?}, right shape {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// Index outside a table's row range.
    #[error("row index {index} out of range for table with {rows} rows")]
    Bounds { index: usize, rows: usize },

    /// Invalid configuration value or combination.
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite value produced by a numeric stage.
    #[error("non-finite value at stage `{stage}`")]
    Numeric { stage: String },

    /// Unparseable or missing cell while loading a series file.
    #[error("load error at row {row}, column {col}: {reason}")]
    Load {
        row: usize,
        col: usize,
        reason: String,
    },

    /// Not enough rows to carve out the requested windows.
    #[error("windowing error: {reason} (rows available: {available}, required: {required})")]
    Window {
        reason: String,
        available: usize,
        required: usize,
    },

    /// Structurally invalid checkpoint file.
    #[error("checkpoint format error at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },

    /// Checkpoint produced by an incompatible format version.
    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    /// Ablation tag not present in the registry.
    #[error("unknown ablation tag `{tag}`; registered tags: {known}")]
    Registry { tag: String, known: String },

    /// Dataset tag not present in the built-in cycle-length table.
    #[error("unknown dataset tag `{tag}`; known tags: {known}")]
    Lookup { tag: String, known: String },

    /// Empty input where at least one element is required.
    #[error("domain error: {0}")]
    Domain(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PamError>;
