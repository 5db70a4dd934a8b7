use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FcnError>;

#[derive(Debug, Error)]
pub enum FcnError {
    #[error("shape mismatch in {op}: left is {left}, right is {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("record {record}: missing field `{field}`")]
    MissingField { record: usize, field: String },

    #[error("line {line}: cannot parse label `{value}` (expected 0 or 1)")]
    BadLabel { line: usize, value: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("AUC is undefined: every label is {class}")]
    DegenerateClass { class: &'static str },

    #[error("field {field}: id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { field: usize, id: u32, size: usize },

    #[error("backward requires a training-mode forward trace")]
    MissingTrace,

    #[error("index out of range: {0}")]
    Index(String),

    #[error("unknown {kind} `{name}` (known: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("checkpoint has bad magic bytes")]
    BadMagic,

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint is truncated: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },

    #[error("checkpoint CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Crc { stored: u32, computed: u32 },

    #[error("malformed checkpoint: {0}")]
    Malformed(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}
