//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("fixed-point overflow: |raw| needs {needed} bits, budget is {budget}")]
    Overflow { needed: u64, budget: u64 },
    #[error("scale mismatch: {0} vs {1} fractional bits")]
    ScaleMismatch(u32, u32),
    #[error("value out of field range: |raw| must be < p/2")]
    FieldRange,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown wire index {0}")]
    UnknownWire(u32),
    #[error("public wires must be allocated before witness wires")]
    PublicAfterWitness,
    #[error("missing assignment for wire {0}")]
    MissingAssignment(u32),
    #[error("assignment does not satisfy constraint {index}{}", label.as_deref().map(|l| format!(" ({l})")).unwrap_or_default())]
    Unsatisfied { index: usize, label: Option<String> },
    #[error("witness value out of range in gadget {gadget}: {detail}")]
    WitnessRange {
        gadget: &'static str,
        detail: String,
    },
    #[error("proof was produced for a different circuit (digest mismatch)")]
    DigestMismatch,
    #[error("public input layout mismatch: expected {expected} values, got {got}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("field configuration rejected: {0}")]
    FieldConfig(String),
    #[error("task configuration rejected: {0}")]
    TaskConfig(String),
    #[error("escrow transaction is not open")]
    EscrowClosed,
    #[error("escrow timeout not reached")]
    EscrowNotExpired,
    #[error("insufficient balance: account {account} has {balance}, needs {needed}")]
    InsufficientBalance {
        account: String,
        balance: u64,
        needed: u64,
    },
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
