use thiserror::Error;

use crate::types::ProcessId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParamError {
    #[error("fault budget must be at least 1 and below n, got f = {0}")]
    FaultBudget(usize),
    #[error("reconstruction threshold tau = {tau} outside 1..={n}")]
    Threshold { tau: usize, n: usize },
    #[error("audit report threshold must be at least 1, got t = {0}")]
    ReportThreshold(usize),
    #[error("malformed process id {0:?}")]
    BadProcess(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("no key registered for {0}")]
    UnknownProcess(ProcessId),
    #[error("decryption failed")]
    Decryption,
    #[error("malformed key material: {0}")]
    KeyMaterial(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("{n} servers exceed the byte-field capacity of 255 share points")]
    Capacity { n: usize },
    #[error("{have} shares supplied, at least {need} required")]
    Insufficient { have: usize, need: usize },
    #[error("duplicate or out-of-range share index {0}")]
    BadIndex(u32),
    #[error("shares disagree on length or manifest")]
    Inconsistent,
    #[error("reconstructed payload is malformed: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("unexpected end of input at byte {0}")]
    Truncated(usize),
    #[error("unknown {what} discriminant {value}")]
    Discriminant { what: &'static str, value: u8 },
    #[error("{0} trailing bytes after message")]
    Trailing(usize),
    #[error("transport does not match message tag")]
    Transport,
}
