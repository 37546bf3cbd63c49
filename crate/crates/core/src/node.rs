//! What a state machine hands back to the event loop after a step.

use serde::{Deserialize, Serialize};

use crate::crypto::Digest;
use crate::message::{BroadcastId, Envelope};
use crate::server::SignedReadRecord;
use crate::types::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Operation {
    Write {
        #[serde(with = "crate::crypto::hex_bytes")]
        value: Vec<u8>,
    },
    Read,
    Audit,
    /// Multi-writer write with a harness-supplied timestamp.
    MwWrite {
        #[serde(with = "crate::crypto::hex_bytes")]
        value: Vec<u8>,
        ts: Timestamp,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OpResult {
    Write {
        ts: Timestamp,
    },
    Read {
        #[serde(with = "crate::crypto::hex_bytes")]
        value: Vec<u8>,
        ts: Timestamp,
    },
    Audit {
        records: Vec<SignedReadRecord>,
    },
    MwWrite {
        ts: Timestamp,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeEvent {
    RbDeliver { id: BroadcastId, digest: Digest },
    RegTs { reg_ts: Timestamp },
    LogAppend { record: SignedReadRecord },
    MwAccept { ts: Timestamp, digest: Digest },
    Diagnostic(String),
    Respond(OpResult),
}

#[derive(Debug, Default)]
pub struct Outbox {
    pub sends: Vec<Envelope>,
    pub events: Vec<NodeEvent>,
}

impl Outbox {
    pub fn send(&mut self, env: Envelope) {
        self.sends.push(env);
    }

    pub fn event(&mut self, e: NodeEvent) {
        self.events.push(e);
    }

    pub fn diag(&mut self, text: impl Into<String>) {
        self.events.push(NodeEvent::Diagnostic(text.into()));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    #[error("operation invoked while another is in flight")]
    Busy,
    #[error("{0} cannot perform this operation")]
    Unsupported(&'static str),
    #[error(transparent)]
    Codec(#[from] crate::error::CodecError),
    #[error(transparent)]
    Crypto(#[from] crate::error::CryptoError),
}
