//! Execution traces as JSON lines: a header, one line per event, and a
//! footer whose digest covers every preceding line.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::codec::Manifest;
use crate::crypto::Digest;
use crate::message::{BroadcastId, Envelope, Tag};
use crate::node::{OpResult, Operation};
use crate::server::SignedReadRecord;
use crate::types::{ProcessId, ProtocolParams, Timestamp};
use crate::wire::Wire;

use super::scenario::Scenario;

pub const TRACE_FORMAT: &str = "auditreg-trace/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// The initial value's manifest, installed at every server.
    Genesis { manifest: Manifest },
    Invoke { op: usize, operation: Operation },
    Respond { op: usize, result: OpResult },
    Send {
        msg: u64,
        tag: Tag,
        to: ProcessId,
        digest: Digest,
        #[serde(with = "crate::crypto::hex_bytes")]
        envelope: Vec<u8>,
    },
    Receive { msg: u64, tag: Tag, from: ProcessId, digest: Digest },
    /// An in-flight message discarded when its sender crashed.
    Dropped { msg: u64 },
    RbDeliver { id: BroadcastId, digest: Digest },
    StateSnapshot { reg_ts: Timestamp },
    LogAppend { record: SignedReadRecord },
    MwAccept { ts: Timestamp, digest: Digest },
    Diagnostic { text: String },
    Crash,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub index: usize,
    pub process: ProcessId,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl TraceEvent {
    /// The envelope carried by a `Send` event.
    pub fn envelope(&self) -> Option<Envelope> {
        match &self.kind {
            EventKind::Send { envelope, .. } => Envelope::from_bytes(envelope).ok(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunEnd {
    /// Nothing left to deliver or invoke.
    Quiescent,
    EventCap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub params: ProtocolParams,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TraceFooter {
    end: RunEnd,
    steps: usize,
    events: usize,
    digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
    pub end: RunEnd,
    /// Scheduler steps taken.
    pub steps: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("unsupported trace format {0:?}")]
    Format(String),
    #[error("trace has no footer (truncated?)")]
    MissingFooter,
    #[error("footer reports {expected} events, found {found}")]
    Count { expected: usize, found: usize },
    #[error("footer digest does not match the trace body")]
    Digest,
    #[error("line {0}: event indices must increase")]
    Order(usize),
}

impl Trace {
    fn body_lines(&self) -> Vec<String> {
        let mut lines = Vec::with_capacity(self.events.len() + 1);
        lines.push(serde_json::to_string(&self.header).expect("header serializes"));
        for e in &self.events {
            lines.push(serde_json::to_string(e).expect("event serializes"));
        }
        lines
    }

    fn digest_of(lines: &[String]) -> Digest {
        Digest::of(lines.join("\n").as_bytes())
    }

    /// Digest over the header and every event line.
    pub fn digest(&self) -> Digest {
        Self::digest_of(&self.body_lines())
    }

    pub fn to_jsonl(&self) -> String {
        let mut lines = self.body_lines();
        let footer = TraceFooter { end: self.end, steps: self.steps, events: self.events.len(), digest: Self::digest_of(&lines) };
        lines.push(serde_json::to_string(&footer).expect("footer serializes"));
        let mut text = lines.join("\n");
        text.push('\n');
        text
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let (first, rest) = lines.split_first().ok_or(TraceError::Empty)?;
        let header: TraceHeader =
            serde_json::from_str(first).map_err(|source| TraceError::Json { line: 1, source })?;
        if header.format != TRACE_FORMAT {
            return Err(TraceError::Format(header.format));
        }
        let (last, body) = rest.split_last().ok_or(TraceError::MissingFooter)?;
        let footer: TraceFooter = serde_json::from_str(last).map_err(|_| TraceError::MissingFooter)?;
        let mut events = Vec::with_capacity(body.len());
        for (i, line) in body.iter().enumerate() {
            let e: TraceEvent = serde_json::from_str(line).map_err(|source| TraceError::Json { line: i + 2, source })?;
            if events.last().is_some_and(|p: &TraceEvent| p.index >= e.index) {
                return Err(TraceError::Order(i + 2));
            }
            events.push(e);
        }
        if footer.events != events.len() {
            return Err(TraceError::Count { expected: footer.events, found: events.len() });
        }
        let trace = Trace { header, events, end: footer.end, steps: footer.steps };
        if trace.digest() != footer.digest {
            return Err(TraceError::Digest);
        }
        Ok(trace)
    }

    /// The sub-trace of events whose index is in `keep`; indices are kept.
    pub fn filtered(&self, keep: &BTreeSet<usize>) -> Trace {
        Trace {
            header: self.header.clone(),
            events: self.events.iter().filter(|e| keep.contains(&e.index)).cloned().collect(),
            end: self.end,
            steps: self.steps,
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.header.scenario
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.header.params
    }
}
