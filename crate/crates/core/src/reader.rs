//! Three-phase reader: collect timestamps, confirm the smallest fresh one,
//! then collect and reconstruct its blocks.

use std::collections::BTreeSet;

use crate::codec::{Codec, StoredShare};
use crate::crypto::Keyring;
use crate::message::{Envelope, Payload};
use crate::node::{ClientError, NodeEvent, OpResult, Outbox};
use crate::server::SignedReadRecord;
use crate::types::{ProcessId, ProtocolParams, SeqNum, Timestamp};

/// At least `2f+1` server slots are non-empty with minimum `<= ts`.
pub fn not_old(collected_ts: &[BTreeSet<Timestamp>], ts: Timestamp, params: &ProtocolParams) -> bool {
    let qualifying = collected_ts.iter().filter(|s| s.first().is_some_and(|m| *m <= ts)).count();
    qualifying >= 2 * params.f + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadPhase {
    Idle,
    Timestamps,
    Confirming,
    Blocks,
}

#[derive(Debug, Clone)]
pub struct ReaderState {
    pub n_seq: SeqNum,
    pub collected_ts: Vec<BTreeSet<Timestamp>>,
    pub collected_blocks: Vec<BTreeSet<StoredShare>>,
    pub min_ts: Option<Timestamp>,
    pub val_req_sent: bool,
    pub phase: ReadPhase,
}

#[derive(Debug, Clone)]
pub struct ReaderNode {
    pub state: ReaderState,
    keys: Keyring,
    codec: Codec,
    writer: ProcessId,
}

impl ReaderNode {
    pub fn new(keys: Keyring, codec: Codec) -> Self {
        let n = codec.params.n;
        Self {
            state: ReaderState {
                n_seq: SeqNum(0),
                collected_ts: vec![BTreeSet::new(); n],
                collected_blocks: vec![BTreeSet::new(); n],
                min_ts: None,
                val_req_sent: false,
                phase: ReadPhase::Idle,
            },
            keys,
            codec,
            writer: ProcessId::OWNER,
        }
    }

    pub fn id(&self) -> ProcessId {
        self.keys.me()
    }

    pub fn is_idle(&self) -> bool {
        self.state.phase == ReadPhase::Idle
    }

    pub fn invoke_read(&mut self, out: &mut Outbox) -> Result<(), ClientError> {
        if !self.is_idle() {
            return Err(ClientError::Busy);
        }
        let n = self.codec.params.n;
        let s = &mut self.state;
        s.n_seq = s.n_seq.next();
        s.collected_ts = vec![BTreeSet::new(); n];
        s.collected_blocks = vec![BTreeSet::new(); n];
        s.min_ts = None;
        s.val_req_sent = false;
        s.phase = ReadPhase::Timestamps;
        let n_seq = s.n_seq;
        self.to_all(Payload::TsReq { n_seq }, out);
        Ok(())
    }

    fn to_all(&self, payload: Payload, out: &mut Outbox) {
        let me = self.id();
        for s in self.codec.params.servers() {
            out.send(Envelope::new(me, s, payload.clone()));
        }
    }

    pub fn valid_blocks(&self, ts: Timestamp) -> bool {
        matches!(self.value(), Some((_, t)) if t == ts)
    }

    fn value(&self) -> Option<(Vec<u8>, Timestamp)> {
        self.codec
            .get_value(&self.state.collected_blocks, &self.keys, self.writer)
            .expect("validated shares reconstruct")
    }

    pub fn handle(&mut self, env: &Envelope, out: &mut Outbox) {
        if self.is_idle() {
            return;
        }
        let Some(slot) = env.sender.slot().filter(|s| *s < self.codec.params.n) else { return };
        let cur = self.state.n_seq;
        match &env.payload {
            Payload::TsResp { ts, n_seq } | Payload::ValResp { ts, n_seq } if *n_seq == cur => {
                self.state.collected_ts[slot].insert(*ts);
            }
            Payload::BlockResp { stored, ts, n_seq } if *n_seq == cur => {
                if self.state.phase != ReadPhase::Blocks {
                    return;
                }
                if stored.share.index != env.sender.index {
                    out.diag(format!("{} sent a block for another server", env.sender));
                    return;
                }
                if !self.codec.validate_block(stored, *ts, &self.keys, self.writer) {
                    out.diag(format!("{} sent an invalid block", env.sender));
                    return;
                }
                self.state.collected_blocks[slot].insert(stored.clone());
            }
            _ => return,
        }
        self.progress(out);
    }

    fn progress(&mut self, out: &mut Outbox) {
        let params = self.codec.params;
        // Until blocks are requested, a later response may lower the
        // smallest fresh timestamp; a fabricated high one must not pin it.
        if self.state.phase != ReadPhase::Blocks {
            let responded = self.state.collected_ts.iter().filter(|s| !s.is_empty()).count();
            if responded < params.quorum() {
                return;
            }
            let seen: BTreeSet<Timestamp> = self.state.collected_ts.iter().flatten().copied().collect();
            let candidate = seen.into_iter().find(|ts| not_old(&self.state.collected_ts, *ts, &params));
            if let Some(c) = candidate.filter(|c| self.state.min_ts.is_none_or(|m| *c < m)) {
                self.state.min_ts = Some(c);
                self.state.val_req_sent = true;
                self.state.phase = ReadPhase::Confirming;
                self.to_all(Payload::ValReq { ts: c, n_seq: self.state.n_seq }, out);
            }
            if self.state.min_ts.is_none() {
                return;
            }
        }
        let min_ts = self.state.min_ts.expect("set above");
        if self.state.phase == ReadPhase::Confirming {
            let confirmed = self.state.collected_ts.iter().filter(|s| s.contains(&min_ts)).count();
            if confirmed < params.f + 1 {
                return;
            }
            let record = match SignedReadRecord::sign(&self.keys, min_ts, self.state.n_seq) {
                Ok(r) => r,
                Err(e) => {
                    out.diag(format!("cannot sign read record: {e}"));
                    return;
                }
            };
            self.state.phase = ReadPhase::Blocks;
            self.to_all(Payload::BlockReq { record }, out);
        }
        if self.state.phase == ReadPhase::Blocks {
            if let Some((value, ts)) = self.value() {
                if not_old(&self.state.collected_ts, ts, &params) {
                    self.state.phase = ReadPhase::Idle;
                    out.event(NodeEvent::Respond(OpResult::Read { value, ts }));
                }
            }
        }
    }
}
