//! Writer state machine: sequential writes over reliable broadcast, and the
//! owner's audit over server logs.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::codec::{Block, Codec};
use crate::crypto::Keyring;
use crate::message::{Envelope, Payload, WriteBody};
use crate::node::{ClientError, NodeEvent, OpResult, Outbox};
use crate::rbcast::rb_broadcast;
use crate::server::SignedReadRecord;
use crate::types::{ProcessId, SeqNum, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    AwaitingAcks,
    Auditing,
}

#[derive(Debug, Clone)]
pub struct WriterState {
    pub ts: Timestamp,
    pub acks: Vec<Option<Timestamp>>,
    pub blocks: Vec<Block>,
    pub phase: Phase,
}

type RecordKey = (ProcessId, Timestamp, SeqNum);

#[derive(Debug, Clone, Default)]
pub struct AuditState {
    pub audit_seq: u64,
    pub collected_log: Vec<Option<Vec<SignedReadRecord>>>,
    /// Distinct servers reporting each verified record.
    pub occurrence: BTreeMap<RecordKey, BTreeSet<u32>>,
    records: BTreeMap<RecordKey, SignedReadRecord>,
}

#[derive(Debug, Clone)]
pub struct WriterNode {
    pub state: WriterState,
    pub audit: AuditState,
    keys: Keyring,
    codec: Codec,
    rng: ChaCha20Rng,
}

impl WriterNode {
    pub fn new(keys: Keyring, codec: Codec, seed: u64) -> Self {
        let n = codec.params.n;
        Self {
            state: WriterState { ts: Timestamp::INITIAL, acks: vec![None; n], blocks: vec![], phase: Phase::Idle },
            audit: AuditState::default(),
            keys,
            codec,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn id(&self) -> ProcessId {
        self.keys.me()
    }

    pub fn is_idle(&self) -> bool {
        self.state.phase == Phase::Idle
    }

    /// Blocks of the initial empty value, installed in servers at setup.
    pub fn genesis_blocks(&self) -> Result<Vec<Block>, ClientError> {
        Ok(self.codec.deterministic_generate_blocks(&[], Timestamp::INITIAL, &self.keys)?)
    }

    pub fn invoke_write(&mut self, v: &[u8], out: &mut Outbox) -> Result<(), ClientError> {
        if !self.is_idle() {
            return Err(ClientError::Busy);
        }
        let ts = self.state.ts.next();
        let blocks = self.codec.generate_blocks(v, ts, &self.keys, &mut self.rng)?;
        self.state.ts = ts;
        self.state.acks = vec![None; self.codec.params.n];
        self.state.blocks = blocks.clone();
        self.state.phase = Phase::AwaitingAcks;
        let envs = rb_broadcast(self.id(), WriteBody { ts, blocks }, &self.codec.params)
            .map_err(|_| ClientError::Unsupported("a non-writer identity"))?;
        out.sends.extend(envs);
        Ok(())
    }

    pub fn invoke_audit(&mut self, out: &mut Outbox) -> Result<(), ClientError> {
        if !self.is_idle() {
            return Err(ClientError::Busy);
        }
        let n = self.codec.params.n;
        self.audit = AuditState { audit_seq: self.audit.audit_seq + 1, collected_log: vec![None; n], ..Default::default() };
        self.state.phase = Phase::Auditing;
        let me = self.id();
        for s in self.codec.params.servers() {
            out.send(Envelope::new(me, s, Payload::AuditReq { audit_seq: self.audit.audit_seq }));
        }
        Ok(())
    }

    pub fn handle(&mut self, env: &Envelope, out: &mut Outbox) {
        let Some(slot) = env.sender.slot().filter(|s| *s < self.codec.params.n) else { return };
        match &env.payload {
            Payload::WriteAck { ts } => {
                if self.state.phase != Phase::AwaitingAcks || *ts != self.state.ts {
                    return;
                }
                self.state.acks[slot] = Some(*ts);
                let matching = self.state.acks.iter().filter(|a| **a == Some(self.state.ts)).count();
                if matching >= self.codec.params.quorum() {
                    self.state.phase = Phase::Idle;
                    out.event(NodeEvent::Respond(OpResult::Write { ts: self.state.ts }));
                }
            }
            Payload::AuditResp { audit_seq, log } => {
                if self.state.phase != Phase::Auditing || *audit_seq != self.audit.audit_seq {
                    return;
                }
                if self.audit.collected_log[slot].is_some() {
                    return;
                }
                let server = env.sender.index;
                for r in log {
                    if !r.verify(&self.keys) {
                        out.diag(format!("audit: {} reported an unverifiable record", env.sender));
                        continue;
                    }
                    self.audit.occurrence.entry(r.key()).or_default().insert(server);
                    self.audit.records.entry(r.key()).or_insert_with(|| r.clone());
                }
                self.audit.collected_log[slot] = Some(log.clone());
                let responded = self.audit.collected_log.iter().filter(|l| l.is_some()).count();
                if responded >= self.codec.params.quorum() {
                    let t = self.codec.params.t;
                    let records = self
                        .audit
                        .occurrence
                        .iter()
                        .filter(|(_, servers)| servers.len() >= t)
                        .map(|(k, _)| self.audit.records[k].clone())
                        .collect();
                    self.state.phase = Phase::Idle;
                    out.event(NodeEvent::Respond(OpResult::Audit { records }));
                }
            }
            _ => {}
        }
    }
}
