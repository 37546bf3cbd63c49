//! Server state machine: block storage, guarded read-phase replies, the read
//! log and audit replies.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::codec::{Block, Codec, StoredShare};
use crate::crypto::{Keyring, Signature, Verifier};
use crate::error::{CryptoError, WireError};
use crate::message::{Envelope, Payload};
use crate::multiwriter::{MultiWriterParams, Offer, ShareAcceptBuffer};
use crate::node::{NodeEvent, Outbox};
use crate::rbcast::RbEngine;
use crate::types::{ProcessId, ProtocolParams, SeqNum, Timestamp};
use crate::wire::{Decoder, Encoder, Wire};

/// Audit evidence: a reader's signature over `(reader, ts, n_seq)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SignedReadRecord {
    pub reader: ProcessId,
    pub ts: Timestamp,
    pub n_seq: SeqNum,
    pub sig: Signature,
}

impl SignedReadRecord {
    pub fn signing_bytes(reader: ProcessId, ts: Timestamp, n_seq: SeqNum) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.bytes(b"auditreg/read-record").item(&reader).item(&ts).item(&n_seq);
        enc.finish()
    }

    pub fn sign(keys: &Keyring, ts: Timestamp, n_seq: SeqNum) -> Result<Self, CryptoError> {
        let reader = keys.signs_as();
        let sig = keys.sign(&Self::signing_bytes(reader, ts, n_seq))?;
        Ok(Self { reader, ts, n_seq, sig })
    }

    pub fn verify(&self, v: &dyn Verifier) -> bool {
        self.reader.is_reader() && v.verify(&Self::signing_bytes(self.reader, self.ts, self.n_seq), &self.sig, self.reader)
    }

    pub fn key(&self) -> (ProcessId, Timestamp, SeqNum) {
        (self.reader, self.ts, self.n_seq)
    }
}

impl Wire for SignedReadRecord {
    fn encode(&self, enc: &mut Encoder) {
        enc.item(&self.reader).item(&self.ts).item(&self.n_seq).item(&self.sig);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(Self { reader: dec.item()?, ts: dec.item()?, n_seq: dec.item()?, sig: dec.item()? })
    }
}

/// A reply deferred until its guard holds.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Pending {
    Val { reader: ProcessId, ts: Timestamp, n_seq: SeqNum },
    Block { record: SignedReadRecord },
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub my_index: u32,
    pub params: ProtocolParams,
    pub reg_ts: Timestamp,
    pub val: BTreeMap<Timestamp, StoredShare>,
    pub log: BTreeSet<SignedReadRecord>,
    pub pending: BTreeSet<Pending>,
}

#[derive(Debug, Clone)]
pub struct ServerNode {
    pub state: ServerState,
    keys: Keyring,
    codec: Codec,
    owner: ProcessId,
    rb: RbEngine,
    mw: Option<ShareAcceptBuffer>,
}

impl ServerNode {
    /// `genesis` is this server's share of the initial value at ts 0.
    pub fn new(keys: Keyring, codec: Codec, relay: bool, genesis: Option<StoredShare>) -> Self {
        let me = keys.me();
        assert!(me.is_server(), "server node needs a server identity");
        let params = codec.params;
        let mut val = BTreeMap::new();
        if let Some(g) = genesis {
            val.insert(g.ts(), g);
        }
        Self {
            state: ServerState {
                my_index: me.index,
                params,
                reg_ts: Timestamp::INITIAL,
                val,
                log: BTreeSet::new(),
                pending: BTreeSet::new(),
            },
            keys,
            codec,
            owner: ProcessId::OWNER,
            rb: RbEngine::new(me, params, relay),
            mw: None,
        }
    }

    pub fn with_multiwriter(mut self, p: MultiWriterParams) -> Self {
        self.mw = Some(ShareAcceptBuffer::new(p));
        self
    }

    pub fn id(&self) -> ProcessId {
        self.keys.me()
    }

    pub fn keys(&self) -> &Keyring {
        &self.keys
    }

    pub fn handle(&mut self, env: &Envelope, out: &mut Outbox) {
        let me = self.id();
        match &env.payload {
            Payload::RbInit { .. } | Payload::RbEcho { .. } | Payload::RbReady { .. } => {
                if self.mw.is_some() {
                    return;
                }
                let r = self.rb.handle(env);
                out.sends.extend(r.sends);
                if let Some(d) = r.delivery {
                    out.event(NodeEvent::RbDeliver { id: d.id, digest: d.digest });
                    if self.on_write_deliver(d.body.ts, &d.body.blocks, out) {
                        out.send(Envelope::new(me, d.id.writer, Payload::WriteAck { ts: d.body.ts }));
                    }
                    self.fire_pending(out);
                }
            }
            Payload::TsReq { n_seq } => {
                out.send(Envelope::new(me, env.sender, Payload::TsResp { ts: self.state.reg_ts, n_seq: *n_seq }));
            }
            Payload::ValReq { ts, n_seq } => {
                self.state.pending.insert(Pending::Val { reader: env.sender, ts: *ts, n_seq: *n_seq });
                self.fire_pending(out);
            }
            Payload::BlockReq { record } => {
                if record.reader != env.sender {
                    out.diag(format!("BLOCK_REQ record names {} but came from {}", record.reader, env.sender));
                    return;
                }
                if !record.verify(&self.keys) {
                    out.diag(format!("BLOCK_REQ from {} carries an invalid signature", env.sender));
                    return;
                }
                self.state.pending.insert(Pending::Block { record: record.clone() });
                self.fire_pending(out);
            }
            Payload::AuditReq { audit_seq } => {
                if env.sender.resolve() != self.owner {
                    out.diag(format!("AUDIT_REQ from non-owner {}", env.sender));
                    return;
                }
                let log = self.state.log.iter().cloned().collect();
                out.send(Envelope::new(me, env.sender, Payload::AuditResp { audit_seq: *audit_seq, log }));
            }
            Payload::MultiWrite { ts, block, writer } => self.on_multi_write(env.sender, *ts, block, *writer, out),
            Payload::WriteAck { .. }
            | Payload::TsResp { .. }
            | Payload::ValResp { .. }
            | Payload::BlockResp { .. }
            | Payload::AuditResp { .. } => {}
        }
    }

    /// Stores this server's share of a delivered write. Returns whether the
    /// block validated (and so should be acknowledged).
    pub fn on_write_deliver(&mut self, ts: Timestamp, blocks: &[Block], out: &mut Outbox) -> bool {
        let my = self.state.my_index;
        let Some(block) = blocks.iter().find(|b| b.index == my) else {
            out.diag(format!("write {ts} carries no block for server {my}"));
            return false;
        };
        let Ok(bytes) = self.keys.decrypt_own(&block.ciphertext) else {
            out.diag(format!("block for {ts} does not decrypt"));
            return false;
        };
        let stored = StoredShare {
            share: crate::codec::Share { index: my, bytes },
            manifest: block.manifest.clone(),
        };
        if !self.codec.validate_block(&stored, ts, &self.keys, self.owner) {
            out.diag(format!("block for {ts} fails manifest validation"));
            return false;
        }
        self.state.val.entry(ts).or_insert(stored);
        if self.state.reg_ts < ts {
            self.state.reg_ts = ts;
            out.event(NodeEvent::RegTs { reg_ts: ts });
        }
        true
    }

    fn on_multi_write(&mut self, sender: ProcessId, ts: Timestamp, block: &Block, writer: ProcessId, out: &mut Outbox) {
        let me = self.id();
        if writer != sender || sender.role != crate::types::Role::Writer {
            out.diag(format!("MULTI_WRITE from {sender} claims writer {writer}"));
            return;
        }
        let Some(buf) = self.mw.as_mut() else {
            out.diag("MULTI_WRITE outside multi-writer mode");
            return;
        };
        match buf.offer(ts, block, writer) {
            Offer::Pending => {}
            Offer::Accepted { block, supporters } => {
                let digest = crate::crypto::Digest::of(&block.to_bytes());
                if self.on_write_deliver(ts, std::slice::from_ref(&block), out) {
                    out.event(NodeEvent::MwAccept { ts, digest });
                    for w in supporters {
                        out.send(Envelope::new(me, w, Payload::WriteAck { ts }));
                    }
                    self.fire_pending(out);
                }
            }
            Offer::Late { matches: true } => {
                if self.state.val.contains_key(&ts) {
                    out.send(Envelope::new(me, writer, Payload::WriteAck { ts }));
                }
            }
            Offer::Late { matches: false } => {}
        }
    }

    fn ready(&self, p: &Pending) -> bool {
        match p {
            Pending::Val { ts, .. } => self.state.reg_ts >= *ts,
            Pending::Block { record } => self.state.reg_ts >= record.ts && self.state.val.contains_key(&record.ts),
        }
    }

    fn fire_pending(&mut self, out: &mut Outbox) {
        let me = self.id();
        let due: Vec<Pending> = self.state.pending.iter().filter(|p| self.ready(p)).cloned().collect();
        for p in due {
            self.state.pending.remove(&p);
            match p {
                Pending::Val { reader, ts, n_seq } => {
                    out.send(Envelope::new(me, reader, Payload::ValResp { ts, n_seq }));
                }
                Pending::Block { record } => {
                    let stored = self.state.val[&record.ts].clone();
                    let (reader, ts, n_seq) = record.key();
                    if self.state.log.insert(record.clone()) {
                        out.event(NodeEvent::LogAppend { record });
                    }
                    out.send(Envelope::new(me, reader, Payload::BlockResp { stored, ts, n_seq }));
                }
            }
        }
    }
}
