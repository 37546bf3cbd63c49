//! The Byzantine behavior library. Each behavior is a filter around an
//! honest node: it may drop or rewrite what the node receives and sends, but
//! it only ever holds its own keys.

use std::collections::BTreeSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::codec::Block;
use crate::crypto::Digest;
use crate::message::{Envelope, Payload};
use crate::multiwriter::MwWriterNode;
use crate::node::{ClientError, NodeEvent, Outbox};
use crate::reader::ReaderNode;
use crate::server::{ServerNode, SignedReadRecord};
use crate::types::{ProcessId, SeqNum, Timestamp};

/// How far above its real `reg_ts` a `fake_ts` server claims to be.
pub const FAKE_TS_OFFSET: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Never sends anything.
    Silent,
    /// Serves blocks without ever logging the request.
    NoLog,
    /// Logs, but answers every audit with an empty log.
    OmitLog,
    /// Adds records naming every reader to its audit replies.
    FabricateLog,
    /// Answers TS_REQ with an inflated timestamp and VAL_REQ unconditionally.
    FakeTs,
    /// Reports the initial timestamp and serves its oldest block.
    Stale,
    /// Sends conflicting ECHO/READY digests to half of the servers.
    Equivocate,
    /// Serves corrupted share bytes.
    WrongBlock,
    /// Takes part in writes but ignores every read-phase request.
    MuteReads,
    /// Duplicates log entries and resends earlier BLOCK_RESPs.
    ReplayRecords,
}

impl Behavior {
    pub const ALL: [Behavior; 10] = [
        Behavior::Silent,
        Behavior::NoLog,
        Behavior::OmitLog,
        Behavior::FabricateLog,
        Behavior::FakeTs,
        Behavior::Stale,
        Behavior::Equivocate,
        Behavior::WrongBlock,
        Behavior::MuteReads,
        Behavior::ReplayRecords,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriterBehavior {
    /// Sends well-formed owner-signed blocks of a different value.
    OtherValue,
    /// Sends blocks with random ciphertext.
    Garbage,
    /// Alternates honest, other-value and garbage blocks per server.
    Mixed,
}

/// A server slot in the simulation: honest, or honest code behind a filter.
#[derive(Debug, Clone)]
pub struct ServerProc {
    pub inner: ServerNode,
    pub behavior: Option<Behavior>,
    readers: Vec<ProcessId>,
    served: Vec<Envelope>,
}

impl ServerProc {
    pub fn new(inner: ServerNode, behavior: Option<Behavior>, readers: Vec<ProcessId>) -> Self {
        Self { inner, behavior, readers, served: vec![] }
    }

    pub fn handle(&mut self, env: &Envelope, out: &mut Outbox) {
        let Some(b) = self.behavior else {
            self.inner.handle(env, out);
            return;
        };
        let me = self.inner.id();
        let reg_ts = self.inner.state.reg_ts;
        match (b, &env.payload) {
            (Behavior::Silent, _) => return,
            (Behavior::MuteReads, Payload::TsReq { .. } | Payload::ValReq { .. } | Payload::BlockReq { .. }) => return,
            (Behavior::FakeTs, Payload::TsReq { n_seq }) => {
                let ts = Timestamp(reg_ts.0 + FAKE_TS_OFFSET);
                out.send(Envelope::new(me, env.sender, Payload::TsResp { ts, n_seq: *n_seq }));
                return;
            }
            (Behavior::FakeTs, Payload::ValReq { ts, n_seq }) => {
                out.send(Envelope::new(me, env.sender, Payload::ValResp { ts: *ts, n_seq: *n_seq }));
                return;
            }
            (Behavior::Stale, Payload::TsReq { n_seq }) => {
                out.send(Envelope::new(me, env.sender, Payload::TsResp { ts: Timestamp::INITIAL, n_seq: *n_seq }));
                return;
            }
            _ => {}
        }
        let mut tmp = Outbox::default();
        self.inner.handle(env, &mut tmp);
        if b == Behavior::NoLog {
            self.inner.state.log.clear();
            tmp.events.retain(|e| !matches!(e, NodeEvent::LogAppend { .. }));
        }
        out.events.extend(tmp.events);
        for mut s in tmp.sends {
            match (b, &mut s.payload) {
                (Behavior::OmitLog, Payload::AuditResp { log, .. }) => log.clear(),
                (Behavior::FabricateLog, Payload::AuditResp { log, .. }) => {
                    for &r in &self.readers {
                        log.push(fabricated_record(&self.inner, r, reg_ts));
                    }
                }
                (Behavior::ReplayRecords, Payload::AuditResp { log, .. }) => {
                    let copy = log.clone();
                    log.extend(copy);
                }
                (Behavior::Equivocate, Payload::RbEcho { digest, body, .. }) if (s.receiver.index + me.index).is_multiple_of(2) => {
                    *digest = twist(digest);
                    *body = None;
                }
                (Behavior::Equivocate, Payload::RbReady { digest, .. }) if (s.receiver.index + me.index).is_multiple_of(2) => {
                    *digest = twist(digest);
                }
                (Behavior::WrongBlock, Payload::BlockResp { stored, .. }) => match stored.share.bytes.first_mut() {
                    Some(b) => *b ^= 0x01,
                    None => stored.share.bytes.push(0),
                },
                (Behavior::Stale, Payload::BlockResp { stored, .. }) => {
                    if let Some(old) = self.inner.state.val.values().next() {
                        *stored = old.clone();
                    }
                }
                (Behavior::ReplayRecords, Payload::BlockResp { .. }) => {
                    for old in self.served.iter().filter(|o| o.receiver == s.receiver) {
                        out.send(old.clone());
                    }
                    self.served.push(s.clone());
                    if self.served.len() > 4 {
                        self.served.remove(0);
                    }
                }
                _ => {}
            }
            out.send(s);
        }
    }
}

fn twist(d: &Digest) -> Digest {
    let mut bytes = b"auditreg/equivocation".to_vec();
    bytes.extend_from_slice(&d.0);
    Digest::of(&bytes)
}

/// A record claiming `reader` asked for `ts`. The server can only sign with
/// its own key, so the signature never verifies for the reader.
fn fabricated_record(server: &ServerNode, reader: ProcessId, ts: Timestamp) -> SignedReadRecord {
    let n_seq = SeqNum(1);
    let bytes = SignedReadRecord::signing_bytes(reader, ts, n_seq);
    let mut sig = server.keys().sign(&bytes).expect("server has a key");
    sig.signer = reader;
    SignedReadRecord { reader, ts, n_seq, sig }
}

/// A reader slot; a Byzantine reader only sends BLOCK_REQ to its targets.
#[derive(Debug, Clone)]
pub struct ReaderProc {
    pub inner: ReaderNode,
    pub block_targets: Option<BTreeSet<u32>>,
}

impl ReaderProc {
    pub fn invoke_read(&mut self, out: &mut Outbox) -> Result<(), ClientError> {
        self.inner.invoke_read(out)?;
        self.restrict(out);
        Ok(())
    }

    pub fn handle(&mut self, env: &Envelope, out: &mut Outbox) {
        self.inner.handle(env, out);
        self.restrict(out);
    }

    fn restrict(&self, out: &mut Outbox) {
        if let Some(t) = &self.block_targets {
            out.sends.retain(|s| !matches!(s.payload, Payload::BlockReq { .. }) || t.contains(&s.receiver.index));
        }
    }
}

/// A multi-writer slot.
#[derive(Debug, Clone)]
pub struct MwProc {
    pub inner: MwWriterNode,
    pub behavior: Option<WriterBehavior>,
    rng: ChaCha20Rng,
}

impl MwProc {
    pub fn new(inner: MwWriterNode, behavior: Option<WriterBehavior>, seed: u64) -> Self {
        Self { inner, behavior, rng: ChaCha20Rng::seed_from_u64(seed) }
    }

    pub fn invoke_write(&mut self, v: &[u8], ts: Timestamp, out: &mut Outbox) -> Result<(), ClientError> {
        self.inner.invoke_write(v, ts, out)?;
        let Some(b) = self.behavior else { return Ok(()) };
        let mut evil = v.to_vec();
        evil.extend_from_slice(b"/forged");
        let other = self.inner.codec().deterministic_generate_blocks(&evil, ts, self.inner.keys())?;
        for s in out.sends.iter_mut() {
            let Payload::MultiWrite { block, .. } = &mut s.payload else { continue };
            let pick = match b {
                WriterBehavior::OtherValue => 1,
                WriterBehavior::Garbage => 2,
                WriterBehavior::Mixed => block.index % 3,
            };
            match pick {
                1 => *block = other[block.index as usize - 1].clone(),
                2 => garble(block, &mut self.rng),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn handle(&mut self, env: &Envelope, out: &mut Outbox) {
        self.inner.handle(env, out);
    }
}

fn garble(block: &mut Block, rng: &mut ChaCha20Rng) {
    let len = block.ciphertext.len().max(1);
    block.ciphertext = vec![0; len];
    rng.fill_bytes(&mut block.ciphertext);
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::codec::Codec;
    use crate::crypto::KeyRegistry;
    use crate::types::ProtocolParams;

    fn server(behavior: Behavior) -> (Arc<KeyRegistry>, ServerProc) {
        let params = ProtocolParams::standard(1).unwrap();
        let mut procs: Vec<ProcessId> = params.servers().collect();
        procs.extend([ProcessId::writer(), ProcessId::reader(1)]);
        let reg = Arc::new(KeyRegistry::simulated(5, procs));
        let node = ServerNode::new(reg.keyring(ProcessId::server(1)), Codec::shamir(params), true, None);
        (reg, ServerProc::new(node, Some(behavior), vec![ProcessId::reader(1)]))
    }

    fn req(p: Payload) -> Envelope {
        Envelope::new(ProcessId::reader(1), ProcessId::server(1), p)
    }

    #[test]
    fn silent_and_mute_servers_send_nothing() {
        for b in [Behavior::Silent, Behavior::MuteReads] {
            let (_, mut s) = server(b);
            let mut out = Outbox::default();
            s.handle(&req(Payload::TsReq { n_seq: SeqNum(1) }), &mut out);
            assert!(out.sends.is_empty(), "{b:?}");
        }
    }

    #[test]
    fn fake_ts_inflates_the_timestamp() {
        let (_, mut s) = server(Behavior::FakeTs);
        let mut out = Outbox::default();
        s.handle(&req(Payload::TsReq { n_seq: SeqNum(1) }), &mut out);
        assert_eq!(out.sends[0].payload, Payload::TsResp { ts: Timestamp(FAKE_TS_OFFSET), n_seq: SeqNum(1) });
    }

    #[test]
    fn fabricated_records_never_verify() {
        let (reg, mut s) = server(Behavior::FabricateLog);
        let mut out = Outbox::default();
        s.handle(&Envelope::new(ProcessId::writer(), ProcessId::server(1), Payload::AuditReq { audit_seq: 1 }), &mut out);
        let Payload::AuditResp { log, .. } = &out.sends[0].payload else { panic!() };
        assert_eq!(log.len(), 1);
        assert!(!log[0].verify(reg.as_ref()));
    }

    #[test]
    fn no_log_serves_without_logging() {
        let (reg, mut s) = server(Behavior::NoLog);
        let rec = SignedReadRecord::sign(&reg.keyring(ProcessId::reader(1)), Timestamp(0), SeqNum(1)).unwrap();
        // Give the server something to serve at ts 0.
        let w = reg.keyring(ProcessId::writer());
        let codec = Codec::shamir(ProtocolParams::standard(1).unwrap());
        let blocks = codec.deterministic_generate_blocks(b"", Timestamp(0), &w).unwrap();
        s.inner.on_write_deliver(Timestamp(0), &blocks, &mut Outbox::default());
        let mut out = Outbox::default();
        s.handle(&req(Payload::BlockReq { record: rec }), &mut out);
        assert!(matches!(out.sends[0].payload, Payload::BlockResp { .. }));
        assert!(s.inner.state.log.is_empty());
        assert!(!out.events.iter().any(|e| matches!(e, NodeEvent::LogAppend { .. })));
    }
}
