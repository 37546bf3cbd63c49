//! Audit properties: completeness over effective reads, and the two levels
//! of strong accuracy.
//!
//! Effective reads are computed from transport events only: a reader (or,
//! under collusion, the Byzantine reader coalition) has effectively read
//! `ts` once it has received `tau` blocks with distinct indices, each valid
//! under the genuine manifest of `ts`. Return values are never consulted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::Digest;
use crate::message::{Payload, Tag};
use crate::node::{OpResult, Operation};
use crate::simnet::trace::EventKind;
use crate::types::{ProcessId, Timestamp};

use super::{OpRecord, Status, Verdict, View};

pub const COMPLETENESS: &str = "completeness";
pub const ACCURACY_INVOCATION: &str = "strong_accuracy_invocation";
pub const ACCURACY_EFFECTIVE: &str = "strong_accuracy_effective";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entity {
    Process(ProcessId),
    /// All Byzantine readers together.
    Coalition,
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Process(p) => write!(f, "{p}"),
            Entity::Coalition => f.write_str("byzantine coalition"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectiveRead {
    pub entity: Entity,
    pub ts: Timestamp,
    /// Receive event of the `tau`-th distinct valid block.
    pub index: usize,
    /// Receive events of the blocks that made up the set, and their senders.
    pub receives: Vec<usize>,
    pub servers: Vec<u32>,
}

/// Evidence for one completeness miss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletenessMiss {
    pub reader: Entity,
    pub ts: Timestamp,
    pub effective_index: usize,
    pub audit_op: usize,
    /// Servers whose blocks formed the effective read.
    pub served_by: Vec<u32>,
    /// Correct servers that logged the read before the audit began.
    pub correct_loggers: Vec<u32>,
    /// Servers whose AUDIT_RESP formed the audit's quorum.
    pub audit_responders: Vec<u32>,
    pub byzantine_servers: Vec<u32>,
}

/// Manifest digests the writer side actually produced, by timestamp.
pub fn genuine_manifests(view: &View<'_>) -> BTreeMap<Timestamp, BTreeSet<Digest>> {
    let mut out: BTreeMap<Timestamp, BTreeSet<Digest>> = BTreeMap::new();
    for e in &view.trace.events {
        if let EventKind::Genesis { manifest } = &e.kind {
            out.entry(manifest.ts).or_default().insert(manifest.digest());
        }
    }
    for s in view.sends.values() {
        let Some(env) = &s.env else { continue };
        match &env.payload {
            Payload::RbInit { body, .. } if s.from == crate::types::ProcessId::OWNER => {
                for b in &body.blocks {
                    out.entry(b.manifest.ts).or_default().insert(b.manifest.digest());
                }
            }
            Payload::MultiWrite { block, .. } if view.is_correct(s.from) => {
                out.entry(block.manifest.ts).or_default().insert(block.manifest.digest());
            }
            _ => {}
        }
    }
    out
}

pub fn entity_of(view: &View<'_>, reader: ProcessId) -> Entity {
    if view.scenario.collusion && !view.is_correct(reader) {
        Entity::Coalition
    } else {
        Entity::Process(reader)
    }
}

pub fn effective_reads(view: &View<'_>) -> Vec<EffectiveRead> {
    let genuine = genuine_manifests(view);
    let tau = view.params.tau;
    type Key = (Entity, Timestamp, Digest);
    let mut sets: BTreeMap<Key, BTreeMap<u32, usize>> = BTreeMap::new();
    let mut done: BTreeSet<(Entity, Timestamp)> = BTreeSet::new();
    let mut out = vec![];
    for e in &view.trace.events {
        let EventKind::Receive { msg, tag: Tag::BlockResp, from, .. } = &e.kind else { continue };
        let Some(Payload::BlockResp { stored, .. }) = view.sends.get(msg).and_then(|s| s.env.as_ref()).map(|e| &e.payload) else {
            continue;
        };
        let m = &stored.manifest;
        let idx = stored.share.index;
        let md = m.digest();
        let valid = from.is_server()
            && from.index == idx
            && genuine.get(&m.ts).is_some_and(|g| g.contains(&md))
            && m.digests.get(idx as usize - 1).is_some_and(|d| *d == Digest::of(&stored.share.bytes));
        if !valid {
            continue;
        }
        let entity = entity_of(view, e.process);
        let set = sets.entry((entity, m.ts, md)).or_default();
        set.entry(idx).or_insert(e.index);
        if set.len() >= tau && done.insert((entity, m.ts)) {
            out.push(EffectiveRead {
                entity,
                ts: m.ts,
                index: e.index,
                receives: set.values().copied().collect(),
                servers: set.keys().copied().collect(),
            });
        }
    }
    out
}

fn audit_records(op: &OpRecord) -> Option<(usize, &[crate::server::SignedReadRecord])> {
    match &op.respond {
        Some((idx, OpResult::Audit { records })) => Some((*idx, records)),
        _ => None,
    }
}

fn audits<'v>(view: &'v View<'_>) -> impl Iterator<Item = &'v OpRecord> {
    view.history.ops.iter().filter(|o| o.operation == Operation::Audit)
}

fn names(view: &View<'_>, entity: Entity, reader: ProcessId) -> bool {
    match entity {
        Entity::Process(p) => p == reader,
        Entity::Coalition => reader.is_reader() && !view.is_correct(reader),
    }
}

/// Servers whose AUDIT_RESP the owner received for this audit before it
/// responded.
fn audit_responders(view: &View<'_>, op: &OpRecord) -> Vec<u32> {
    let Some(end) = op.respond_index() else { return vec![] };
    let seq = view.sends.values().filter(|s| s.index > op.invoke && s.from == op.process).find_map(|s| match s.env.as_ref()?.payload {
        Payload::AuditReq { audit_seq } => Some(audit_seq),
        _ => None,
    });
    let mut out = BTreeSet::new();
    for e in &view.trace.events[..] {
        if e.index <= op.invoke || e.index > end || e.process != op.process {
            continue;
        }
        if let EventKind::Receive { msg, tag: Tag::AuditResp, from, .. } = &e.kind {
            let matches = view.sends.get(msg).and_then(|s| s.env.as_ref()).is_some_and(|env| {
                matches!(env.payload, Payload::AuditResp { audit_seq, .. } if Some(audit_seq) == seq)
            });
            if matches {
                out.insert(from.index);
            }
        }
    }
    out.into_iter().collect()
}

pub fn check_completeness(view: &View<'_>) -> Verdict {
    let reads = effective_reads(view);
    let byz: Vec<u32> = view.scenario.byzantine.iter().map(|b| b.server).collect();
    for a in audits(view) {
        let Some((_, records)) = audit_records(a) else { continue };
        for er in reads.iter().filter(|r| r.index < a.invoke) {
            if records.iter().any(|rec| rec.ts == er.ts && names(view, er.entity, rec.reader)) {
                continue;
            }
            let correct_loggers: BTreeSet<u32> = view
                .trace
                .events
                .iter()
                .filter(|e| e.index < a.invoke && view.is_correct(e.process))
                .filter_map(|e| match &e.kind {
                    EventKind::LogAppend { record } if record.ts == er.ts && names(view, er.entity, record.reader) => {
                        Some(e.process.index)
                    }
                    _ => None,
                })
                .collect();
            let miss = CompletenessMiss {
                reader: er.entity,
                ts: er.ts,
                effective_index: er.index,
                audit_op: a.op,
                served_by: er.servers.clone(),
                correct_loggers: correct_loggers.into_iter().collect(),
                audit_responders: audit_responders(view, a),
                byzantine_servers: byz.clone(),
            };
            let mut witness = er.receives.clone();
            witness.extend(er.receives.iter().filter_map(|r| send_index_of_receive(view, *r)));
            witness.extend(a.events());
            let detail = format!(
                "{} effectively read {} (blocks from servers {:?}) but audit op {} omits it; correct loggers {:?}, audit quorum {:?}",
                er.entity, er.ts, miss.served_by, a.op, miss.correct_loggers, miss.audit_responders
            );
            let mut v = Verdict::fail(COMPLETENESS, witness, detail);
            v.miss = Some(miss);
            return v;
        }
    }
    Verdict::pass(COMPLETENESS)
}

pub(crate) fn send_index_of_receive(view: &View<'_>, receive: usize) -> Option<usize> {
    let e = view.trace.events.iter().find(|e| e.index == receive)?;
    match &e.kind {
        EventKind::Receive { msg, .. } => view.sends.get(msg).map(|s| s.index),
        _ => None,
    }
}

pub fn check_strong_accuracy(view: &View<'_>) -> Vec<Verdict> {
    let mut issued: BTreeSet<(ProcessId, Timestamp, crate::types::SeqNum)> = BTreeSet::new();
    for s in view.sends.values() {
        if let Some(Payload::BlockReq { record }) = s.env.as_ref().map(|e| &e.payload) {
            if s.from == record.reader {
                issued.insert(record.key());
            }
        }
    }
    let mut level_a = Verdict::pass(ACCURACY_INVOCATION);
    'outer: for a in audits(view) {
        let Some((idx, records)) = audit_records(a) else { continue };
        for rec in records.iter().filter(|r| view.is_correct(r.reader)) {
            if !issued.contains(&rec.key()) {
                level_a = Verdict::fail(
                    ACCURACY_INVOCATION,
                    vec![a.invoke, idx],
                    format!("audit op {} reports {} for {} without a matching signed BLOCK_REQ", a.op, rec.reader, rec.ts),
                );
                break 'outer;
            }
        }
    }
    let crashed_reader = view.crashed.iter().any(|p| p.is_reader() && view.is_correct(*p));
    let level_b = if !view.quiescent() {
        Verdict::with_status(ACCURACY_EFFECTIVE, Status::Skipped, "run did not reach quiescence")
    } else if crashed_reader {
        Verdict::with_status(ACCURACY_EFFECTIVE, Status::Skipped, "a correct reader crashed")
    } else {
        let eff: BTreeSet<(Entity, Timestamp)> = effective_reads(view).into_iter().map(|r| (r.entity, r.ts)).collect();
        let mut v = Verdict::pass(ACCURACY_EFFECTIVE);
        'b: for a in audits(view) {
            let Some((idx, records)) = audit_records(a) else { continue };
            for rec in records.iter().filter(|r| view.is_correct(r.reader)) {
                if !eff.contains(&(Entity::Process(rec.reader), rec.ts)) {
                    v = Verdict::fail(
                        ACCURACY_EFFECTIVE,
                        vec![a.invoke, idx],
                        format!("audit op {} reports {} for {} but it never effectively read it", a.op, rec.reader, rec.ts),
                    );
                    break 'b;
                }
            }
        }
        v
    };
    vec![level_a, level_b]
}

/// Events to keep so a completeness witness re-fails on its own: the genuine
/// manifests' sources plus the witness itself.
pub fn completeness_support(view: &View<'_>, witness: &[usize]) -> BTreeSet<usize> {
    let mut keep: BTreeSet<usize> = witness.iter().copied().collect();
    for e in &view.trace.events {
        match &e.kind {
            EventKind::Genesis { .. } => {
                keep.insert(e.index);
            }
            EventKind::Send { tag: Tag::RbInit | Tag::MultiWrite, .. } => {
                keep.insert(e.index);
            }
            _ => {}
        }
    }
    keep
}
