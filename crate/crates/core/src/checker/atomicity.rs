//! Atomicity of a single-writer register history.
//!
//! The checker follows the ordering argument used for the algorithm: writes
//! are ordered by timestamp and each read sits after the write whose
//! timestamp it returns. Such an order exists and respects real time exactly
//! when every read returns a legitimate write and the W→R, R→R and R→W
//! timestamp predicates hold.

use std::collections::BTreeMap;

use crate::node::{OpResult, Operation};
use crate::types::{ProcessId, Role, Timestamp};

use super::{View, Verdict};

pub const PROPERTY: &str = "atomicity";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WriteOp {
    pub ts: Timestamp,
    pub value: Vec<u8>,
    pub invoke: usize,
    /// `None` for a pending write.
    pub respond: Option<usize>,
}

/// A complete read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadOp {
    pub process: ProcessId,
    pub ts: Timestamp,
    pub value: Vec<u8>,
    pub invoke: usize,
    pub respond: usize,
}

/// The register-level view of `complete(H)`: responseless reads are gone;
/// pending writes are kept and become complete iff some read returns them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegisterHistory {
    pub initial: Vec<u8>,
    pub writes: Vec<WriteOp>,
    pub reads: Vec<ReadOp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// A read returned something no write could have produced by then.
    Legitimacy,
    WriteOrder,
    WriteRead,
    ReadRead,
    ReadWrite,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    pub detail: String,
    pub events: Vec<usize>,
}

pub fn check_register(h: &RegisterHistory) -> Result<(), Violation> {
    let by_ts: BTreeMap<Timestamp, &WriteOp> = h.writes.iter().map(|w| (w.ts, w)).collect();
    let mut writes: Vec<&WriteOp> = h.writes.iter().collect();
    writes.sort_by_key(|w| w.invoke);
    for pair in writes.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.ts >= b.ts || a.respond.is_none_or(|r| r > b.invoke) {
            return Err(Violation {
                rule: Rule::WriteOrder,
                detail: format!("writes {} and {} are not sequential in timestamp order", a.ts, b.ts),
                events: [Some(a.invoke), a.respond, Some(b.invoke), b.respond].into_iter().flatten().collect(),
            });
        }
    }
    for r in &h.reads {
        let legit = if r.ts == Timestamp::INITIAL {
            r.value == h.initial
        } else {
            by_ts.get(&r.ts).is_some_and(|w| w.value == r.value && w.invoke < r.respond)
        };
        if !legit {
            let mut events = vec![r.invoke, r.respond];
            if let Some(w) = by_ts.get(&r.ts) {
                events.push(w.invoke);
            }
            return Err(Violation {
                rule: Rule::Legitimacy,
                detail: format!("{} read {} which no preceding or concurrent write produced", r.process, r.ts),
                events,
            });
        }
    }
    for w in &h.writes {
        let Some(wr) = w.respond else { continue };
        if let Some(r) = h.reads.iter().find(|r| wr < r.invoke && r.ts < w.ts) {
            return Err(Violation {
                rule: Rule::WriteRead,
                detail: format!("{} read {} after write {} completed", r.process, r.ts, w.ts),
                events: vec![w.invoke, wr, r.invoke, r.respond],
            });
        }
    }
    for r1 in &h.reads {
        if let Some(r2) = h.reads.iter().find(|r2| r1.respond < r2.invoke && r2.ts < r1.ts) {
            return Err(Violation {
                rule: Rule::ReadRead,
                detail: format!("{} read {} after {} had read {}", r2.process, r2.ts, r1.process, r1.ts),
                events: vec![r1.invoke, r1.respond, r2.invoke, r2.respond],
            });
        }
    }
    for r in &h.reads {
        if let Some(w) = h.writes.iter().find(|w| r.respond < w.invoke && r.ts >= w.ts) {
            return Err(Violation {
                rule: Rule::ReadWrite,
                detail: format!("{} read {} before write {} was invoked", r.process, r.ts, w.ts),
                events: [Some(r.invoke), Some(r.respond), Some(w.invoke), w.respond].into_iter().flatten().collect(),
            });
        }
    }
    Ok(())
}

/// Greedily drops reads, then trailing writes, while the history still fails.
pub fn shrink(h: &RegisterHistory) -> RegisterHistory {
    let mut cur = h.clone();
    let mut i = 0;
    while i < cur.reads.len() {
        let mut cand = cur.clone();
        cand.reads.remove(i);
        if check_register(&cand).is_err() {
            cur = cand;
        } else {
            i += 1;
        }
    }
    cur.writes.sort_by_key(|w| w.invoke);
    while !cur.writes.is_empty() {
        let mut cand = cur.clone();
        cand.writes.pop();
        if check_register(&cand).is_err() {
            cur = cand;
        } else {
            break;
        }
    }
    cur
}

pub fn events_of(h: &RegisterHistory) -> Vec<usize> {
    let mut v: Vec<usize> = h.writes.iter().flat_map(|w| [Some(w.invoke), w.respond]).flatten().collect();
    v.extend(h.reads.iter().flat_map(|r| [r.invoke, r.respond]));
    v
}

/// The register history the trace's correct clients observed.
pub fn register_history(view: &View<'_>) -> RegisterHistory {
    let mut h = RegisterHistory::default();
    let mw = view.scenario.multiwriter.is_some();
    let mut logical: BTreeMap<Timestamp, WriteOp> = BTreeMap::new();
    let mut ordinal = 0u64;
    for op in &view.history.ops {
        match &op.operation {
            Operation::Write { value } if !mw && op.process == ProcessId::OWNER => {
                ordinal += 1;
                h.writes.push(WriteOp { ts: Timestamp(ordinal), value: value.clone(), invoke: op.invoke, respond: op.respond_index() });
            }
            Operation::MwWrite { value, ts } if op.process.role == Role::Writer && view.is_correct(op.process) => {
                let w = logical.entry(*ts).or_insert(WriteOp { ts: *ts, value: value.clone(), invoke: op.invoke, respond: None });
                w.invoke = w.invoke.min(op.invoke);
                w.respond = match (w.respond, op.respond_index()) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
            }
            Operation::Read if view.is_correct(op.process) => {
                if let Some((idx, OpResult::Read { value, ts })) = &op.respond {
                    h.reads.push(ReadOp { process: op.process, ts: *ts, value: value.clone(), invoke: op.invoke, respond: *idx });
                }
            }
            _ => {}
        }
    }
    h.writes.extend(logical.into_values());
    h
}

pub fn check(view: &View<'_>) -> Verdict {
    // The owner's responses must carry the ordinal timestamps the checker assumes.
    let mut ordinal = 0u64;
    for op in view.history.ops.iter().filter(|o| o.process == ProcessId::OWNER) {
        if let Operation::Write { .. } = op.operation {
            ordinal += 1;
            if let Some((idx, OpResult::Write { ts })) = &op.respond {
                if ts.0 != ordinal {
                    return Verdict::fail(PROPERTY, vec![op.invoke, *idx], format!("write #{ordinal} responded with {ts}"));
                }
            }
        }
    }
    let h = register_history(view);
    match check_register(&h) {
        Ok(()) => Verdict::pass(PROPERTY),
        Err(v) => {
            let small = shrink(&h);
            let events = events_of(&small);
            let detail = match check_register(&small) {
                Err(s) => format!("{:?}: {}", s.rule, s.detail),
                Ok(()) => format!("{:?}: {}", v.rule, v.detail),
            };
            Verdict::fail(PROPERTY, if events.is_empty() { v.events } else { events }, detail)
        }
    }
}
