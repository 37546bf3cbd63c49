//! Multi-writer properties: valid acceptance, uniform acceptance and
//! deterministic sharing.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::Digest;
use crate::message::Payload;
use crate::node::Operation;
use crate::simnet::trace::EventKind;
use crate::types::{ProcessId, Timestamp};
use crate::wire::Wire;

use super::{Status, Verdict, View};

pub const VALID: &str = "mw_valid_acceptance";
pub const UNIFORM: &str = "mw_uniform_acceptance";
pub const DETERMINISTIC: &str = "mw_deterministic_sharing";

pub fn check(view: &View<'_>) -> Vec<Verdict> {
    if view.scenario.multiwriter.is_none() {
        return [VALID, UNIFORM, DETERMINISTIC]
            .iter()
            .map(|p| Verdict::with_status(p, Status::Skipped, "single-writer run"))
            .collect();
    }
    // Blocks correct writers sent, by (ts, server).
    let mut sent: BTreeMap<(Timestamp, u32), BTreeMap<ProcessId, (Vec<u8>, usize)>> = BTreeMap::new();
    for s in view.sends.values() {
        if let Some(Payload::MultiWrite { ts, block, .. }) = s.env.as_ref().map(|e| &e.payload) {
            if view.is_correct(s.from) {
                sent.entry((*ts, s.to.index)).or_default().insert(s.from, (block.to_bytes(), s.index));
            }
        }
    }
    let mut deterministic = Verdict::pass(DETERMINISTIC);
    for ((ts, server), per) in &sent {
        let distinct: BTreeSet<&Vec<u8>> = per.values().map(|(b, _)| b).collect();
        if distinct.len() > 1 {
            deterministic = Verdict::fail(
                DETERMINISTIC,
                per.values().map(|(_, i)| *i).collect(),
                format!("correct writers sent server {server} different blocks for {ts}"),
            );
            break;
        }
    }
    let correct = view.correct_servers();
    let mut accepted: BTreeMap<Timestamp, BTreeMap<ProcessId, usize>> = BTreeMap::new();
    let mut valid = Verdict::pass(VALID);
    for e in view.trace.events.iter().filter(|e| correct.contains(&e.process)) {
        let EventKind::MwAccept { ts, digest } = &e.kind else { continue };
        accepted.entry(*ts).or_default().insert(e.process, e.index);
        let honest = sent
            .get(&(*ts, e.process.index))
            .is_some_and(|per| per.values().any(|(b, _)| Digest::of(b) == *digest));
        if !honest && !valid.is_fail() {
            valid = Verdict::fail(VALID, vec![e.index], format!("{} accepted a block for {ts} no correct writer sent", e.process));
        }
    }
    let uniform = if !view.quiescent() {
        Verdict::with_status(UNIFORM, Status::Inconclusive, "run did not reach quiescence")
    } else {
        let written: BTreeSet<Timestamp> = view
            .history
            .ops
            .iter()
            .filter(|o| view.is_live(o.process))
            .filter_map(|o| match o.operation {
                Operation::MwWrite { ts, .. } => Some(ts),
                _ => None,
            })
            .collect();
        let mut v = Verdict::pass(UNIFORM);
        for ts in written.iter().chain(accepted.keys()) {
            let have = accepted.get(ts);
            let missing: Vec<ProcessId> = correct.iter().filter(|s| !have.is_some_and(|m| m.contains_key(s))).copied().collect();
            if !missing.is_empty() {
                let witness = have.map(|m| m.values().copied().collect()).unwrap_or_default();
                v = Verdict::fail(UNIFORM, witness, format!("{ts} never accepted at {missing:?}"));
                if v.witness.is_empty() {
                    v.witness = view.history.ops.iter().filter(|o| matches!(o.operation, Operation::MwWrite { ts: t, .. } if t == *ts)).map(|o| o.invoke).collect();
                }
                break;
            }
        }
        v
    };
    vec![valid, uniform, deterministic]
}
