//! Reliable-broadcast properties over RbDeliver events at correct servers.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::Digest;
use crate::message::{BroadcastId, Payload};
use crate::simnet::trace::EventKind;
use crate::types::ProcessId;

use super::{Status, Verdict, View};

pub const VALIDITY: &str = "rb_validity";
pub const INTEGRITY: &str = "rb_integrity";
pub const NO_DUPLICITY: &str = "rb_no_duplicity";
pub const TERMINATION_1: &str = "rb_termination_1";
pub const TERMINATION_2: &str = "rb_termination_2";

const ALL: [&str; 5] = [VALIDITY, INTEGRITY, NO_DUPLICITY, TERMINATION_1, TERMINATION_2];

pub fn check(view: &View<'_>) -> Vec<Verdict> {
    if !view.scenario.server_comm_enabled || view.scenario.multiwriter.is_some() {
        let why = if view.scenario.multiwriter.is_some() { "multi-writer mode bypasses broadcast" } else { "server communication disabled" };
        return ALL.iter().map(|p| Verdict::with_status(p, Status::Skipped, why)).collect();
    }
    // What the broadcaster sent, per instance.
    let mut broadcast: BTreeMap<BroadcastId, (Digest, usize)> = BTreeMap::new();
    for s in view.sends.values() {
        if let Some(Payload::RbInit { id, body }) = s.env.as_ref().map(|e| &e.payload) {
            if s.from == id.writer {
                broadcast.entry(*id).or_insert((body.digest(), s.index));
            }
        }
    }
    let correct = view.correct_servers();
    let mut delivered: BTreeMap<BroadcastId, BTreeMap<ProcessId, (Digest, usize)>> = BTreeMap::new();
    let mut integrity = Verdict::pass(INTEGRITY);
    let mut validity = Verdict::pass(VALIDITY);
    for e in view.trace.events.iter().filter(|e| correct.contains(&e.process)) {
        let EventKind::RbDeliver { id, digest } = &e.kind else { continue };
        let per = delivered.entry(*id).or_default();
        if let Some((_, first)) = per.get(&e.process) {
            if !integrity.is_fail() {
                integrity = Verdict::fail(INTEGRITY, vec![*first, e.index], format!("{} delivered {:?} twice", e.process, id));
            }
            continue;
        }
        per.insert(e.process, (*digest, e.index));
        match broadcast.get(id) {
            None if !integrity.is_fail() => {
                integrity = Verdict::fail(INTEGRITY, vec![e.index], format!("{} delivered {:?} which was never broadcast", e.process, id));
            }
            Some((d, sent)) if d != digest && !validity.is_fail() => {
                validity = Verdict::fail(VALIDITY, vec![*sent, e.index], format!("{} delivered a body other than the one broadcast", e.process));
            }
            _ => {}
        }
    }
    let mut no_dup = Verdict::pass(NO_DUPLICITY);
    for (id, per) in &delivered {
        let digests: BTreeSet<&Digest> = per.values().map(|(d, _)| d).collect();
        if digests.len() > 1 {
            no_dup = Verdict::fail(NO_DUPLICITY, per.values().map(|(_, i)| *i).collect(), format!("correct servers delivered different bodies for {id:?}"));
            break;
        }
    }
    let missing = |id: &BroadcastId| -> Vec<ProcessId> {
        correct.iter().filter(|s| !delivered.get(id).is_some_and(|m| m.contains_key(s))).copied().collect()
    };
    let (t1, t2) = if !view.quiescent() {
        (
            Verdict::with_status(TERMINATION_1, Status::Inconclusive, "run did not reach quiescence"),
            Verdict::with_status(TERMINATION_2, Status::Inconclusive, "run did not reach quiescence"),
        )
    } else {
        let mut t1 = Verdict::pass(TERMINATION_1);
        for (id, (_, sent)) in &broadcast {
            if !view.is_live(id.writer) {
                continue;
            }
            let m = missing(id);
            if !m.is_empty() {
                t1 = Verdict::fail(TERMINATION_1, vec![*sent], format!("{:?} from a correct writer never delivered at {:?}", id, m));
                break;
            }
        }
        let mut t2 = Verdict::pass(TERMINATION_2);
        for (id, per) in &delivered {
            let m = missing(id);
            if !m.is_empty() {
                t2 = Verdict::fail(TERMINATION_2, per.values().map(|(_, i)| *i).collect(), format!("{:?} delivered by some correct servers but not {:?}", id, m));
                break;
            }
        }
        (t1, t2)
    };
    vec![validity, integrity, no_dup, t1, t2]
}
