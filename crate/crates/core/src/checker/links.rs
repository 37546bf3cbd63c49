//! Point-to-point link properties: integrity, no creation and reliable
//! delivery.

use std::collections::{BTreeMap, BTreeSet};

use crate::simnet::trace::EventKind;

use super::{Status, Verdict, View};

pub const INTEGRITY: &str = "link_integrity";
pub const NO_CREATION: &str = "link_no_creation";
pub const RELIABLE: &str = "link_reliable_delivery";

pub fn check(view: &View<'_>) -> Vec<Verdict> {
    let mut received: BTreeMap<u64, usize> = BTreeMap::new();
    let mut dropped: BTreeSet<u64> = BTreeSet::new();
    let mut integrity = Verdict::pass(INTEGRITY);
    let mut creation = Verdict::pass(NO_CREATION);
    for e in &view.trace.events {
        match &e.kind {
            EventKind::Receive { msg, tag, from, digest } => {
                if let Some(first) = received.insert(*msg, e.index) {
                    if !integrity.is_fail() {
                        integrity = Verdict::fail(INTEGRITY, vec![first, e.index], format!("message {msg} received twice"));
                    }
                }
                let ok = view
                    .sends
                    .get(msg)
                    .is_some_and(|s| s.index < e.index && s.from == *from && s.to == e.process && s.tag == *tag && s.digest == *digest);
                if !ok && !creation.is_fail() {
                    creation = Verdict::fail(NO_CREATION, vec![e.index], format!("message {msg} received without a matching send"));
                }
            }
            EventKind::Dropped { msg } => {
                dropped.insert(*msg);
            }
            _ => {}
        }
    }
    let reliable = if !view.quiescent() {
        Verdict::with_status(RELIABLE, Status::Inconclusive, "run did not reach quiescence")
    } else {
        let lost: Vec<_> = view
            .sends
            .iter()
            .filter(|(m, s)| !received.contains_key(m) && !dropped.contains(m) && !view.crashed.contains(&s.to))
            .collect();
        match lost.first() {
            None => Verdict::pass(RELIABLE),
            Some((m, s)) => Verdict::fail(
                RELIABLE,
                lost.iter().take(8).map(|(_, s)| s.index).collect(),
                format!("{} messages never delivered, first {m} ({} from {} to {})", lost.len(), s.tag, s.from, s.to),
            ),
        }
    };
    vec![integrity, creation, reliable]
}
