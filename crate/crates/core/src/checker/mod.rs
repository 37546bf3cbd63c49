//! Post-hoc verdicts over execution traces.

pub mod atomicity;
pub mod audit;
pub mod history;
pub mod links;
pub mod liveness;
pub mod mw;
pub mod rb;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::message::{Envelope, Tag};
use crate::crypto::Digest;
use crate::simnet::trace::{EventKind, Trace};
use crate::simnet::Scenario;
use crate::types::{ProcessId, ProtocolParams};

pub use audit::{CompletenessMiss, EffectiveRead, Entity};
pub use history::{History, OpRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// The run cannot decide the property (event cap, over budget).
    Inconclusive,
    /// The property does not apply to this run.
    Skipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inconclusive => "INCONCLUSIVE",
            Status::Skipped => "SKIPPED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub property: String,
    pub status: Status,
    /// Trace event indices; non-empty on failure.
    pub witness: Vec<usize>,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub miss: Option<CompletenessMiss>,
}

impl Verdict {
    pub fn pass(property: &str) -> Self {
        Self { property: property.into(), status: Status::Pass, witness: vec![], detail: String::new(), miss: None }
    }

    pub fn fail(property: &str, witness: Vec<usize>, detail: impl Into<String>) -> Self {
        let mut witness = witness;
        witness.sort_unstable();
        witness.dedup();
        Self { property: property.into(), status: Status::Fail, witness, detail: detail.into(), miss: None }
    }

    pub fn with_status(property: &str, status: Status, detail: impl Into<String>) -> Self {
        Self { property: property.into(), status, witness: vec![], detail: detail.into(), miss: None }
    }

    pub fn is_fail(&self) -> bool {
        self.status == Status::Fail
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<13} {}", self.status.to_string(), self.property)?;
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        if !self.witness.is_empty() {
            write!(f, " [witness events {:?}]", self.witness)?;
        }
        Ok(())
    }
}

/// Checker families selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Atomicity,
    Liveness,
    Completeness,
    Accuracy,
    Rb,
    Mw,
    Links,
}

impl Family {
    pub const ALL: [Family; 7] =
        [Family::Atomicity, Family::Liveness, Family::Completeness, Family::Accuracy, Family::Rb, Family::Mw, Family::Links];

    pub fn name(self) -> &'static str {
        match self {
            Family::Atomicity => "atomicity",
            Family::Liveness => "liveness",
            Family::Completeness => "completeness",
            Family::Accuracy => "accuracy",
            Family::Rb => "rb",
            Family::Mw => "mw",
            Family::Links => "links",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SendRec {
    pub index: usize,
    pub from: ProcessId,
    pub to: ProcessId,
    pub tag: Tag,
    pub digest: Digest,
    pub env: Option<Envelope>,
}

/// A trace plus the lookups every checker needs.
pub struct View<'a> {
    pub trace: &'a Trace,
    pub scenario: &'a Scenario,
    pub params: ProtocolParams,
    pub history: History,
    pub crashed: BTreeSet<ProcessId>,
    pub(crate) sends: BTreeMap<u64, SendRec>,
}

impl<'a> View<'a> {
    pub fn new(trace: &'a Trace) -> Self {
        let mut sends = BTreeMap::new();
        let mut crashed = BTreeSet::new();
        for e in &trace.events {
            match &e.kind {
                EventKind::Send { msg, tag, to, digest, .. } => {
                    sends.insert(*msg, SendRec { index: e.index, from: e.process, to: *to, tag: *tag, digest: *digest, env: e.envelope() });
                }
                EventKind::Crash => {
                    crashed.insert(e.process);
                }
                _ => {}
            }
        }
        View {
            trace,
            scenario: trace.scenario(),
            params: *trace.params(),
            history: History::from_trace(trace),
            crashed,
            sends,
        }
    }

    pub fn is_correct(&self, p: ProcessId) -> bool {
        self.scenario.is_correct(p)
    }

    /// Correct and never crashed.
    pub fn is_live(&self, p: ProcessId) -> bool {
        self.is_correct(p) && !self.crashed.contains(&p.resolve())
    }

    pub fn correct_servers(&self) -> Vec<ProcessId> {
        self.params.servers().filter(|s| self.is_correct(*s)).collect()
    }

    pub fn quiescent(&self) -> bool {
        self.trace.end == crate::simnet::RunEnd::Quiescent
    }
}

/// Runs every checker family.
pub fn check_all(trace: &Trace) -> Vec<Verdict> {
    check_selected(trace, &Family::ALL)
}

pub fn check_selected(trace: &Trace, families: &[Family]) -> Vec<Verdict> {
    let view = View::new(trace);
    let mut out = vec![];
    for f in families {
        match f {
            Family::Atomicity => out.push(atomicity::check(&view)),
            Family::Liveness => out.push(liveness::check_wait_freedom(&view)),
            Family::Completeness => out.push(audit::check_completeness(&view)),
            Family::Accuracy => out.extend(audit::check_strong_accuracy(&view)),
            Family::Rb => out.extend(rb::check(&view)),
            Family::Mw => out.extend(mw::check(&view)),
            Family::Links => out.extend(links::check(&view)),
        }
    }
    if view.scenario.over_budget() {
        for v in out.iter_mut().filter(|v| v.is_fail()) {
            v.status = Status::Inconclusive;
            v.detail = format!("over fault budget; {}", v.detail);
        }
    }
    out
}

/// No verdict failed or was inconclusive.
pub fn all_pass(verdicts: &[Verdict]) -> bool {
    verdicts.iter().all(|v| matches!(v.status, Status::Pass | Status::Skipped))
}

pub fn find<'v>(verdicts: &'v [Verdict], property: &str) -> Option<&'v Verdict> {
    verdicts.iter().find(|v| v.property == property)
}
