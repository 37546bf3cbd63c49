//! Built-in scripted scenarios that reproduce the impossibility
//! constructions and exercise collusion and multi-writer mode.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::checker::{self, Status, Verdict};
use crate::message::Tag;
use crate::node::OpResult;
use crate::simnet::scenario::{
    ByzantineReader, ByzantineServer, ByzantineWriter, CrashSpec, CrashTrigger, Hold, MultiWriterSpec, OpKind, OpSpec, ParamKind,
    ParamSpec, Policy, Release, Scenario,
};
use crate::simnet::trace::{EventKind, Trace};
use crate::simnet::{Behavior, WriterBehavior};
use crate::types::{ProcessId, Timestamp};

pub const DEFAULT_SEED: u64 = 0x0a0d_17ab;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Demo {
    /// `tau = 2f`: a Byzantine reader escapes the audit.
    Tau2f,
    /// `n = 4f` without server-to-server communication: the read stalls.
    FourFNoComm,
    /// Two colluding Byzantine readers split the blocks between them.
    Collusion,
    /// Three writers, one Byzantine, sharing deterministically.
    Multiwriter,
}

impl Demo {
    pub const ALL: [Demo; 4] = [Demo::Tau2f, Demo::FourFNoComm, Demo::Collusion, Demo::Multiwriter];

    pub fn name(self) -> &'static str {
        match self {
            Demo::Tau2f => "tau_2f",
            Demo::FourFNoComm => "four_f_no_comm",
            Demo::Collusion => "collusion",
            Demo::Multiwriter => "multiwriter",
        }
    }

    pub fn parse(s: &str) -> Option<Demo> {
        Demo::ALL.into_iter().find(|d| d.name() == s)
    }

    /// The property the construction is expected to violate, if any.
    pub fn expected_failure(self) -> Option<&'static str> {
        match self {
            Demo::Tau2f => Some(checker::audit::COMPLETENESS),
            Demo::FourFNoComm => Some(checker::liveness::PROPERTY),
            Demo::Collusion | Demo::Multiwriter => None,
        }
    }

    pub fn scenario(self, seed: u64) -> Scenario {
        let op = |process: ProcessId, kind: OpKind, value: &str, after: Vec<usize>| OpSpec {
            process,
            op: kind,
            value: value.into(),
            ts: None,
            at: 0,
            after,
        };
        match self {
            Demo::Tau2f => {
                let params = ParamSpec { kind: ParamKind::TauTooSmall, f: 1, n: None, tau: None, t: None };
                let mut s = Scenario::new(self.name(), params, seed);
                s.policy = Policy::Scripted;
                s.byzantine = vec![ByzantineServer { server: 1, behavior: Behavior::NoLog }];
                s.byzantine_readers = vec![ByzantineReader { reader: 1, block_targets: BTreeSet::from([1, 2]) }];
                s.ops = vec![
                    op(ProcessId::writer(), OpKind::Write, "secret", vec![]),
                    op(ProcessId::reader(1), OpKind::Read, "", vec![0]),
                    op(ProcessId::auditor(), OpKind::Audit, "", vec![1]),
                ];
                s.holds = vec![Hold {
                    tag: Some(Tag::AuditResp),
                    from: Some(ProcessId::server(2)),
                    to: Some(ProcessId::writer()),
                    until: Release::OpResponded { op: 2 },
                }];
                s
            }
            Demo::FourFNoComm => {
                let params = ParamSpec { kind: ParamKind::FourFNoServerComm, f: 1, n: None, tau: None, t: None };
                let mut s = Scenario::new(self.name(), params, seed);
                s.policy = Policy::Scripted;
                s.server_comm_enabled = false;
                s.byzantine = vec![ByzantineServer { server: 4, behavior: Behavior::MuteReads }];
                s.ops = vec![
                    op(ProcessId::writer(), OpKind::Write, "v1", vec![]),
                    op(ProcessId::reader(1), OpKind::Read, "", vec![0]),
                ];
                s.crashes = vec![CrashSpec {
                    process: ProcessId::writer(),
                    trigger: CrashTrigger::AfterRespond { op: 0 },
                    drop_in_flight: true,
                }];
                s.holds = vec![Hold {
                    tag: Some(Tag::RbInit),
                    from: Some(ProcessId::writer()),
                    to: Some(ProcessId::server(3)),
                    until: Release::Crash { process: ProcessId::writer() },
                }];
                s
            }
            Demo::Collusion => {
                let mut s = Scenario::new(self.name(), ParamSpec::standard(1), seed);
                s.policy = Policy::Scripted;
                s.readers = 2;
                s.collusion = true;
                s.byzantine = vec![ByzantineServer { server: 1, behavior: Behavior::NoLog }];
                s.byzantine_readers = vec![
                    ByzantineReader { reader: 1, block_targets: BTreeSet::from([1, 2]) },
                    ByzantineReader { reader: 2, block_targets: BTreeSet::from([3]) },
                ];
                let mut audit = op(ProcessId::auditor(), OpKind::Audit, "", vec![0]);
                audit.at = 1_000;
                s.ops = vec![
                    op(ProcessId::writer(), OpKind::Write, "secret", vec![]),
                    op(ProcessId::reader(1), OpKind::Read, "", vec![0]),
                    op(ProcessId::reader(2), OpKind::Read, "", vec![0]),
                    audit,
                ];
                s
            }
            Demo::Multiwriter => {
                let mut s = Scenario::new(self.name(), ParamSpec::standard(1), seed);
                s.multiwriter = Some(MultiWriterSpec {
                    n_w: 3,
                    f_w: 1,
                    byzantine: vec![ByzantineWriter { writer: 3, behavior: WriterBehavior::OtherValue }],
                });
                for (k, value) in [(1, "alpha"), (2, "beta")] {
                    for w in 1..=3 {
                        let mut o = op(ProcessId::mw_writer(w), OpKind::Write, value, vec![]);
                        o.ts = Some(Timestamp(k));
                        s.ops.push(o);
                    }
                }
                s.ops.push(op(ProcessId::reader(1), OpKind::Read, "", vec![3, 4]));
                s.ops.push(op(ProcessId::auditor(), OpKind::Audit, "", vec![6]));
                s
            }
        }
    }

    /// Whether the verdicts show what the construction is meant to show.
    pub fn reproduced(self, verdicts: &[Verdict]) -> bool {
        match self.expected_failure() {
            Some(p) => checker::find(verdicts, p).is_some_and(|v| v.status == Status::Fail),
            None => checker::all_pass(verdicts),
        }
    }

    /// A walk through the trace naming the events the construction relies on.
    pub fn narrate(self, trace: &Trace, verdicts: &[Verdict]) -> String {
        let mut s = String::new();
        let view = checker::View::new(trace);
        let p = trace.params();
        let _ = writeln!(s, "demo {} (n = {}, f = {}, tau = {}, server communication {})", self.name(), p.n, p.f, p.tau,
            if trace.scenario().server_comm_enabled { "on" } else { "off" });
        for op in &view.history.ops {
            let outcome = match &op.respond {
                Some((i, OpResult::Write { ts })) => format!("responded {ts} at event {i}"),
                Some((i, OpResult::MwWrite { ts })) => format!("responded {ts} at event {i}"),
                Some((i, OpResult::Read { value, ts })) => {
                    format!("returned {:?} ({ts}) at event {i}", String::from_utf8_lossy(value))
                }
                Some((i, OpResult::Audit { records })) => {
                    let list: Vec<String> = records.iter().map(|r| format!("({}, {})", r.reader, r.ts)).collect();
                    format!("reported [{}] at event {i}", list.join(", "))
                }
                None => "never responded".into(),
            };
            let _ = writeln!(s, "  op {} {} by {} invoked at event {}, {}", op.op, op.operation_kind(), op.process, op.invoke, outcome);
        }
        match self {
            Demo::Tau2f => {
                let _ = writeln!(s, "  server:1 is Byzantine and serves blocks without logging them");
                let _ = writeln!(s, "  reader:1 is Byzantine and asks only servers 1 and 2 for blocks");
                if let Some(v) = checker::find(verdicts, checker::audit::COMPLETENESS) {
                    if let Some(m) = &v.miss {
                        let reporters: Vec<u32> =
                            m.correct_loggers.iter().filter(|l| m.audit_responders.contains(l)).copied().collect();
                        let _ = writeln!(s, "  effective read of {} by {} at event {} from servers {:?}", m.ts, m.reader, m.effective_index, m.served_by);
                        let _ = writeln!(s, "  correct servers holding a log entry: {:?}", m.correct_loggers);
                        let _ = writeln!(s, "  audit quorum (n - f = {}): {:?}; servers 3 and 4 never saw the read", p.quorum(), m.audit_responders);
                        let _ = writeln!(s, "  correct reporters inside the quorum: {:?} (tau - 2f = {})", reporters, p.tau as i64 - 2 * p.f as i64);
                    }
                }
            }
            Demo::FourFNoComm => {
                let stored: Vec<u32> = trace
                    .events
                    .iter()
                    .filter(|e| matches!(e.kind, EventKind::StateSnapshot { reg_ts } if reg_ts == Timestamp(1)))
                    .filter(|e| view.is_correct(e.process))
                    .map(|e| e.process.index)
                    .collect();
                let dropped = trace.events.iter().filter(|e| matches!(e.kind, EventKind::Dropped { .. })).count();
                let _ = writeln!(s, "  the writer crashed after its write returned; {dropped} in-flight message(s) to server:3 were lost");
                let _ = writeln!(s, "  correct servers holding a block of ts1: {stored:?}; server:4 is Byzantine and ignores reads");
                let _ = writeln!(s, "  the reader can gather at most {} of the {} blocks it needs", stored.len(), p.tau);
            }
            Demo::Collusion => {
                let eff = checker::audit::effective_reads(&view);
                for e in eff {
                    let _ = writeln!(s, "  {} effectively read {} from servers {:?} (event {})", e.entity, e.ts, e.servers, e.index);
                }
                let _ = writeln!(s, "  neither reader alone holds tau blocks; the audit must name one of them");
            }
            Demo::Multiwriter => {
                for e in &trace.events {
                    if let EventKind::MwAccept { ts, digest } = &e.kind {
                        let _ = writeln!(s, "  {} accepted its block for {ts} ({}) at event {}", e.process, digest.short(), e.index);
                    }
                }
                let _ = writeln!(s, "  writer:3 is Byzantine and sends owner-signed blocks of another value");
            }
        }
        for v in verdicts.iter().filter(|v| v.status != Status::Skipped) {
            let _ = writeln!(s, "  {v}");
        }
        let _ = writeln!(s, "  construction {}", if self.reproduced(verdicts) { "reproduced" } else { "NOT reproduced" });
        s
    }
}
