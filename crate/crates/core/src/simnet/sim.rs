//! The single-threaded event loop.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::codec::{Codec, Share, StoredShare};
use crate::crypto::{BackendKind, KeyRegistry};
use crate::message::{Envelope, Tag};
use crate::multiwriter::MwWriterNode;
use crate::node::{NodeEvent, OpResult, Operation, Outbox};
use crate::reader::ReaderNode;
use crate::server::ServerNode;
use crate::types::{ProcessId, ProtocolParams, Role, Timestamp};
use crate::wire::Wire;
use crate::writer::WriterNode;

use super::byzantine::{MwProc, ReaderProc, ServerProc};
use super::scenario::{CrashSpec, CrashTrigger, OpKind, Policy, Release, Scenario, ScenarioError};
use super::trace::{EventKind, RunEnd, Trace, TraceEvent, TraceHeader, TRACE_FORMAT};

#[derive(Debug, Clone)]
enum Proc {
    Server(Box<ServerProc>),
    Writer(Box<WriterNode>),
    Reader(Box<ReaderProc>),
    MwWriter(Box<MwProc>),
}

impl Proc {
    fn handle(&mut self, env: &Envelope, out: &mut Outbox) {
        match self {
            Proc::Server(s) => s.handle(env, out),
            Proc::Writer(w) => w.handle(env, out),
            Proc::Reader(r) => r.handle(env, out),
            Proc::MwWriter(w) => w.handle(env, out),
        }
    }

    fn is_idle(&self) -> bool {
        match self {
            Proc::Server(_) => false,
            Proc::Writer(w) => w.is_idle(),
            Proc::Reader(r) => r.inner.is_idle(),
            Proc::MwWriter(w) => w.inner.is_idle(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OpState {
    Waiting,
    Invoked,
    Responded,
}

#[derive(Debug, Clone, Copy)]
enum Choice {
    Invoke(usize),
    Deliver(usize),
}

struct InFlight {
    msg: u64,
    env: Envelope,
}

struct Sim<'a> {
    scenario: &'a Scenario,
    procs: BTreeMap<ProcessId, Proc>,
    in_flight: Vec<InFlight>,
    next_msg: u64,
    crashed: BTreeSet<ProcessId>,
    sent: BTreeMap<ProcessId, usize>,
    ops: Vec<OpState>,
    current: BTreeMap<ProcessId, usize>,
    events: Vec<TraceEvent>,
    rng: ChaCha20Rng,
    steps: usize,
}

/// Runs `scenario` to quiescence or its event cap.
pub fn run(scenario: &Scenario) -> Result<Trace, ScenarioError> {
    scenario.validate()?;
    let params = scenario.protocol_params()?;
    let mut sim = Sim::setup(scenario, params)?;
    let end = sim.run_loop();
    Ok(Trace {
        header: TraceHeader { format: TRACE_FORMAT.into(), params, scenario: scenario.clone() },
        events: sim.events,
        end,
        steps: sim.steps,
    })
}

impl<'a> Sim<'a> {
    fn setup(scenario: &'a Scenario, params: ProtocolParams) -> Result<Self, ScenarioError> {
        let procs_list = scenario.processes()?;
        let registry = Arc::new(match scenario.backend {
            BackendKind::Simulated => KeyRegistry::simulated(scenario.seed, procs_list.iter().copied()),
            BackendKind::Real => KeyRegistry::real_from_seed(scenario.seed, procs_list.iter().copied()),
        });
        let codec = Codec::new(params, scenario.codec);
        let bad = |e: crate::node::ClientError| ScenarioError::Invalid(format!("setup failed: {e}"));
        let owner = WriterNode::new(registry.keyring(ProcessId::OWNER), codec, scenario.seed ^ 0x5752_4954_4552);
        let genesis = owner.genesis_blocks().map_err(bad)?;
        let readers: Vec<ProcessId> = (1..=scenario.readers).map(ProcessId::reader).collect();
        let mut sim = Sim {
            scenario,
            procs: BTreeMap::new(),
            in_flight: vec![],
            next_msg: 0,
            crashed: BTreeSet::new(),
            sent: BTreeMap::new(),
            ops: vec![OpState::Waiting; scenario.ops.len()],
            current: BTreeMap::new(),
            events: vec![],
            rng: ChaCha20Rng::seed_from_u64(scenario.seed),
            steps: 0,
        };
        sim.record(ProcessId::OWNER, EventKind::Genesis { manifest: genesis[0].manifest.clone() });
        let mw = scenario.multiwriter.as_ref().map(|m| m.params()).transpose()?;
        for s in params.servers() {
            let keys = registry.keyring(s);
            let block = &genesis[s.index as usize - 1];
            let bytes = keys.decrypt_own(&block.ciphertext).map_err(|e| bad(e.into()))?;
            let stored = StoredShare { share: Share { index: s.index, bytes }, manifest: block.manifest.clone() };
            let mut node = ServerNode::new(keys, codec, scenario.server_comm_enabled, Some(stored));
            if let Some(p) = mw {
                node = node.with_multiwriter(p);
            }
            let proc = ServerProc::new(node, scenario.behavior_of(s.index), readers.clone());
            sim.procs.insert(s, Proc::Server(Box::new(proc)));
        }
        sim.procs.insert(ProcessId::OWNER, Proc::Writer(Box::new(owner)));
        for &r in &readers {
            let inner = ReaderNode::new(registry.keyring(r), codec);
            let block_targets = scenario.block_targets_of(r.index).cloned();
            sim.procs.insert(r, Proc::Reader(Box::new(ReaderProc { inner, block_targets })));
        }
        if let (Some(spec), Some(p)) = (&scenario.multiwriter, mw) {
            for w in p.writers() {
                let inner = MwWriterNode::new(registry.owner_delegate(w), codec);
                let proc = MwProc::new(inner, spec.behavior_of(w.index), scenario.seed.wrapping_add(w.index as u64));
                sim.procs.insert(w, Proc::MwWriter(Box::new(proc)));
            }
        }
        for c in &scenario.crashes {
            if c.trigger == CrashTrigger::Start {
                sim.crash(c);
            }
        }
        Ok(sim)
    }

    fn record(&mut self, process: ProcessId, kind: EventKind) {
        let index = self.events.len();
        self.events.push(TraceEvent { index, process, kind });
    }

    fn held(&self, env: &Envelope) -> bool {
        self.scenario.holds.iter().any(|h| {
            h.matches(env.tag(), env.sender, env.receiver)
                && match h.until {
                    Release::OpResponded { op } => self.ops[op] != OpState::Responded,
                    Release::Crash { process } => !self.crashed.contains(&process.resolve()),
                    Release::Never => true,
                }
        })
    }

    fn op_enabled(&self, i: usize) -> bool {
        self.op_enabled_at(i, self.steps)
    }

    fn op_enabled_at(&self, i: usize, now: usize) -> bool {
        let op = &self.scenario.ops[i];
        let p = op.process.resolve();
        self.ops[i] == OpState::Waiting
            && !self.crashed.contains(&p)
            && now >= op.at
            && op.after.iter().all(|d| self.ops[*d] == OpState::Responded)
            && (0..i).all(|j| self.scenario.ops[j].process.resolve() != p || self.ops[j] == OpState::Responded)
            && self.procs[&p].is_idle()
    }

    fn next_hint(&self) -> Option<usize> {
        (0..self.ops.len())
            .filter(|i| self.scenario.ops[*i].at > self.steps && self.op_enabled_at(*i, usize::MAX))
            .map(|i| self.scenario.ops[i].at)
            .min()
    }

    fn choices(&self) -> Vec<Choice> {
        let mut c: Vec<Choice> = (0..self.ops.len()).filter(|i| self.op_enabled(*i)).map(Choice::Invoke).collect();
        c.extend(
            self.in_flight
                .iter()
                .enumerate()
                .filter(|(_, m)| !self.crashed.contains(&m.env.receiver) && !self.held(&m.env))
                .map(|(i, _)| Choice::Deliver(i)),
        );
        c
    }

    fn run_loop(&mut self) -> RunEnd {
        loop {
            if self.steps >= self.scenario.event_cap {
                return RunEnd::EventCap;
            }
            let choices = self.choices();
            if choices.is_empty() {
                // Idle time passes until the next `at` hint, if any op waits on one.
                match self.next_hint() {
                    Some(at) => {
                        self.steps = at.min(self.scenario.event_cap);
                        continue;
                    }
                    None => return RunEnd::Quiescent,
                }
            }
            let pick = match self.scenario.policy {
                Policy::RandomFair => choices[self.rng.gen_range(0..choices.len())],
                Policy::Scripted => choices[0],
            };
            self.steps += 1;
            match pick {
                Choice::Invoke(i) => self.invoke(i),
                Choice::Deliver(i) => self.deliver(i),
            }
        }
    }

    fn invoke(&mut self, i: usize) {
        let spec = &self.scenario.ops[i];
        let p = spec.process.resolve();
        let value = spec.value.as_bytes().to_vec();
        let operation = match spec.op {
            OpKind::Write if self.scenario.multiwriter.is_some() => {
                Operation::MwWrite { value, ts: spec.ts.unwrap_or(Timestamp::INITIAL) }
            }
            OpKind::Write => Operation::Write { value },
            OpKind::Read => Operation::Read,
            OpKind::Audit => Operation::Audit,
        };
        self.ops[i] = OpState::Invoked;
        self.current.insert(p, i);
        self.record(p, EventKind::Invoke { op: i, operation: operation.clone() });
        let mut out = Outbox::default();
        let proc = self.procs.get_mut(&p).expect("declared process");
        let r = match (proc, &operation) {
            (Proc::Writer(w), Operation::Write { value }) => w.invoke_write(value, &mut out),
            (Proc::Writer(w), Operation::Audit) => w.invoke_audit(&mut out),
            (Proc::Reader(r), Operation::Read) => r.invoke_read(&mut out),
            (Proc::MwWriter(w), Operation::MwWrite { value, ts }) => w.invoke_write(value, *ts, &mut out),
            _ => Err(crate::node::ClientError::Unsupported("this process")),
        };
        if let Err(e) = r {
            out.diag(format!("invocation of op {i} failed: {e}"));
        }
        self.flush(p, out);
    }

    fn deliver(&mut self, pos: usize) {
        let InFlight { msg, env } = self.in_flight.remove(pos);
        let p = env.receiver;
        self.record(p, EventKind::Receive { msg, tag: env.tag(), from: env.sender, digest: env.digest() });
        let mut out = Outbox::default();
        self.procs.get_mut(&p).expect("declared process").handle(&env, &mut out);
        self.flush(p, out);
    }

    fn crash_spec(&self, p: ProcessId, f: impl Fn(&CrashTrigger) -> bool) -> Option<CrashSpec> {
        self.scenario.crashes.iter().find(|c| c.process.resolve() == p && f(&c.trigger)).copied()
    }

    fn flush(&mut self, p: ProcessId, out: Outbox) {
        let mut later: Vec<CrashSpec> = vec![];
        for e in out.events {
            let kind = match e {
                NodeEvent::RbDeliver { id, digest } => {
                    if self.scenario.is_correct(p) {
                        if let Some(c) = self.crash_spec(id.writer, |t| *t == CrashTrigger::AfterFirstRbDeliver) {
                            later.push(c);
                        }
                    }
                    EventKind::RbDeliver { id, digest }
                }
                NodeEvent::RegTs { reg_ts } => EventKind::StateSnapshot { reg_ts },
                NodeEvent::LogAppend { record } => EventKind::LogAppend { record },
                NodeEvent::MwAccept { ts, digest } => EventKind::MwAccept { ts, digest },
                NodeEvent::Diagnostic(text) => EventKind::Diagnostic { text },
                NodeEvent::Respond(result) => match self.current.remove(&p) {
                    Some(op) => {
                        self.ops[op] = OpState::Responded;
                        later.extend(self.scenario.crashes.iter().filter(|c| c.trigger == CrashTrigger::AfterRespond { op }));
                        EventKind::Respond { op, result }
                    }
                    None => EventKind::Diagnostic { text: format!("unsolicited response {}", describe(&result)) },
                },
            };
            self.record(p, kind);
        }
        let limit = self.crash_spec(p, |t| matches!(t, CrashTrigger::AfterSends { .. }));
        let mut sent_block_req = false;
        for env in out.sends {
            if self.crashed.contains(&p) {
                break;
            }
            if let Some(c @ CrashSpec { trigger: CrashTrigger::AfterSends { count }, .. }) = limit {
                if self.sent.get(&p).copied().unwrap_or(0) >= count {
                    self.crash(&c);
                    break;
                }
            }
            sent_block_req |= env.tag() == Tag::BlockReq;
            self.send(p, env);
            if let Some(c @ CrashSpec { trigger: CrashTrigger::AfterSends { count }, .. }) = limit {
                if self.sent[&p] >= count {
                    self.crash(&c);
                }
            }
        }
        if sent_block_req {
            if let Some(c) = self.crash_spec(p, |t| *t == CrashTrigger::AfterBlockReq) {
                later.push(c);
            }
        }
        for c in later {
            self.crash(&c);
        }
    }

    fn send(&mut self, p: ProcessId, env: Envelope) {
        let msg = self.next_msg;
        self.next_msg += 1;
        *self.sent.entry(p).or_default() += 1;
        let bytes = env.to_bytes();
        self.record(
            p,
            EventKind::Send { msg, tag: env.tag(), to: env.receiver, digest: crate::crypto::Digest::of(&bytes), envelope: bytes },
        );
        self.in_flight.push(InFlight { msg, env });
    }

    fn crash(&mut self, c: &CrashSpec) {
        let p = c.process.resolve();
        if !self.crashed.insert(p) {
            return;
        }
        self.record(p, EventKind::Crash);
        if c.drop_in_flight {
            let (dropped, kept): (Vec<InFlight>, Vec<InFlight>) =
                std::mem::take(&mut self.in_flight).into_iter().partition(|m| m.env.sender == p);
            self.in_flight = kept;
            for m in dropped {
                self.record(p, EventKind::Dropped { msg: m.msg });
            }
        }
    }
}

fn describe(r: &OpResult) -> &'static str {
    match r {
        OpResult::Write { .. } => "write",
        OpResult::Read { .. } => "read",
        OpResult::Audit { .. } => "audit",
        OpResult::MwWrite { .. } => "multi-writer write",
    }
}

/// Whether `p` is a client process whose operations the checker judges.
pub fn is_client(p: ProcessId) -> bool {
    matches!(p.role, Role::Writer | Role::Reader | Role::Auditor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::scenario::{OpSpec, ParamSpec};

    fn op(process: ProcessId, op: OpKind, value: &str, after: Vec<usize>) -> OpSpec {
        OpSpec { process, op, value: value.into(), ts: None, at: 0, after }
    }

    fn basic(seed: u64) -> Scenario {
        let mut s = Scenario::new("basic", ParamSpec::standard(1), seed);
        s.ops = vec![
            op(ProcessId::writer(), OpKind::Write, "hello", vec![]),
            op(ProcessId::reader(1), OpKind::Read, "", vec![0]),
        ];
        s
    }

    fn responses(t: &Trace) -> Vec<(usize, OpResult)> {
        t.events
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::Respond { op, result } => Some((*op, result.clone())),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn write_then_read_returns_the_value() {
        let t = run(&basic(1)).unwrap();
        assert_eq!(t.end, RunEnd::Quiescent);
        let r = responses(&t);
        assert_eq!(r[0], (0, OpResult::Write { ts: Timestamp(1) }));
        assert_eq!(r[1], (1, OpResult::Read { value: b"hello".to_vec(), ts: Timestamp(1) }));
    }

    #[test]
    fn same_seed_same_trace() {
        let a = run(&basic(9)).unwrap();
        let b = run(&basic(9)).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let c = run(&basic(10)).unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn writer_crash_before_sending_stores_nothing() {
        let mut s = basic(2);
        s.ops[1].after.clear();
        s.crashes.push(CrashSpec { process: ProcessId::writer(), trigger: CrashTrigger::AfterSends { count: 0 }, drop_in_flight: true });
        let t = run(&s).unwrap();
        assert!(!t.events.iter().any(|e| matches!(e.kind, EventKind::StateSnapshot { .. })));
        assert_eq!(responses(&t), vec![(1, OpResult::Read { value: vec![], ts: Timestamp(0) })]);
    }

    #[test]
    fn crash_after_first_delivery_still_delivers_everywhere() {
        for seed in 0..10 {
            let mut s = basic(seed);
            s.crashes.push(CrashSpec { process: ProcessId::writer(), trigger: CrashTrigger::AfterFirstRbDeliver, drop_in_flight: true });
            let t = run(&s).unwrap();
            let delivered: BTreeSet<ProcessId> = t
                .events
                .iter()
                .filter(|e| matches!(e.kind, EventKind::RbDeliver { .. }))
                .map(|e| e.process)
                .collect();
            assert_eq!(delivered.len(), 4, "seed {seed}");
        }
    }

    #[test]
    fn event_cap_stops_the_run() {
        let mut s = basic(3);
        s.event_cap = 5;
        let t = run(&s).unwrap();
        assert_eq!(t.end, RunEnd::EventCap);
        assert_eq!(t.steps, 5);
    }

    #[test]
    fn scripted_policy_is_fifo() {
        let mut s = basic(4);
        s.policy = Policy::Scripted;
        let t = run(&s).unwrap();
        let r = responses(&t);
        assert_eq!(r[1].1, OpResult::Read { value: b"hello".to_vec(), ts: Timestamp(1) });
    }

    #[test]
    fn held_messages_wait_for_release() {
        let mut s = basic(5);
        s.holds.push(super::super::scenario::Hold {
            tag: Some(Tag::TsReq),
            from: None,
            to: Some(ProcessId::server(1)),
            until: Release::Never,
        });
        let t = run(&s).unwrap();
        assert!(!t.events.iter().any(|e| e.process == ProcessId::server(1) && matches!(e.kind, EventKind::Receive { tag: Tag::TsReq, .. })));
        assert_eq!(responses(&t).len(), 2, "reads tolerate one unresponsive server");
    }
}
