//! Scenario files: everything a run depends on besides the code.
//!
//! TOML, versioned, and fail-closed: unknown fields are errors.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::codec::CodecMode;
use crate::crypto::BackendKind;
use crate::error::ParamError;
use crate::message::Tag;
use crate::multiwriter::MultiWriterParams;
use crate::types::{DemoKind, ProcessId, ProtocolParams, Role, Timestamp};

use super::byzantine::{Behavior, WriterBehavior};

pub const SCENARIO_VERSION: u32 = 1;
pub const DEFAULT_EVENT_CAP: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    #[default]
    Standard,
    TauTooSmall,
    FourFNoServerComm,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    #[serde(default)]
    pub kind: ParamKind,
    pub f: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
}

impl ParamSpec {
    pub fn standard(f: usize) -> Self {
        Self { kind: ParamKind::Standard, f, n: None, tau: None, t: None }
    }

    pub fn resolve(&self) -> Result<ProtocolParams, ParamError> {
        match self.kind {
            ParamKind::Standard => ProtocolParams::standard(self.f),
            ParamKind::TauTooSmall => ProtocolParams::demo(DemoKind::TauTooSmall, self.f),
            ParamKind::FourFNoServerComm => ProtocolParams::demo(DemoKind::FourFNoServerComm, self.f),
            ParamKind::Custom => {
                let n = self.n.unwrap_or(3 * self.f + 1);
                let tau = self.tau.unwrap_or(2 * self.f + 1);
                ProtocolParams::custom(n, self.f, tau, self.t.unwrap_or(1))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    RandomFair,
    /// FIFO over sends; pending invocations go first.
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineServer {
    pub server: u32,
    pub behavior: Behavior,
}

/// A reader that runs the read protocol but sends BLOCK_REQ only to
/// `block_targets`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineReader {
    pub reader: u32,
    pub block_targets: BTreeSet<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CrashTrigger {
    /// Before the first step, so the process never sends.
    Start,
    /// Once the process has sent `count` messages; later sends of the same
    /// step are lost.
    AfterSends { count: usize },
    /// When some correct server first delivers a broadcast from this process.
    AfterFirstRbDeliver,
    /// When script operation `op` responds.
    AfterRespond { op: usize },
    /// Right after the process sends its BLOCK_REQ messages.
    AfterBlockReq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashSpec {
    pub process: ProcessId,
    pub trigger: CrashTrigger,
    /// Discard the crashed process's messages that are still in flight.
    #[serde(default = "yes")]
    pub drop_in_flight: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Write,
    Read,
    Audit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpSpec {
    pub process: ProcessId,
    pub op: OpKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub value: String,
    /// Harness-supplied timestamp of a multi-writer write.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<Timestamp>,
    /// Earliest scheduler step at which the operation may be invoked.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub at: usize,
    /// Script indices that must have responded first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub after: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Release {
    OpResponded { op: usize },
    Crash { process: ProcessId },
    Never,
}

/// Keeps matching messages undeliverable until `until` happens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hold {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<Tag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<ProcessId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<ProcessId>,
    pub until: Release,
}

impl Hold {
    pub fn matches(&self, tag: Tag, from: ProcessId, to: ProcessId) -> bool {
        self.tag.is_none_or(|t| t == tag) && self.from.is_none_or(|p| p == from) && self.to.is_none_or(|p| p == to)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineWriter {
    pub writer: u32,
    pub behavior: WriterBehavior,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiWriterSpec {
    pub n_w: usize,
    pub f_w: usize,
    #[serde(default)]
    pub byzantine: Vec<ByzantineWriter>,
}

impl MultiWriterSpec {
    pub fn params(&self) -> Result<MultiWriterParams, ParamError> {
        MultiWriterParams::new(self.n_w, self.f_w)
    }

    pub fn behavior_of(&self, writer: u32) -> Option<WriterBehavior> {
        self.byzantine.iter().find(|b| b.writer == writer).map(|b| b.behavior)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub params: ParamSpec,
    #[serde(default = "one")]
    pub readers: u32,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default = "yes")]
    pub server_comm_enabled: bool,
    /// Byzantine readers pool what they receive.
    #[serde(default)]
    pub collusion: bool,
    /// Permit more than `f` Byzantine servers; failures become inconclusive.
    #[serde(default)]
    pub allow_over_budget: bool,
    #[serde(default = "default_cap")]
    pub event_cap: usize,
    #[serde(default)]
    pub codec: CodecMode,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default)]
    pub byzantine: Vec<ByzantineServer>,
    #[serde(default)]
    pub byzantine_readers: Vec<ByzantineReader>,
    #[serde(default)]
    pub crashes: Vec<CrashSpec>,
    #[serde(default)]
    pub ops: Vec<OpSpec>,
    #[serde(default)]
    pub holds: Vec<Hold>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiwriter: Option<MultiWriterSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario does not parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported scenario version {0}")]
    Version(u32),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("{0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

impl Scenario {
    pub fn new(name: impl Into<String>, params: ParamSpec, seed: u64) -> Self {
        Self {
            version: SCENARIO_VERSION,
            name: name.into(),
            seed,
            params,
            readers: 1,
            policy: Policy::RandomFair,
            server_comm_enabled: true,
            collusion: false,
            allow_over_budget: false,
            event_cap: DEFAULT_EVENT_CAP,
            codec: CodecMode::Shamir,
            backend: BackendKind::Simulated,
            byzantine: vec![],
            byzantine_readers: vec![],
            crashes: vec![],
            ops: vec![],
            holds: vec![],
            multiwriter: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn protocol_params(&self) -> Result<ProtocolParams, ParamError> {
        self.params.resolve()
    }

    pub fn behavior_of(&self, server: u32) -> Option<Behavior> {
        self.byzantine.iter().find(|b| b.server == server).map(|b| b.behavior)
    }

    pub fn block_targets_of(&self, reader: u32) -> Option<&BTreeSet<u32>> {
        self.byzantine_readers.iter().find(|b| b.reader == reader).map(|b| &b.block_targets)
    }

    pub fn over_budget(&self) -> bool {
        self.protocol_params().map(|p| self.byzantine.len() > p.f).unwrap_or(false)
    }

    /// Every process the scenario instantiates.
    pub fn processes(&self) -> Result<Vec<ProcessId>, ParamError> {
        let p = self.protocol_params()?;
        let mut procs: Vec<ProcessId> = p.servers().collect();
        procs.push(ProcessId::writer());
        procs.extend((1..=self.readers).map(ProcessId::reader));
        if let Some(mw) = &self.multiwriter {
            procs.extend(mw.params()?.writers());
        }
        Ok(procs)
    }

    pub fn is_correct(&self, p: ProcessId) -> bool {
        let p = p.resolve();
        match p.role {
            Role::Server => self.behavior_of(p.index).is_none(),
            Role::Reader => self.block_targets_of(p.index).is_none(),
            Role::Writer if p.index > 0 => {
                self.multiwriter.as_ref().is_none_or(|mw| mw.behavior_of(p.index).is_none())
            }
            _ => true,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.version != SCENARIO_VERSION {
            return Err(ScenarioError::Version(self.version));
        }
        let params = self.protocol_params()?;
        let procs: BTreeSet<ProcessId> = self.processes()?.into_iter().collect();
        let declared = |p: &ProcessId| procs.contains(&p.resolve());
        if self.event_cap == 0 {
            return invalid("event_cap must be positive");
        }
        let mut seen = BTreeSet::new();
        for b in &self.byzantine {
            if b.server < 1 || b.server as usize > params.n {
                return invalid(format!("byzantine server {} outside 1..={}", b.server, params.n));
            }
            if !seen.insert(b.server) {
                return invalid(format!("byzantine server {} listed twice", b.server));
            }
        }
        if self.byzantine.len() > params.f && !self.allow_over_budget {
            return invalid(format!(
                "{} byzantine servers exceed f = {} (set allow_over_budget to run anyway)",
                self.byzantine.len(),
                params.f
            ));
        }
        for r in &self.byzantine_readers {
            if r.reader < 1 || r.reader > self.readers {
                return invalid(format!("byzantine reader {} is not declared", r.reader));
            }
            if r.block_targets.iter().any(|s| *s < 1 || *s as usize > params.n) {
                return invalid(format!("reader {} targets an unknown server", r.reader));
            }
        }
        for c in &self.crashes {
            if !declared(&c.process) {
                return invalid(format!("crash names undeclared process {}", c.process));
            }
            if c.process.is_server() {
                return invalid("servers cannot crash; use the silent behavior");
            }
        }
        if let Some(mw) = &self.multiwriter {
            let mwp = mw.params()?;
            if mw.byzantine.len() > mwp.f_w {
                return invalid(format!("{} byzantine writers exceed f_w = {}", mw.byzantine.len(), mwp.f_w));
            }
            if mw.byzantine.iter().any(|b| b.writer < 1 || b.writer as usize > mwp.n_w) {
                return invalid("byzantine writer outside 1..=n_w");
            }
        }
        for (i, op) in self.ops.iter().enumerate() {
            if !declared(&op.process) {
                return invalid(format!("op {i} names undeclared process {}", op.process));
            }
            if op.after.iter().any(|d| *d >= self.ops.len() || *d == i) {
                return invalid(format!("op {i} depends on an unknown operation"));
            }
            let p = op.process.resolve();
            let ok = match op.op {
                OpKind::Write if self.multiwriter.is_some() => p.role == Role::Writer && p.index > 0 && op.ts.is_some(),
                OpKind::Write => p == ProcessId::OWNER && op.ts.is_none(),
                OpKind::Read => p.is_reader(),
                OpKind::Audit => p == ProcessId::OWNER,
            };
            if !ok {
                return invalid(format!("op {i}: {} cannot {:?} here", op.process, op.op));
            }
        }
        for h in &self.holds {
            for p in [h.from, h.to].into_iter().flatten() {
                if !declared(&p) {
                    return invalid(format!("hold names undeclared process {p}"));
                }
            }
            match h.until {
                Release::OpResponded { op } if op >= self.ops.len() => return invalid("hold waits on an unknown op"),
                Release::Crash { process } if !declared(&process) => return invalid("hold waits on an undeclared crash"),
                _ => {}
            }
        }
        Ok(())
    }
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

fn default_cap() -> usize {
    DEFAULT_EVENT_CAP
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}
