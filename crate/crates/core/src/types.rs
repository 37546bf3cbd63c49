//! Shared protocol vocabulary: parameters, process identities and counters.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ParamError, WireError};
use crate::wire::{Decoder, Encoder, Wire};

/// Which impossibility construction a demo-only parameter set reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoKind {
    /// `n = 3f+1` servers but only `tau = 2f` blocks needed to reconstruct.
    TauTooSmall,
    /// `n = 4f` servers and no server-to-server communication.
    FourFNoServerComm,
}

/// Quorum sizes for one register deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Number of servers.
    pub n: usize,
    /// Maximum number of Byzantine servers.
    pub f: usize,
    /// Number of distinct blocks needed to reconstruct a value.
    pub tau: usize,
    /// Number of distinct server logs that must report a record before an
    /// audit includes it.
    pub t: usize,
    /// Set for parameter sets that only exist to exhibit a violation.
    #[serde(default)]
    pub demo: Option<DemoKind>,
}

impl ProtocolParams {
    /// The optimal-resilience configuration `n = 3f+1, tau = 2f+1, t = 1`.
    pub fn standard(f: usize) -> Result<Self, ParamError> {
        if f < 1 {
            return Err(ParamError::FaultBudget(f));
        }
        Ok(Self { n: 3 * f + 1, f, tau: 2 * f + 1, t: 1, demo: None })
    }

    /// Parameter sets used by the impossibility demonstrations.
    pub fn demo(kind: DemoKind, f: usize) -> Result<Self, ParamError> {
        if f < 1 {
            return Err(ParamError::FaultBudget(f));
        }
        let (n, tau) = match kind {
            DemoKind::TauTooSmall => (3 * f + 1, 2 * f),
            DemoKind::FourFNoServerComm => (4 * f, 2 * f + 1),
        };
        Ok(Self { n, f, tau, t: 1, demo: Some(kind) })
    }

    /// Arbitrary parameters; checks only the structural bounds.
    pub fn custom(n: usize, f: usize, tau: usize, t: usize) -> Result<Self, ParamError> {
        let p = Self { n, f, tau, t, demo: None };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.tau < 1 || self.tau > self.n {
            return Err(ParamError::Threshold { tau: self.tau, n: self.n });
        }
        if self.t < 1 {
            return Err(ParamError::ReportThreshold(self.t));
        }
        if self.f >= self.n {
            return Err(ParamError::FaultBudget(self.f));
        }
        Ok(())
    }

    pub fn is_demo(&self) -> bool {
        self.demo.is_some()
    }

    /// `n - f`: responses a client can wait for without risking a stall.
    pub fn quorum(&self) -> usize {
        self.n - self.f
    }

    /// Iterator over server indices `1..=n`.
    pub fn servers(&self) -> impl Iterator<Item = ProcessId> {
        (1..=self.n as u32).map(ProcessId::server)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Writer,
    Reader,
    Server,
    /// Alias for the register owner; resolves to the writer identity.
    Auditor,
}

impl Role {
    pub(crate) fn code(self) -> u8 {
        match self {
            Role::Writer => 0,
            Role::Reader => 1,
            Role::Server => 2,
            Role::Auditor => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Role::Writer,
            1 => Role::Reader,
            2 => Role::Server,
            3 => Role::Auditor,
            _ => return None,
        })
    }
}

/// A process identity: role plus an index unique within that role.
///
/// Servers are numbered `1..=n`. The single-writer register owner is
/// `Writer#0`; in multi-writer mode the writers are `Writer#1..`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessId {
    pub role: Role,
    pub index: u32,
}

impl ProcessId {
    pub const OWNER: ProcessId = ProcessId { role: Role::Writer, index: 0 };

    pub fn writer() -> Self {
        Self::OWNER
    }

    pub fn reader(index: u32) -> Self {
        Self { role: Role::Reader, index }
    }

    pub fn server(index: u32) -> Self {
        Self { role: Role::Server, index }
    }

    pub fn mw_writer(index: u32) -> Self {
        Self { role: Role::Writer, index }
    }

    /// The auditor is the register owner.
    pub fn auditor() -> Self {
        Self { role: Role::Auditor, index: 0 }.resolve()
    }

    /// Maps role aliases onto the identity that actually holds keys.
    pub fn resolve(self) -> Self {
        match self.role {
            Role::Auditor => Self::OWNER,
            _ => self,
        }
    }

    pub fn is_server(&self) -> bool {
        self.role == Role::Server
    }

    pub fn is_reader(&self) -> bool {
        self.role == Role::Reader
    }

    /// Zero-based slot for server-indexed arrays.
    pub fn slot(&self) -> Option<usize> {
        (self.is_server() && self.index >= 1).then(|| self.index as usize - 1)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.role {
            Role::Writer if self.index == 0 => write!(f, "writer"),
            Role::Writer => write!(f, "writer:{}", self.index),
            Role::Reader => write!(f, "reader:{}", self.index),
            Role::Server => write!(f, "server:{}", self.index),
            Role::Auditor => write!(f, "auditor"),
        }
    }
}

impl std::str::FromStr for ProcessId {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParamError::BadProcess(s.to_string());
        match s {
            "writer" => return Ok(ProcessId::OWNER),
            "auditor" => return Ok(ProcessId::auditor()),
            _ => {}
        }
        let (role, idx) = s.split_once(':').ok_or_else(bad)?;
        let index: u32 = idx.parse().map_err(|_| bad())?;
        match role {
            "writer" => Ok(ProcessId::mw_writer(index)),
            "reader" => Ok(ProcessId::reader(index)),
            "server" if index >= 1 => Ok(ProcessId::server(index)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for ProcessId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProcessId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Logical write counter. `0` is the never-written initial state.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const INITIAL: Timestamp = Timestamp(0);

    pub fn next(self) -> Self {
        Timestamp(self.0 + 1)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ts{}", self.0)
    }
}

/// Per-reader read-operation counter.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SeqNum(pub u64);

impl SeqNum {
    pub fn next(self) -> Self {
        SeqNum(self.0 + 1)
    }
}

impl Wire for ProcessId {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.role.code()).u32(self.index);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        let code = dec.u8()?;
        let role = Role::from_code(code).ok_or(WireError::Discriminant { what: "role", value: code })?;
        Ok(ProcessId { role, index: dec.u32()? })
    }
}

impl Wire for Timestamp {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.0);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(Timestamp(dec.u64()?))
    }
}

impl Wire for SeqNum {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.0);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(SeqNum(dec.u64()?))
    }
}
