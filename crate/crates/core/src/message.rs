//! Protocol envelopes and their canonical encoding.
//!
//! Layout: `tag, sender, receiver, payload, transport`, the payload being a
//! length-prefixed nested encoding. Decoding rejects an envelope whose
//! transport does not agree with its tag.

use serde::{Deserialize, Serialize};

use crate::codec::{Block, StoredShare};
use crate::crypto::Digest;
use crate::error::WireError;
use crate::server::SignedReadRecord;
use crate::types::{ProcessId, SeqNum, Timestamp};
use crate::wire::{Decoder, Encoder, Wire};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Tag {
    RbInit,
    RbEcho,
    RbReady,
    WriteAck,
    TsReq,
    TsResp,
    ValReq,
    ValResp,
    BlockReq,
    BlockResp,
    AuditReq,
    AuditResp,
    MultiWrite,
}

impl Tag {
    pub const ALL: [Tag; 13] = [
        Tag::RbInit,
        Tag::RbEcho,
        Tag::RbReady,
        Tag::WriteAck,
        Tag::TsReq,
        Tag::TsResp,
        Tag::ValReq,
        Tag::ValResp,
        Tag::BlockReq,
        Tag::BlockResp,
        Tag::AuditReq,
        Tag::AuditResp,
        Tag::MultiWrite,
    ];

    fn code(self) -> u8 {
        Tag::ALL.iter().position(|t| *t == self).unwrap() as u8
    }

    fn from_code(c: u8) -> Option<Tag> {
        Tag::ALL.get(c as usize).copied()
    }

    /// The transport every envelope with this tag travels on.
    pub fn transport(self) -> Transport {
        match self {
            Tag::RbInit | Tag::RbEcho | Tag::RbReady => Transport::ReliableBroadcast,
            _ => Transport::PointToPoint,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tag::RbInit => "WRITE",
            Tag::RbEcho => "ECHO",
            Tag::RbReady => "READY",
            Tag::WriteAck => "WRITE_ACK",
            Tag::TsReq => "TS_REQ",
            Tag::TsResp => "TS_RESP",
            Tag::ValReq => "VAL_REQ",
            Tag::ValResp => "VAL_RESP",
            Tag::BlockReq => "BLOCK_REQ",
            Tag::BlockResp => "BLOCK_RESP",
            Tag::AuditReq => "AUDIT_REQ",
            Tag::AuditResp => "AUDIT_RESP",
            Tag::MultiWrite => "MULTI_WRITE",
        }
    }
}

impl std::fmt::Display for Tag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    PointToPoint,
    ReliableBroadcast,
}

/// Identifies one reliable-broadcast instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BroadcastId {
    pub writer: ProcessId,
    pub ts: Timestamp,
}

/// The WRITE payload: one block per server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteBody {
    pub ts: Timestamp,
    pub blocks: Vec<Block>,
}

impl WriteBody {
    pub fn digest(&self) -> Digest {
        Digest::of(&self.to_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    RbInit { id: BroadcastId, body: WriteBody },
    RbEcho { id: BroadcastId, digest: Digest, body: Option<WriteBody> },
    RbReady { id: BroadcastId, digest: Digest },
    WriteAck { ts: Timestamp },
    TsReq { n_seq: SeqNum },
    TsResp { ts: Timestamp, n_seq: SeqNum },
    ValReq { ts: Timestamp, n_seq: SeqNum },
    ValResp { ts: Timestamp, n_seq: SeqNum },
    BlockReq { record: SignedReadRecord },
    BlockResp { stored: StoredShare, ts: Timestamp, n_seq: SeqNum },
    AuditReq { audit_seq: u64 },
    AuditResp { audit_seq: u64, log: Vec<SignedReadRecord> },
    MultiWrite { ts: Timestamp, block: Block, writer: ProcessId },
}

impl Payload {
    pub fn tag(&self) -> Tag {
        match self {
            Payload::RbInit { .. } => Tag::RbInit,
            Payload::RbEcho { .. } => Tag::RbEcho,
            Payload::RbReady { .. } => Tag::RbReady,
            Payload::WriteAck { .. } => Tag::WriteAck,
            Payload::TsReq { .. } => Tag::TsReq,
            Payload::TsResp { .. } => Tag::TsResp,
            Payload::ValReq { .. } => Tag::ValReq,
            Payload::ValResp { .. } => Tag::ValResp,
            Payload::BlockReq { .. } => Tag::BlockReq,
            Payload::BlockResp { .. } => Tag::BlockResp,
            Payload::AuditReq { .. } => Tag::AuditReq,
            Payload::AuditResp { .. } => Tag::AuditResp,
            Payload::MultiWrite { .. } => Tag::MultiWrite,
        }
    }

    fn encode_body(&self, enc: &mut Encoder) {
        match self {
            Payload::RbInit { id, body } => {
                enc.item(id).item(body);
            }
            Payload::RbEcho { id, digest, body } => {
                enc.item(id).item(digest).option(body);
            }
            Payload::RbReady { id, digest } => {
                enc.item(id).item(digest);
            }
            Payload::WriteAck { ts } => {
                enc.item(ts);
            }
            Payload::TsReq { n_seq } => {
                enc.item(n_seq);
            }
            Payload::TsResp { ts, n_seq } | Payload::ValReq { ts, n_seq } | Payload::ValResp { ts, n_seq } => {
                enc.item(ts).item(n_seq);
            }
            Payload::BlockReq { record } => {
                enc.item(record);
            }
            Payload::BlockResp { stored, ts, n_seq } => {
                enc.item(stored).item(ts).item(n_seq);
            }
            Payload::AuditReq { audit_seq } => {
                enc.u64(*audit_seq);
            }
            Payload::AuditResp { audit_seq, log } => {
                enc.u64(*audit_seq).seq(log);
            }
            Payload::MultiWrite { ts, block, writer } => {
                enc.item(ts).item(block).item(writer);
            }
        }
    }

    fn decode_body(tag: Tag, dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(match tag {
            Tag::RbInit => Payload::RbInit { id: dec.item()?, body: dec.item()? },
            Tag::RbEcho => Payload::RbEcho { id: dec.item()?, digest: dec.item()?, body: dec.option()? },
            Tag::RbReady => Payload::RbReady { id: dec.item()?, digest: dec.item()? },
            Tag::WriteAck => Payload::WriteAck { ts: dec.item()? },
            Tag::TsReq => Payload::TsReq { n_seq: dec.item()? },
            Tag::TsResp => Payload::TsResp { ts: dec.item()?, n_seq: dec.item()? },
            Tag::ValReq => Payload::ValReq { ts: dec.item()?, n_seq: dec.item()? },
            Tag::ValResp => Payload::ValResp { ts: dec.item()?, n_seq: dec.item()? },
            Tag::BlockReq => Payload::BlockReq { record: dec.item()? },
            Tag::BlockResp => Payload::BlockResp { stored: dec.item()?, ts: dec.item()?, n_seq: dec.item()? },
            Tag::AuditReq => Payload::AuditReq { audit_seq: dec.u64()? },
            Tag::AuditResp => Payload::AuditResp { audit_seq: dec.u64()?, log: dec.seq()? },
            Tag::MultiWrite => Payload::MultiWrite { ts: dec.item()?, block: dec.item()?, writer: dec.item()? },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub sender: ProcessId,
    pub receiver: ProcessId,
    pub transport: Transport,
    pub payload: Payload,
}

impl Envelope {
    /// Builds an envelope on the transport its payload's tag requires.
    pub fn new(sender: ProcessId, receiver: ProcessId, payload: Payload) -> Self {
        Self { sender, receiver, transport: payload.tag().transport(), payload }
    }

    pub fn tag(&self) -> Tag {
        self.payload.tag()
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&self.to_bytes())
    }

    pub fn payload_digest(&self) -> Digest {
        let mut enc = Encoder::new();
        self.payload.encode_body(&mut enc);
        Digest::of(&enc.finish())
    }
}

impl Wire for BroadcastId {
    fn encode(&self, enc: &mut Encoder) {
        enc.item(&self.writer).item(&self.ts);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(BroadcastId { writer: dec.item()?, ts: dec.item()? })
    }
}

impl Wire for WriteBody {
    fn encode(&self, enc: &mut Encoder) {
        enc.item(&self.ts).seq(&self.blocks);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(WriteBody { ts: dec.item()?, blocks: dec.seq()? })
    }
}

impl Wire for Transport {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(match self {
            Transport::PointToPoint => 0,
            Transport::ReliableBroadcast => 1,
        });
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        match dec.u8()? {
            0 => Ok(Transport::PointToPoint),
            1 => Ok(Transport::ReliableBroadcast),
            value => Err(WireError::Discriminant { what: "transport", value }),
        }
    }
}

impl Wire for Envelope {
    fn encode(&self, enc: &mut Encoder) {
        let mut body = Encoder::new();
        self.payload.encode_body(&mut body);
        enc.u8(self.tag().code()).item(&self.sender).item(&self.receiver).bytes(&body.finish()).item(&self.transport);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        let code = dec.u8()?;
        let tag = Tag::from_code(code).ok_or(WireError::Discriminant { what: "tag", value: code })?;
        let sender = dec.item()?;
        let receiver = dec.item()?;
        let body = dec.bytes()?;
        let transport: Transport = dec.item()?;
        if transport != tag.transport() {
            return Err(WireError::Transport);
        }
        let mut inner = Decoder::new(&body);
        let payload = Payload::decode_body(tag, &mut inner)?;
        if inner.remaining() != 0 {
            return Err(WireError::Trailing(inner.remaining()));
        }
        Ok(Envelope { sender, receiver, transport, payload })
    }
}
