//! Multi-writer front end: every correct writer computes the same blocks for
//! `(v, ts)` and sends each server its block directly; a server accepts a
//! block once `f_w + 1` distinct writers sent it byte-identically.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::codec::{Block, Codec};
use crate::crypto::{Digest, Keyring};
use crate::error::ParamError;
use crate::message::{Envelope, Payload};
use crate::node::{ClientError, NodeEvent, OpResult, Outbox};
use crate::types::{ProcessId, Timestamp};
use crate::wire::Wire;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiWriterParams {
    pub n_w: usize,
    pub f_w: usize,
}

impl MultiWriterParams {
    pub fn new(n_w: usize, f_w: usize) -> Result<Self, ParamError> {
        if n_w < 2 * f_w + 1 {
            return Err(ParamError::FaultBudget(f_w));
        }
        Ok(Self { n_w, f_w })
    }

    pub fn writers(&self) -> impl Iterator<Item = ProcessId> {
        (1..=self.n_w as u32).map(ProcessId::mw_writer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Offer {
    Pending,
    /// The threshold was just reached; `supporters` sent this block.
    Accepted { block: Block, supporters: Vec<ProcessId> },
    /// A block for an already accepted timestamp.
    Late { matches: bool },
}

#[derive(Debug, Clone, Default)]
struct Slot {
    supporters: BTreeMap<Digest, BTreeSet<ProcessId>>,
    blocks: BTreeMap<Digest, Block>,
    accepted: Option<Digest>,
}

/// Per-server tally of the blocks each writer sent, by timestamp.
#[derive(Debug, Clone)]
pub struct ShareAcceptBuffer {
    params: MultiWriterParams,
    slots: BTreeMap<Timestamp, Slot>,
}

impl ShareAcceptBuffer {
    pub fn new(params: MultiWriterParams) -> Self {
        Self { params, slots: BTreeMap::new() }
    }

    pub fn accepted(&self, ts: Timestamp) -> Option<&Block> {
        let slot = self.slots.get(&ts)?;
        slot.accepted.map(|d| &slot.blocks[&d])
    }

    pub fn offer(&mut self, ts: Timestamp, block: &Block, writer: ProcessId) -> Offer {
        let digest = Digest::of(&block.to_bytes());
        let slot = self.slots.entry(ts).or_default();
        if let Some(acc) = slot.accepted {
            return Offer::Late { matches: acc == digest };
        }
        let set = slot.supporters.entry(digest).or_default();
        set.insert(writer);
        slot.blocks.entry(digest).or_insert_with(|| block.clone());
        if set.len() >= self.params.f_w + 1 {
            let supporters = set.iter().copied().collect();
            slot.accepted = Some(digest);
            return Offer::Accepted { block: slot.blocks[&digest].clone(), supporters };
        }
        Offer::Pending
    }
}

/// A correct multi-writer replica.
#[derive(Debug, Clone)]
pub struct MwWriterNode {
    keys: Keyring,
    codec: Codec,
    in_flight: Option<(Timestamp, BTreeSet<u32>)>,
}

impl MwWriterNode {
    /// `keys` must sign manifests as the register owner.
    pub fn new(keys: Keyring, codec: Codec) -> Self {
        Self { keys, codec, in_flight: None }
    }

    pub fn id(&self) -> ProcessId {
        self.keys.me()
    }

    pub fn is_idle(&self) -> bool {
        self.in_flight.is_none()
    }

    pub fn codec(&self) -> &Codec {
        &self.codec
    }

    pub fn keys(&self) -> &Keyring {
        &self.keys
    }

    pub fn invoke_write(&mut self, v: &[u8], ts: Timestamp, out: &mut Outbox) -> Result<(), ClientError> {
        if self.in_flight.is_some() {
            return Err(ClientError::Busy);
        }
        let blocks = self.codec.deterministic_generate_blocks(v, ts, &self.keys)?;
        let me = self.id();
        for b in blocks {
            let to = ProcessId::server(b.index);
            out.send(Envelope::new(me, to, Payload::MultiWrite { ts, block: b, writer: me }));
        }
        self.in_flight = Some((ts, BTreeSet::new()));
        Ok(())
    }

    pub fn handle(&mut self, env: &Envelope, out: &mut Outbox) {
        let Payload::WriteAck { ts } = env.payload else { return };
        let Some((cur, acks)) = self.in_flight.as_mut() else { return };
        if ts != *cur || !env.sender.is_server() {
            return;
        }
        acks.insert(env.sender.index);
        if acks.len() >= self.codec.params.quorum() {
            let ts = *cur;
            self.in_flight = None;
            out.event(NodeEvent::Respond(OpResult::MwWrite { ts }));
        }
    }
}
