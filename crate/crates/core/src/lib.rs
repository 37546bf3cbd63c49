//! Byzantine-tolerant single-writer auditable atomic register: protocol
//! state machines, a deterministic network simulator and trace checkers.

pub mod checker;
pub mod codec;
pub mod crypto;
pub mod demo;
pub mod error;
pub mod gf256;
pub mod message;
pub mod multiwriter;
pub mod node;
pub mod rbcast;
pub mod reader;
pub mod server;
pub mod simnet;
pub mod types;
pub mod wire;
pub mod writer;

pub use codec::{Block, Codec, CodecMode, EncryptionKeySlot, Manifest, Share, StoredShare};
pub use crypto::{BackendKind, Digest, KeyRegistry, Keyring, Signature, Verifier};
pub use error::{CodecError, CryptoError, ParamError, WireError};
pub use message::{BroadcastId, Envelope, Payload, Tag, Transport, WriteBody};
pub use multiwriter::MultiWriterParams;
pub use node::{NodeEvent, OpResult, Operation, Outbox};
pub use server::SignedReadRecord;
pub use types::{DemoKind, ProcessId, ProtocolParams, Role, SeqNum, Timestamp};
pub use wire::Wire;
