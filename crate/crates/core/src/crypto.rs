//! Signatures and per-server public-key encryption.
//!
//! Two backends sit behind [`KeyRegistry`]:
//!
//! * **simulated**: every key is an HMAC-SHA256 key derived from the scenario
//!   seed and the process identity. Signatures are keyed MACs, encryption is
//!   a deterministic SIV-style stream cipher with a MAC tag. Reproducible
//!   byte-for-byte and fast.
//! * **real**: Ed25519 signatures and X25519 + ChaCha20-Poly1305 sealed boxes.
//!
//! Protocol code never touches the registry directly. It holds a [`Keyring`],
//! which can sign only as its own identity and decrypt only its own blocks;
//! that capability split is what makes signatures unforgeable from inside
//! the simulation.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Nonce};
use ed25519_dalek::{Signer as _, SigningKey, Verifier as _, VerifyingKey};
use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use x25519_dalek::{PublicKey as XPublic, StaticSecret};

use crate::error::{CryptoError, WireError};
use crate::types::ProcessId;
use crate::wire::{Decoder, Encoder, Wire};

type HmacSha256 = Hmac<Sha256>;

/// A SHA-256 fingerprint.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short())
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = v.try_into().map_err(|_| serde::de::Error::custom("digest length"))?;
        Ok(Digest(arr))
    }
}

impl Wire for Digest {
    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(&self.0);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        let len = dec.u32()? as usize;
        if len != 32 {
            return Err(WireError::Discriminant { what: "digest length", value: len.min(255) as u8 });
        }
        Ok(Digest(dec.array()?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub signer: ProcessId,
    #[serde(with = "hex_bytes")]
    pub bytes: Vec<u8>,
}

impl Wire for Signature {
    fn encode(&self, enc: &mut Encoder) {
        enc.item(&self.signer).bytes(&self.bytes);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(Signature { signer: dec.item()?, bytes: dec.bytes()? })
    }
}

pub mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Simulated,
    Real,
}

enum Backend {
    Simulated { master: [u8; 32] },
    Real { signing: BTreeMap<ProcessId, SigningKey>, decryption: BTreeMap<u32, StaticSecret> },
}

/// All key material of one scenario. Immutable after construction.
pub struct KeyRegistry {
    backend: Backend,
    processes: Vec<ProcessId>,
    servers: u32,
}

impl fmt::Debug for KeyRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyRegistry")
            .field("backend", &self.kind())
            .field("processes", &self.processes.len())
            .finish()
    }
}

fn mac(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut m = <HmacSha256 as Mac>::new_from_slice(key).expect("hmac accepts any key length");
    for p in parts {
        m.update(p);
    }
    m.finalize().into_bytes().into()
}

impl KeyRegistry {
    /// Deterministic keys derived from `seed`.
    pub fn simulated(seed: u64, processes: impl IntoIterator<Item = ProcessId>) -> Self {
        let master: [u8; 32] = Sha256::new()
            .chain_update(b"auditreg/simulated-keys")
            .chain_update(seed.to_be_bytes())
            .finalize()
            .into();
        Self::build(Backend::Simulated { master }, processes)
    }

    /// Ed25519 / X25519 keys generated from `rng`.
    pub fn real<R: RngCore + CryptoRng>(
        rng: &mut R,
        processes: impl IntoIterator<Item = ProcessId>,
    ) -> Self {
        let processes: Vec<ProcessId> = processes.into_iter().map(ProcessId::resolve).collect();
        let mut signing = BTreeMap::new();
        let mut decryption = BTreeMap::new();
        for p in &processes {
            let mut seed = [0u8; 32];
            rng.fill_bytes(&mut seed);
            signing.insert(*p, SigningKey::from_bytes(&seed));
            if p.is_server() {
                decryption.insert(p.index, StaticSecret::random_from_rng(&mut *rng));
            }
        }
        Self::build(Backend::Real { signing, decryption }, processes)
    }

    /// Real-crypto keys drawn from a ChaCha20 stream seeded with `seed`.
    pub fn real_from_seed(seed: u64, processes: impl IntoIterator<Item = ProcessId>) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Self::real(&mut rng, processes)
    }

    fn build(backend: Backend, processes: impl IntoIterator<Item = ProcessId>) -> Self {
        let mut processes: Vec<ProcessId> = processes.into_iter().map(ProcessId::resolve).collect();
        processes.sort();
        processes.dedup();
        let servers = processes.iter().filter(|p| p.is_server()).map(|p| p.index).max().unwrap_or(0);
        Self { backend, processes, servers }
    }

    pub fn kind(&self) -> BackendKind {
        match self.backend {
            Backend::Simulated { .. } => BackendKind::Simulated,
            Backend::Real { .. } => BackendKind::Real,
        }
    }

    pub fn is_registered(&self, p: ProcessId) -> bool {
        self.processes.binary_search(&p.resolve()).is_ok()
    }

    pub fn sign(&self, signer: ProcessId, message: &[u8]) -> Result<Signature, CryptoError> {
        let signer = signer.resolve();
        if !self.is_registered(signer) {
            return Err(CryptoError::UnknownProcess(signer));
        }
        let bytes = match &self.backend {
            Backend::Simulated { master } => {
                let key = mac(master, &[b"sig", &signer.to_bytes()]);
                mac(&key, &[message]).to_vec()
            }
            Backend::Real { signing, .. } => {
                let key = signing.get(&signer).ok_or(CryptoError::UnknownProcess(signer))?;
                key.sign(message).to_bytes().to_vec()
            }
        };
        Ok(Signature { signer, bytes })
    }

    /// True iff `sig` was produced by `claimed` over `message`.
    pub fn verify(&self, message: &[u8], sig: &Signature, claimed: ProcessId) -> bool {
        let claimed = claimed.resolve();
        if sig.signer != claimed || !self.is_registered(claimed) {
            return false;
        }
        match &self.backend {
            Backend::Simulated { master } => {
                let key = mac(master, &[b"sig", &claimed.to_bytes()]);
                let mut m = <HmacSha256 as Mac>::new_from_slice(&key).expect("hmac key");
                m.update(message);
                m.verify_slice(&sig.bytes).is_ok()
            }
            Backend::Real { signing, .. } => {
                let Some(key) = signing.get(&claimed) else { return false };
                let Ok(raw) = <[u8; 64]>::try_from(sig.bytes.as_slice()) else { return false };
                key.verifying_key().verify(message, &ed25519_dalek::Signature::from_bytes(&raw)).is_ok()
            }
        }
    }

    fn check_server(&self, i: u32) -> Result<(), CryptoError> {
        if i == 0 || i > self.servers {
            return Err(CryptoError::UnknownProcess(ProcessId::server(i)));
        }
        Ok(())
    }

    pub fn encrypt_for_server(&self, i: u32, plaintext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.check_server(i)?;
        match &self.backend {
            Backend::Simulated { master } => {
                let key = mac(master, &[b"enc", &i.to_be_bytes()]);
                Ok(siv_seal(&key, plaintext))
            }
            Backend::Real { decryption, .. } => {
                let secret = decryption.get(&i).ok_or(CryptoError::UnknownProcess(ProcessId::server(i)))?;
                Ok(box_seal(&XPublic::from(secret), plaintext))
            }
        }
    }

    pub fn decrypt(&self, i: u32, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.check_server(i)?;
        match &self.backend {
            Backend::Simulated { master } => {
                let key = mac(master, &[b"enc", &i.to_be_bytes()]);
                siv_open(&key, ciphertext)
            }
            Backend::Real { decryption, .. } => {
                let secret = decryption.get(&i).ok_or(CryptoError::UnknownProcess(ProcessId::server(i)))?;
                box_open(secret, ciphertext)
            }
        }
    }

    /// Capability handle for `me`: signs as `me`, decrypts only `me`'s blocks.
    pub fn keyring(self: &Arc<Self>, me: ProcessId) -> Keyring {
        Keyring { me: me.resolve(), signs_as: me.resolve(), registry: Arc::clone(self) }
    }

    /// Handle for a multi-writer replica that signs manifests as the register owner.
    pub fn owner_delegate(self: &Arc<Self>, me: ProcessId) -> Keyring {
        Keyring { me, signs_as: ProcessId::OWNER, registry: Arc::clone(self) }
    }

    /// Hex-encoded JSON export of the real backend's secret key material.
    pub fn export_keys(&self) -> Result<String, CryptoError> {
        let Backend::Real { signing, decryption } = &self.backend else {
            return Err(CryptoError::KeyMaterial("simulated keys are derived, not exported".into()));
        };
        let entries = self
            .processes
            .iter()
            .map(|p| KeyEntry {
                id: p.to_string(),
                signing_key: hex::encode(signing[p].to_bytes()),
                verifying_key: hex::encode(signing[p].verifying_key().to_bytes()),
                decryption_key: p.is_server().then(|| hex::encode(decryption[&p.index].to_bytes())),
            })
            .collect();
        serde_json::to_string_pretty(&KeyFile { backend: BackendKind::Real, keys: entries })
            .map_err(|e| CryptoError::KeyMaterial(e.to_string()))
    }

    pub fn import_keys(text: &str) -> Result<Self, CryptoError> {
        let bad = |e: &dyn fmt::Display| CryptoError::KeyMaterial(e.to_string());
        let file: KeyFile = serde_json::from_str(text).map_err(|e| bad(&e))?;
        if file.backend != BackendKind::Real {
            return Err(CryptoError::KeyMaterial("only real-backend keys can be imported".into()));
        }
        let mut signing = BTreeMap::new();
        let mut decryption = BTreeMap::new();
        let mut processes = Vec::new();
        for e in file.keys {
            let id: ProcessId = e.id.parse().map_err(|e| bad(&e))?;
            let sk: [u8; 32] = hex::decode(&e.signing_key)
                .map_err(|e| bad(&e))?
                .try_into()
                .map_err(|_| bad(&"signing key length"))?;
            let sk = SigningKey::from_bytes(&sk);
            let vk: [u8; 32] = hex::decode(&e.verifying_key)
                .map_err(|e| bad(&e))?
                .try_into()
                .map_err(|_| bad(&"verifying key length"))?;
            if VerifyingKey::from_bytes(&vk).ok() != Some(sk.verifying_key()) {
                return Err(bad(&format!("verifying key of {id} does not match its signing key")));
            }
            signing.insert(id, sk);
            if id.is_server() {
                let dk = e.decryption_key.ok_or_else(|| bad(&format!("{id} lacks a decryption key")))?;
                let dk: [u8; 32] =
                    hex::decode(dk).map_err(|e| bad(&e))?.try_into().map_err(|_| bad(&"decryption key length"))?;
                decryption.insert(id.index, StaticSecret::from(dk));
            }
            processes.push(id);
        }
        Ok(Self::build(Backend::Real { signing, decryption }, processes))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyFile {
    backend: BackendKind,
    keys: Vec<KeyEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyEntry {
    id: String,
    signing_key: String,
    verifying_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decryption_key: Option<String>,
}

const NONCE_LEN: usize = 16;
const TAG_LEN: usize = 16;

fn keystream_xor(key: &[u8; 32], nonce: &[u8], data: &mut [u8]) {
    for (block, chunk) in data.chunks_mut(32).enumerate() {
        let ks = mac(key, &[b"ks", nonce, &(block as u64).to_be_bytes()]);
        for (b, k) in chunk.iter_mut().zip(ks) {
            *b ^= k;
        }
    }
}

fn siv_seal(key: &[u8; 32], plaintext: &[u8]) -> Vec<u8> {
    let nonce = &mac(key, &[b"nonce", plaintext])[..NONCE_LEN];
    let mut body = plaintext.to_vec();
    keystream_xor(key, nonce, &mut body);
    let tag = mac(key, &[b"tag", nonce, &body]);
    let mut out = Vec::with_capacity(NONCE_LEN + body.len() + TAG_LEN);
    out.extend_from_slice(nonce);
    out.extend_from_slice(&body);
    out.extend_from_slice(&tag[..TAG_LEN]);
    out
}

fn siv_open(key: &[u8; 32], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < NONCE_LEN + TAG_LEN {
        return Err(CryptoError::Decryption);
    }
    let (nonce, rest) = ciphertext.split_at(NONCE_LEN);
    let (body, tag) = rest.split_at(rest.len() - TAG_LEN);
    let mut m = <HmacSha256 as Mac>::new_from_slice(key).expect("hmac key");
    m.update(b"tag");
    m.update(nonce);
    m.update(body);
    m.verify_truncated_left(tag).map_err(|_| CryptoError::Decryption)?;
    let mut out = body.to_vec();
    keystream_xor(key, nonce, &mut out);
    Ok(out)
}

fn box_key(shared: &[u8; 32], eph: &XPublic, recipient: &XPublic) -> chacha20poly1305::Key {
    let k: [u8; 32] = Sha256::new()
        .chain_update(b"auditreg/box")
        .chain_update(shared)
        .chain_update(eph.as_bytes())
        .chain_update(recipient.as_bytes())
        .finalize()
        .into();
    k.into()
}

// The ephemeral key is derived from (recipient, plaintext) so sealing is
// deterministic; every distinct message still gets its own key, so the
// fixed nonce is never reused under one key.
fn box_seal(recipient: &XPublic, plaintext: &[u8]) -> Vec<u8> {
    let eph_seed: [u8; 32] = Sha256::new()
        .chain_update(b"auditreg/eph")
        .chain_update(recipient.as_bytes())
        .chain_update(plaintext)
        .finalize()
        .into();
    let eph = StaticSecret::from(eph_seed);
    let eph_pub = XPublic::from(&eph);
    let shared = eph.diffie_hellman(recipient);
    let cipher = ChaCha20Poly1305::new(&box_key(shared.as_bytes(), &eph_pub, recipient));
    let ct = cipher.encrypt(Nonce::from_slice(&[0u8; 12]), plaintext).expect("chacha20poly1305 encrypt");
    let mut out = eph_pub.as_bytes().to_vec();
    out.extend_from_slice(&ct);
    out
}

fn box_open(secret: &StaticSecret, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < 32 {
        return Err(CryptoError::Decryption);
    }
    let (eph, ct) = ciphertext.split_at(32);
    let eph = XPublic::from(<[u8; 32]>::try_from(eph).unwrap());
    let me = XPublic::from(secret);
    let shared = secret.diffie_hellman(&eph);
    let cipher = ChaCha20Poly1305::new(&box_key(shared.as_bytes(), &eph, &me));
    cipher.decrypt(Nonce::from_slice(&[0u8; 12]), ct).map_err(|_| CryptoError::Decryption)
}

/// A process's view of the key registry.
#[derive(Clone)]
pub struct Keyring {
    me: ProcessId,
    signs_as: ProcessId,
    registry: Arc<KeyRegistry>,
}

impl fmt::Debug for Keyring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Keyring({} signs as {})", self.me, self.signs_as)
    }
}

impl Keyring {
    pub fn me(&self) -> ProcessId {
        self.me
    }

    pub fn signs_as(&self) -> ProcessId {
        self.signs_as
    }

    pub fn sign(&self, message: &[u8]) -> Result<Signature, CryptoError> {
        self.registry.sign(self.signs_as, message)
    }

    pub fn verify(&self, message: &[u8], sig: &Signature, claimed: ProcessId) -> bool {
        self.registry.verify(message, sig, claimed)
    }

    pub fn encrypt_for_server(&self, i: u32, plaintext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.registry.encrypt_for_server(i, plaintext)
    }

    /// Decrypts a block addressed to this process. Only servers hold a
    /// decryption key.
    pub fn decrypt_own(&self, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        if !self.me.is_server() {
            return Err(CryptoError::Decryption);
        }
        self.registry.decrypt(self.me.index, ciphertext)
    }
}

/// Anything that can check a signature.
pub trait Verifier {
    fn verify(&self, message: &[u8], sig: &Signature, claimed: ProcessId) -> bool;
}

impl Verifier for KeyRegistry {
    fn verify(&self, message: &[u8], sig: &Signature, claimed: ProcessId) -> bool {
        KeyRegistry::verify(self, message, sig, claimed)
    }
}

impl Verifier for Keyring {
    fn verify(&self, message: &[u8], sig: &Signature, claimed: ProcessId) -> bool {
        self.registry.verify(message, sig, claimed)
    }
}
