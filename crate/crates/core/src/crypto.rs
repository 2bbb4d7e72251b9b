//! Simulated signing, verification and identities.
//!
//! Public-key signatures are modeled as keyed SHA-256 digests whose secrets
//! live in a global [`KeyRegistry`]. Anyone may verify against the registry;
//! only the registry knows the secrets. An object signed under a key that was
//! never registered is "unverifiable", which is exactly what a poisoning
//! adversary produces.
//!
//! The symmetric layer used by the overlay is a SHA-256 keystream XOR. It is
//! reversible and keyed, and it is not real cryptography.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::names::Name;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyId(pub [u8; 8]);

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyId({})", hex::encode(self.0))
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Signature {
    pub key_id: KeyId,
    pub digest: [u8; 32],
}

impl Signature {
    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verification {
    Valid,
    Invalid,
    Unverifiable,
}

impl Verification {
    pub fn is_valid(self) -> bool {
        self == Verification::Valid
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("key {0} is not registered")]
    UnknownKey(KeyId),
}

#[derive(Clone, Debug)]
struct KeyEntry {
    secret: [u8; 32],
    owner: String,
    ephemeral: bool,
}

/// Global key directory: secrets and owning principals.
#[derive(Clone, Debug, Default)]
pub struct KeyRegistry {
    keys: BTreeMap<KeyId, KeyEntry>,
}

/// Keyed digest over `canonical(name) || payload`. The name is length-framed
/// so `("/a", "b/c")` and `("/a/b", "c")`-style splits cannot collide.
pub fn keyed_digest(secret: &[u8], name: &Name, payload: &[u8]) -> [u8; 32] {
    let text = name.to_string();
    let mut h = Sha256::new();
    h.update(secret);
    h.update((text.len() as u64).to_le_bytes());
    h.update(text.as_bytes());
    h.update(payload);
    h.finalize().into()
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    fn fresh<R: Rng + ?Sized>(&mut self, owner: &str, ephemeral: bool, rng: &mut R) -> KeyId {
        loop {
            let id = KeyId(rng.random());
            if self.keys.contains_key(&id) {
                continue;
            }
            let secret: [u8; 32] = rng.random();
            self.keys.insert(id, KeyEntry { secret, owner: owner.to_string(), ephemeral });
            return id;
        }
    }

    /// Registers a long-lived key for `owner`.
    pub fn register<R: Rng + ?Sized>(&mut self, owner: &str, rng: &mut R) -> KeyId {
        self.fresh(owner, false, rng)
    }

    /// Registers and returns a fresh one-off identity owned by `owner`.
    pub fn ephemeral_key<R: Rng + ?Sized>(&mut self, owner: &str, rng: &mut R) -> KeyId {
        self.fresh(owner, true, rng)
    }

    pub fn sign(&self, key: KeyId, name: &Name, payload: &[u8]) -> Result<Signature, CryptoError> {
        let entry = self.keys.get(&key).ok_or(CryptoError::UnknownKey(key))?;
        Ok(Signature { key_id: key, digest: keyed_digest(&entry.secret, name, payload) })
    }

    pub fn verify(&self, name: &Name, payload: &[u8], sig: &Signature) -> Verification {
        match self.keys.get(&sig.key_id) {
            None => Verification::Unverifiable,
            Some(entry) if keyed_digest(&entry.secret, name, payload) == sig.digest => Verification::Valid,
            Some(_) => Verification::Invalid,
        }
    }

    pub fn owner(&self, key: KeyId) -> Option<&str> {
        self.keys.get(&key).map(|e| e.owner.as_str())
    }

    pub fn is_ephemeral(&self, key: KeyId) -> Option<bool> {
        self.keys.get(&key).map(|e| e.ephemeral)
    }

    pub fn contains(&self, key: KeyId) -> bool {
        self.keys.contains_key(&key)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Encrypts `data` so that only the holder of `key` can read it: a model
    /// of public-key encryption. `None` for an unknown key.
    pub fn seal(&self, key: KeyId, data: &[u8]) -> Option<Vec<u8>> {
        self.keys.get(&key).map(|e| seal_layer(&e.secret, data))
    }

    /// Inverse of [`seal`](Self::seal). Only the key's owner (a simulator
    /// principal) should call this; `None` if the blob was not sealed for `key`.
    pub fn open(&self, key: KeyId, blob: &[u8]) -> Option<Vec<u8>> {
        self.keys.get(&key).and_then(|e| open_layer(&e.secret, blob))
    }
}

const TAG_LEN: usize = 8;

fn layer_tag(key: &[u8], plaintext: &[u8]) -> [u8; TAG_LEN] {
    let mut h = Sha256::new();
    h.update(b"tag");
    h.update(key);
    h.update(plaintext);
    let d: [u8; 32] = h.finalize().into();
    d[..TAG_LEN].try_into().expect("fixed length")
}

/// Authenticated symmetric layer: tag then keystream encryption.
pub fn seal_layer(key: &[u8], plaintext: &[u8]) -> Vec<u8> {
    let mut buf = layer_tag(key, plaintext).to_vec();
    buf.extend_from_slice(plaintext);
    sym_encrypt(key, &buf)
}

/// Removes one [`seal_layer`]; `None` if the tag does not match.
pub fn open_layer(key: &[u8], blob: &[u8]) -> Option<Vec<u8>> {
    if blob.len() < TAG_LEN {
        return None;
    }
    let buf = sym_decrypt(key, blob);
    let (tag, plain) = buf.split_at(TAG_LEN);
    (tag == layer_tag(key, plain)).then(|| plain.to_vec())
}

fn keystream_xor(key: &[u8], data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len());
    for (block_idx, chunk) in data.chunks(32).enumerate() {
        let mut h = Sha256::new();
        h.update(key);
        h.update((block_idx as u64).to_le_bytes());
        let block: [u8; 32] = h.finalize().into();
        out.extend(chunk.iter().zip(block.iter()).map(|(d, k)| d ^ k));
    }
    out
}

/// Keyed reversible transform. Panics on an empty key.
pub fn sym_encrypt(key: &[u8], plaintext: &[u8]) -> Vec<u8> {
    assert!(!key.is_empty(), "symmetric key must be non-empty");
    keystream_xor(key, plaintext)
}

/// Inverse of [`sym_encrypt`] under the same key.
pub fn sym_decrypt(key: &[u8], ciphertext: &[u8]) -> Vec<u8> {
    assert!(!key.is_empty(), "symmetric key must be non-empty");
    keystream_xor(key, ciphertext)
}
