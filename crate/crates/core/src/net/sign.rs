//! Keyed-hash signature stub.
//!
//! A tag is the first 16 bytes of `SHA-256(domain || secret || message)`
//! where the message is the transaction's signing bytes. Verification looks
//! up the claimed sender's secret in a shared registry, which is adequate for
//! a closed simulation and nothing more.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::transaction::{NodeId, Transaction};

const DOMAIN: &[u8] = b"lifted-chain/sig/v1";
pub const TAG_LEN: usize = 16;

#[derive(Clone, PartialEq, Eq)]
pub struct SigningKey([u8; 32]);

impl SigningKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn generate<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill(&mut bytes);
        Self(bytes)
    }
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SigningKey(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("no signing key registered for {0}")]
    UnknownSigner(NodeId),
}

/// Tag over `tx`'s signing bytes.
pub fn sign(tx: &Transaction, key: &SigningKey) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(DOMAIN);
    h.update(key.0);
    h.update(tx.signing_bytes());
    h.finalize()[..TAG_LEN].to_vec()
}

/// `tx` with its signature field filled in.
pub fn signed(mut tx: Transaction, key: &SigningKey) -> Transaction {
    tx.signature = sign(&tx, key);
    tx
}

/// Signing keys of every participant, by node.
#[derive(Debug, Clone, Default)]
pub struct KeyRegistry {
    keys: BTreeMap<NodeId, SigningKey>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, node: NodeId, key: SigningKey) {
        self.keys.insert(node, key);
    }

    pub fn get(&self, node: NodeId) -> Option<&SigningKey> {
        self.keys.get(&node)
    }

    /// True iff `tx.signature` is the tag of its claimed sender.
    pub fn verify_signature(&self, tx: &Transaction) -> Result<bool, SignatureError> {
        let key = self
            .keys
            .get(&tx.sender)
            .ok_or(SignatureError::UnknownSigner(tx.sender))?;
        Ok(tx.signature == sign(tx, key))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transaction::TxId;

    fn registry() -> KeyRegistry {
        let mut reg = KeyRegistry::new();
        reg.register(NodeId(0), SigningKey::from_bytes([1; 32]));
        reg.register(NodeId(1), SigningKey::from_bytes([2; 32]));
        reg
    }

    fn tx(sender: u32) -> Transaction {
        Transaction::new(NodeId(sender), vec![NodeId(2)], 3, vec![TxId([9; 16])], 5)
    }

    #[test]
    fn sign_then_verify() {
        let reg = registry();
        let t = signed(tx(0), reg.get(NodeId(0)).unwrap());
        assert_eq!(t.signature.len(), TAG_LEN);
        assert_eq!(reg.verify_signature(&t), Ok(true));
    }

    #[test]
    fn any_flipped_byte_breaks_the_tag() {
        let reg = registry();
        let t = signed(tx(0), reg.get(NodeId(0)).unwrap());
        let bytes = t.canonical_bytes();
        // every byte of the signed body
        for i in 0..t.signing_bytes().len() {
            let mut b = bytes.clone();
            b[i] ^= 0x01;
            let Ok(m) = Transaction::from_canonical_bytes(&b) else { continue };
            assert_ne!(reg.verify_signature(&m), Ok(true), "byte {i}");
        }
    }

    #[test]
    fn tag_of_another_node_is_rejected() {
        let reg = registry();
        let mut t = tx(1);
        t.signature = sign(&tx(1), reg.get(NodeId(0)).unwrap());
        assert_eq!(reg.verify_signature(&t), Ok(false));
        assert_eq!(
            reg.verify_signature(&tx(7)),
            Err(SignatureError::UnknownSigner(NodeId(7)))
        );
    }
}
