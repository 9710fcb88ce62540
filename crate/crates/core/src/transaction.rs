//! Transactions and their canonical byte serialization.
//!
//! Canonical layout, all integers big-endian:
//!
//! ```text
//! sender      u32
//! receivers   u16 count, then u32 per receiver
//! amount      u64
//! sources     u16 count, then 16-byte transaction id per source
//! timestamp   u64
//! signature   u16 length, then raw tag bytes
//! ```
//!
//! The signed message is the same layout with the signature field omitted.
//! A transaction id is the first 16 bytes of SHA-256 over the full layout.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::encoding::CodecError;

/// Node identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node{}", self.0)
    }
}

/// Sender of genesis grants. Grants carry no sources and no signature.
pub const GENESIS_ISSUER: NodeId = NodeId(u32::MAX);

pub const TX_ID_LEN: usize = 16;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxId(pub [u8; TX_ID_LEN]);

impl TxId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Self(bytes.try_into().ok()?))
    }
}

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxId({})", &self.to_hex()[..8])
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for TxId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for TxId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        TxId::from_hex(&s).ok_or_else(|| serde::de::Error::custom("bad transaction id"))
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

/// A transfer of `amount` qCoin from `sender` to `receivers`, redeeming the
/// outputs of `sources`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: NodeId,
    pub receivers: Vec<NodeId>,
    pub amount: u64,
    pub sources: Vec<TxId>,
    pub timestamp: u64,
    #[serde(with = "hex_bytes")]
    pub signature: Vec<u8>,
}

impl Transaction {
    /// An unsigned transaction.
    pub fn new(
        sender: NodeId,
        receivers: Vec<NodeId>,
        amount: u64,
        sources: Vec<TxId>,
        timestamp: u64,
    ) -> Self {
        Self {
            sender,
            receivers,
            amount,
            sources,
            timestamp,
            signature: Vec::new(),
        }
    }

    /// Coinbase grant confirmed in the genesis block.
    pub fn grant(to: NodeId, amount: u64, timestamp: u64) -> Self {
        Self::new(GENESIS_ISSUER, vec![to], amount, Vec::new(), timestamp)
    }

    pub fn is_grant(&self) -> bool {
        self.sender == GENESIS_ISSUER
    }

    fn write_body(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.sender.0.to_be_bytes());
        out.extend_from_slice(&(self.receivers.len() as u16).to_be_bytes());
        for r in &self.receivers {
            out.extend_from_slice(&r.0.to_be_bytes());
        }
        out.extend_from_slice(&self.amount.to_be_bytes());
        out.extend_from_slice(&(self.sources.len() as u16).to_be_bytes());
        for s in &self.sources {
            out.extend_from_slice(&s.0);
        }
        out.extend_from_slice(&self.timestamp.to_be_bytes());
    }

    /// Serialization covered by the signature.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        self.write_body(&mut out);
        out
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.signature.len());
        self.write_body(&mut out);
        out.extend_from_slice(&(self.signature.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.signature);
        out
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut rd = Reader { bytes, pos: 0 };
        let tx = rd.transaction()?;
        if rd.pos != bytes.len() {
            return Err(CodecError::Malformed(format!(
                "{} trailing bytes after transaction",
                bytes.len() - rd.pos
            )));
        }
        Ok(tx)
    }

    pub fn id(&self) -> TxId {
        let digest = Sha256::digest(self.canonical_bytes());
        let mut id = [0u8; TX_ID_LEN];
        id.copy_from_slice(&digest[..TX_ID_LEN]);
        TxId(id)
    }

    /// Structural well-formedness, independent of any ledger view.
    pub fn is_well_formed(&self) -> bool {
        !self.receivers.is_empty()
            && (self.is_grant() || !self.sources.is_empty())
            && !self.receivers.contains(&GENESIS_ISSUER)
            && self.receivers.len() <= u16::MAX as usize
            && self.sources.len() <= u16::MAX as usize
    }
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CodecError::Malformed("truncated serialization".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn transaction(&mut self) -> Result<Transaction, CodecError> {
        let sender = NodeId(self.u32()?);
        let n_recv = self.u16()? as usize;
        let receivers = (0..n_recv)
            .map(|_| self.u32().map(NodeId))
            .collect::<Result<Vec<_>, _>>()?;
        let amount = self.u64()?;
        let n_src = self.u16()? as usize;
        let sources = (0..n_src)
            .map(|_| Ok(TxId(self.take(TX_ID_LEN)?.try_into().unwrap())))
            .collect::<Result<Vec<_>, CodecError>>()?;
        let timestamp = self.u64()?;
        let sig_len = self.u16()? as usize;
        let signature = self.take(sig_len)?.to_vec();
        Ok(Transaction {
            sender,
            receivers,
            amount,
            sources,
            timestamp,
            signature,
        })
    }
}
