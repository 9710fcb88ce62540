//! JSON ledger dumps and structural diffs of disclosed records.
//!
//! Amplitudes are written as `[re, im]` pairs with 17 significant digits so a
//! dump parses back to the exact doubles. The node key has no field in the
//! schema.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::Chain;
use crate::state::StateVector;
use crate::transaction::Transaction;

/// Disclosed parts closer than this compare equal in [`diff_dumps`].
pub const DIFF_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("malformed dump: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpParams {
    pub n: usize,
    pub m_max: usize,
    pub r: f64,
    pub q: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockRecord {
    pub index: usize,
    pub timestamp: u64,
    pub disclosed: StateVector,
    pub encrypted: StateVector,
    pub tx_list: Vec<Transaction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerDump {
    pub node: Option<u32>,
    pub params: DumpParams,
    pub blocks: Vec<BlockRecord>,
}

impl LedgerDump {
    /// Snapshot of `chain`. Blocks whose disclosed part no longer decodes get
    /// an empty transaction list.
    pub fn from_chain(chain: &Chain, node: Option<u32>) -> Self {
        let p = chain.params();
        let blocks = (1..=chain.len())
            .map(|i| {
                let tx_list = chain.read_block(i).unwrap_or_default();
                BlockRecord {
                    index: i,
                    timestamp: tx_list.iter().map(|t| t.timestamp).max().unwrap_or(0),
                    disclosed: chain.disclosed(i).expect("index in range"),
                    encrypted: chain.blocks()[i - 1].clone(),
                    tx_list,
                }
            })
            .collect();
        Self {
            node,
            params: DumpParams {
                n: p.n(),
                m_max: p.m_max(),
                r: p.r(),
                q: p.q(),
            },
            blocks,
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits::default());
        self.serialize(&mut ser).expect("in-memory serialization");
        out.push(b'\n');
        String::from_utf8(out).expect("JSON is UTF-8")
    }

    pub fn from_json(text: &str) -> Result<Self, DumpError> {
        let dump: Self =
            serde_json::from_str(text).map_err(|e| DumpError::Malformed(e.to_string()))?;
        for (pos, b) in dump.blocks.iter().enumerate() {
            if b.index != pos + 1 {
                return Err(DumpError::Malformed(format!("block {} out of order", b.index)));
            }
            if b.disclosed.dim() != dump.params.n
                || b.encrypted.dim() != dump.params.n + dump.params.m_max
            {
                return Err(DumpError::Malformed(format!(
                    "block {} has wrong dimensions",
                    b.index
                )));
            }
        }
        Ok(dump)
    }

    pub fn read(path: &std::path::Path) -> Result<Self, DumpError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Human-readable listing of the disclosed record.
    pub fn pretty(&self) -> String {
        let mut s = format!(
            "ledger{}: n={} m_max={} r={} blocks={}\n",
            self.node.map(|n| format!(" node{n}")).unwrap_or_default(),
            self.params.n,
            self.params.m_max,
            self.params.r,
            self.blocks.len()
        );
        for b in &self.blocks {
            s.push_str(&format!("block {} (t={}):\n", b.index, b.timestamp));
            for tx in &b.tx_list {
                let recv: Vec<String> = tx.receivers.iter().map(|r| r.0.to_string()).collect();
                s.push_str(&format!(
                    "  {} {} -> [{}] amount {} sources {}\n",
                    &tx.id().to_hex()[..12],
                    if tx.is_grant() { "genesis".to_string() } else { tx.sender.0.to_string() },
                    recv.join(","),
                    tx.amount,
                    tx.sources.len()
                ));
            }
        }
        s
    }
}

/// Result of comparing two disclosed records.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffReport {
    pub identical: bool,
    pub first_difference: Option<usize>,
    pub detail: Option<String>,
}

/// Compares disclosed parts (within [`DIFF_TOL`]) and transaction lists.
/// Encrypted parts differ between honest nodes and are ignored.
pub fn diff_dumps(a: &LedgerDump, b: &LedgerDump) -> DiffReport {
    let differ = |index: usize, detail: String| DiffReport {
        identical: false,
        first_difference: Some(index),
        detail: Some(detail),
    };
    if a.params.n != b.params.n || a.params.m_max != b.params.m_max {
        return differ(0, "parameters differ".into());
    }
    for (x, y) in a.blocks.iter().zip(&b.blocks) {
        let d = x.disclosed.max_abs_diff(&y.disclosed);
        if d > DIFF_TOL {
            return differ(x.index, format!("disclosed parts differ by {d:e}"));
        }
        if x.tx_list != y.tx_list {
            return differ(x.index, "transaction lists differ".into());
        }
    }
    if a.blocks.len() != b.blocks.len() {
        let at = a.blocks.len().min(b.blocks.len()) + 1;
        return differ(
            at,
            format!("lengths differ ({} vs {})", a.blocks.len(), b.blocks.len()),
        );
    }
    DiffReport {
        identical: true,
        first_difference: None,
        detail: None,
    }
}

/// Writes floats with 17 significant digits.
#[derive(Default)]
pub struct SigDigits {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::encode_preliminary_block;
    use crate::ledger::{ChainParams, EncryptionKey};
    use crate::transaction::NodeId;

    fn chain(theta: f64, blocks: u32) -> Chain {
        let key = EncryptionKey::new(theta).unwrap();
        let mut c = Chain::new(ChainParams::new(64, 4).unwrap());
        for i in 0..blocks {
            let txs = vec![Transaction::grant(NodeId(i), 1 + u64::from(i), u64::from(i))];
            c.append(&encode_preliminary_block(&txs, 64).unwrap(), &key).unwrap();
        }
        c
    }

    #[test]
    fn dump_round_trips_exactly() {
        let dump = LedgerDump::from_chain(&chain(0.3, 3), Some(2));
        let text = dump.to_json();
        assert!(text.contains("e-1") || text.contains("e0"));
        assert_eq!(LedgerDump::from_json(&text).unwrap(), dump);
    }

    #[test]
    fn diff_ignores_encryption_but_not_content() {
        let a = LedgerDump::from_chain(&chain(0.3, 3), Some(0));
        let b = LedgerDump::from_chain(&chain(2.9, 3), Some(1));
        assert!(diff_dumps(&a, &a).identical);
        assert!(diff_dumps(&a, &b).identical);
        let c = LedgerDump::from_chain(&chain(0.3, 2), None);
        let d = diff_dumps(&a, &c);
        assert!(!d.identical);
        assert_eq!(d.first_difference, Some(3));
    }

    #[test]
    fn truncated_dump_is_malformed() {
        let text = LedgerDump::from_chain(&chain(0.3, 2), None).to_json();
        let cut = &text[..text.len() / 2];
        assert!(matches!(LedgerDump::from_json(cut), Err(DumpError::Malformed(_))));
    }

    #[test]
    fn dump_has_no_key_material() {
        let text = LedgerDump::from_chain(&chain(0.777, 2), None).to_json();
        assert!(!text.contains("theta"));
        assert!(!text.contains("0.777") && !text.contains("7.7700000000000002e-1"));
    }
}
