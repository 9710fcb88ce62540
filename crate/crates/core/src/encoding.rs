//! Amplitude encodings of transactions and preliminary blocks, and the
//! lexicographic qubit labelling of `C^(2^n)` basis vectors.
//!
//! Payload bytes become amplitudes through a sentinel codec: coordinate 0
//! holds 1, coordinate `1 + i` holds `(byte_i + 1) / 257`, the rest are 0, and
//! the vector is normalized. Dividing by the sentinel undoes any positive
//! rescaling, so a block projected out of the chain decodes directly.

use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::state::StateVector;
use crate::transaction::{Reader, Transaction};

/// Amplitudes below this modulus are omitted from ket expansions.
pub const KET_ZERO_TOL: f64 = 1e-15;
/// Minimum sentinel value accepted by the decoder.
pub const SENTINEL_FLOOR: f64 = 1e-9;
/// Slack allowed when checking that a recovered byte lies in `0..=255`.
pub const BYTE_SLACK: f64 = 1e-6;
/// Default base dimension for encoded blocks.
pub const DEFAULT_BASE_DIM: usize = 256;

const LEVELS: f64 = 257.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("basis index {index} out of range for {n} qubits")]
    IndexOutOfRange { index: u64, n: u32 },
    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwoDim(usize),
    #[error("payload of {len} bytes exceeds capacity {capacity}")]
    PayloadTooLarge { len: usize, capacity: usize },
    #[error("malformed encoding: {0}")]
    Malformed(String),
    #[error("preliminary block has no transactions")]
    EmptyBlock,
}

/// Label `b_1 ... b_n` of a computational basis vector of `n` qubits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisLabel {
    bits: String,
}

impl BasisLabel {
    pub fn parse(bits: &str) -> Option<Self> {
        if bits.is_empty() || bits.len() > 63 || !bits.bytes().all(|b| b == b'0' || b == b'1') {
            return None;
        }
        Some(Self {
            bits: bits.to_string(),
        })
    }

    pub fn bits(&self) -> &str {
        &self.bits
    }

    pub fn n(&self) -> u32 {
        self.bits.len() as u32
    }

    /// Big-endian integer value of the bit string.
    pub fn index(&self) -> u64 {
        self.bits
            .bytes()
            .fold(0u64, |acc, b| (acc << 1) | u64::from(b - b'0'))
    }

    /// Tensor-product form, e.g. `|0>|1>|1>`.
    pub fn ket(&self) -> String {
        self.bits.chars().map(|c| format!("|{c}>")).collect()
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.bits)
    }
}

pub fn index_to_basis_label(index: u64, n: u32) -> Result<BasisLabel, CodecError> {
    if n == 0 || n > 63 || index >= (1u64 << n) {
        return Err(CodecError::IndexOutOfRange { index, n });
    }
    Ok(BasisLabel {
        bits: format!("{index:0width$b}", width = n as usize),
    })
}

pub fn label_to_index(label: &BasisLabel) -> u64 {
    label.index()
}

fn qubit_count(dim: usize) -> Result<u32, CodecError> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(CodecError::NotPowerOfTwoDim(dim));
    }
    Ok(dim.trailing_zeros())
}

/// Nonzero terms of `x` in the lexicographic basis, in index order.
pub fn vector_to_ket_expansion(x: &StateVector) -> Result<Vec<(BasisLabel, Complex64)>, CodecError> {
    let n = qubit_count(x.dim())?;
    x.amps()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.norm() > KET_ZERO_TOL)
        .map(|(i, &a)| Ok((index_to_basis_label(i as u64, n)?, a)))
        .collect()
}

/// Inverse of [`vector_to_ket_expansion`] for `n` qubits.
pub fn ket_expansion_to_vector(
    terms: &[(BasisLabel, Complex64)],
    n: u32,
) -> Result<StateVector, CodecError> {
    if n == 0 || n > 30 {
        return Err(CodecError::NotPowerOfTwoDim(0));
    }
    let mut x = StateVector::zeros(1usize << n);
    for (label, amp) in terms {
        if label.n() != n {
            return Err(CodecError::IndexOutOfRange {
                index: label.index(),
                n,
            });
        }
        x.amps_mut()[label.index() as usize] = *amp;
    }
    Ok(x)
}

/// Sentinel codec: bytes to a unit vector in `C^n`.
pub fn encode_bytes(payload: &[u8], n: usize) -> Result<StateVector, CodecError> {
    let capacity = n.saturating_sub(1);
    if payload.len() > capacity {
        return Err(CodecError::PayloadTooLarge {
            len: payload.len(),
            capacity,
        });
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); n];
    amps[0] = Complex64::new(1.0, 0.0);
    for (slot, &b) in amps[1..].iter_mut().zip(payload) {
        *slot = Complex64::new((f64::from(b) + 1.0) / LEVELS, 0.0);
    }
    let v = StateVector::new(amps).expect("finite by construction");
    Ok(v.normalized())
}

/// Inverse of [`encode_bytes`], up to a positive global scale.
pub fn decode_bytes(v: &StateVector) -> Result<Vec<u8>, CodecError> {
    let sentinel = v[0];
    if sentinel.re <= SENTINEL_FLOOR || sentinel.im.abs() > sentinel.re * 1e-6 {
        return Err(CodecError::Malformed(format!(
            "sentinel {sentinel} is not a positive scale"
        )));
    }
    let mut out = Vec::new();
    let mut ended = false;
    for (i, a) in v.amps()[1..].iter().enumerate() {
        let level = a / sentinel * LEVELS;
        if level.norm() < 0.5 {
            ended = true;
            continue;
        }
        if ended {
            return Err(CodecError::Malformed(format!(
                "amplitude at {} follows the end of the payload",
                i + 1
            )));
        }
        if level.im.abs() >= 0.5 {
            return Err(CodecError::Malformed(format!(
                "complex amplitude at {}",
                i + 1
            )));
        }
        let byte = level.re - 1.0;
        if !(-BYTE_SLACK..=255.0 + BYTE_SLACK).contains(&byte) {
            return Err(CodecError::Malformed(format!(
                "recovered byte {byte} at {} out of range",
                i + 1
            )));
        }
        out.push(byte.round().clamp(0.0, 255.0) as u8);
    }
    Ok(out)
}

pub fn encode_transaction(tx: &Transaction, n: usize) -> Result<StateVector, CodecError> {
    encode_bytes(&tx.canonical_bytes(), n)
}

pub fn decode_transaction(v: &StateVector) -> Result<Transaction, CodecError> {
    Transaction::from_canonical_bytes(&decode_bytes(v)?)
}

/// Sorts by `(timestamp, id)`, the order transactions take inside a block.
pub fn canonical_block_order(txs: &[Transaction]) -> Vec<Transaction> {
    let mut keyed: Vec<_> = txs.iter().map(|t| ((t.timestamp, t.id()), t.clone())).collect();
    keyed.sort_by_key(|a| a.0);
    keyed.into_iter().map(|(_, t)| t).collect()
}

/// `u16 count`, then `u16 length` and canonical bytes per transaction.
pub fn block_payload(txs: &[Transaction]) -> Result<Vec<u8>, CodecError> {
    if txs.is_empty() {
        return Err(CodecError::EmptyBlock);
    }
    let sorted = canonical_block_order(txs);
    let mut out = (sorted.len() as u16).to_be_bytes().to_vec();
    for tx in &sorted {
        let bytes = tx.canonical_bytes();
        out.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
        out.extend_from_slice(&bytes);
    }
    Ok(out)
}

pub fn encode_preliminary_block(txs: &[Transaction], n: usize) -> Result<StateVector, CodecError> {
    encode_bytes(&block_payload(txs)?, n)
}

pub fn decode_preliminary_block(v: &StateVector) -> Result<Vec<Transaction>, CodecError> {
    let payload = decode_bytes(v)?;
    let mut rd = Reader {
        bytes: &payload,
        pos: 0,
    };
    let count = rd.u16()? as usize;
    if count == 0 {
        return Err(CodecError::EmptyBlock);
    }
    let mut txs = Vec::with_capacity(count);
    for _ in 0..count {
        let len = rd.u16()? as usize;
        txs.push(Transaction::from_canonical_bytes(rd.take(len)?)?);
    }
    if rd.pos != payload.len() {
        return Err(CodecError::Malformed("trailing bytes after block".into()));
    }
    Ok(txs)
}
