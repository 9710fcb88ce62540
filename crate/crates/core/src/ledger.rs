//! Per-node chain: incremental lifting of preliminary blocks, θ-keyed
//! encryption of the lifted coordinates, block reads and tamper detection.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::encoding::{decode_preliminary_block, CodecError};
use crate::liftgs::{project, LiftError, LiftingParams, LiftingWorkspace, ORTHO_TOL};
use crate::state::{mat_vec, CMatrix, StateVector};
use crate::transaction::Transaction;

/// Disclosed parts must match their preliminaries to this tolerance.
pub const DISCLOSED_TOL: f64 = 1e-9;
/// Preliminaries must be unit norm to this tolerance.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LedgerError {
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("invalid chain parameters: {0}")]
    InvalidParams(String),
    #[error("theta {0} outside [0, pi]")]
    InvalidKey(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("chain capacity {capacity} exceeded")]
    CapacityExceeded { capacity: usize },
    #[error("preliminary block norm {norm} is not 1")]
    NotUnitNorm { norm: f64 },
    #[error("block index {index} outside 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
}

pub type Result<T> = std::result::Result<T, LedgerError>;

/// Lifting parameters of a chain, with `m_max = 2^q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainParams {
    lifting: LiftingParams,
    q: u32,
}

impl ChainParams {
    /// Radius fixed at `2 * sqrt(m_max)`.
    pub fn new(n: usize, m_max: usize) -> Result<Self> {
        let lifting = LiftingParams::new(n, m_max)?;
        Ok(Self {
            lifting,
            q: m_max.trailing_zeros(),
        })
    }

    /// Any radius of at least `2 * sqrt(m_max)`.
    pub fn with_radius(n: usize, m_max: usize, r: f64) -> Result<Self> {
        let floor = 2.0 * (m_max as f64).sqrt();
        if r < floor {
            return Err(LedgerError::InvalidParams(format!(
                "radius {r} below 2*sqrt(m_max) = {floor}"
            )));
        }
        let lifting = LiftingParams::with_radius(n, m_max, r)?;
        Ok(Self {
            lifting,
            q: m_max.trailing_zeros(),
        })
    }

    pub fn lifting(&self) -> &LiftingParams {
        &self.lifting
    }

    pub fn n(&self) -> usize {
        self.lifting.n()
    }

    pub fn m_max(&self) -> usize {
        self.lifting.m_max()
    }

    pub fn r(&self) -> f64 {
        self.lifting.r()
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn block_dim(&self) -> usize {
        self.lifting.lifted_dim()
    }
}

/// A node's secret rotation angle. Deliberately neither `Serialize` nor
/// printable.
#[derive(Clone, PartialEq)]
pub struct EncryptionKey {
    theta: f64,
}

impl EncryptionKey {
    pub fn new(theta: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) {
            return Err(LedgerError::InvalidKey(theta));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

impl fmt::Debug for EncryptionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("EncryptionKey(<redacted>)")
    }
}

/// `U_θ^{⊗q}`, where `U_θ` has columns `(1, e^{iθ})/√2` and `(1, -e^{iθ})/√2`.
pub fn make_encryption_unitary(key: &EncryptionKey, q: u32) -> CMatrix {
    let phase = Complex64::from_polar(FRAC_1_SQRT_2, key.theta());
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let single = CMatrix::from_row_slice(2, 2, &[h, h, phase, -phase]);
    let mut u = CMatrix::identity(1, 1);
    for _ in 0..q {
        u = u.kronecker(&single);
    }
    u
}

fn apply_on_lifted(w: &StateVector, u: &CMatrix, params: &ChainParams) -> Result<StateVector> {
    if w.dim() != params.block_dim() {
        return Err(LedgerError::DimensionMismatch {
            expected: params.block_dim(),
            found: w.dim(),
        });
    }
    let lifted = w.slice(params.n(), params.m_max());
    Ok(w.slice(0, params.n()).concat(&mat_vec(u, &lifted)))
}

/// Identity on the disclosed coordinates, `U_θ^{⊗q}` on the lifted ones.
pub fn encrypt_block(w: &StateVector, key: &EncryptionKey, params: &ChainParams) -> Result<StateVector> {
    apply_on_lifted(w, &make_encryption_unitary(key, params.q()), params)
}

pub fn decrypt_block(enc: &StateVector, key: &EncryptionKey, params: &ChainParams) -> Result<StateVector> {
    apply_on_lifted(enc, &make_encryption_unitary(key, params.q()).adjoint(), params)
}

/// Re-runs the incremental lifting over `preliminaries`, returning the
/// unencrypted blocks. The construction is deterministic, so this is what any
/// honest holder of the same preliminaries stores before encryption.
pub fn relift(preliminaries: &[StateVector], params: &ChainParams) -> Result<Vec<StateVector>> {
    let mut ws = LiftingWorkspace::new(*params.lifting());
    preliminaries
        .iter()
        .map(|p| Ok(ws.lift_append(p)?.full))
        .collect()
}

/// Where a fault-injected perturbation lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TamperTarget {
    /// The public preliminary record.
    Preliminary,
    /// A coordinate of the stored block; coordinates `>= n` are encrypted.
    Block,
}

/// Outcome of [`Chain::validate`]. All indices are 1-based.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub first_invalid_index: Option<usize>,
    pub invalid: Vec<usize>,
    pub reason: Option<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.first_invalid_index.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Chain {
    params: ChainParams,
    workspace: LiftingWorkspace,
    blocks: Vec<StateVector>,
    preliminaries: Vec<StateVector>,
}

impl Chain {
    pub fn new(params: ChainParams) -> Self {
        Self {
            params,
            workspace: LiftingWorkspace::new(*params.lifting()),
            blocks: Vec::new(),
            preliminaries: Vec::new(),
        }
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Encrypted blocks, in chain order.
    pub fn blocks(&self) -> &[StateVector] {
        &self.blocks
    }

    pub fn preliminaries(&self) -> &[StateVector] {
        &self.preliminaries
    }

    pub fn workspace(&self) -> &LiftingWorkspace {
        &self.workspace
    }

    /// Lifts `preliminary` against the existing blocks, encrypts it under
    /// `key` and appends it. Returns the new length.
    pub fn append(&mut self, preliminary: &StateVector, key: &EncryptionKey) -> Result<usize> {
        if preliminary.dim() != self.params.n() {
            return Err(LedgerError::DimensionMismatch {
                expected: self.params.n(),
                found: preliminary.dim(),
            });
        }
        if self.len() >= self.params.m_max() {
            return Err(LedgerError::CapacityExceeded {
                capacity: self.params.m_max(),
            });
        }
        let norm = preliminary.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(LedgerError::NotUnitNorm { norm });
        }
        let unit = preliminary.scaled(1.0 / norm);
        let block = self.workspace.lift_append(&unit)?;
        let enc = encrypt_block(&block.full, key, &self.params)?;
        self.blocks.push(enc);
        self.preliminaries.push(unit);
        Ok(self.len())
    }

    /// Transactions of block `index` (1-based), read from the disclosed part
    /// alone. No key is needed.
    pub fn read_block(&self, index: usize) -> Result<Vec<Transaction>> {
        let block = self.block(index)?;
        let disclosed = project(block, self.params.lifting())?;
        Ok(decode_preliminary_block(&disclosed)?)
    }

    fn block(&self, index: usize) -> Result<&StateVector> {
        if index == 0 || index > self.len() {
            return Err(LedgerError::IndexOutOfRange {
                index,
                len: self.len(),
            });
        }
        Ok(&self.blocks[index - 1])
    }

    pub fn disclosed(&self, index: usize) -> Result<StateVector> {
        Ok(project(self.block(index)?, self.params.lifting())?)
    }

    pub fn decrypted_blocks(&self, key: &EncryptionKey) -> Result<Vec<StateVector>> {
        self.blocks
            .iter()
            .map(|b| decrypt_block(b, key, &self.params))
            .collect()
    }

    /// Replaces the whole record. Used by fork reconciliation, which
    /// supplies the new preliminaries and already-encrypted blocks.
    pub(crate) fn replace(&mut self, preliminaries: Vec<StateVector>, blocks: Vec<StateVector>) -> Result<()> {
        let mut ws = LiftingWorkspace::new(*self.params.lifting());
        for p in &preliminaries {
            ws.lift_append(p)?;
        }
        self.workspace = ws;
        self.preliminaries = preliminaries;
        self.blocks = blocks;
        Ok(())
    }

    /// Adds `delta` to one stored coordinate. Fault injection only.
    pub fn tamper(&mut self, target: TamperTarget, index: usize, coord: usize, delta: Complex64) -> Result<()> {
        self.block(index)?;
        let v = match target {
            TamperTarget::Preliminary => &mut self.preliminaries[index - 1],
            TamperTarget::Block => &mut self.blocks[index - 1],
        };
        if coord >= v.dim() {
            return Err(LedgerError::DimensionMismatch {
                expected: v.dim(),
                found: coord,
            });
        }
        v.amps_mut()[coord] += delta;
        Ok(())
    }

    /// Checks every block and reports the first invalid one; every later
    /// block is reported invalid as well.
    ///
    /// Without a key the checks are: disclosed part equals the preliminary,
    /// the preliminary decodes to well-formed transactions, and the encrypted
    /// blocks keep norm `r` and mutual orthogonality (encryption is unitary).
    /// With the owner's key the decrypted blocks must also equal a fresh
    /// re-lifting of the preliminaries.
    pub fn validate(&self, key: Option<&EncryptionKey>) -> ValidationReport {
        let r = self.params.r();
        let mut ws = LiftingWorkspace::new(*self.params.lifting());
        let mut failure: Option<(usize, String)> = None;
        'blocks: for (pos, (block, prelim)) in self.blocks.iter().zip(&self.preliminaries).enumerate() {
            let index = pos + 1;
            let fail = |why: String| Some((index, why));
            let disclosed = block.slice(0, self.params.n());
            let diff = disclosed.max_abs_diff(prelim);
            if diff > DISCLOSED_TOL {
                failure = fail(format!("disclosed part differs from preliminary by {diff:e}"));
                break;
            }
            match decode_preliminary_block(prelim) {
                Ok(txs) if txs.iter().all(Transaction::is_well_formed) => {}
                Ok(_) => {
                    failure = fail("malformed transaction".into());
                    break;
                }
                Err(e) => {
                    failure = fail(format!("undecodable preliminary: {e}"));
                    break;
                }
            }
            let norm_err = (block.norm() - r).abs();
            if norm_err > ORTHO_TOL * r {
                failure = fail(format!("block norm off by {norm_err:e}"));
                break;
            }
            for earlier in &self.blocks[..pos] {
                let ip = earlier.inner(block).norm();
                if ip > ORTHO_TOL * r * r {
                    failure = fail(format!("not orthogonal to an earlier block ({ip:e})"));
                    break 'blocks;
                }
            }
            if let Some(key) = key {
                let expected = match ws.lift_append(prelim) {
                    Ok(b) => b.full,
                    Err(e) => {
                        failure = fail(format!("re-lifting failed: {e}"));
                        break;
                    }
                };
                let plain = decrypt_block(block, key, &self.params).expect("dimension checked");
                let d = plain.max_abs_diff(&expected);
                if d > DISCLOSED_TOL {
                    failure = fail(format!("block differs from re-lifted block by {d:e}"));
                    break;
                }
            }
        }
        match failure {
            None => ValidationReport::default(),
            Some((first, why)) => ValidationReport {
                first_invalid_index: Some(first),
                invalid: (first..=self.len()).collect(),
                reason: Some(why),
            },
        }
    }
}
