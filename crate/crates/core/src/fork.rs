//! Fork reconciliation by an explicit unitary.
//!
//! A node holding `W_1..W_i, X_(i+1)..X_n` while the majority holds
//! `W_1..W_n` completes both chains to orthonormal bases of `C^k` (`P` for the
//! local chain, `Q` for the majority) and builds
//!
//! ```text
//! O = sum_(j<=i) W_j W_j^H + sum_(i<j<=n) W_j X_j^H + sum_l q_l p_l^H
//! ```
//!
//! which maps the local basis onto the majority basis and is therefore
//! unitary. Blocks have norm `r`; the operator is built from unit copies and
//! applied to the stored blocks by linearity.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::encoding::decode_preliminary_block;
use crate::ledger::{encrypt_block, relift, Chain, EncryptionKey, LedgerError, DISCLOSED_TOL};
use crate::liftgs::{completion_columns, LiftError, ORTHO_TOL};
use crate::state::{mat_vec, CMatrix, StateVector};
use crate::transaction::TxId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForkError {
    #[error("inputs are not pairwise orthogonal (overlap {overlap:e})")]
    NotOrthogonal { overlap: f64 },
    #[error("chain mismatch: {0}")]
    ChainMismatch(String),
    #[error("chains confirm different transactions after block {prefix}")]
    TransactionSetMismatch { prefix: usize },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Lift(#[from] LiftError),
}

pub type Result<T> = std::result::Result<T, ForkError>;

/// Unit vectors completing `blocks` to an orthonormal basis of `C^k`.
pub fn extend_orthobasis(blocks: &[StateVector], k: usize) -> Result<Vec<StateVector>> {
    if blocks.is_empty() {
        return Ok((0..k).map(|i| StateVector::basis(k, i)).collect());
    }
    if let Some(b) = blocks.iter().find(|b| b.dim() != k) {
        return Err(ForkError::ChainMismatch(format!(
            "block of dimension {} in C^{k}",
            b.dim()
        )));
    }
    if blocks.iter().any(|b| b.norm() == 0.0) {
        return Err(ForkError::ChainMismatch("zero block".into()));
    }
    let units: Vec<StateVector> = blocks.iter().map(StateVector::normalized).collect();
    for (i, a) in units.iter().enumerate() {
        for b in &units[i + 1..] {
            let overlap = a.inner(b).norm();
            if overlap > ORTHO_TOL {
                return Err(ForkError::NotOrthogonal { overlap });
            }
        }
    }
    match completion_columns(&units) {
        Ok(cols) => Ok(cols),
        Err(LiftError::NotOrthonormal { residual }) => Err(ForkError::NotOrthogonal { overlap: residual }),
        Err(e) => Err(e.into()),
    }
}

fn outer(a: &StateVector, b: &StateVector) -> CMatrix {
    a.to_dvector() * b.to_dvector().adjoint()
}

/// Builds the operator taking `local` to `majority`, both unit-normalized
/// and agreeing on their first `prefix` blocks.
pub fn build_fork_operator(
    majority: &[StateVector],
    local: &[StateVector],
    prefix: usize,
    k: usize,
) -> Result<CMatrix> {
    if majority.len() != local.len() {
        return Err(ForkError::ChainMismatch(format!(
            "lengths differ ({} vs {})",
            majority.len(),
            local.len()
        )));
    }
    if prefix > majority.len() {
        return Err(ForkError::ChainMismatch(format!(
            "prefix {prefix} longer than the chains"
        )));
    }
    for v in majority.iter().chain(local) {
        if v.dim() != k {
            return Err(ForkError::ChainMismatch(format!("block dimension {} != {k}", v.dim())));
        }
        if (v.norm() - 1.0).abs() > ORTHO_TOL {
            return Err(ForkError::ChainMismatch("blocks must be unit-normalized".into()));
        }
    }
    for (j, (w, x)) in majority.iter().zip(local).take(prefix).enumerate() {
        let d = w.max_abs_diff(x);
        if d > ORTHO_TOL {
            return Err(ForkError::ChainMismatch(format!(
                "block {} differs inside the shared prefix ({d:e})",
                j + 1
            )));
        }
    }
    let mismatch = |e: ForkError| match e {
        ForkError::NotOrthogonal { overlap } => {
            ForkError::ChainMismatch(format!("chain not orthogonal ({overlap:e})"))
        }
        other => other,
    };
    let p = extend_orthobasis(local, k).map_err(mismatch)?;
    let q = extend_orthobasis(majority, k).map_err(mismatch)?;

    let mut op = CMatrix::zeros(k, k);
    for (j, w) in majority.iter().enumerate() {
        let source = if j < prefix { w } else { &local[j] };
        op += outer(w, source);
    }
    for (qj, pj) in q.iter().zip(&p) {
        op += outer(qj, pj);
    }
    Ok(op)
}

/// Number of leading preliminaries two records share.
pub fn shared_prefix(a: &[StateVector], b: &[StateVector]) -> usize {
    a.iter()
        .zip(b)
        .take_while(|(x, y)| x.dim() == y.dim() && x.max_abs_diff(y) <= DISCLOSED_TOL)
        .count()
}

fn tx_multiset(preliminaries: &[StateVector]) -> Result<BTreeMap<TxId, usize>> {
    let mut out = BTreeMap::new();
    for p in preliminaries {
        for tx in decode_preliminary_block(p).map_err(LedgerError::from)? {
            *out.entry(tx.id()).or_insert(0) += 1;
        }
    }
    Ok(out)
}

/// What a reconciliation did.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconciliation {
    pub prefix: usize,
    pub rewritten: usize,
    pub unitarity_residual: f64,
}

/// Moves `chain` onto the record given by `majority_preliminaries`.
///
/// The majority's unencrypted blocks are recovered by re-lifting its public
/// preliminaries; the local blocks are decrypted with `key`, mapped through
/// the fork operator and re-encrypted under the same key.
pub fn reconcile_fork(
    chain: &mut Chain,
    key: &EncryptionKey,
    majority_preliminaries: &[StateVector],
) -> Result<Reconciliation> {
    let params = *chain.params();
    if majority_preliminaries.len() != chain.len() {
        return Err(ForkError::ChainMismatch(format!(
            "lengths differ ({} vs {})",
            majority_preliminaries.len(),
            chain.len()
        )));
    }
    let prefix = shared_prefix(chain.preliminaries(), majority_preliminaries);
    if tx_multiset(&chain.preliminaries()[prefix..])? != tx_multiset(&majority_preliminaries[prefix..])? {
        return Err(ForkError::TransactionSetMismatch { prefix });
    }

    let r = params.r();
    let majority_plain = relift(majority_preliminaries, &params)?;
    let local_plain = chain.decrypted_blocks(key)?;
    let unit = |vs: &[StateVector]| vs.iter().map(|v| v.scaled(1.0 / r)).collect::<Vec<_>>();
    let op = build_fork_operator(
        &unit(&majority_plain),
        &unit(&local_plain),
        prefix,
        params.block_dim(),
    )?;

    let blocks = local_plain
        .iter()
        .map(|x| encrypt_block(&mat_vec(&op, x), key, &params))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut next = chain.clone();
    next.replace(majority_preliminaries.to_vec(), blocks)?;

    let report = next.validate(Some(key));
    if let Some(i) = report.first_invalid_index {
        return Err(ForkError::ChainMismatch(format!(
            "reconciled chain invalid at block {i}: {}",
            report.reason.unwrap_or_default()
        )));
    }
    *chain = next;
    Ok(Reconciliation {
        prefix,
        rewritten: chain.len() - prefix,
        unitarity_residual: crate::state::unitarity_residual(&op),
    })
}

/// `max_j ||O x_j - w_j||`.
pub fn mapping_residual(op: &CMatrix, local: &[StateVector], majority: &[StateVector]) -> f64 {
    local
        .iter()
        .zip(majority)
        .map(|(x, w)| mat_vec(op, x).distance(w))
        .fold(0.0, f64::max)
}
