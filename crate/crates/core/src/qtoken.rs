//! Tokens pairing a classical serial with a state vector taken from a
//! confirmed block, checked by a token machine.
//!
//! The state is the block's encrypted lifted part turned by a fresh
//! per-token rotation, so two tokens cut from one block (for two owners, or
//! before and after a transfer) never share a state.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ledger::{make_encryption_unitary, Chain, EncryptionKey, LedgerError};
use crate::state::{mat_vec, StateVector};
use crate::transaction::NodeId;

/// Minimum fidelity accepted by [`TokenMachine::verify_token`].
pub const FIDELITY_TOL: f64 = 1e-9;
/// Maximum distance to the registered state, relative to its norm.
pub const DISTANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TokenError {
    #[error("block {index} is not confirmed (chain length {len})")]
    UnconfirmedBlock { index: usize, len: usize },
    #[error("block {index} already minted for {owner}")]
    AlreadyMinted { index: usize, owner: NodeId },
    #[error("block {index} pays nothing to {owner}")]
    NoValueForOwner { index: usize, owner: NodeId },
    #[error("token failed verification")]
    InvalidToken,
    #[error("wrong passcode for {0}")]
    WrongPasscode(NodeId),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

pub type Result<T> = std::result::Result<T, TokenError>;

/// Exported token: `{serial, value, qstate}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Token {
    pub serial: String,
    pub value: u64,
    pub qstate: StateVector,
}

impl Token {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("in-memory serialization")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Where a token's value came from: block digest, block index and the
/// owner it was first minted for.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Lineage {
    digest: String,
    index: usize,
    origin: NodeId,
}

#[derive(Debug, Clone)]
struct Entry {
    expected: StateVector,
    value: u64,
    owner: NodeId,
    generation: u32,
    lineage: Lineage,
    live: bool,
}

pub struct TokenMachine {
    registry: BTreeMap<String, Entry>,
    minted: BTreeSet<Lineage>,
    passcodes: BTreeMap<NodeId, [u8; 32]>,
    rng: ChaCha8Rng,
}

fn serial(l: &Lineage, owner: NodeId, generation: u32) -> String {
    format!("{}-{}-{}-{}-{}", l.digest, l.index, l.origin.0, owner.0, generation)
}

impl TokenMachine {
    /// A machine whose per-token rotations come from `seed`.
    pub fn new(seed: u64) -> Self {
        Self {
            registry: BTreeMap::new(),
            minted: BTreeSet::new(),
            passcodes: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Requires `passcode` for every later transfer away from `owner`.
    pub fn set_passcode(&mut self, owner: NodeId, passcode: &str) {
        self.passcodes.insert(owner, Sha256::digest(passcode.as_bytes()).into());
    }

    fn fresh_state(&mut self, lifted: &StateVector, q: u32) -> StateVector {
        let phi = self.rng.gen_range(0.0..=PI);
        let u = make_encryption_unitary(&EncryptionKey::new(phi).expect("phi in range"), q);
        mat_vec(&u, lifted)
    }

    fn issue(&mut self, lineage: Lineage, lifted: &StateVector, q: u32, value: u64, owner: NodeId, generation: u32) -> Token {
        let qstate = self.fresh_state(lifted, q);
        let serial = serial(&lineage, owner, generation);
        self.registry.insert(
            serial.clone(),
            Entry {
                expected: qstate.clone(),
                value,
                owner,
                generation,
                lineage,
                live: true,
            },
        );
        Token { serial, value, qstate }
    }

    /// Mints the token of block `index` for `owner`, valued at what the
    /// block pays `owner`.
    pub fn mint_token(&mut self, chain: &Chain, index: usize, owner: NodeId) -> Result<Token> {
        if index == 0 || index > chain.len() {
            return Err(TokenError::UnconfirmedBlock { index, len: chain.len() });
        }
        let disclosed = chain.disclosed(index)?;
        let lineage = Lineage {
            digest: hex::encode(&disclosed.digest()[..8]),
            index,
            origin: owner,
        };
        if self.minted.contains(&lineage) {
            return Err(TokenError::AlreadyMinted { index, owner });
        }
        let value: u64 = chain
            .read_block(index)?
            .iter()
            .filter(|t| t.receivers.contains(&owner))
            .map(|t| t.amount)
            .sum();
        if value == 0 {
            return Err(TokenError::NoValueForOwner { index, owner });
        }
        let p = chain.params();
        let lifted = chain.blocks()[index - 1].slice(p.n(), p.m_max());
        self.minted.insert(lineage.clone());
        Ok(self.issue(lineage, &lifted, p.q(), value, owner, 0))
    }

    /// Accepts a live serial whose state matches the registered one.
    pub fn verify_token(&self, token: &Token) -> bool {
        let Some(e) = self.registry.get(&token.serial) else {
            return false;
        };
        if !e.live || e.value != token.value || token.qstate.dim() != e.expected.dim() {
            return false;
        }
        let (nq, ne) = (token.qstate.norm_sqr(), e.expected.norm_sqr());
        if nq == 0.0 || ne == 0.0 {
            return false;
        }
        let fidelity = token.qstate.inner(&e.expected).norm_sqr() / (nq * ne);
        // fidelity alone misses perturbations below ~1e-4.5 relative
        fidelity >= 1.0 - FIDELITY_TOL && token.qstate.distance(&e.expected) <= DISTANCE_TOL * ne.sqrt()
    }

    /// Retires `token` and issues its successor to `new_owner`.
    pub fn transfer_token(&mut self, token: &Token, new_owner: NodeId, passcode: Option<&str>) -> Result<Token> {
        if !self.verify_token(token) {
            return Err(TokenError::InvalidToken);
        }
        let e = self.registry[&token.serial].clone();
        if let Some(hash) = self.passcodes.get(&e.owner) {
            let given: Option<[u8; 32]> = passcode.map(|p| Sha256::digest(p.as_bytes()).into());
            if given.as_ref() != Some(hash) {
                return Err(TokenError::WrongPasscode(e.owner));
            }
        }
        self.registry.get_mut(&token.serial).expect("verified").live = false;
        let q = e.expected.dim().trailing_zeros();
        // the registered state is a rotation of the block's lifted part; the
        // successor rotates it once more
        Ok(self.issue(e.lineage, &e.expected, q, e.value, new_owner, e.generation + 1))
    }

    pub fn live_tokens(&self) -> usize {
        self.registry.values().filter(|e| e.live).count()
    }

    pub fn registered(&self) -> usize {
        self.registry.len()
    }

    /// Distinct serials carry distinguishable states, checked over every
    /// token ever registered, and each lineage has exactly one live token.
    pub fn correspondence_holds(&self) -> bool {
        let entries: Vec<&Entry> = self.registry.values().collect();
        for (i, a) in entries.iter().enumerate() {
            for b in &entries[i + 1..] {
                if a.expected.distance(&b.expected) <= DISTANCE_TOL * a.expected.norm() {
                    return false;
                }
            }
        }
        let mut live: BTreeMap<&Lineage, usize> = BTreeMap::new();
        for e in entries.iter().filter(|e| e.live) {
            *live.entry(&e.lineage).or_default() += 1;
        }
        live.len() == self.minted.len() && live.values().all(|&c| c == 1)
    }
}
