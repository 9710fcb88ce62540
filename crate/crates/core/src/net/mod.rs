//! Deterministic discrete-event simulation of the peer network.
//!
//! Nodes exchange transaction bundles (lossy, random latency), accepted
//! blocks (reliable, random latency) and rejection notices. Consensus rounds
//! run synchronously inside a tick: the proposer assembles a block from its
//! log, sampled voters check it against their own chain view, and the block
//! is accepted when the approving fraction reaches the threshold.

mod node;
mod sign;
mod sim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::CodecError;
use crate::fork::ForkError;
use crate::ledger::LedgerError;
use crate::transaction::NodeId;

pub use node::{
    create_transaction, handle_conflict, verify_transaction, ChainView, ConflictDecision, FamilyKey,
    LogEntry, NodeState, Output, Verdict,
};
pub use sign::{sign, signed, KeyRegistry, SignatureError, SigningKey, TAG_LEN};
pub use sim::{Decision, STAMPS_PER_TICK, ForkCheck, NetConfig, NetStats, ReconcileRecord, SimNetwork};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("{0} has an empty log")]
    EmptyLog(NodeId),
    #[error("sample of {sample_size} voters from {peers} peers")]
    SampleTooLarge { sample_size: usize, peers: usize },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("{node} holds {available}, cannot send {requested}")]
    InsufficientFunds {
        node: NodeId,
        available: u64,
        requested: u64,
    },
    #[error("amount must be positive")]
    InvalidAmount,
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Fork(#[from] ForkError),
}

pub type Result<T> = std::result::Result<T, NetError>;

/// Voting parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    /// Voters sampled per proposal.
    pub sample_size: usize,
    /// Fraction of sampled voters that must approve.
    pub approve_threshold: f64,
    /// Maximum transactions per block.
    pub block_size: usize,
}

impl ConsensusConfig {
    pub fn validate(&self, nodes: usize) -> Result<()> {
        if self.sample_size == 0 || self.sample_size >= nodes {
            return Err(NetError::InvalidConfig(format!(
                "sample_size {} must lie in 1..{nodes}",
                self.sample_size
            )));
        }
        if !(self.approve_threshold > 0.0 && self.approve_threshold <= 1.0) {
            return Err(NetError::InvalidConfig(format!(
                "approve_threshold {} outside (0, 1]",
                self.approve_threshold
            )));
        }
        // a payment and its change travel in one block
        if self.block_size < 2 {
            return Err(NetError::InvalidConfig("block_size must be at least 2".into()));
        }
        Ok(())
    }
}

/// Uniform integer latency range in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Latency {
    pub min: u64,
    pub max: u64,
}

impl Default for Latency {
    fn default() -> Self {
        Self { min: 1, max: 1 }
    }
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tick: u64,
    pub node: u32,
    pub event: String,
    pub payload_digest: String,
}

pub(crate) fn short_digest(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(&Sha256::digest(bytes)[..8])
}
