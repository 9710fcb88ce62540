//! Classical simulator of a ledger whose blocks are state vectors made
//! mutually orthogonal by dimensional lifting.
//!
//! Inputs `v_1..v_m` in `C^n` are lifted to `w_j = (v_j; b_j)` in
//! `C^(n+m_max)` so that the `w_j` are pairwise orthogonal with common norm
//! `r`, while the first `n` coordinates still give back `v_j`. The chain
//! lifts each preliminary block as it arrives (a triangular factor grown one
//! column at a time, so earlier blocks never change) and hides the lifted
//! coordinates behind a node-secret unitary.
//!
//! Layers, bottom up:
//!
//! - [`state`]: amplitude vectors and small matrix helpers
//! - [`liftgs`]: Gram matrices, PSD square roots, batch and incremental lifting
//! - [`transaction`], [`encoding`]: canonical bytes and the amplitude codec
//! - [`ledger`]: per-node chain, encryption, validation, tamper injection
//! - [`fork`]: the unitary that moves a forked chain onto the majority record
//! - [`net`]: deterministic network simulation and consensus
//! - [`qtoken`]: tokens bound to confirmed blocks
//! - [`scenario`], [`dump`]: scripted runs, reports and ledger dumps

pub mod dump;
pub mod encoding;
pub mod fork;
pub mod ledger;
pub mod liftgs;
pub mod net;
pub mod qtoken;
pub mod scenario;
pub mod state;
pub mod transaction;

pub use dump::{diff_dumps, LedgerDump};
pub use encoding::CodecError;
pub use fork::{build_fork_operator, extend_orthobasis, reconcile_fork, ForkError};
pub use ledger::{Chain, ChainParams, EncryptionKey, LedgerError, TamperTarget, ValidationReport};
pub use liftgs::{lift_batch, project, LiftError, LiftingParams, LiftingWorkspace, OrthoBlock};
pub use net::{NetError, SimNetwork};
pub use qtoken::{Token, TokenMachine};
pub use scenario::{run_scenario, RunReport, ScenarioConfig, ScenarioError};
pub use state::{CMatrix, StateVector};
pub use transaction::{NodeId, Transaction, TxId};
