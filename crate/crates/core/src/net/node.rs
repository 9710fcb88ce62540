//! Per-node state and the four verification rules.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::encoding::decode_preliminary_block;
use crate::ledger::{Chain, EncryptionKey, ValidationReport};
use crate::net::sign::{signed, KeyRegistry, SigningKey};
use crate::net::NetError;
use crate::state::StateVector;
use crate::transaction::{NodeId, Transaction, TxId};

/// Unspent output of a confirmed transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Output {
    pub owners: Vec<NodeId>,
    pub amount: u64,
    pub block: usize,
}

/// Transactions created together from one source selection: a payment and
/// its change share sender, sources and timestamp, and redeem the sources
/// jointly.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FamilyKey {
    pub sender: NodeId,
    pub sources: Vec<TxId>,
    pub timestamp: u64,
}

impl FamilyKey {
    pub fn of(tx: &Transaction) -> Self {
        let mut sources = tx.sources.clone();
        sources.sort();
        Self {
            sender: tx.sender,
            sources,
            timestamp: tx.timestamp,
        }
    }
}

/// What a node knows from its chain alone. A pure function of the chain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainView {
    pub confirmed: BTreeMap<TxId, (Transaction, usize)>,
    pub utxo: BTreeMap<TxId, Output>,
    pub spent_by: BTreeMap<TxId, FamilyKey>,
    /// Sources confirmed as redeemed by two different families.
    pub double_redemptions: usize,
}

impl ChainView {
    pub fn from_chain(chain: &Chain) -> Self {
        let mut view = Self::default();
        for (pos, p) in chain.preliminaries().iter().enumerate() {
            if let Ok(txs) = decode_preliminary_block(p) {
                view.apply_block(pos + 1, &txs);
            }
        }
        view
    }

    pub fn apply_block(&mut self, index: usize, txs: &[Transaction]) {
        for tx in txs {
            let family = FamilyKey::of(tx);
            for s in &tx.sources {
                match self.spent_by.get(s) {
                    Some(f) if *f != family => self.double_redemptions += 1,
                    _ => {}
                }
                self.spent_by.insert(*s, family.clone());
                self.utxo.remove(s);
            }
        }
        for tx in txs {
            let id = tx.id();
            self.confirmed.insert(id, (tx.clone(), index));
            if !self.spent_by.contains_key(&id) {
                self.utxo.insert(
                    id,
                    Output {
                        owners: tx.receivers.clone(),
                        amount: tx.amount,
                        block: index,
                    },
                );
            }
        }
    }

    pub fn balance(&self, node: NodeId) -> u64 {
        self.utxo
            .values()
            .filter(|o| o.owners.contains(&node))
            .map(|o| o.amount)
            .sum()
    }

    pub fn supply(&self) -> u64 {
        self.utxo.values().map(|o| o.amount).sum()
    }

    pub fn missing_sources(&self, txs: &[Transaction]) -> bool {
        txs.iter()
            .flat_map(|t| &t.sources)
            .any(|s| !self.confirmed.contains_key(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    RuleViolated(u8),
}

impl Verdict {
    pub fn is_valid(self) -> bool {
        self == Verdict::Valid
    }
}

/// Rules 1 to 4 against `view`, treating `context` as transactions the
/// checker already holds (its log, or the rest of a proposed block).
///
/// Rule 3 also bounds the family's total amount by the value of its
/// sources. Rule 4 fails on a source spent in the chain, reserved for an
/// accepted block, or claimed by a different family in `context`.
pub(crate) fn check(
    tx: &Transaction,
    registry: &KeyRegistry,
    view: &ChainView,
    reservations: &BTreeMap<TxId, FamilyKey>,
    context: &[&Transaction],
) -> Verdict {
    if tx.is_grant() || registry.verify_signature(tx) != Ok(true) {
        return Verdict::RuleViolated(1);
    }
    for s in &tx.sources {
        if let Some((src, _)) = view.confirmed.get(s) {
            if !src.receivers.contains(&tx.sender) {
                return Verdict::RuleViolated(2);
            }
        }
    }
    let distinct: BTreeSet<_> = tx.sources.iter().collect();
    if !tx.is_well_formed() || tx.amount == 0 || distinct.len() != tx.sources.len() {
        return Verdict::RuleViolated(3);
    }
    let mut total = 0u64;
    for s in &tx.sources {
        match view.confirmed.get(s) {
            Some((src, _)) => total = total.saturating_add(src.amount),
            None => return Verdict::RuleViolated(3),
        }
    }
    let id = tx.id();
    let family = FamilyKey::of(tx);
    let siblings: u64 = context
        .iter()
        .filter(|t| t.id() != id && FamilyKey::of(t) == family)
        .map(|t| t.amount)
        .sum();
    if tx.amount.saturating_add(siblings) > total {
        return Verdict::RuleViolated(3);
    }
    if view.confirmed.contains_key(&id) {
        return Verdict::RuleViolated(4);
    }
    for s in &tx.sources {
        if view.spent_by.contains_key(s) || reservations.contains_key(s) {
            return Verdict::RuleViolated(4);
        }
        let rival = context
            .iter()
            .any(|t| t.id() != id && t.sources.contains(s) && FamilyKey::of(t) != family);
        if rival {
            return Verdict::RuleViolated(4);
        }
    }
    Verdict::Valid
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub tx: Transaction,
    pub received: u64,
}

/// Keep/drop outcome for two transactions seen by one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConflictDecision {
    KeepBoth,
    Keep { keep: TxId, drop: TxId },
}

pub struct NodeState {
    id: NodeId,
    pub(crate) chain: Chain,
    key: EncryptionKey,
    signing_secret: SigningKey,
    pub(crate) log: Vec<LogEntry>,
    pub(crate) view: ChainView,
    pub(crate) reservations: BTreeMap<TxId, FamilyKey>,
    pub(crate) pending_blocks: Vec<StateVector>,
    pub(crate) invalid: BTreeSet<TxId>,
    pub(crate) tampered: bool,
}

impl NodeState {
    pub fn new(id: NodeId, chain: Chain, key: EncryptionKey, signing_secret: SigningKey) -> Self {
        let view = ChainView::from_chain(&chain);
        Self {
            id,
            chain,
            key,
            signing_secret,
            log: Vec::new(),
            view,
            reservations: BTreeMap::new(),
            pending_blocks: Vec::new(),
            invalid: BTreeSet::new(),
            tampered: false,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn view(&self) -> &ChainView {
        &self.view
    }

    pub fn utxo_view(&self) -> &BTreeMap<TxId, Output> {
        &self.view.utxo
    }

    pub fn is_tampered(&self) -> bool {
        self.tampered
    }

    pub(crate) fn key(&self) -> &EncryptionKey {
        &self.key
    }

    /// Full validation under the node's own key.
    pub fn validate(&self) -> ValidationReport {
        self.chain.validate(Some(&self.key))
    }

    pub fn in_log(&self, id: &TxId) -> bool {
        self.log.iter().any(|e| e.tx.id() == *id)
    }

    pub(crate) fn append_block(&mut self, preliminary: &StateVector, txs: &[Transaction]) -> Result<usize, NetError> {
        let index = self.chain.append(preliminary, &self.key)?;
        self.view.apply_block(index, txs);
        for tx in txs {
            for s in &tx.sources {
                self.reservations.remove(s);
            }
        }
        self.purge_log();
        Ok(index)
    }

    /// Drops confirmed transactions and any that conflict with the chain.
    /// Returns the dropped conflicting ids.
    pub(crate) fn purge_log(&mut self) -> Vec<TxId> {
        let view = &self.view;
        let mut dropped = Vec::new();
        self.log.retain(|e| {
            let id = e.tx.id();
            if view.confirmed.contains_key(&id) {
                return false;
            }
            let family = FamilyKey::of(&e.tx);
            let conflicts = e
                .tx
                .sources
                .iter()
                .any(|s| view.spent_by.get(s).is_some_and(|f| *f != family));
            if conflicts {
                dropped.push(id);
            }
            !conflicts
        });
        self.invalid.extend(dropped.iter().copied());
        dropped
    }

    /// Rebuilds every chain-derived field.
    pub(crate) fn refresh_view(&mut self) {
        self.view = ChainView::from_chain(&self.chain);
        self.purge_log();
    }
}

/// Checks `tx` against the node's chain, reservations and log.
pub fn verify_transaction(tx: &Transaction, node: &NodeState, registry: &KeyRegistry) -> Verdict {
    let context: Vec<&Transaction> = node.log.iter().map(|e| &e.tx).collect();
    check(tx, registry, &node.view, &node.reservations, &context)
}

/// First-seen rule: of two transactions redeeming a common source, the one
/// that entered the node's log first stays. If neither is logged, `a` is
/// taken to have arrived first.
pub fn handle_conflict(node: &NodeState, a: &Transaction, b: &Transaction) -> ConflictDecision {
    let shared = a.sources.iter().any(|s| b.sources.contains(s));
    if !shared || FamilyKey::of(a) == FamilyKey::of(b) {
        return ConflictDecision::KeepBoth;
    }
    let (ia, ib) = (a.id(), b.id());
    let pos = |id: TxId| node.log.iter().position(|e| e.tx.id() == id);
    let a_first = match (pos(ia), pos(ib)) {
        (Some(x), Some(y)) => x < y,
        (None, Some(_)) => false,
        _ => true,
    };
    if a_first {
        ConflictDecision::Keep { keep: ia, drop: ib }
    } else {
        ConflictDecision::Keep { keep: ib, drop: ia }
    }
}

/// Payment of `amount` to `receiver` plus change back to the sender, both
/// signed and redeeming the same oldest-first source selection. Outputs
/// already claimed by the node's log or reservations are not reused.
pub fn create_transaction(
    node: &NodeState,
    receiver: NodeId,
    amount: u64,
    timestamp: u64,
) -> Result<Vec<Transaction>, NetError> {
    if amount == 0 {
        return Err(NetError::InvalidAmount);
    }
    let claimed: BTreeSet<TxId> = node
        .log
        .iter()
        .flat_map(|e| e.tx.sources.iter().copied())
        .chain(node.reservations.keys().copied())
        .collect();
    let mut mine: Vec<(&TxId, &Output)> = node
        .view
        .utxo
        .iter()
        .filter(|(id, o)| o.owners.contains(&node.id) && !claimed.contains(id))
        .collect();
    mine.sort_by_key(|(id, o)| (o.block, **id));

    let mut sources = Vec::new();
    let mut total = 0u64;
    for (id, o) in mine {
        if total >= amount {
            break;
        }
        sources.push(*id);
        total += o.amount;
    }
    if total < amount {
        return Err(NetError::InsufficientFunds {
            node: node.id,
            available: total,
            requested: amount,
        });
    }
    let mut out = vec![signed(
        Transaction::new(node.id, vec![receiver], amount, sources.clone(), timestamp),
        &node.signing_secret,
    )];
    if total > amount {
        out.push(signed(
            Transaction::new(node.id, vec![node.id], total - amount, sources, timestamp),
            &node.signing_secret,
        ));
    }
    Ok(out)
}
