//! The event loop, consensus rounds and fork checks.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::node::{check, ChainView, ConflictDecision, LogEntry, NodeState, Verdict};
use super::sign::{KeyRegistry, SigningKey};
use super::{
    create_transaction, handle_conflict, short_digest, ConsensusConfig, EventRecord, Latency,
    NetError, Result,
};
use crate::dump::LedgerDump;
use crate::encoding::{
    canonical_block_order, decode_preliminary_block, encode_preliminary_block, CodecError,
};
use crate::fork::reconcile_fork;
use crate::ledger::{Chain, ChainParams, EncryptionKey, TamperTarget, ValidationReport};
use crate::state::StateVector;
use crate::transaction::{NodeId, Transaction};
use num_complex::Complex64;

/// Transaction timestamps per simulation tick.
pub const STAMPS_PER_TICK: u64 = 1000;

/// Everything needed to start a network.
#[derive(Debug, Clone)]
pub struct NetConfig {
    pub nodes: usize,
    pub chain: ChainParams,
    pub consensus: ConsensusConfig,
    pub delivery_prob: f64,
    pub latency: Latency,
    /// Genesis grants `(receiver, amount)`, confirmed in block 1.
    pub genesis: Vec<(NodeId, u64)>,
    pub seed: u64,
}

enum Message {
    Bundle(Vec<Transaction>),
    Block(StateVector),
    Notice(String),
}

struct Delivery {
    from: NodeId,
    to: NodeId,
    msg: Message,
}

/// Outcome of one consensus round.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Accept {
        index: usize,
        preliminary: StateVector,
        txs: Vec<Transaction>,
        voters: Vec<NodeId>,
    },
    Reject {
        approvals: usize,
        voters: Vec<NodeId>,
    },
    /// Nothing in the proposer's log can be proposed yet.
    Idle,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NetStats {
    pub accepted_rounds: usize,
    pub rejected_rounds: usize,
    pub conflicts_dropped: usize,
    pub blocks_buffered: usize,
    pub blocks_rejected: usize,
}

/// One node moved onto the majority record.
#[derive(Debug, Clone)]
pub struct ReconcileRecord {
    pub node: NodeId,
    pub prefix: usize,
    pub rewritten: usize,
    pub unitarity_residual: f64,
    /// The node's dump before reconciliation.
    pub before: LedgerDump,
}

#[derive(Debug, Clone, Default)]
pub struct ForkCheck {
    pub majority: Vec<NodeId>,
    pub reconciled: Vec<ReconcileRecord>,
    pub failed: Vec<(NodeId, String)>,
}

struct Partition {
    group: Vec<usize>,
    heal: u64,
}

pub struct SimNetwork {
    nodes: Vec<NodeState>,
    clock: u64,
    queue: BTreeMap<(u64, u64), Delivery>,
    seq: u64,
    rng: ChaCha8Rng,
    latency: Latency,
    delivery_prob: f64,
    config: ConsensusConfig,
    registry: KeyRegistry,
    partition: Option<Partition>,
    next_proposer: usize,
    stamp: (u64, u64),
    genesis_supply: u64,
    events: Vec<EventRecord>,
    stats: NetStats,
}

impl SimNetwork {
    /// Builds the nodes, draws their keys from the run RNG and confirms the
    /// genesis block everywhere.
    pub fn new(cfg: NetConfig) -> Result<Self> {
        if cfg.nodes < 2 {
            return Err(NetError::InvalidConfig("need at least two nodes".into()));
        }
        cfg.consensus.validate(cfg.nodes)?;
        if !(0.0..=1.0).contains(&cfg.delivery_prob) {
            return Err(NetError::InvalidConfig(format!(
                "delivery_prob {} outside [0, 1]",
                cfg.delivery_prob
            )));
        }
        if cfg.latency.min == 0 || cfg.latency.min > cfg.latency.max {
            return Err(NetError::InvalidConfig(
                "latency needs 1 <= min <= max".into(),
            ));
        }
        if cfg.genesis.is_empty() {
            return Err(NetError::InvalidConfig("no genesis grants".into()));
        }
        for &(to, amount) in &cfg.genesis {
            if to.0 as usize >= cfg.nodes || amount == 0 {
                return Err(NetError::InvalidConfig(format!(
                    "bad genesis grant of {amount} to {to}"
                )));
            }
        }
        let grants: Vec<Transaction> = cfg
            .genesis
            .iter()
            .enumerate()
            .map(|(i, &(to, amount))| Transaction::grant(to, amount, i as u64))
            .collect();
        let genesis = encode_preliminary_block(&grants, cfg.chain.n()).map_err(|e| match e {
            CodecError::PayloadTooLarge { .. } => {
                NetError::InvalidConfig(format!("genesis block does not fit: {e}"))
            }
            other => other.into(),
        })?;

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut registry = KeyRegistry::new();
        let mut nodes = Vec::with_capacity(cfg.nodes);
        let mut events = Vec::new();
        for i in 0..cfg.nodes {
            let id = NodeId(i as u32);
            let key = EncryptionKey::new(rng.gen_range(0.0..=PI))?;
            let secret = SigningKey::generate(&mut rng);
            registry.register(id, secret.clone());
            let mut chain = Chain::new(cfg.chain);
            chain.append(&genesis, &key)?;
            nodes.push(NodeState::new(id, chain, key, secret));
            events.push(EventRecord {
                tick: 0,
                node: id.0,
                event: "genesis".into(),
                payload_digest: hex::encode(&genesis.digest()[..8]),
            });
        }
        Ok(Self {
            nodes,
            clock: 0,
            queue: BTreeMap::new(),
            seq: 0,
            rng,
            latency: cfg.latency,
            delivery_prob: cfg.delivery_prob,
            config: cfg.consensus,
            registry,
            partition: None,
            next_proposer: 0,
            stamp: (0, 0),
            genesis_supply: cfg.genesis.iter().map(|g| g.1).sum(),
            events,
            stats: NetStats::default(),
        })
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn advance(&mut self) {
        self.clock += 1;
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&NodeState> {
        self.nodes.get(id.0 as usize).ok_or(NetError::UnknownNode(id))
    }

    fn idx(&self, id: NodeId) -> Result<usize> {
        self.node(id).map(|_| id.0 as usize)
    }

    pub fn registry(&self) -> &KeyRegistry {
        &self.registry
    }

    pub fn config(&self) -> &ConsensusConfig {
        &self.config
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    pub fn genesis_supply(&self) -> u64 {
        self.genesis_supply
    }

    /// No deliveries pending, including ones held back by a partition.
    pub fn queue_is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn partition_active(&self) -> bool {
        self.partition.as_ref().is_some_and(|p| p.heal > self.clock)
    }

    fn log_event(&mut self, node: NodeId, event: &str, payload: &[u8]) {
        self.events.push(EventRecord {
            tick: self.clock,
            node: node.0,
            event: event.into(),
            payload_digest: short_digest(payload),
        });
    }

    fn schedule(&mut self, at: u64, from: NodeId, to: NodeId, msg: Message) {
        self.seq += 1;
        self.queue.insert((at, self.seq), Delivery { from, to, msg });
    }

    fn sample_latency(&mut self) -> u64 {
        self.rng.gen_range(self.latency.min..=self.latency.max)
    }

    /// Transaction timestamp: the tick times `STAMPS_PER_TICK` plus a
    /// counter, so families created in the same tick stay distinct.
    fn next_stamp(&mut self) -> u64 {
        if self.stamp.0 != self.clock {
            self.stamp = (self.clock, 0);
        }
        self.stamp.1 += 1;
        self.clock * STAMPS_PER_TICK + self.stamp.1.min(STAMPS_PER_TICK - 1)
    }

    fn others(&self, origin: NodeId) -> Vec<NodeId> {
        self.nodes.iter().map(NodeState::id).filter(|&n| n != origin).collect()
    }

    /// Lossy broadcast of a transaction bundle. Each other node receives it
    /// with probability `delivery_prob` after a sampled latency. Returns the
    /// scheduled `(recipient, tick)` pairs.
    pub fn broadcast(&mut self, origin: NodeId, txs: Vec<Transaction>) -> Result<Vec<(NodeId, u64)>> {
        self.idx(origin)?;
        let mut scheduled = Vec::new();
        for to in self.others(origin) {
            if self.rng.gen_bool(self.delivery_prob) {
                let at = self.clock + self.sample_latency();
                self.schedule(at, origin, to, Message::Bundle(txs.clone()));
                scheduled.push((to, at));
            }
        }
        Ok(scheduled)
    }

    /// Reliable announcement of an accepted block.
    fn announce_block(&mut self, origin: NodeId, preliminary: &StateVector) {
        for to in self.others(origin) {
            let at = self.clock + self.sample_latency();
            self.schedule(at, origin, to, Message::Block(preliminary.clone()));
        }
    }

    fn bundle_bytes(txs: &[Transaction]) -> Vec<u8> {
        txs.iter().flat_map(Transaction::canonical_bytes).collect()
    }

    /// Creates a payment at `from`, logs it there and broadcasts it.
    pub fn send(&mut self, from: NodeId, to: NodeId, amount: u64) -> Result<Vec<Transaction>> {
        let i = self.idx(from)?;
        self.idx(to)?;
        let stamp = self.next_stamp();
        let txs = create_transaction(&self.nodes[i], to, amount, stamp)?;
        let received = self.clock;
        self.nodes[i]
            .log
            .extend(txs.iter().map(|tx| LogEntry { tx: tx.clone(), received }));
        self.log_event(from, "send", &Self::bundle_bytes(&txs));
        self.broadcast(from, txs.clone())?;
        Ok(txs)
    }

    /// Two payments redeeming the same outputs. The sender logs the first;
    /// the lower half of the other nodes hears the first one earlier and the
    /// upper half hears the second one earlier.
    pub fn double_spend(
        &mut self,
        from: NodeId,
        first: (NodeId, u64),
        second: (NodeId, u64),
    ) -> Result<(Vec<Transaction>, Vec<Transaction>)> {
        let i = self.idx(from)?;
        self.idx(first.0)?;
        self.idx(second.0)?;
        let (sa, sb) = (self.next_stamp(), self.next_stamp());
        let a = create_transaction(&self.nodes[i], first.0, first.1, sa)?;
        let b = create_transaction(&self.nodes[i], second.0, second.1, sb)?;
        let received = self.clock;
        self.nodes[i]
            .log
            .extend(a.iter().map(|tx| LogEntry { tx: tx.clone(), received }));
        let mut payload = Self::bundle_bytes(&a);
        payload.extend(Self::bundle_bytes(&b));
        self.log_event(from, "double_spend", &payload);
        let others = self.others(from);
        let half = others.len() / 2;
        let (early, late) = (self.clock + self.latency.min, self.clock + self.latency.min + 1);
        for (k, to) in others.into_iter().enumerate() {
            let (ta, tb) = if k < half { (early, late) } else { (late, early) };
            self.schedule(ta, from, to, Message::Bundle(a.clone()));
            self.schedule(tb, from, to, Message::Bundle(b.clone()));
        }
        Ok((a, b))
    }

    /// Splits the network until `clock + duration`. Nodes not listed form
    /// one further group. Messages across groups wait for the heal.
    pub fn partition(&mut self, groups: &[Vec<NodeId>], duration: u64) -> Result<()> {
        let mut group = vec![groups.len(); self.nodes.len()];
        for (g, members) in groups.iter().enumerate() {
            for &m in members {
                group[self.idx(m)?] = g;
            }
        }
        self.partition = Some(Partition {
            group,
            heal: self.clock + duration,
        });
        self.log_event(NodeId(0), "partition", &(self.clock + duration).to_be_bytes());
        Ok(())
    }

    fn reachable(&self, a: NodeId, b: NodeId) -> bool {
        match &self.partition {
            Some(p) if p.heal > self.clock => p.group[a.0 as usize] == p.group[b.0 as usize],
            _ => true,
        }
    }

    /// Processes every delivery due at or before the current tick.
    pub fn deliver_due(&mut self) -> Result<()> {
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > self.clock {
                break;
            }
            let d = entry.remove();
            if !self.reachable(d.from, d.to) {
                let heal = self.partition.as_ref().map_or(self.clock + 1, |p| p.heal);
                self.schedule(heal, d.from, d.to, d.msg);
                continue;
            }
            match d.msg {
                Message::Bundle(txs) => self.receive_bundle(d.to, txs),
                Message::Block(p) => self.receive_block(d.to, p)?,
                Message::Notice(digest) => self.log_event(d.to, "notice_received", digest.as_bytes()),
            }
        }
        Ok(())
    }

    fn receive_bundle(&mut self, to: NodeId, txs: Vec<Transaction>) {
        let payload = Self::bundle_bytes(&txs);
        let i = to.0 as usize;
        let node = &self.nodes[i];
        let ids: Vec<_> = txs.iter().map(Transaction::id).collect();
        let known = ids.iter().all(|id| {
            node.in_log(id) || node.view.confirmed.contains_key(id) || node.invalid.contains(id)
        });
        if known {
            return;
        }
        let mut context: Vec<&Transaction> = node.log.iter().map(|e| &e.tx).collect();
        context.extend(&txs);
        let verdicts: Vec<Verdict> = txs
            .iter()
            .map(|t| check(t, &self.registry, &node.view, &node.reservations, &context))
            .collect();
        if verdicts.iter().all(|v| v.is_valid()) {
            let received = self.clock;
            self.nodes[i]
                .log
                .extend(txs.into_iter().map(|tx| LogEntry { tx, received }));
            self.log_event(to, "tx_logged", &payload);
            return;
        }
        let rival = txs.iter().find_map(|t| {
            node.log.iter().find_map(|e| match handle_conflict(node, &e.tx, t) {
                ConflictDecision::Keep { drop, .. } if drop == t.id() => Some(drop),
                _ => None,
            })
        });
        self.nodes[i].invalid.extend(ids);
        if rival.is_some() {
            self.stats.conflicts_dropped += 1;
            self.log_event(to, "conflict_drop", &payload);
        } else {
            let rule = verdicts
                .iter()
                .find_map(|v| match v {
                    Verdict::RuleViolated(r) => Some(*r),
                    Verdict::Valid => None,
                })
                .unwrap_or(0);
            self.log_event(to, &format!("tx_rejected_rule{rule}"), &payload);
        }
    }

    fn receive_block(&mut self, to: NodeId, preliminary: StateVector) -> Result<()> {
        let i = to.0 as usize;
        let digest = preliminary.digest();
        let node = &self.nodes[i];
        let duplicate = node
            .chain
            .preliminaries()
            .iter()
            .chain(&node.pending_blocks)
            .any(|p| p.digest() == digest);
        if duplicate {
            return Ok(());
        }
        self.nodes[i].pending_blocks.push(preliminary);
        self.drain_pending(to)
    }

    /// Appends every buffered block whose sources are now confirmed.
    fn drain_pending(&mut self, to: NodeId) -> Result<()> {
        let i = to.0 as usize;
        loop {
            let mut progressed = false;
            let pending = std::mem::take(&mut self.nodes[i].pending_blocks);
            let mut keep = Vec::new();
            for p in pending {
                let digest = p.digest();
                let txs = match decode_preliminary_block(&p) {
                    Ok(txs) => txs,
                    Err(_) => {
                        self.stats.blocks_rejected += 1;
                        self.log_event(to, "block_rejected", &digest);
                        continue;
                    }
                };
                let node = &self.nodes[i];
                if node.view.missing_sources(&txs) {
                    if !keep.iter().any(|k: &StateVector| k.digest() == digest) {
                        self.stats.blocks_buffered += 1;
                        self.log_event(to, "block_buffered", &digest);
                    }
                    keep.push(p);
                    continue;
                }
                let context: Vec<&Transaction> = txs.iter().collect();
                let none = BTreeMap::new();
                let ok = txs
                    .iter()
                    .all(|t| check(t, &self.registry, &node.view, &none, &context).is_valid());
                if !ok {
                    self.stats.blocks_rejected += 1;
                    self.log_event(to, "block_rejected", &digest);
                    continue;
                }
                self.nodes[i].append_block(&p, &txs)?;
                self.log_event(to, "block_appended", &digest);
                progressed = true;
            }
            self.nodes[i].pending_blocks = keep;
            if !progressed || self.nodes[i].pending_blocks.is_empty() {
                return Ok(());
            }
        }
    }

    /// Uniform sample of `sample_size` peers, excluding the proposer.
    pub fn select_voters(&mut self, proposer: NodeId) -> Result<Vec<NodeId>> {
        self.idx(proposer)?;
        let peers = self.others(proposer);
        let k = self.config.sample_size;
        if k > peers.len() {
            return Err(NetError::SampleTooLarge {
                sample_size: k,
                peers: peers.len(),
            });
        }
        let mut voters: Vec<NodeId> = sample(&mut self.rng, peers.len(), k)
            .into_iter()
            .map(|j| peers[j])
            .collect();
        voters.sort();
        Ok(voters)
    }

    /// Whole families from the proposer's log, oldest first, that pass the
    /// proposer's own checks. Families that can never pass are dropped from
    /// the log; ones waiting on an unconfirmed source stay.
    fn assemble(&mut self, proposer: usize) -> Result<Vec<Transaction>> {
        let node = &self.nodes[proposer];
        let n = node.chain.params().n();
        let mut families: Vec<Vec<Transaction>> = Vec::new();
        for e in &node.log {
            let key = super::FamilyKey::of(&e.tx);
            match families.iter_mut().find(|f| super::FamilyKey::of(&f[0]) == key) {
                Some(f) => f.push(e.tx.clone()),
                None => families.push(vec![e.tx.clone()]),
            }
        }
        let mut chosen: Vec<Transaction> = Vec::new();
        let mut doomed = BTreeSet::new();
        for fam in families {
            if chosen.len() + fam.len() > self.config.block_size {
                continue;
            }
            let mut context: Vec<&Transaction> = chosen.iter().collect();
            context.extend(&fam);
            let verdicts: Vec<Verdict> = fam
                .iter()
                .map(|t| check(t, &self.registry, &node.view, &node.reservations, &context))
                .collect();
            if verdicts.iter().all(|v| v.is_valid()) {
                let mut trial = chosen.clone();
                trial.extend(fam.iter().cloned());
                match encode_preliminary_block(&trial, n) {
                    Ok(_) => chosen = trial,
                    Err(CodecError::PayloadTooLarge { .. }) => continue,
                    Err(e) => return Err(e.into()),
                }
            } else if !node.view.missing_sources(&fam) {
                // fails on something other than a source still in flight
                doomed.extend(fam.iter().map(Transaction::id));
            }
        }
        if !doomed.is_empty() {
            let node = &mut self.nodes[proposer];
            node.log.retain(|e| !doomed.contains(&e.tx.id()));
            node.invalid.extend(doomed);
        }
        Ok(canonical_block_order(&chosen))
    }

    /// Propose, vote and decide for one proposer.
    pub fn run_consensus_round(&mut self, proposer: NodeId) -> Result<Decision> {
        let p = self.idx(proposer)?;
        if self.nodes[p].log.is_empty() {
            return Err(NetError::EmptyLog(proposer));
        }
        let txs = self.assemble(p)?;
        if txs.is_empty() {
            return Ok(Decision::Idle);
        }
        let n = self.nodes[p].chain.params().n();
        let preliminary = encode_preliminary_block(&txs, n)?;
        let digest = preliminary.digest();
        self.log_event(proposer, "propose", &digest);

        let voters = self.select_voters(proposer)?;
        let context: Vec<&Transaction> = txs.iter().collect();
        let mut approvals = 0;
        let mut vote_events = Vec::new();
        for &v in &voters {
            let node = &self.nodes[v.0 as usize];
            let approve = self.reachable(proposer, v)
                && txs.iter().all(|t| {
                    check(t, &self.registry, &node.view, &node.reservations, &context).is_valid()
                });
            approvals += usize::from(approve);
            vote_events.push((v, if approve { "vote_approve" } else { "vote_reject" }));
        }
        for (v, ev) in vote_events {
            self.log_event(v, ev, &digest);
        }

        let fraction = approvals as f64 / voters.len() as f64;
        if fraction + 1e-12 < self.config.approve_threshold {
            self.stats.rejected_rounds += 1;
            self.log_event(proposer, "wrong_tx_notice", &digest);
            let notice = hex::encode(&digest[..8]);
            for to in self.others(proposer) {
                let at = self.clock + self.latency.min;
                self.schedule(at, proposer, to, Message::Notice(notice.clone()));
            }
            return Ok(Decision::Reject { approvals, voters });
        }

        let index = self.nodes[p].append_block(&preliminary, &txs)?;
        self.stats.accepted_rounds += 1;
        self.log_event(proposer, "block_accepted", &digest);
        let ids: BTreeSet<_> = txs.iter().map(Transaction::id).collect();
        for &v in &voters {
            if !self.reachable(proposer, v) {
                continue;
            }
            let node = &mut self.nodes[v.0 as usize];
            for t in &txs {
                for s in &t.sources {
                    node.reservations.insert(*s, super::FamilyKey::of(t));
                }
            }
            node.log.retain(|e| !ids.contains(&e.tx.id()));
        }
        self.announce_block(proposer, &preliminary);
        Ok(Decision::Accept {
            index,
            preliminary,
            txs,
            voters,
        })
    }

    /// Runs at most one round, for the next node in round-robin order that
    /// has something to propose.
    pub fn propose_next(&mut self) -> Result<Option<(NodeId, Decision)>> {
        let count = self.nodes.len();
        for k in 0..count {
            let i = (self.next_proposer + k) % count;
            if self.nodes[i].log.is_empty() {
                continue;
            }
            let id = self.nodes[i].id();
            match self.run_consensus_round(id)? {
                Decision::Idle => continue,
                d => {
                    self.next_proposer = (i + 1) % count;
                    return Ok(Some((id, d)));
                }
            }
        }
        Ok(None)
    }

    /// Adds `delta` to one stored coordinate of `node`'s chain and returns
    /// the node's own validation report afterwards.
    pub fn tamper(
        &mut self,
        node: NodeId,
        target: TamperTarget,
        index: usize,
        coord: usize,
        delta: f64,
    ) -> Result<ValidationReport> {
        let i = self.idx(node)?;
        self.nodes[i]
            .chain
            .tamper(target, index, coord, Complex64::new(delta, 0.0))?;
        self.nodes[i].tampered = true;
        self.log_event(node, "tamper", &(index as u64).to_be_bytes());
        let report = self.nodes[i].validate();
        Ok(report)
    }

    /// Digest of a node's disclosed record.
    pub fn record_digest(node: &NodeState) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for p in node.chain.preliminaries() {
            h.update(p.digest());
        }
        h.finalize().into()
    }

    /// Finds the most common record among untampered nodes (ties go to the
    /// smallest digest) and reconciles every other untampered node of the
    /// same length onto it.
    pub fn fork_check(&mut self) -> Result<ForkCheck> {
        let mut groups: BTreeMap<[u8; 32], Vec<usize>> = BTreeMap::new();
        for (i, node) in self.nodes.iter().enumerate().filter(|(_, n)| !n.tampered) {
            groups.entry(Self::record_digest(node)).or_default().push(i);
        }
        let Some((_, majority)) = groups
            .iter()
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)))
        else {
            return Ok(ForkCheck::default());
        };
        let majority = majority.clone();
        let reference = self.nodes[majority[0]].chain.preliminaries().to_vec();
        let mut out = ForkCheck {
            majority: majority.iter().map(|&i| self.nodes[i].id()).collect(),
            ..ForkCheck::default()
        };
        let minority: Vec<usize> = groups
            .values()
            .flatten()
            .copied()
            .filter(|i| !majority.contains(i))
            .collect();
        for i in minority {
            let id = self.nodes[i].id();
            if self.nodes[i].chain.len() != reference.len() {
                continue;
            }
            let before = LedgerDump::from_chain(&self.nodes[i].chain, Some(id.0));
            let node = &mut self.nodes[i];
            let key = node.key().clone();
            match reconcile_fork(&mut node.chain, &key, &reference) {
                Ok(rec) => {
                    node.refresh_view();
                    self.log_event(id, "fork_reconciled", &Self::record_digest(&self.nodes[i]));
                    out.reconciled.push(ReconcileRecord {
                        node: id,
                        prefix: rec.prefix,
                        rewritten: rec.rewritten,
                        unitarity_residual: rec.unitarity_residual,
                        before,
                    });
                }
                Err(e) => {
                    self.log_event(id, "fork_unresolved", e.to_string().as_bytes());
                    out.failed.push((id, e.to_string()));
                }
            }
        }
        Ok(out)
    }

    /// Invariant violations among untampered nodes, as readable strings.
    pub fn audit(&self) -> Vec<String> {
        let mut failures = Vec::new();
        let honest: Vec<&NodeState> = self.nodes.iter().filter(|n| !n.tampered).collect();
        for node in &honest {
            let id = node.id();
            let report = node.validate();
            if let Some(i) = report.first_invalid_index {
                failures.push(format!("{id}: chain invalid at block {i}"));
            }
            if node.view != ChainView::from_chain(&node.chain) {
                failures.push(format!("{id}: utxo view differs from its chain"));
            }
            if node.view.double_redemptions > 0 {
                failures.push(format!("{id}: {} double redemptions", node.view.double_redemptions));
            }
            if node.log.iter().any(|e| node.view.confirmed.contains_key(&e.tx.id())) {
                failures.push(format!("{id}: log holds a confirmed transaction"));
            }
            if node.view.supply() != self.genesis_supply {
                failures.push(format!(
                    "{id}: supply {} != genesis supply {}",
                    node.view.supply(),
                    self.genesis_supply
                ));
            }
            if !node.pending_blocks.is_empty() {
                failures.push(format!("{id}: {} blocks never applied", node.pending_blocks.len()));
            }
        }
        let digests: BTreeSet<_> = honest.iter().map(|n| Self::record_digest(n)).collect();
        if digests.len() > 1 {
            failures.push(format!("{} distinct disclosed records", digests.len()));
        }
        failures
    }
}
