//! Scripted end-to-end runs: config schema, the tick loop, invariant audit
//! and report files.

use std::collections::BTreeMap;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dump::LedgerDump;
use crate::encoding::DEFAULT_BASE_DIM;
use crate::ledger::{ChainParams, TamperTarget};
use crate::net::{
    ConsensusConfig, Decision, EventRecord, Latency, NetConfig, NetError, NetStats, SimNetwork,
};
use crate::qtoken::{Token, TokenMachine};
use crate::transaction::NodeId;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    ConfigInvalid(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ScenarioError {
    /// Process exit code: 2 for config errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::ConfigInvalid(_) => 2,
            _ => 1,
        }
    }
}

impl From<NetError> for ScenarioError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::InvalidConfig(m) => ScenarioError::ConfigInvalid(m),
            other => ScenarioError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grant {
    pub to: u32,
    pub amount: u64,
}

/// Timed script actions, tagged by `"action"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptAction {
    Send {
        tick: u64,
        from: u32,
        to: u32,
        amount: u64,
    },
    DoubleSpend {
        tick: u64,
        from: u32,
        to_a: u32,
        amount_a: u64,
        to_b: u32,
        amount_b: u64,
    },
    Partition {
        tick: u64,
        groups: Vec<Vec<u32>>,
        duration: u64,
    },
    Tamper {
        tick: u64,
        node: u32,
        target: TamperTarget,
        index: usize,
        coord: usize,
        delta: f64,
    },
    ForkCheck {
        tick: u64,
    },
    MintToken {
        tick: u64,
        node: u32,
        block: usize,
        owner: u32,
        #[serde(default)]
        transfer_to: Option<u32>,
    },
    ForgeToken {
        tick: u64,
        node: u32,
        block: usize,
        owner: u32,
        perturbation: f64,
    },
}

impl ScriptAction {
    pub fn tick(&self) -> u64 {
        match self {
            ScriptAction::Send { tick, .. }
            | ScriptAction::DoubleSpend { tick, .. }
            | ScriptAction::Partition { tick, .. }
            | ScriptAction::Tamper { tick, .. }
            | ScriptAction::ForkCheck { tick }
            | ScriptAction::MintToken { tick, .. }
            | ScriptAction::ForgeToken { tick, .. } => *tick,
        }
    }

    fn nodes(&self) -> Vec<u32> {
        match self {
            ScriptAction::Send { from, to, .. } => vec![*from, *to],
            ScriptAction::DoubleSpend { from, to_a, to_b, .. } => vec![*from, *to_a, *to_b],
            ScriptAction::Partition { groups, .. } => groups.concat(),
            ScriptAction::Tamper { node, .. } | ScriptAction::ForgeToken { node, .. } => vec![*node],
            ScriptAction::ForkCheck { .. } => vec![],
            ScriptAction::MintToken { node, owner, transfer_to, .. } => {
                let mut v = vec![*node, *owner];
                v.extend(transfer_to);
                v
            }
        }
    }
}

fn default_n() -> usize {
    DEFAULT_BASE_DIM
}
fn default_m_max() -> usize {
    16
}
fn default_threshold() -> f64 {
    1.0
}
fn default_block_size() -> usize {
    3
}
fn default_prob() -> f64 {
    1.0
}
fn default_max_ticks() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub nodes: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    pub sample_size: usize,
    #[serde(default = "default_threshold")]
    pub approve_threshold: f64,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    #[serde(default = "default_prob")]
    pub delivery_prob: f64,
    #[serde(default)]
    pub latency: Latency,
    pub genesis_grants: Vec<Grant>,
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub script: Vec<ScriptAction>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| ScenarioError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn consensus(&self) -> ConsensusConfig {
        ConsensusConfig {
            sample_size: self.sample_size,
            approve_threshold: self.approve_threshold,
            block_size: self.block_size,
        }
    }

    /// Schema-level checks that need no simulation.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::ConfigInvalid(m));
        if self.nodes < 2 {
            return invalid("need at least two nodes".into());
        }
        self.consensus().validate(self.nodes)?;
        ChainParams::new(self.n, self.m_max).map_err(|e| ScenarioError::ConfigInvalid(e.to_string()))?;
        if self.max_ticks == 0 {
            return invalid("max_ticks must be positive".into());
        }
        for g in &self.genesis_grants {
            if g.to as usize >= self.nodes {
                return invalid(format!("genesis grant to unknown node {}", g.to));
            }
        }
        for a in &self.script {
            if let Some(bad) = a.nodes().into_iter().find(|&n| n as usize >= self.nodes) {
                return invalid(format!("script names unknown node {bad}"));
            }
            if a.tick() > self.max_ticks {
                return invalid(format!("script action after max_ticks at tick {}", a.tick()));
            }
        }
        Ok(())
    }

    fn net_config(&self) -> Result<NetConfig, ScenarioError> {
        Ok(NetConfig {
            nodes: self.nodes,
            chain: ChainParams::new(self.n, self.m_max)
                .map_err(|e| ScenarioError::ConfigInvalid(e.to_string()))?,
            consensus: self.consensus(),
            delivery_prob: self.delivery_prob,
            latency: self.latency,
            genesis: self.genesis_grants.iter().map(|g| (NodeId(g.to), g.amount)).collect(),
            seed: self.seed,
        })
    }
}

/// Bundled scenario files, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("happy_path", include_str!("../scenarios/happy_path.json")),
    ("double_spend", include_str!("../scenarios/double_spend.json")),
    ("broadcast_fork", include_str!("../scenarios/broadcast_fork.json")),
    ("tamper", include_str!("../scenarios/tamper.json")),
    ("token_forgery", include_str!("../scenarios/token_forgery.json")),
];

pub fn bundled(name: &str) -> Option<ScenarioConfig> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ScenarioConfig::from_json(text).expect("bundled scenario parses"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TamperRecord {
    pub node: u32,
    pub index: usize,
    pub first_invalid_index: Option<usize>,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DoubleSpendRecord {
    pub payments: [String; 2],
    /// The payment every node confirmed, if they agree on exactly one.
    pub confirmed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub seed: u64,
    pub ticks: u64,
    pub blocks_confirmed: usize,
    pub forks_resolved: usize,
    pub tamper_detections: usize,
    pub invariant_failures: usize,
    pub failures: Vec<String>,
    pub supply: u64,
    pub sends_failed: usize,
    pub tokens_minted: usize,
    pub forgeries_rejected: usize,
    pub max_unitarity_residual: f64,
    pub stats: NetStats,
    pub tampers: Vec<TamperRecord>,
    pub double_spends: Vec<DoubleSpendRecord>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: Summary,
    pub events: Vec<EventRecord>,
    pub dumps: Vec<LedgerDump>,
    /// Dumps of nodes taken right before they were reconciled.
    pub pre_reconcile: Vec<LedgerDump>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        i32::from(self.summary.invariant_failures > 0)
    }

    pub fn events_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("plain record") + "\n")
            .collect()
    }

    /// Writes `events.jsonl`, `summary.json`, `ledger_node<i>.json` and, for
    /// reconciled nodes, `ledger_node<i>_pre_reconcile.json`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("events.jsonl"), self.events_jsonl())?;
        let mut summary = serde_json::to_string_pretty(&self.summary).expect("plain record");
        summary.push('\n');
        std::fs::write(dir.join("summary.json"), summary)?;
        for d in &self.dumps {
            let name = format!("ledger_node{}.json", d.node.unwrap_or_default());
            std::fs::File::create(dir.join(name))?.write_all(d.to_json().as_bytes())?;
        }
        for d in &self.pre_reconcile {
            let name = format!("ledger_node{}_pre_reconcile.json", d.node.unwrap_or_default());
            std::fs::write(dir.join(name), d.to_json())?;
        }
        Ok(())
    }
}

struct Run {
    sim: SimNetwork,
    machines: BTreeMap<u32, TokenMachine>,
    seed: u64,
    failures: Vec<String>,
    forks_resolved: usize,
    max_residual: f64,
    pre_reconcile: Vec<LedgerDump>,
    sends_failed: usize,
    tokens_minted: usize,
    forgeries_rejected: usize,
    tampers: Vec<TamperRecord>,
    double_spends: Vec<[crate::transaction::TxId; 2]>,
}

impl Run {
    fn fork_check(&mut self) -> Result<(), ScenarioError> {
        let check = self.sim.fork_check()?;
        for rec in check.reconciled {
            self.forks_resolved += 1;
            self.max_residual = self.max_residual.max(rec.unitarity_residual);
            self.pre_reconcile.retain(|d| d.node != rec.before.node);
            self.pre_reconcile.push(rec.before);
        }
        Ok(())
    }

    fn machine(&mut self, node: u32) -> &mut TokenMachine {
        let seed = self.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(u64::from(node) + 1));
        self.machines.entry(node).or_insert_with(|| TokenMachine::new(seed))
    }

    fn apply(&mut self, action: &ScriptAction) -> Result<(), ScenarioError> {
        match action {
            ScriptAction::Send { from, to, amount, .. } => {
                match self.sim.send(NodeId(*from), NodeId(*to), *amount) {
                    Ok(_) => {}
                    Err(NetError::InsufficientFunds { .. }) => self.sends_failed += 1,
                    Err(e) => return Err(e.into()),
                }
            }
            ScriptAction::DoubleSpend { from, to_a, amount_a, to_b, amount_b, .. } => {
                let (a, b) = self.sim.double_spend(
                    NodeId(*from),
                    (NodeId(*to_a), *amount_a),
                    (NodeId(*to_b), *amount_b),
                )?;
                self.double_spends.push([a[0].id(), b[0].id()]);
            }
            ScriptAction::Partition { groups, duration, .. } => {
                let groups: Vec<Vec<NodeId>> = groups
                    .iter()
                    .map(|g| g.iter().map(|&n| NodeId(n)).collect())
                    .collect();
                self.sim.partition(&groups, *duration)?;
            }
            ScriptAction::Tamper { node, target, index, coord, delta, .. } => {
                let report = self.sim.tamper(NodeId(*node), *target, *index, *coord, *delta)?;
                self.tampers.push(TamperRecord {
                    node: *node,
                    index: *index,
                    first_invalid_index: report.first_invalid_index,
                    detected: report.first_invalid_index.is_some_and(|i| i <= *index),
                });
            }
            ScriptAction::ForkCheck { .. } => self.fork_check()?,
            ScriptAction::MintToken { node, block, owner, transfer_to, .. } => {
                let chain = self.sim.node(NodeId(*node))?.chain().clone();
                let m = self.machine(*node);
                let token = match m.mint_token(&chain, *block, NodeId(*owner)) {
                    Ok(t) => t,
                    Err(e) => {
                        self.failures.push(format!("mint on node{node} failed: {e}"));
                        return Ok(());
                    }
                };
                let mut ok = m.verify_token(&token);
                if let Some(to) = transfer_to {
                    match m.transfer_token(&token, NodeId(*to), None) {
                        Ok(next) => ok &= m.verify_token(&next) && !m.verify_token(&token),
                        Err(_) => ok = false,
                    }
                }
                ok &= m.correspondence_holds();
                self.tokens_minted += 1;
                if !ok {
                    self.failures.push(format!("token lifecycle failed on node{node}"));
                }
            }
            ScriptAction::ForgeToken { node, block, owner, perturbation, .. } => {
                let chain = self.sim.node(NodeId(*node))?.chain().clone();
                let m = self.machine(*node);
                let token = match m.mint_token(&chain, *block, NodeId(*owner)) {
                    Ok(t) => t,
                    Err(e) => {
                        self.failures.push(format!("mint on node{node} failed: {e}"));
                        return Ok(());
                    }
                };
                let mut perturbed = token.clone();
                perturbed.qstate.amps_mut()[0].re += perturbation;
                let fabricated = Token {
                    serial: format!("{}-forged", token.serial),
                    ..token.clone()
                };
                let genuine_ok = m.verify_token(&token);
                let forgeries = [perturbed, fabricated];
                let rejected = forgeries.iter().filter(|f| !m.verify_token(f)).count();
                self.tokens_minted += 1;
                self.forgeries_rejected += rejected;
                if !genuine_ok || rejected != forgeries.len() {
                    self.failures.push(format!("forgery check failed on node{node}"));
                }
            }
        }
        Ok(())
    }

    fn final_audit(&mut self) {
        self.failures.extend(self.sim.audit());
        for t in &mut self.tampers {
            let node = &self.sim.nodes()[t.node as usize];
            let report = node.validate();
            t.first_invalid_index = report.first_invalid_index;
            t.detected = report.first_invalid_index.is_some_and(|i| i <= t.index);
            if !t.detected {
                self.failures.push(format!("tamper on node{} block {} undetected", t.node, t.index));
            }
        }
    }

    fn double_spend_records(&mut self) -> Vec<DoubleSpendRecord> {
        let mut out = Vec::new();
        for pair in &self.double_spends {
            let mut winners = Vec::new();
            for node in self.sim.nodes().iter().filter(|n| !n.is_tampered()) {
                let hits: Vec<_> = pair
                    .iter()
                    .filter(|id| node.view().confirmed.contains_key(id))
                    .collect();
                if hits.len() != 1 {
                    self.failures.push(format!(
                        "{} confirms {} of two conflicting payments",
                        node.id(),
                        hits.len()
                    ));
                }
                winners.push(hits.first().map(|id| id.to_hex()));
            }
            winners.dedup();
            let confirmed = match winners.as_slice() {
                [Some(w)] => Some(w.clone()),
                _ => {
                    self.failures.push("nodes disagree on the double-spend winner".into());
                    None
                }
            };
            out.push(DoubleSpendRecord {
                payments: [pair[0].to_hex(), pair[1].to_hex()],
                confirmed,
            });
        }
        out
    }
}

/// Executes a scenario. Invariant violations are reported in the summary;
/// only configuration and simulator errors are returned as `Err`.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport, ScenarioError> {
    config.validate()?;
    let sim = SimNetwork::new(config.net_config()?)?;
    let mut script = config.script.clone();
    script.sort_by_key(ScriptAction::tick);
    let last_tick = script.last().map_or(0, ScriptAction::tick);
    let mut run = Run {
        sim,
        machines: BTreeMap::new(),
        seed: config.seed,
        failures: Vec::new(),
        forks_resolved: 0,
        max_residual: 0.0,
        pre_reconcile: Vec::new(),
        sends_failed: 0,
        tokens_minted: 0,
        forgeries_rejected: 0,
        tampers: Vec::new(),
        double_spends: Vec::new(),
    };

    let mut next = 0;
    let mut rejected_streak = 0;
    let mut quiet = false;
    while run.sim.clock() <= config.max_ticks {
        run.sim.deliver_due()?;
        while next < script.len() && script[next].tick() == run.sim.clock() {
            run.apply(&script[next])?;
            next += 1;
        }
        let proposal = run.sim.propose_next()?;
        match &proposal {
            Some((_, Decision::Reject { .. })) => rejected_streak += 1,
            _ => rejected_streak = 0,
        }
        let stuck = proposal.is_none() || rejected_streak >= config.nodes;
        if run.sim.clock() >= last_tick
            && run.sim.queue_is_empty()
            && !run.sim.partition_active()
            && stuck
        {
            quiet = true;
            break;
        }
        run.sim.advance();
    }
    if !quiet {
        run.failures.push(format!("no quiescence within {} ticks", config.max_ticks));
    }
    run.fork_check()?;
    run.final_audit();
    let double_spends = run.double_spend_records();

    let honest: Vec<_> = run.sim.nodes().iter().filter(|n| !n.is_tampered()).collect();
    let supply = honest.first().map_or(0, |n| n.view().supply());
    let summary = Summary {
        name: config.name.clone(),
        seed: config.seed,
        ticks: run.sim.clock(),
        blocks_confirmed: run.sim.stats().accepted_rounds,
        forks_resolved: run.forks_resolved,
        tamper_detections: run.tampers.iter().filter(|t| t.detected).count(),
        invariant_failures: run.failures.len(),
        failures: run.failures.clone(),
        supply,
        sends_failed: run.sends_failed,
        tokens_minted: run.tokens_minted,
        forgeries_rejected: run.forgeries_rejected,
        max_unitarity_residual: run.max_residual,
        stats: run.sim.stats(),
        tampers: run.tampers.clone(),
        double_spends,
    };
    let dumps = run
        .sim
        .nodes()
        .iter()
        .map(|n| LedgerDump::from_chain(n.chain(), Some(n.id().0)))
        .collect();
    Ok(RunReport {
        summary,
        events: run.sim.events().to_vec(),
        dumps,
        pre_reconcile: run.pre_reconcile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse() {
        for (name, _) in BUNDLED {
            assert_eq!(bundled(name).unwrap().name, *name);
        }
    }

    #[test]
    fn unknown_keys_and_bad_samples_are_config_errors() {
        let text = BUNDLED[0].1.replacen("\"seed\"", "\"colour\": 1, \"seed\"", 1);
        assert!(matches!(ScenarioConfig::from_json(&text), Err(ScenarioError::ConfigInvalid(_))));
        let mut cfg = bundled("happy_path").unwrap();
        cfg.sample_size = cfg.nodes + 1;
        let err = run_scenario(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn happy_path_is_clean() {
        let report = run_scenario(&bundled("happy_path").unwrap()).unwrap();
        let s = &report.summary;
        assert_eq!(s.invariant_failures, 0, "{:?}", s.failures);
        assert_eq!(s.sends_failed, 0);
        assert!(s.blocks_confirmed >= 4);
        let first = &report.dumps[0];
        assert!(report.dumps.iter().all(|d| crate::dump::diff_dumps(first, d).identical));
    }
}
