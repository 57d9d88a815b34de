//! The emulation driver.
//!
//! Nodes are plain state records advanced by one event loop. Transactions
//! enter a shared log on a fixed schedule and are visible to every node at
//! once; each block carries the next contiguous run of the log after its
//! parent's run, so a node's mempool is the part of the log beyond its tip.
//!
//! A node mines whenever a full block is pending, or once the workload is
//! exhausted, whatever remains. Every node votes once for each valid block it
//! receives, the creator included. A block commits at its creator once a
//! strict majority has voted and its parent has committed, and a sibling of a
//! committed block never commits. The commit notice pins the block as a
//! checkpoint at each node, which moves nodes off losing forks. Mining stops
//! once every transaction is committed and the loop then drains the queue.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use sha2::{Digest as _, Sha256};

use crate::calibration::{CalibrationError, DifficultyTimeMap};
use crate::consensus::{ConsensusError, ConsensusProvider, ProofContext};
use crate::ledger::{AppendOutcome, Block, BlockId, ChainStore, NodeId, Transaction, TxnList, GENESIS_ID};
use crate::netqueue::{broadcast, Event, EventQueue, LatencyError, LatencyModel, Payload};
use crate::puzzle::{Difficulty, Digest};
use crate::time::SimTime;

const NETWORK_STREAM: u64 = 1;
const MINING_STREAM: u64 = 2;
const WORKLOAD_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Real,
    Replay,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Real => "real",
            Mode::Replay => "replay",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown mode `{0}`, expected real or replay")]
pub struct ModeParseError(pub alloc::string::String);

impl FromStr for Mode {
    type Err = ModeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(Mode::Real),
            "replay" => Ok(Mode::Replay),
            _ => Err(ModeParseError(s.into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arrivals {
    /// Evenly spaced at the configured rate.
    Uniform,
    /// Exponential gaps with the configured mean rate.
    Poisson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub node_count: u32,
    pub total_transactions: u64,
    pub difficulty: Difficulty,
    pub mode: Mode,
    pub seed: u64,
    pub block_size: u32,
    pub latency: LatencyModel,
    /// Transactions per simulated second.
    pub txn_rate: f64,
    pub arrivals: Arrivals,
    pub payload_size: u32,
    /// Stop after this many processed events; the run is then incomplete.
    pub max_events: Option<u64>,
}

impl SimConfig {
    pub fn new(node_count: u32, total_transactions: u64, difficulty: Difficulty) -> Self {
        SimConfig {
            node_count,
            total_transactions,
            difficulty,
            mode: Mode::Replay,
            seed: 0,
            block_size: 100,
            latency: LatencyModel::default(),
            txn_rate: 100.0,
            arrivals: Arrivals::Uniform,
            payload_size: 250,
            max_events: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.node_count == 0 {
            return Err(ConfigError::NoNodes);
        }
        if self.block_size == 0 {
            return Err(ConfigError::BlockSize);
        }
        if !(self.txn_rate > 0.0 && self.txn_rate.is_finite()) {
            return Err(ConfigError::TxnRate(self.txn_rate));
        }
        self.latency.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("node count must be at least 1")]
    NoNodes,
    #[error("block size must be at least 1 transaction")]
    BlockSize,
    #[error("transaction rate must be positive and finite, got {0}")]
    TxnRate(f64),
    #[error(transparent)]
    Latency(#[from] LatencyError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error("replay mode needs a difficulty-time map")]
    MissingMap,
}

/// Host measurements taken around a run.
pub trait HostProbe {
    /// Monotonic milliseconds from an arbitrary origin.
    fn wall_ms(&self) -> f64;
    /// Resident memory, when the platform exposes it.
    fn rss_bytes(&self) -> Option<u64>;
}

/// Probe for hosts without a clock: wall time stays zero, memory unknown.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoProbe;

impl HostProbe for NoProbe {
    fn wall_ms(&self) -> f64 {
        0.0
    }

    fn rss_bytes(&self) -> Option<u64> {
        None
    }
}

/// One point of the run's time series, taken at each commit and at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub sim_time: SimTime,
    pub blocks_committed: u64,
    pub txns_committed: u64,
    pub wall_ms: f64,
    pub rss_bytes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRecord {
    pub block_id: BlockId,
    pub parent: BlockId,
    pub creator: NodeId,
    pub depth: u64,
    pub txn_count: u32,
    pub created_at: SimTime,
    pub committed_at: SimTime,
    /// Tally at the moment of commitment.
    pub votes: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub wall_clock_ms: f64,
    /// Time the last transaction committed, or the final clock if the run
    /// did not complete.
    pub simulated_ms: SimTime,
    /// Clock after the queue drained or the run stopped.
    pub final_clock: SimTime,
    pub blocks_formed: u64,
    pub blocks_committed: u64,
    pub forks_observed: u64,
    pub txns_committed: u64,
    pub throughput_txns_per_sec: f64,
    pub stale_work: u64,
    pub invalid_blocks: u64,
    pub duplicate_arrivals: u64,
    pub unknown_votes: u64,
    pub rejected_commits: u64,
    pub events_pushed: u64,
    pub events_processed: u64,
    pub completed: bool,
    /// Digest over every processed event, for determinism checks.
    pub trace_digest: Digest,
    pub series: Vec<SeriesRow>,
    pub peak_rss_bytes: Option<u64>,
}

impl RunMetrics {
    /// Copy with the host-dependent fields cleared.
    pub fn deterministic_part(&self) -> RunMetrics {
        RunMetrics {
            wall_clock_ms: 0.0,
            throughput_txns_per_sec: 0.0,
            peak_rss_bytes: None,
            series: self
                .series
                .iter()
                .map(|r| SeriesRow {
                    wall_ms: 0.0,
                    rss_bytes: None,
                    ..r.clone()
                })
                .collect(),
            ..self.clone()
        }
    }
}

/// Strict majority of `node_count`.
pub fn is_majority(tally: u32, node_count: u32) -> bool {
    u64::from(tally) * 2 > u64::from(node_count)
}

#[derive(Debug, Clone)]
struct ActiveMining {
    parent: BlockId,
    seq: u64,
    block: Block,
}

pub struct NodeState {
    id: NodeId,
    store: ChainStore,
    active: Option<ActiveMining>,
    votes_cast: BTreeSet<BlockId>,
    idle_until: Option<u64>,
}

impl NodeState {
    fn new(id: NodeId) -> Self {
        NodeState {
            id,
            store: ChainStore::new(Block::genesis()),
            active: None,
            votes_cast: BTreeSet::new(),
            idle_until: None,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn store(&self) -> &ChainStore {
        &self.store
    }

    /// Parent and MiningComplete sequence number of the current attempt.
    pub fn active_target(&self) -> Option<(BlockId, u64)> {
        self.active.as_ref().map(|a| (a.parent, a.seq))
    }

    pub fn votes_cast(&self) -> &BTreeSet<BlockId> {
        &self.votes_cast
    }

    pub fn has_voted(&self, block: BlockId) -> bool {
        self.votes_cast.contains(&block)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CommitState {
    Open,
    /// Majority reached, waiting on the parent.
    Ready,
    Committed,
    Rejected,
}

#[derive(Debug, Clone)]
struct BlockMeta {
    parent: BlockId,
    creator: NodeId,
    depth: u64,
    txn_end: u64,
    txn_count: u32,
    created_at: SimTime,
    votes: u32,
    state: CommitState,
    formed_children: u32,
    committed_child: Option<BlockId>,
}

pub struct Emulation<'a> {
    config: SimConfig,
    provider: &'a dyn ConsensusProvider,
    probe: &'a dyn HostProbe,
    queue: EventQueue,
    nodes: Vec<NodeState>,
    txns: Vec<Transaction>,
    meta: BTreeMap<BlockId, BlockMeta>,
    ready: BTreeMap<BlockId, Vec<BlockId>>,
    idle: BTreeMap<u64, Vec<NodeId>>,
    txn_cache: Option<(u64, u64, TxnList)>,
    next_block_id: BlockId,
    net_rng: ChaCha8Rng,
    mining_rng: ChaCha8Rng,
    workload_rng: ChaCha8Rng,
    commits: Vec<CommitRecord>,
    metrics: RunMetrics,
    done: bool,
    started_ms: f64,
    trace: Sha256,
}

impl<'a> Emulation<'a> {
    /// Validates the configuration and checks that the provider can serve
    /// the difficulty. Replay mode also requires `map` to cover it.
    pub fn new(
        config: SimConfig,
        provider: &'a dyn ConsensusProvider,
        map: Option<&DifficultyTimeMap>,
        probe: &'a dyn HostProbe,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        if config.mode == Mode::Replay {
            map.ok_or(EngineError::MissingMap)?.get(config.difficulty)?;
        }
        provider.prepare(config.difficulty)?;
        let rng = |stream| {
            let mut r = ChaCha8Rng::seed_from_u64(config.seed);
            r.set_stream(stream);
            r
        };
        let mut meta = BTreeMap::new();
        meta.insert(
            GENESIS_ID,
            BlockMeta {
                parent: GENESIS_ID,
                creator: 0,
                depth: 0,
                txn_end: 0,
                txn_count: 0,
                created_at: SimTime::ZERO,
                votes: config.node_count,
                state: CommitState::Committed,
                formed_children: 0,
                committed_child: None,
            },
        );
        Ok(Emulation {
            nodes: (0..config.node_count).map(NodeState::new).collect(),
            net_rng: rng(NETWORK_STREAM),
            mining_rng: rng(MINING_STREAM),
            workload_rng: rng(WORKLOAD_STREAM),
            config,
            provider,
            probe,
            queue: EventQueue::new(),
            txns: Vec::new(),
            meta,
            ready: BTreeMap::new(),
            idle: BTreeMap::new(),
            txn_cache: None,
            next_block_id: GENESIS_ID + 1,
            commits: Vec::new(),
            metrics: RunMetrics {
                wall_clock_ms: 0.0,
                simulated_ms: SimTime::ZERO,
                final_clock: SimTime::ZERO,
                blocks_formed: 0,
                blocks_committed: 0,
                forks_observed: 0,
                txns_committed: 0,
                throughput_txns_per_sec: 0.0,
                stale_work: 0,
                invalid_blocks: 0,
                duplicate_arrivals: 0,
                unknown_votes: 0,
                rejected_commits: 0,
                events_pushed: 0,
                events_processed: 0,
                completed: false,
                trace_digest: Digest::ZERO,
                series: Vec::new(),
                peak_rss_bytes: None,
            },
            done: false,
            started_ms: 0.0,
            trace: Sha256::new(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.txns
    }

    /// Committed blocks in commit order.
    pub fn commits(&self) -> &[CommitRecord] {
        &self.commits
    }

    /// Drives the loop until the queue drains or the event cap is hit.
    pub fn run(&mut self) -> Result<RunMetrics, EngineError> {
        self.started_ms = self.probe.wall_ms();
        if self.config.total_transactions == 0 {
            self.done = true;
        } else {
            let first = self.txn_time(0, SimTime::ZERO);
            self.push(first, 0, Payload::TxnSubmitted { txn: 0 });
        }
        for i in 0..self.nodes.len() {
            self.schedule_mining(i)?;
        }
        let mut capped = false;
        while let Some(event) = self.queue.pop_earliest() {
            self.record(&event);
            self.dispatch(event)?;
            self.metrics.events_processed += 1;
            if self
                .config
                .max_events
                .is_some_and(|cap| self.metrics.events_processed >= cap)
            {
                capped = true;
                break;
            }
        }
        self.finish(capped);
        Ok(self.metrics.clone())
    }

    fn finish(&mut self, capped: bool) {
        let now = self.queue.now();
        let m = &mut self.metrics;
        m.completed = !capped && m.txns_committed == self.config.total_transactions;
        m.final_clock = now;
        if !m.completed {
            m.simulated_ms = now;
        }
        m.events_pushed = self.queue.pushed();
        m.wall_clock_ms = (self.probe.wall_ms() - self.started_ms).max(0.0);
        m.throughput_txns_per_sec = if m.wall_clock_ms > 0.0 {
            m.txns_committed as f64 / (m.wall_clock_ms / 1000.0)
        } else {
            0.0
        };
        m.trace_digest = Digest(self.trace.clone().finalize().into());
        let at = m.simulated_ms;
        self.sample(at);
    }

    fn record(&mut self, e: &Event) {
        let (kind, key) = match &e.payload {
            Payload::TxnSubmitted { txn } => (0u8, *txn),
            Payload::MiningComplete { block } => (1, *block),
            Payload::BlockArrival { block } => (2, block.block_id),
            Payload::VoteArrival { block, voter } => (3, (*block << 20) ^ u64::from(*voter)),
            Payload::BlockCommitted { block } => (4, *block),
        };
        let mut buf = [0u8; 29];
        buf[..8].copy_from_slice(&e.time.nanos().to_le_bytes());
        buf[8..16].copy_from_slice(&e.seq.to_le_bytes());
        buf[16..20].copy_from_slice(&e.target.to_le_bytes());
        buf[20] = kind;
        buf[21..].copy_from_slice(&key.to_le_bytes());
        self.trace.update(buf);
    }

    fn dispatch(&mut self, event: Event) -> Result<(), EngineError> {
        let node = event.target as usize;
        match event.payload {
            Payload::TxnSubmitted { txn } => self.on_txn_submitted(txn, event.target),
            Payload::MiningComplete { block } => self.on_mining_complete(node, block),
            Payload::BlockArrival { block } => self.on_block_arrival(node, block),
            Payload::VoteArrival { block, voter } => {
                self.on_vote_arrival(node, block, voter);
                Ok(())
            }
            Payload::BlockCommitted { block } => self.on_commit_notice(node, block),
        }
    }

    fn push(&mut self, at: SimTime, target: NodeId, payload: Payload) -> u64 {
        self.queue
            .push(at, target, payload)
            .expect("handlers schedule at or after the current clock")
    }

    fn txn_time(&mut self, index: u64, previous: SimTime) -> SimTime {
        let gap_ms = 1000.0 / self.config.txn_rate;
        match self.config.arrivals {
            Arrivals::Uniform => SimTime::from_ms(index as f64 * gap_ms),
            Arrivals::Poisson if index == 0 => SimTime::ZERO,
            Arrivals::Poisson => {
                let exp = Exp::new(self.config.txn_rate).expect("rate validated positive");
                previous.after_ms(exp.sample(&mut self.workload_rng) * 1000.0)
            }
        }
    }

    fn on_txn_submitted(&mut self, index: u64, creator: NodeId) -> Result<(), EngineError> {
        let now = self.queue.now();
        self.txns.push(Transaction {
            txn_id: index,
            creator_id: creator,
            creation_time: now,
            payload_size: self.config.payload_size,
        });
        let submitted = self.txns.len() as u64;
        if submitted < self.config.total_transactions {
            let at = self.txn_time(submitted, now);
            let target = (submitted % u64::from(self.config.node_count)) as NodeId;
            self.push(at, target, Payload::TxnSubmitted { txn: submitted });
        }
        let woken: Vec<NodeId> = if submitted == self.config.total_transactions {
            core::mem::take(&mut self.idle).into_values().flatten().collect()
        } else {
            match self.idle.first_key_value() {
                Some((&k, _)) if k <= submitted => self.idle.pop_first().map(|(_, v)| v).unwrap_or_default(),
                _ => Vec::new(),
            }
        };
        for node in woken {
            let n = &mut self.nodes[node as usize];
            if n.idle_until.take().is_some() && n.active.is_none() {
                self.schedule_mining(node as usize)?;
            }
        }
        Ok(())
    }

    fn exhausted(&self) -> bool {
        self.txns.len() as u64 == self.config.total_transactions
    }

    fn schedule_mining(&mut self, i: usize) -> Result<(), EngineError> {
        if self.done {
            return Ok(());
        }
        let tip = self.nodes[i].store.tip();
        if let Some(active) = &self.nodes[i].active {
            if active.parent == tip {
                return Ok(());
            }
            self.nodes[i].active = None;
            self.metrics.stale_work += 1;
        }
        let start = self.meta[&tip].txn_end;
        let submitted = self.txns.len() as u64;
        let pending = submitted - start;
        let block_size = u64::from(self.config.block_size);
        let take = if pending >= block_size {
            block_size
        } else if self.exhausted() {
            if pending == 0 {
                return Ok(());
            }
            pending
        } else {
            let wake = start + block_size;
            self.nodes[i].idle_until = Some(wake);
            self.idle.entry(wake).or_default().push(i as NodeId);
            return Ok(());
        };
        self.nodes[i].idle_until = None;
        let txn_list = self.txn_range(start, take);
        let now = self.queue.now();
        let parent = self.nodes[i].store.tip_block();
        let mut candidate = Block {
            block_id: self.next_block_id,
            creation_time: now,
            creator_id: i as NodeId,
            parent_block: Some(tip),
            depth: parent.depth + 1,
            previous_hash: self.nodes[i].store.header_hash(tip).expect("tip is linked"),
            child_list: Vec::new(),
            num_child: 0,
            txn_list,
            proof: None,
        };
        self.next_block_id += 1;
        let mined = self.provider.generate_proof(
            &candidate,
            &mut ProofContext {
                node: i as NodeId,
                difficulty: self.config.difficulty,
                rng: &mut self.mining_rng,
            },
        )?;
        candidate.proof = Some(mined.proof);
        let id = candidate.block_id;
        let seq = self.push(
            now.after_ms(mined.solve_ms),
            i as NodeId,
            Payload::MiningComplete { block: id },
        );
        self.nodes[i].active = Some(ActiveMining {
            parent: tip,
            seq,
            block: candidate,
        });
        Ok(())
    }

    fn txn_range(&mut self, start: u64, len: u64) -> TxnList {
        if let Some((s, l, list)) = &self.txn_cache {
            if *s == start && *l == len {
                return list.clone();
            }
        }
        let list: TxnList = self.txns[start as usize..(start + len) as usize].to_vec().into();
        self.txn_cache = Some((start, len, list.clone()));
        list
    }

    fn on_mining_complete(&mut self, i: usize, block_id: BlockId) -> Result<(), EngineError> {
        let current = self.nodes[i].active.as_ref().is_some_and(|a| a.block.block_id == block_id);
        if !current {
            return Ok(());
        }
        let active = self.nodes[i].active.take().expect("checked above");
        if self.done {
            self.metrics.stale_work += 1;
            return Ok(());
        }
        if active.parent != self.nodes[i].store.tip() {
            self.metrics.stale_work += 1;
            return self.schedule_mining(i);
        }
        let block = active.block;
        let now = self.queue.now();
        let parent = active.parent;
        let txn_count = block.txn_list.len() as u32;
        let txn_end = self.meta[&parent].txn_end + u64::from(txn_count);
        self.meta.insert(
            block_id,
            BlockMeta {
                parent,
                creator: i as NodeId,
                depth: block.depth,
                txn_end,
                txn_count,
                created_at: block.creation_time,
                votes: 1,
                state: CommitState::Open,
                formed_children: 0,
                committed_child: None,
            },
        );
        let parent_meta = self.meta.get_mut(&parent).expect("parent formed");
        parent_meta.formed_children += 1;
        if parent_meta.formed_children > 1 {
            self.metrics.forks_observed += 1;
        }
        self.metrics.blocks_formed += 1;
        let outcome = self.nodes[i].store.append(block.clone());
        debug_assert_eq!(outcome, AppendOutcome::ExtendedTip);
        self.nodes[i].votes_cast.insert(block_id);
        broadcast(
            &mut self.queue,
            i as NodeId,
            &Payload::BlockArrival { block: Arc::new(block) },
            self.config.node_count,
            &self.config.latency,
            &mut self.net_rng,
            now,
        );
        if is_majority(1, self.config.node_count) {
            self.try_commit(block_id);
        }
        self.schedule_mining(i)
    }

    fn on_block_arrival(&mut self, i: usize, block: Arc<Block>) -> Result<(), EngineError> {
        let node = &mut self.nodes[i];
        if node.store.contains(block.block_id) {
            self.metrics.duplicate_arrivals += 1;
            return Ok(());
        }
        if !self.provider.verify_proof(&block, self.config.difficulty) {
            self.metrics.invalid_blocks += 1;
            return Ok(());
        }
        let old_tip = node.store.tip();
        if let AppendOutcome::Rejected(_) = node.store.append((*block).clone()) {
            self.metrics.invalid_blocks += 1;
            return Ok(());
        }
        let retarget = node.store.tip() != old_tip;
        if node.votes_cast.insert(block.block_id) {
            let at = self.queue.now().after_ms(self.config.latency.sample(&mut self.net_rng));
            self.push(
                at,
                block.creator_id,
                Payload::VoteArrival {
                    block: block.block_id,
                    voter: i as NodeId,
                },
            );
        }
        if retarget {
            self.schedule_mining(i)?;
        }
        Ok(())
    }

    fn on_vote_arrival(&mut self, i: usize, block: BlockId, _voter: NodeId) {
        let n = self.config.node_count;
        let Some(meta) = self.meta.get_mut(&block).filter(|m| m.creator as usize == i && block != GENESIS_ID) else {
            self.metrics.unknown_votes += 1;
            return;
        };
        meta.votes += 1;
        if meta.state == CommitState::Open && is_majority(meta.votes, n) {
            self.try_commit(block);
        }
    }

    fn try_commit(&mut self, block: BlockId) {
        if self.done {
            return;
        }
        let mut work = alloc::vec![block];
        while let Some(b) = work.pop() {
            let parent = self.meta[&b].parent;
            let parent_meta = &self.meta[&parent];
            match parent_meta.state {
                CommitState::Committed if parent_meta.committed_child.is_none() => {
                    self.commit(b);
                    work.extend(self.ready.remove(&b).unwrap_or_default());
                }
                CommitState::Committed | CommitState::Rejected => {
                    self.meta.get_mut(&b).expect("formed").state = CommitState::Rejected;
                    self.metrics.rejected_commits += 1;
                    work.extend(self.ready.remove(&b).unwrap_or_default());
                }
                CommitState::Open | CommitState::Ready => {
                    self.meta.get_mut(&b).expect("formed").state = CommitState::Ready;
                    self.ready.entry(parent).or_default().push(b);
                }
            }
        }
    }

    fn commit(&mut self, b: BlockId) {
        let now = self.queue.now();
        let meta = self.meta.get_mut(&b).expect("formed");
        meta.state = CommitState::Committed;
        let record = CommitRecord {
            block_id: b,
            parent: meta.parent,
            creator: meta.creator,
            depth: meta.depth,
            txn_count: meta.txn_count,
            created_at: meta.created_at,
            committed_at: now,
            votes: meta.votes,
        };
        let txn_end = meta.txn_end;
        self.meta.get_mut(&record.parent).expect("parent formed").committed_child = Some(b);
        self.metrics.blocks_committed += 1;
        self.metrics.txns_committed += u64::from(record.txn_count);
        debug_assert_eq!(self.metrics.txns_committed, txn_end);
        let creator = record.creator;
        self.commits.push(record);
        self.push(now, creator, Payload::BlockCommitted { block: b });
        broadcast(
            &mut self.queue,
            creator,
            &Payload::BlockCommitted { block: b },
            self.config.node_count,
            &self.config.latency,
            &mut self.net_rng,
            now,
        );
        if !self.done && txn_end == self.config.total_transactions {
            self.done = true;
            self.metrics.simulated_ms = now;
        }
        self.sample(now);
    }

    fn on_commit_notice(&mut self, i: usize, block: BlockId) -> Result<(), EngineError> {
        if self.nodes[i].store.set_checkpoint(block) {
            self.schedule_mining(i)?;
        }
        Ok(())
    }

    fn sample(&mut self, at: SimTime) {
        let rss = self.probe.rss_bytes();
        if let Some(r) = rss {
            self.metrics.peak_rss_bytes = Some(self.metrics.peak_rss_bytes.map_or(r, |p| p.max(r)));
        }
        self.metrics.series.push(SeriesRow {
            sim_time: at,
            blocks_committed: self.metrics.blocks_committed,
            txns_committed: self.metrics.txns_committed,
            wall_ms: (self.probe.wall_ms() - self.started_ms).max(0.0),
            rss_bytes: rss,
        });
    }
}

/// Builds an [`Emulation`] without a host probe and runs it to the end.
pub fn run_emulation(
    config: SimConfig,
    provider: &dyn ConsensusProvider,
    map: Option<&DifficultyTimeMap>,
) -> Result<RunMetrics, EngineError> {
    Emulation::new(config, provider, map, &NoProbe)?.run()
}
