use std::collections::{BTreeSet, VecDeque};
use std::sync::{Arc, Mutex};

use rand::RngCore;

use blockemu_core::calibration::{DifficultyTimeMap, SolveTimeSampler, SolveTimeStats};
use blockemu_core::consensus::{
    AttemptTimer, ConsensusError, ConsensusProvider, Mined, NakamotoReal, NakamotoReplay, Proof, ProofContext,
};
use blockemu_core::engine::{is_majority, Emulation, EngineError, Mode, NoProbe, SimConfig};
use blockemu_core::ledger::{Block, GENESIS_ID};
use blockemu_core::netqueue::LatencyModel;
use blockemu_core::puzzle::Difficulty;
use blockemu_core::{run_emulation, CalibrationError};

fn d(s: &str) -> Difficulty {
    s.parse().unwrap()
}

fn map_with(diff: &str, mean: f64, sd: f64, min: f64, max: f64) -> Arc<DifficultyTimeMap> {
    let mut map = DifficultyTimeMap::new("test-host");
    map.insert(SolveTimeStats::new(d(diff), mean, sd, 30, min, max).unwrap())
        .unwrap();
    Arc::new(map)
}

fn slow_map() -> Arc<DifficultyTimeMap> {
    map_with("1.0", 600_000.0, 60_000.0, 200_000.0, 1_000_000.0)
}

fn fixed_latency(ms: f64) -> LatencyModel {
    LatencyModel {
        mean_ms: ms,
        stddev_ms: 0.0,
        floor_ms: 1.0,
    }
}

fn replay_config(nodes: u32, txns: u64, seed: u64) -> SimConfig {
    SimConfig {
        seed,
        ..SimConfig::new(nodes, txns, d("1.0"))
    }
}

#[test]
fn single_node_real_mode_commits_one_full_block() {
    let provider = NakamotoReal::new(Arc::new(AttemptTimer { ms_per_attempt: 1.0 }));
    let config = SimConfig {
        mode: Mode::Real,
        block_size: 10,
        ..SimConfig::new(1, 10, Difficulty::ZERO)
    };
    let mut emu = Emulation::new(config, &provider, None, &NoProbe).unwrap();
    let m = emu.run().unwrap();
    assert!(m.completed);
    assert_eq!(m.blocks_committed, 1);
    assert_eq!(m.txns_committed, 10);
    assert_eq!(emu.nodes()[0].store().len(), 2);
    assert_eq!(emu.commits()[0].votes, 1);
    assert_eq!(m.events_processed, m.events_pushed);
}

#[test]
fn zero_transactions_finish_immediately() {
    let provider = NakamotoReplay::new(slow_map());
    let map = slow_map();
    let m = run_emulation(replay_config(3, 0, 1), &provider, Some(&map)).unwrap();
    assert!(m.completed);
    assert_eq!(m.blocks_formed, 0);
    assert_eq!(m.events_processed, 0);
}

#[test]
fn replay_mode_requires_a_covering_map() {
    let map = slow_map();
    let provider = NakamotoReplay::new(map.clone());
    let mut config = replay_config(2, 10, 0);
    assert!(matches!(
        run_emulation(config.clone(), &provider, None),
        Err(EngineError::MissingMap)
    ));
    config.difficulty = d("2.0");
    assert!(matches!(
        run_emulation(config, &provider, Some(&map)),
        Err(EngineError::Calibration(CalibrationError::Miss(_)))
    ));
}

#[test]
fn invalid_configurations_are_rejected() {
    let map = slow_map();
    let provider = NakamotoReplay::new(map.clone());
    for config in [
        replay_config(0, 10, 0),
        SimConfig {
            block_size: 0,
            ..replay_config(2, 10, 0)
        },
        SimConfig {
            txn_rate: 0.0,
            ..replay_config(2, 10, 0)
        },
    ] {
        assert!(matches!(
            run_emulation(config, &provider, Some(&map)),
            Err(EngineError::Config(_))
        ));
    }
}

#[test]
fn strict_majority_thresholds() {
    assert!(is_majority(1, 1));
    assert!(!is_majority(1, 2));
    assert!(!is_majority(2, 4) && is_majority(3, 4));
    assert!(!is_majority(2, 5) && is_majority(3, 5));
}

#[test]
fn commits_land_exactly_on_the_majority_vote() {
    for (nodes, needed) in [(1u32, 1u32), (4, 3), (5, 3)] {
        let map = slow_map();
        let provider = NakamotoReplay::new(map.clone());
        let config = SimConfig {
            latency: fixed_latency(100.0),
            ..replay_config(nodes, 200, 11)
        };
        let mut emu = Emulation::new(config, &provider, Some(&map), &NoProbe).unwrap();
        let m = emu.run().unwrap();
        assert!(m.completed, "{nodes} nodes");
        assert!(m.blocks_committed >= 2);
        for c in emu.commits() {
            assert_eq!(c.votes, needed, "{nodes} nodes, block {}", c.block_id);
        }
    }
}

#[test]
fn identical_seeds_give_identical_runs() {
    let map = slow_map();
    let provider = NakamotoReplay::new(map.clone());
    let run = |seed| {
        let mut emu = Emulation::new(replay_config(20, 1000, seed), &provider, Some(&map), &NoProbe).unwrap();
        let m = emu.run().unwrap();
        let chains: Vec<Vec<u64>> = emu.nodes().iter().map(|n| n.store().longest_chain()).collect();
        (m.deterministic_part(), emu.commits().to_vec(), chains)
    };
    let a = run(7);
    assert_eq!(a, run(7));
    assert_ne!(a.0.trace_digest, run(8).0.trace_digest);
}

#[test]
fn committed_blocks_form_one_chain_shared_by_every_node() {
    let map = slow_map();
    let provider = NakamotoReplay::new(map.clone());
    let mut emu = Emulation::new(replay_config(30, 2000, 5), &provider, Some(&map), &NoProbe).unwrap();
    let m = emu.run().unwrap();
    assert!(m.completed);
    assert_eq!(m.txns_committed, 2000);
    assert_eq!(m.events_processed, m.events_pushed);
    let commits = emu.commits();
    let mut parent = GENESIS_ID;
    let mut seen = BTreeSet::new();
    for c in commits {
        assert_eq!(c.parent, parent);
        assert!(is_majority(c.votes, 30));
        parent = c.block_id;
    }
    for node in emu.nodes() {
        let chain = node.store().longest_chain();
        assert_eq!(&chain[1..=commits.len()], commits.iter().map(|c| c.block_id).collect::<Vec<_>>());
        assert!(node.store().verify_integrity(|b| provider.verify_proof(b, d("1.0"))));
    }
    let tip = emu.nodes()[0].store();
    for id in &tip.longest_chain()[1..=commits.len()] {
        for t in tip.get(*id).unwrap().txn_list.transactions().unwrap() {
            assert!(seen.insert(t.txn_id), "txn {} committed twice", t.txn_id);
        }
    }
    assert_eq!(seen.len(), 2000);
    let mut last = 0;
    for row in &m.series {
        assert!(row.blocks_committed >= last);
        last = row.blocks_committed;
    }
}

#[test]
fn fast_solves_and_slow_network_still_converge() {
    let map = map_with("1.0", 50.0, 40.0, 5.0, 200.0);
    let provider = NakamotoReplay::new(map.clone());
    let config = SimConfig {
        max_events: Some(2_000_000),
        ..replay_config(8, 500, 3)
    };
    let mut emu = Emulation::new(config, &provider, Some(&map), &NoProbe).unwrap();
    let m = emu.run().unwrap();
    assert!(m.completed, "{m:?}");
    assert!(m.forks_observed > 0);
    assert!(m.stale_work > 0);
}

#[test]
fn near_simultaneous_solves_settle_through_commits() {
    // every node solves within microseconds of the others, far below latency
    let map = map_with("1.0", 0.012, 0.006, 0.003, 0.03);
    let provider = NakamotoReplay::new(map.clone());
    let mut emu = Emulation::new(replay_config(100, 1000, 7), &provider, Some(&map), &NoProbe).unwrap();
    let m = emu.run().unwrap();
    assert!(m.completed, "{m:?}");
    assert_eq!(m.txns_committed, 1000);
    assert!(m.forks_observed > 0 && m.rejected_commits > 0);
    let committed: Vec<_> = emu.commits().iter().map(|c| c.block_id).collect();
    for node in emu.nodes() {
        assert_eq!(&node.store().longest_chain()[1..=committed.len()], &committed[..]);
    }
}

#[test]
fn real_mode_at_low_difficulty_completes_with_many_nodes() {
    let provider = NakamotoReal::new(Arc::new(AttemptTimer { ms_per_attempt: 0.001 }));
    let config = SimConfig {
        mode: Mode::Real,
        seed: 2,
        ..SimConfig::new(50, 300, d("1.0"))
    };
    let m = run_emulation(config, &provider, None).unwrap();
    assert!(m.completed);
    assert_eq!(m.txns_committed, 300);
}

#[test]
fn stale_work_is_discarded_when_a_peer_wins() {
    // node solve times differ by far more than the latency, so the first
    // finisher wins every round and every other attempt is stale
    let map = slow_map();
    let provider = NakamotoReplay::new(map.clone());
    let mut emu = Emulation::new(replay_config(5, 300, 2), &provider, Some(&map), &NoProbe).unwrap();
    let m = emu.run().unwrap();
    assert_eq!(m.forks_observed, 0);
    assert_eq!(m.blocks_formed, m.blocks_committed);
    assert!(m.stale_work >= 4 * m.blocks_committed);
}

struct Fixed {
    ms: f64,
}

impl ConsensusProvider for Fixed {
    fn name(&self) -> &str {
        "fixed"
    }

    fn generate_proof(&self, candidate: &Block, ctx: &mut ProofContext<'_>) -> Result<Mined, ConsensusError> {
        Ok(Mined {
            proof: Proof::Custom {
                provider: "fixed".into(),
                payload: format!("{}@{}", candidate.header_hash(), ctx.node),
            },
            solve_ms: self.ms + 1000.0 * f64::from(ctx.node),
        })
    }

    fn verify_proof(&self, block: &Block, _: Difficulty) -> bool {
        matches!(&block.proof, Some(Proof::Custom { payload, .. })
            if *payload == format!("{}@{}", block.header_hash(), block.creator_id))
    }
}

#[test]
fn custom_provider_runs_through_the_same_engine() {
    let provider = Fixed { ms: 5_000.0 };
    let config = SimConfig {
        mode: Mode::Real,
        ..replay_config(4, 400, 1)
    };
    let mut emu = Emulation::new(config, &provider, None, &NoProbe).unwrap();
    let m = emu.run().unwrap();
    assert!(m.completed);
    // node 0 is always fastest
    assert!(emu.commits().iter().all(|c| c.creator == 0));
    assert_eq!(m.blocks_committed, 4);
}

struct Recording<'a> {
    inner: &'a dyn ConsensusProvider,
    times: Mutex<Vec<f64>>,
}

impl ConsensusProvider for Recording<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn generate_proof(&self, candidate: &Block, ctx: &mut ProofContext<'_>) -> Result<Mined, ConsensusError> {
        let mined = self.inner.generate_proof(candidate, ctx)?;
        self.times.lock().unwrap().push(mined.solve_ms);
        Ok(mined)
    }

    fn verify_proof(&self, block: &Block, d: Difficulty) -> bool {
        self.inner.verify_proof(block, d)
    }
}

struct Scripted(Mutex<VecDeque<f64>>);

impl SolveTimeSampler for Scripted {
    fn sample(&self, _: &SolveTimeStats, _: &mut dyn RngCore) -> f64 {
        self.0.lock().unwrap().pop_front().expect("script long enough")
    }
}

#[test]
fn replay_and_real_modes_agree_when_times_match() {
    let real = NakamotoReal::new(Arc::new(AttemptTimer { ms_per_attempt: 40.0 }));
    let recording = Recording {
        inner: &real,
        times: Mutex::new(Vec::new()),
    };
    let base = SimConfig {
        difficulty: d("1.1"),
        ..replay_config(6, 600, 9)
    };
    let topology = |provider: &dyn ConsensusProvider, mode, map: Option<&DifficultyTimeMap>| {
        let mut emu = Emulation::new(SimConfig { mode, ..base.clone() }, provider, map, &NoProbe).unwrap();
        let m = emu.run().unwrap();
        assert!(m.completed);
        let shape = |n: &blockemu_core::engine::NodeState| {
            n.store()
                .blocks()
                .map(|b| (b.block_id, b.parent_block, b.creator_id, b.creation_time))
                .collect::<Vec<_>>()
        };
        (emu.nodes().iter().map(shape).collect::<Vec<_>>(), emu.commits().to_vec())
    };
    let a = topology(&recording, Mode::Real, None);
    let times = recording.times.into_inner().unwrap();
    let map = map_with("1.1", 1000.0, 500.0, 40.0, 5000.0);
    let replay = NakamotoReplay::with_sampler(map.clone(), Arc::new(Scripted(Mutex::new(times.into()))));
    let b = topology(&replay, Mode::Replay, Some(&map));
    assert!(a.1.len() >= 6);
    assert_eq!(a, b);
}

#[test]
fn event_cap_stops_an_incomplete_run() {
    let map = slow_map();
    let provider = NakamotoReplay::new(map.clone());
    let config = SimConfig {
        max_events: Some(50),
        ..replay_config(10, 1000, 0)
    };
    let m = run_emulation(config, &provider, Some(&map)).unwrap();
    assert!(!m.completed);
    assert_eq!(m.events_processed, 50);
}
