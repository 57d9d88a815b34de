use std::collections::BTreeMap;

use blockemu_core::consensus::{generate_proof_real, verify_builtin, Proof};
use blockemu_core::ledger::{AppendOutcome, Block, ChainStore, Transaction, TxnList, GENESIS_ID};
use blockemu_core::puzzle::{sha256, Difficulty, Digest};
use blockemu_core::SimTime;
use proptest::prelude::*;

fn txn(id: u64) -> Transaction {
    Transaction {
        txn_id: id,
        creator_id: (id % 7) as u32,
        creation_time: SimTime(id * 10_000_000),
        payload_size: 250,
    }
}

fn replay_stamp(mut b: Block) -> Block {
    b.proof = Some(Proof::ReplayPow {
        digest: b.header_hash(),
        claimed_solve_ms: 1.0,
    });
    b
}

fn replay_ok(b: &Block) -> bool {
    verify_builtin(b, Difficulty::ZERO)
}

#[test]
fn header_layout_matches_the_documented_format() {
    let t = txn(1);
    let b = Block::candidate(7, SimTime(1_500_000), 3, &Block::genesis(), vec![t].into());

    let mut txn_bytes = Vec::new();
    txn_bytes.extend_from_slice(&1u64.to_le_bytes());
    txn_bytes.extend_from_slice(&1u32.to_le_bytes());
    txn_bytes.extend_from_slice(&10_000_000u64.to_le_bytes());
    txn_bytes.extend_from_slice(&250u32.to_le_bytes());
    let mut expected = Vec::new();
    let mut field = |bytes: &[u8]| {
        expected.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        expected.extend_from_slice(bytes);
    };
    field(&7u64.to_le_bytes());
    field(&3u32.to_le_bytes());
    field(&1_500_000u64.to_le_bytes());
    field(&Block::genesis().header_hash().0);
    field(&1u64.to_le_bytes());
    field(&sha256(&txn_bytes).0);

    assert_eq!(b.header_bytes(), expected);
    assert_eq!(
        b.header_hash().to_hex(),
        "58cc08f2a8960d17019700e367b4e193ed918823908eeaebc8ef3341097ac32e"
    );
}

/// Blocks forming a random tree; `parents[i]` indexes an earlier block or
/// genesis (0).
fn tree(parents: &[usize]) -> Vec<Block> {
    let mut blocks = vec![Block::genesis()];
    for (i, &p) in parents.iter().enumerate() {
        let id = i as u64 + 1;
        let parent = blocks[p % blocks.len()].clone();
        let b = Block::candidate(id, SimTime(id), (id % 4) as u32, &parent, vec![txn(id)].into());
        blocks.push(replay_stamp(b));
    }
    blocks.remove(0);
    blocks
}

/// Order-independent view of a store: each block with its sorted children.
fn canonical(store: &ChainStore) -> BTreeMap<u64, (Option<u64>, u64, Vec<u64>)> {
    store
        .blocks()
        .map(|b| {
            let mut kids = b.child_list.clone();
            kids.sort();
            (b.block_id, (b.parent_block, b.depth, kids))
        })
        .collect()
}

fn parents() -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0usize..64, 1..40)
}

proptest! {
    #[test]
    fn append_order_does_not_matter(parents in parents(), order in any::<u64>()) {
        let blocks = tree(&parents);
        let mut forward = ChainStore::default();
        for b in &blocks {
            forward.append(b.clone());
        }
        let mut shuffled = blocks.clone();
        let mut state = order | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let mut other = ChainStore::default();
        for b in shuffled {
            prop_assert!(!matches!(other.append(b), AppendOutcome::Rejected(_)));
        }
        prop_assert_eq!(other.orphan_count(), 0);
        prop_assert_eq!(canonical(&forward), canonical(&other));
        prop_assert_eq!(forward.tip_block().depth, other.tip_block().depth);
    }

    #[test]
    fn child_counts_and_chain_length_hold(parents in parents()) {
        let blocks = tree(&parents);
        let mut store = ChainStore::default();
        for b in blocks.iter().rev() {
            store.append(b.clone());
        }
        for b in store.blocks() {
            prop_assert_eq!(b.num_child as usize, b.child_list.len());
        }
        let max_depth = store.blocks().map(|b| b.depth).max().unwrap();
        let chain = store.longest_chain();
        prop_assert_eq!(chain.len() as u64, max_depth + 1);
        prop_assert_eq!(chain[0], GENESIS_ID);
        prop_assert!(store.verify_integrity(replay_ok));
    }

    #[test]
    fn any_single_field_mutation_is_detected(index in 0u64..=12, field in 0usize..10) {
        let d: Difficulty = "1.0".parse().unwrap();
        let mut store = ChainStore::default();
        let mut parent = Block::genesis();
        for id in 1..=12 {
            let mut b = Block::candidate(id, SimTime(id * 1000), 1, &parent, vec![txn(id)].into());
            b.proof = Some(generate_proof_real(&b, d).unwrap().0);
            store.append(b.clone());
            parent = b;
        }
        let check = |b: &Block| verify_builtin(b, d);
        prop_assert!(store.verify_integrity(check));
        let b = store.block_mut(index).unwrap();
        match field {
            0 => b.block_id += 100,
            1 => b.creation_time = SimTime(b.creation_time.nanos() + 1),
            2 => b.creator_id += 1,
            3 => b.parent_block = Some(b.parent_block.map_or(5, |p| p + 1)),
            4 => b.depth += 1,
            5 => b.previous_hash.0[0] ^= 1,
            6 => b.child_list.push(999),
            7 => b.num_child += 1,
            8 => b.txn_list = vec![txn(500)].into(),
            _ => b.proof = Some(Proof::RealPow { nonce: 1 << 40, digest: Digest([0xab; 32]) }),
        }
        prop_assert!(!store.verify_integrity(check));
    }
}

#[test]
fn header_only_replica_keeps_the_hash_chain() {
    let blocks = tree(&[0, 1, 2]);
    let mut store = ChainStore::default();
    for b in blocks {
        let mut b = b;
        b.txn_list = b.txn_list.header_only();
        store.append(b);
    }
    assert!(store.verify_integrity(replay_ok));
    assert!(matches!(store.get(2).unwrap().txn_list, TxnList::HeaderOnly { count: 1, .. }));
}
