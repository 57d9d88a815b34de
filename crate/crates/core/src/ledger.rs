//! Blocks, transactions and per-node chain views.
//!
//! Canonical header layout, each field prefixed by its byte length as a
//! little-endian `u32`:
//!
//! | field           | encoding            |
//! |-----------------|---------------------|
//! | block id        | `u64` LE            |
//! | creator id      | `u32` LE            |
//! | creation time   | `u64` LE nanoseconds|
//! | previous hash   | 32 raw bytes        |
//! | depth           | `u64` LE            |
//! | txn digest      | 32 raw bytes        |
//!
//! The txn digest is SHA-256 over the transactions in order, each encoded as
//! id (`u64`), creator (`u32`), creation time (`u64` ns) and payload size
//! (`u32`), all little-endian. The proof is not part of the header.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::sync::Arc;
use alloc::vec::Vec;

use sha2::{Digest as _, Sha256};

use crate::consensus::Proof;
use crate::puzzle::{sha256, Digest};
use crate::time::SimTime;

pub type NodeId = u32;
pub type BlockId = u64;
pub type TxnId = u64;

/// Id of the genesis block in every store.
pub const GENESIS_ID: BlockId = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub txn_id: TxnId,
    pub creator_id: NodeId,
    pub creation_time: SimTime,
    /// Synthetic payload size in bytes; only its value is carried.
    pub payload_size: u32,
}

impl Transaction {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.txn_id.to_le_bytes());
        out.extend_from_slice(&self.creator_id.to_le_bytes());
        out.extend_from_slice(&self.creation_time.nanos().to_le_bytes());
        out.extend_from_slice(&self.payload_size.to_le_bytes());
    }
}

/// Digest committing to an ordered transaction list.
pub fn txn_digest(txns: &[Transaction]) -> Digest {
    let mut h = Sha256::new();
    let mut buf = Vec::with_capacity(24);
    for t in txns {
        buf.clear();
        t.encode_into(&mut buf);
        h.update(&buf);
    }
    Digest(h.finalize().into())
}

/// Shared, immutable transaction list with its digest computed once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxnBody {
    txns: Arc<[Transaction]>,
    digest: Digest,
}

impl TxnBody {
    pub fn new(txns: Vec<Transaction>) -> Self {
        let digest = txn_digest(&txns);
        TxnBody {
            txns: Arc::from(txns),
            digest,
        }
    }

    pub fn digest(&self) -> Digest {
        self.digest
    }
}

impl core::ops::Deref for TxnBody {
    type Target = [Transaction];

    fn deref(&self) -> &[Transaction] {
        &self.txns
    }
}

/// A block's transactions, or only their digest for a header-only replica.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxnList {
    Full(TxnBody),
    HeaderOnly { digest: Digest, count: u32 },
}

impl TxnList {
    pub fn empty() -> Self {
        TxnList::Full(TxnBody::new(Vec::new()))
    }

    pub fn digest(&self) -> Digest {
        match self {
            TxnList::Full(body) => body.digest,
            TxnList::HeaderOnly { digest, .. } => *digest,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TxnList::Full(body) => body.len(),
            TxnList::HeaderOnly { count, .. } => *count as usize,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Transactions, unless this is a header-only replica.
    pub fn transactions(&self) -> Option<&[Transaction]> {
        match self {
            TxnList::Full(body) => Some(body),
            TxnList::HeaderOnly { .. } => None,
        }
    }

    /// Drops the bodies, keeping the digest.
    pub fn header_only(&self) -> TxnList {
        TxnList::HeaderOnly {
            digest: self.digest(),
            count: self.len() as u32,
        }
    }
}

impl From<Vec<Transaction>> for TxnList {
    fn from(txns: Vec<Transaction>) -> Self {
        TxnList::Full(TxnBody::new(txns))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub block_id: BlockId,
    pub creation_time: SimTime,
    pub creator_id: NodeId,
    /// `None` only for genesis.
    pub parent_block: Option<BlockId>,
    pub depth: u64,
    pub previous_hash: Digest,
    pub child_list: Vec<BlockId>,
    pub num_child: u32,
    pub txn_list: TxnList,
    /// `None` for genesis and for candidates that are still being mined.
    pub proof: Option<Proof>,
}

impl Block {
    pub fn genesis() -> Block {
        Block {
            block_id: GENESIS_ID,
            creation_time: SimTime::ZERO,
            creator_id: 0,
            parent_block: None,
            depth: 0,
            previous_hash: Digest::ZERO,
            child_list: Vec::new(),
            num_child: 0,
            txn_list: TxnList::empty(),
            proof: None,
        }
    }

    /// Unmined candidate extending `parent`.
    pub fn candidate(
        block_id: BlockId,
        creation_time: SimTime,
        creator_id: NodeId,
        parent: &Block,
        txn_list: TxnList,
    ) -> Block {
        Block {
            block_id,
            creation_time,
            creator_id,
            parent_block: Some(parent.block_id),
            depth: parent.depth + 1,
            previous_hash: parent.header_hash(),
            child_list: Vec::new(),
            num_child: 0,
            txn_list,
            proof: None,
        }
    }

    pub fn header_bytes(&self) -> Vec<u8> {
        canonical_header_bytes(self)
    }

    pub fn header_hash(&self) -> Digest {
        sha256(&canonical_header_bytes(self))
    }

    pub fn is_genesis(&self) -> bool {
        self.parent_block.is_none()
    }
}

fn field(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

/// Deterministic header preimage; see the module docs for the layout.
pub fn canonical_header_bytes(b: &Block) -> Vec<u8> {
    let mut out = Vec::with_capacity(120);
    field(&mut out, &b.block_id.to_le_bytes());
    field(&mut out, &b.creator_id.to_le_bytes());
    field(&mut out, &b.creation_time.nanos().to_le_bytes());
    field(&mut out, &b.previous_hash.0);
    field(&mut out, &b.depth.to_le_bytes());
    field(&mut out, &b.txn_list.digest().0);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    DuplicateId,
    /// A second parentless block.
    NoParent,
    PreviousHashMismatch,
    DepthMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppendOutcome {
    /// Parent was the tip; the block is the new tip.
    ExtendedTip,
    /// Parent already had a child.
    CreatedFork,
    /// First child of a block that is not the tip.
    ExtendedBranch,
    /// Parent unknown; buffered until it arrives.
    Orphaned,
    Rejected(RejectReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum RestoreError {
    #[error("block {0} cannot be the tip")]
    Tip(BlockId),
    #[error("checkpoint block is not linked")]
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq)]
struct Stored {
    block: Block,
    hash: Digest,
}

/// One node's view of the block tree.
///
/// The tip is the deepest linked block; among equally deep blocks the one
/// linked first keeps the tip. A checkpoint, once set, restricts tip
/// candidates to its descendants. Child lists are kept in ascending id order
/// so that stores holding the same blocks compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStore {
    blocks: BTreeMap<BlockId, Stored>,
    orphans: BTreeMap<BlockId, Vec<Block>>,
    orphan_ids: BTreeSet<BlockId>,
    genesis: BlockId,
    tip: BlockId,
    checkpoint: Option<BlockId>,
    pending_checkpoints: BTreeSet<BlockId>,
}

impl Default for ChainStore {
    fn default() -> Self {
        ChainStore::new(Block::genesis())
    }
}

impl ChainStore {
    pub fn new(genesis: Block) -> ChainStore {
        let id = genesis.block_id;
        let hash = genesis.header_hash();
        let mut blocks = BTreeMap::new();
        blocks.insert(id, Stored { block: genesis, hash });
        ChainStore {
            blocks,
            orphans: BTreeMap::new(),
            orphan_ids: BTreeSet::new(),
            genesis: id,
            tip: id,
            checkpoint: None,
            pending_checkpoints: BTreeSet::new(),
        }
    }

    pub fn genesis_id(&self) -> BlockId {
        self.genesis
    }

    pub fn tip(&self) -> BlockId {
        self.tip
    }

    pub fn tip_block(&self) -> &Block {
        &self.blocks[&self.tip].block
    }

    /// Linked block by id.
    pub fn get(&self, id: BlockId) -> Option<&Block> {
        self.blocks.get(&id).map(|s| &s.block)
    }

    /// Cached header hash of a linked block.
    pub fn header_hash(&self, id: BlockId) -> Option<Digest> {
        self.blocks.get(&id).map(|s| s.hash)
    }

    /// Known either as linked or as orphan.
    pub fn contains(&self, id: BlockId) -> bool {
        self.blocks.contains_key(&id) || self.orphan_ids.contains(&id)
    }

    pub fn is_orphan(&self, id: BlockId) -> bool {
        self.orphan_ids.contains(&id)
    }

    /// Linked blocks, genesis included.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn orphan_count(&self) -> usize {
        self.orphan_ids.len()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.values().map(|s| &s.block)
    }

    /// Blocks waiting for a parent, ascending by id.
    pub fn orphan_blocks(&self) -> Vec<&Block> {
        let mut out: Vec<&Block> = self.orphans.values().flatten().collect();
        out.sort_by_key(|b| b.block_id);
        out
    }

    /// Applied checkpoint, if any.
    pub fn checkpoint(&self) -> Option<BlockId> {
        self.checkpoint
    }

    /// Checkpoints waiting for their block to link.
    pub fn pending_checkpoints(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.pending_checkpoints.iter().copied()
    }

    /// Mutable access that bypasses all bookkeeping. Meant for fault
    /// injection; follow with [`ChainStore::verify_integrity`].
    pub fn block_mut(&mut self, id: BlockId) -> Option<&mut Block> {
        self.blocks.get_mut(&id).map(|s| &mut s.block)
    }

    pub fn append(&mut self, block: Block) -> AppendOutcome {
        let id = block.block_id;
        if self.contains(id) {
            return AppendOutcome::Rejected(RejectReason::DuplicateId);
        }
        let Some(parent_id) = block.parent_block else {
            return AppendOutcome::Rejected(RejectReason::NoParent);
        };
        let Some(parent) = self.blocks.get(&parent_id) else {
            self.orphan_ids.insert(id);
            let waiting = self.orphans.entry(parent_id).or_default();
            let pos = waiting.partition_point(|b| b.block_id < id);
            waiting.insert(pos, block);
            return AppendOutcome::Orphaned;
        };
        if let Err(reason) = Self::check_link(parent, &block) {
            return AppendOutcome::Rejected(reason);
        }
        let had_children = !parent.block.child_list.is_empty();
        let parent_was_tip = parent_id == self.tip;
        self.link(block);
        if had_children {
            AppendOutcome::CreatedFork
        } else if parent_was_tip {
            AppendOutcome::ExtendedTip
        } else {
            AppendOutcome::ExtendedBranch
        }
    }

    fn check_link(parent: &Stored, block: &Block) -> Result<(), RejectReason> {
        if block.previous_hash != parent.hash {
            return Err(RejectReason::PreviousHashMismatch);
        }
        if block.depth != parent.block.depth + 1 {
            return Err(RejectReason::DepthMismatch);
        }
        Ok(())
    }

    /// Inserts a validated block, then any orphans waiting on it.
    fn link(&mut self, block: Block) {
        let mut queue = VecDeque::new();
        queue.push_back(block);
        while let Some(block) = queue.pop_front() {
            let id = block.block_id;
            let parent_id = block.parent_block.expect("linked blocks have parents");
            let parent = self.blocks.get_mut(&parent_id).expect("parent linked");
            let pos = parent.block.child_list.partition_point(|c| *c < id);
            parent.block.child_list.insert(pos, id);
            parent.block.num_child += 1;
            let hash = block.header_hash();
            let depth = block.depth;
            self.blocks.insert(
                id,
                Stored {
                    block: Block {
                        child_list: Vec::new(),
                        num_child: 0,
                        ..block
                    },
                    hash,
                },
            );
            if depth > self.tip_depth() && self.within_checkpoint(id) {
                self.tip = id;
            }
            if self.pending_checkpoints.remove(&id) {
                self.apply_checkpoint(id);
            }
            if let Some(waiting) = self.orphans.remove(&id) {
                let stored = &self.blocks[&id];
                for orphan in waiting {
                    self.orphan_ids.remove(&orphan.block_id);
                    if Self::check_link(stored, &orphan).is_ok() {
                        queue.push_back(orphan);
                    }
                }
            }
        }
    }

    fn tip_depth(&self) -> u64 {
        self.blocks[&self.tip].block.depth
    }

    fn within_checkpoint(&self, id: BlockId) -> bool {
        match self.checkpoint {
            None => true,
            Some(cp) => self.descends_from(id, cp),
        }
    }

    /// Whether `ancestor` lies on the path from `id` to genesis (inclusive).
    pub fn descends_from(&self, id: BlockId, ancestor: BlockId) -> bool {
        let Some(target_depth) = self.get(ancestor).map(|b| b.depth) else {
            return false;
        };
        let mut cur = id;
        loop {
            let Some(b) = self.get(cur) else {
                return false;
            };
            if b.depth <= target_depth {
                return cur == ancestor;
            }
            match b.parent_block {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }

    /// Pins `id` as final: from now on only its descendants can become tip.
    /// Returns whether the tip moved. Unknown ids are remembered and applied
    /// once the block links.
    pub fn set_checkpoint(&mut self, id: BlockId) -> bool {
        if !self.blocks.contains_key(&id) {
            self.pending_checkpoints.insert(id);
            return false;
        }
        self.apply_checkpoint(id)
    }

    fn apply_checkpoint(&mut self, id: BlockId) -> bool {
        if let Some(cp) = self.checkpoint {
            if cp == id || self.descends_from(cp, id) {
                return false;
            }
        }
        self.checkpoint = Some(id);
        if self.descends_from(self.tip, id) {
            return false;
        }
        // deepest descendant, first linked wins ties
        let mut best = id;
        let mut queue = VecDeque::from([id]);
        while let Some(cur) = queue.pop_front() {
            let b = &self.blocks[&cur].block;
            if b.depth > self.blocks[&best].block.depth {
                best = cur;
            }
            queue.extend(b.child_list.iter().copied());
        }
        self.tip = best;
        true
    }

    /// Reinstates a tip and finality state saved earlier. Fails, leaving the
    /// store unchanged, if `tip` is not a deepest block within the
    /// checkpoint or a checkpoint is not linked.
    pub fn restore_view(
        &mut self,
        tip: BlockId,
        checkpoint: Option<BlockId>,
        pending: impl IntoIterator<Item = BlockId>,
    ) -> Result<(), RestoreError> {
        if checkpoint.is_some_and(|cp| !self.blocks.contains_key(&cp)) {
            return Err(RestoreError::Checkpoint);
        }
        let Some(depth) = self.get(tip).map(|b| b.depth) else {
            return Err(RestoreError::Tip(tip));
        };
        let inside = |id: BlockId| checkpoint.is_none_or(|cp| self.descends_from(id, cp));
        if !inside(tip) || self.blocks.values().any(|s| s.block.depth > depth && inside(s.block.block_id)) {
            return Err(RestoreError::Tip(tip));
        }
        self.tip = tip;
        self.checkpoint = checkpoint;
        self.pending_checkpoints = pending.into_iter().filter(|p| !self.blocks.contains_key(p)).collect();
        Ok(())
    }

    /// Block ids from genesis to the tip.
    pub fn longest_chain(&self) -> Vec<BlockId> {
        let mut path = Vec::with_capacity(self.tip_depth() as usize + 1);
        let mut cur = Some(self.tip);
        while let Some(id) = cur {
            path.push(id);
            cur = self.blocks[&id].block.parent_block;
        }
        path.reverse();
        path
    }

    /// Recomputes every hash link and child relation and runs `verify_proof`
    /// on every non-genesis block.
    pub fn verify_integrity(&self, verify_proof: impl Fn(&Block) -> bool) -> bool {
        if !self.blocks.contains_key(&self.tip) {
            return false;
        }
        self.blocks.iter().all(|(&id, stored)| {
            let b = &stored.block;
            if b.block_id != id || b.num_child as usize != b.child_list.len() {
                return false;
            }
            let children_ok = b.child_list.iter().all(|c| {
                self.get(*c).is_some_and(|child| child.parent_block == Some(id))
            });
            if !children_ok {
                return false;
            }
            if id == self.genesis {
                return b.parent_block.is_none()
                    && b.depth == 0
                    && b.previous_hash == Digest::ZERO
                    && b.proof.is_none();
            }
            let Some(parent) = b.parent_block.and_then(|p| self.get(p)) else {
                return false;
            };
            b.depth == parent.depth + 1
                && b.previous_hash == parent.header_hash()
                && parent.child_list.contains(&id)
                && verify_proof(b)
        })
    }
}
