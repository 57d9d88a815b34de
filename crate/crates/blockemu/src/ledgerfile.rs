//! Per-node ledger files, `ledger_<nodeId>.txt`.
//!
//! ```text
//! # blocklite-ledger v1 node=<id> tip=<id> [final=<id>] [pending=<id>,...]
//! blockID|creatorID|creationTime|parentID|depth|previousHash|proof|txns
//! ```
//!
//! Genesis has `-` for parent and proof. `txns` is a comma-separated list of
//! `txnId:creatorId:creationTime:payloadSize`, or `h:<digest>:<count>` for a
//! header-only replica. Linked blocks come first ordered by depth then id,
//! followed by orphans by id, so nodes holding the same blocks write the same
//! lines.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use blockemu_core::consensus::{proof_digest_consistent, Proof};
use blockemu_core::ledger::{AppendOutcome, Block, BlockId, ChainStore, NodeId, Transaction, TxnList};
use blockemu_core::puzzle::Digest;
use blockemu_core::SimTime;

use crate::fsutil::write_atomic;

pub const LEDGER_HEADER: &str = "# blocklite-ledger v1";

#[derive(Debug, thiserror::Error)]
pub enum LedgerFileError {
    #[error("cannot read ledger {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write ledger {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> LedgerFileError {
    LedgerFileError::Parse {
        line,
        message: message.into(),
    }
}

/// Which blocks keep their transaction bodies when written.
#[derive(Debug, Clone, Copy)]
pub enum Replication<'a> {
    Full,
    /// Only blocks in the set, or created by the writing node, stay full.
    Partial(&'a BTreeSet<BlockId>),
}

pub fn ledger_path(dir: &Path, node: NodeId) -> PathBuf {
    dir.join(format!("ledger_{node}.txt"))
}

fn render_txns(out: &mut String, list: &TxnList) {
    match list.transactions() {
        Some(txns) => {
            for (i, t) in txns.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{}:{}:{}:{}", t.txn_id, t.creator_id, t.creation_time, t.payload_size).unwrap();
            }
        }
        None => write!(out, "h:{}:{}", list.digest(), list.len()).unwrap(),
    }
}

fn render_block(out: &mut String, b: &Block, list: &TxnList) {
    let parent = b.parent_block.map_or_else(|| "-".to_string(), |p| p.to_string());
    let proof = b.proof.as_ref().map_or_else(|| "-".to_string(), Proof::to_string);
    write!(
        out,
        "{}|{}|{}|{}|{}|{}|{}|",
        b.block_id, b.creator_id, b.creation_time, parent, b.depth, b.previous_hash, proof
    )
    .unwrap();
    render_txns(out, list);
    out.push('\n');
}

pub fn render_ledger(store: &ChainStore, node: NodeId, replication: Replication<'_>) -> String {
    let mut out = format!("{LEDGER_HEADER} node={node} tip={}", store.tip());
    if let Some(cp) = store.checkpoint() {
        write!(out, " final={cp}").unwrap();
    }
    let pending: Vec<String> = store.pending_checkpoints().map(|p| p.to_string()).collect();
    if !pending.is_empty() {
        write!(out, " pending={}", pending.join(",")).unwrap();
    }
    out.push('\n');
    let mut linked: Vec<&Block> = store.blocks().collect();
    linked.sort_by_key(|b| (b.depth, b.block_id));
    for b in linked.into_iter().chain(store.orphan_blocks()) {
        let keep = match replication {
            Replication::Full => true,
            Replication::Partial(voted) => b.creator_id == node || voted.contains(&b.block_id) || b.is_genesis(),
        };
        if keep {
            render_block(&mut out, b, &b.txn_list);
        } else {
            render_block(&mut out, b, &b.txn_list.header_only());
        }
    }
    out
}

/// Writes `ledger_<node>.txt` into `dir` and returns its path.
pub fn persist_ledger(
    store: &ChainStore,
    node: NodeId,
    dir: &Path,
    replication: Replication<'_>,
) -> Result<PathBuf, LedgerFileError> {
    let path = ledger_path(dir, node);
    write_atomic(&path, render_ledger(store, node, replication).as_bytes()).map_err(|source| {
        LedgerFileError::Write {
            path: path.clone(),
            source,
        }
    })?;
    Ok(path)
}

struct Header {
    node: NodeId,
    tip: BlockId,
    checkpoint: Option<BlockId>,
    pending: Vec<BlockId>,
}

fn parse_header(line: &str) -> Result<Header, LedgerFileError> {
    let rest = line
        .strip_prefix(LEDGER_HEADER)
        .ok_or_else(|| parse_err(1, format!("expected `{LEDGER_HEADER} node=...`")))?;
    let mut header = Header {
        node: NodeId::MAX,
        tip: BlockId::MAX,
        checkpoint: None,
        pending: Vec::new(),
    };
    let (mut saw_node, mut saw_tip) = (false, false);
    for token in rest.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header field `{token}`")))?;
        let id = |v: &str| v.parse::<u64>().map_err(|_| parse_err(1, format!("bad {key} `{v}`")));
        match key {
            "node" => {
                header.node = value.parse().map_err(|_| parse_err(1, format!("bad node `{value}`")))?;
                saw_node = true;
            }
            "tip" => {
                header.tip = id(value)?;
                saw_tip = true;
            }
            "final" => header.checkpoint = Some(id(value)?),
            "pending" => header.pending = value.split(',').map(id).collect::<Result<_, _>>()?,
            _ => return Err(parse_err(1, format!("unknown header field `{key}`"))),
        }
    }
    if !saw_node || !saw_tip {
        return Err(parse_err(1, "header needs node= and tip="));
    }
    Ok(header)
}

fn parse_txns(n: usize, field: &str) -> Result<TxnList, LedgerFileError> {
    if let Some(rest) = field.strip_prefix("h:") {
        let (digest, count) = rest
            .split_once(':')
            .ok_or_else(|| parse_err(n, "header-only list needs h:<digest>:<count>"))?;
        return Ok(TxnList::HeaderOnly {
            digest: digest.parse().map_err(|e| parse_err(n, format!("{e}")))?,
            count: count.parse().map_err(|_| parse_err(n, format!("bad count `{count}`")))?,
        });
    }
    if field.is_empty() {
        return Ok(TxnList::empty());
    }
    let txns = field
        .split(',')
        .map(|token| {
            let parts: Vec<&str> = token.split(':').collect();
            let [id, creator, time, size] = parts[..] else {
                return Err(parse_err(n, format!("malformed transaction `{token}`")));
            };
            let bad = |what: &str| parse_err(n, format!("bad {what} in transaction `{token}`"));
            Ok(Transaction {
                txn_id: id.parse().map_err(|_| bad("id"))?,
                creator_id: creator.parse().map_err(|_| bad("creator"))?,
                creation_time: time.parse::<SimTime>().map_err(|_| bad("time"))?,
                payload_size: size.parse().map_err(|_| bad("size"))?,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(txns.into())
}

fn parse_block(n: usize, line: &str) -> Result<Block, LedgerFileError> {
    let fields: Vec<&str> = line.split('|').collect();
    let [id, creator, time, parent, depth, prev, proof, txns] = fields[..] else {
        return Err(parse_err(n, format!("expected 8 `|`-separated fields, found {}", fields.len())));
    };
    let num = |what: &str, v: &str| v.parse::<u64>().map_err(|_| parse_err(n, format!("bad {what} `{v}`")));
    Ok(Block {
        block_id: num("block id", id)?,
        creator_id: creator
            .parse()
            .map_err(|_| parse_err(n, format!("bad creator `{creator}`")))?,
        creation_time: time
            .parse()
            .map_err(|_| parse_err(n, format!("bad creation time `{time}`")))?,
        parent_block: if parent == "-" { None } else { Some(num("parent id", parent)?) },
        depth: num("depth", depth)?,
        previous_hash: prev.parse::<Digest>().map_err(|e| parse_err(n, format!("{e}")))?,
        child_list: Vec::new(),
        num_child: 0,
        txn_list: parse_txns(n, txns)?,
        proof: if proof == "-" {
            None
        } else {
            Some(proof.parse().map_err(|e| parse_err(n, format!("{e}")))?)
        },
    })
}

/// Parses a ledger, re-linking every block and re-checking every hash link
/// and proof digest.
pub fn parse_ledger(text: &str) -> Result<(NodeId, ChainStore), LedgerFileError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty ledger file"))?;
    let header = parse_header(header)?;
    let (n, first) = lines.next().ok_or_else(|| parse_err(2, "missing genesis block"))?;
    let genesis = parse_block(n, first)?;
    if !genesis.is_genesis() || genesis.proof.is_some() || genesis != Block::genesis() {
        return Err(parse_err(n, "first block must be the genesis block"));
    }
    let mut store = ChainStore::new(genesis);
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let block = parse_block(n, line)?;
        if !proof_digest_consistent(&block) {
            return Err(parse_err(n, format!("proof of block {} does not match its header", block.block_id)));
        }
        let id = block.block_id;
        if let AppendOutcome::Rejected(reason) = store.append(block) {
            return Err(parse_err(n, format!("block {id} rejected: {reason:?}")));
        }
    }
    store
        .restore_view(header.tip, header.checkpoint, header.pending)
        .map_err(|e| parse_err(1, e.to_string()))?;
    Ok((header.node, store))
}

pub fn load_ledger(path: &Path) -> Result<(NodeId, ChainStore), LedgerFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| LedgerFileError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_ledger(&text)
}
