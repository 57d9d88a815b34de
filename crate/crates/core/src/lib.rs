//! Proof-of-work blockchain emulation core.
//!
//! Everything here is `no_std` with `alloc`: the L.M puzzle, solve-time maps
//! and replay sampling, pluggable consensus, chain stores, the event queue and
//! the single-threaded emulation driver. File formats and the command line
//! live in the `blockemu` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod calibration;
pub mod consensus;
pub mod dist;
pub mod engine;
pub mod ledger;
pub mod netqueue;
pub mod puzzle;
pub mod time;

pub use calibration::{CalibrationError, DifficultyTimeMap, SolveTimeStats};
pub use consensus::{ConsensusError, ConsensusProvider, Proof, ProviderRegistry};
pub use engine::{run_emulation, Mode, RunMetrics, SimConfig};
pub use ledger::{Block, BlockId, ChainStore, NodeId, Transaction};
pub use puzzle::{Difficulty, Digest, PuzzleSolution};
pub use time::SimTime;
