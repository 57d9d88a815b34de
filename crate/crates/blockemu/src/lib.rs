//! Host side of the emulator: calibration runs, map and ledger files, run
//! reports and the `blockemu` command line.

pub mod calibrate;
pub mod cli;
mod fsutil;
pub mod host;
pub mod ledgerfile;
pub mod mapfile;
pub mod report;

pub use fsutil::write_atomic;
