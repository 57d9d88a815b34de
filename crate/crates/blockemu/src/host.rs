//! Host description, wall clock and resident-memory probes.

use std::time::Instant;

use blockemu_core::consensus::SolveTimer;
use blockemu_core::engine::HostProbe;

/// Free-text description of the calibrating machine.
pub fn host_fingerprint() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|info| {
            info.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown".into());
    format!(
        "{}-{} cpus={} model={}",
        std::env::consts::OS,
        std::env::consts::ARCH,
        cpus,
        model
    )
}

fn status_kib(key: &str) -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with(key))?;
    let kib: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib * 1024)
}

/// Resident set size from `/proc/self/status`, when available.
pub fn rss_bytes() -> Option<u64> {
    status_kib("VmRSS:")
}

/// High-water mark of the resident set over the life of the process.
pub fn peak_rss_bytes() -> Option<u64> {
    status_kib("VmHWM:")
}

pub struct SystemProbe {
    origin: Instant,
}

impl Default for SystemProbe {
    fn default() -> Self {
        SystemProbe { origin: Instant::now() }
    }
}

impl HostProbe for SystemProbe {
    fn wall_ms(&self) -> f64 {
        self.origin.elapsed().as_secs_f64() * 1000.0
    }

    fn rss_bytes(&self) -> Option<u64> {
        rss_bytes()
    }
}

/// Charges the measured wall-clock duration of each real solve.
pub struct WallTimer {
    origin: Instant,
}

impl Default for WallTimer {
    fn default() -> Self {
        WallTimer { origin: Instant::now() }
    }
}

impl SolveTimer for WallTimer {
    fn start(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }

    fn elapsed_ms(&self, start: u64, _attempts: u64) -> f64 {
        (self.origin.elapsed().as_nanos() as u64).saturating_sub(start) as f64 / 1e6
    }
}
