//! Run report CSV.
//!
//! `#` lines echo the configuration and the deterministic metrics; the
//! `# runtime` line and the `wall_ms`/`rss_bytes` columns carry the only
//! host-dependent values. An empty `rss_bytes` cell means the platform gave
//! no reading, flagged as `rss=unavailable` on the runtime line.

use std::fmt::Write as _;

use blockemu_core::engine::{Arrivals, RunMetrics, SimConfig};

pub const COLUMNS: &str = "sim_ms,blocks_committed,txns_committed,wall_ms,rss_bytes";

pub struct RunReport<'a> {
    pub config: &'a SimConfig,
    pub consensus: &'a str,
    pub map_host: Option<&'a str>,
    pub metrics: &'a RunMetrics,
}

impl RunReport<'_> {
    pub fn render(&self) -> String {
        let c = self.config;
        let m = self.metrics;
        let mut out = String::from("# blockemu run report\n");
        writeln!(
            out,
            "# config nodes={} txns={} difficulty={} mode={} consensus={} seed={} block_size={} txn_rate={} arrivals={} payload_size={} latency_mean_ms={} latency_stddev_ms={} latency_floor_ms={}",
            c.node_count,
            c.total_transactions,
            c.difficulty,
            c.mode,
            self.consensus,
            c.seed,
            c.block_size,
            c.txn_rate,
            match c.arrivals {
                Arrivals::Uniform => "uniform",
                Arrivals::Poisson => "poisson",
            },
            c.payload_size,
            c.latency.mean_ms,
            c.latency.stddev_ms,
            c.latency.floor_ms,
        )
        .unwrap();
        if let Some(host) = self.map_host {
            writeln!(out, "# map host={host}").unwrap();
        }
        writeln!(
            out,
            "# metrics completed={} simulated_ms={} final_clock_ms={} blocks_formed={} blocks_committed={} forks_observed={} txns_committed={} stale_work={} invalid_blocks={} rejected_commits={} events={} trace={}",
            m.completed,
            m.simulated_ms,
            m.final_clock,
            m.blocks_formed,
            m.blocks_committed,
            m.forks_observed,
            m.txns_committed,
            m.stale_work,
            m.invalid_blocks,
            m.rejected_commits,
            m.events_processed,
            m.trace_digest,
        )
        .unwrap();
        writeln!(
            out,
            "# runtime wall_ms={:.3} throughput_txns_per_sec={:.3} peak_rss_bytes={} rss={}",
            m.wall_clock_ms,
            m.throughput_txns_per_sec,
            m.peak_rss_bytes.map_or_else(String::new, |r| r.to_string()),
            if m.peak_rss_bytes.is_some() { "available" } else { "unavailable" },
        )
        .unwrap();
        out.push_str(COLUMNS);
        out.push('\n');
        for row in &m.series {
            writeln!(
                out,
                "{},{},{},{:.3},{}",
                row.sim_time,
                row.blocks_committed,
                row.txns_committed,
                row.wall_ms,
                row.rss_bytes.map_or_else(String::new, |r| r.to_string()),
            )
            .unwrap();
        }
        out
    }
}

/// The report with the runtime line and the host-dependent columns removed.
pub fn deterministic_view(report: &str) -> String {
    report
        .lines()
        .filter(|l| !l.starts_with("# runtime"))
        .map(|l| {
            if l.starts_with('#') || l == COLUMNS {
                l.to_string()
            } else {
                l.split(',').take(3).collect::<Vec<_>>().join(",")
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}
