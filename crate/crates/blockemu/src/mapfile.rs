//! Difficulty-time map files.
//!
//! ```text
//! # blocklite-map v1 host=<fingerprint>
//! L.M,meanMs,stddevMs,samples,minMs,maxMs
//! ```
//!
//! Numbers are written in their shortest round-trip decimal form, so a load
//! reproduces the saved map exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use blockemu_core::calibration::{CalibrationError, DifficultyTimeMap, SolveTimeStats};
use blockemu_core::puzzle::Difficulty;

use crate::fsutil::write_atomic;

pub const MAP_HEADER: &str = "# blocklite-map v1";

#[derive(Debug, thiserror::Error)]
pub enum MapFileError {
    #[error("cannot read map {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write map {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> MapFileError {
    MapFileError::Parse {
        line,
        message: message.into(),
    }
}

pub fn render_map(map: &DifficultyTimeMap) -> String {
    let host: String = map
        .host_fingerprint()
        .chars()
        .map(|c| if c.is_control() { ' ' } else { c })
        .collect();
    let mut out = format!("{MAP_HEADER} host={host}\n");
    for s in map.entries() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.difficulty, s.mean_ms, s.stddev_ms, s.samples, s.min_ms, s.max_ms
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn parse_map(text: &str) -> Result<DifficultyTimeMap, MapFileError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file, expected map header"))?;
    let host = header
        .strip_prefix(MAP_HEADER)
        .and_then(|rest| rest.strip_prefix(" host=").or(if rest.is_empty() { Some("") } else { None }))
        .ok_or_else(|| parse_err(1, format!("expected `{MAP_HEADER} host=...`")))?;
    let mut map = DifficultyTimeMap::new(host);
    for (n, line) in lines {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [d, mean, sd, samples, min, max] = fields[..] else {
            return Err(parse_err(n, format!("expected 6 comma-separated fields, found {}", fields.len())));
        };
        let difficulty: Difficulty = d.parse().map_err(|e| parse_err(n, format!("{e}")))?;
        let num = |name: &str, v: &str| -> Result<f64, MapFileError> {
            v.parse::<f64>().map_err(|_| parse_err(n, format!("{name} `{v}` is not a number")))
        };
        let samples: u64 = samples
            .parse()
            .map_err(|_| parse_err(n, format!("samples `{samples}` is not a count")))?;
        let stats = SolveTimeStats::new(
            difficulty,
            num("mean", mean)?,
            num("stddev", sd)?,
            samples,
            num("min", min)?,
            num("max", max)?,
        )
        .map_err(|e| parse_err(n, e.to_string()))?;
        map.insert(stats).map_err(|e| match e {
            CalibrationError::Duplicate(d) => parse_err(n, format!("duplicate difficulty {d}")),
            other => parse_err(n, other.to_string()),
        })?;
    }
    Ok(map)
}

pub fn load_map(path: &Path) -> Result<DifficultyTimeMap, MapFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| MapFileError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_map(&text)
}

/// Writes the map, replacing any existing file atomically.
pub fn save_map(map: &DifficultyTimeMap, path: &Path) -> Result<(), MapFileError> {
    write_atomic(path, render_map(map).as_bytes()).map_err(|source| MapFileError::Write {
        path: path.to_path_buf(),
        source,
    })
}
