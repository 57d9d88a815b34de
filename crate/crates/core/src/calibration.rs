//! Difficulty-time maps: per-difficulty solve-time statistics measured once on
//! the host, then replayed with seeded randomness at emulation time.
//!
//! Measuring is IO (wall clock) and lives in the std companion crate; this
//! module holds the statistics, the map, replay sampling and difficulty
//! selection.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::RngCore;

use crate::dist::ClampedNormal;
use crate::puzzle::{parse_difficulty, Difficulty, PuzzleError};

/// Lower bound applied to every replayed solve time, in milliseconds.
pub const MIN_REPLAY_MS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("difficulty {0} is not in the difficulty-time map; run `calibrate` with a range covering it")]
    Miss(Difficulty),
    #[error("the difficulty-time map is empty")]
    EmptyMap,
    #[error("duplicate entry for difficulty {0}")]
    Duplicate(Difficulty),
    #[error("no samples for difficulty {0}")]
    NoSamples(Difficulty),
    #[error("inconsistent statistics for difficulty {difficulty}: {reason}")]
    InvalidStats {
        difficulty: Difficulty,
        reason: &'static str,
    },
    #[error("invalid difficulty range `{0}`, expected `L.M:L.M` with both bounds ascending")]
    InvalidRange(String),
    #[error(transparent)]
    Difficulty(#[from] PuzzleError),
}

/// Solve-time summary for one difficulty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveTimeStats {
    pub difficulty: Difficulty,
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub samples: u64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl SolveTimeStats {
    pub fn new(
        difficulty: Difficulty,
        mean_ms: f64,
        stddev_ms: f64,
        samples: u64,
        min_ms: f64,
        max_ms: f64,
    ) -> Result<Self, CalibrationError> {
        let bad = |reason| Err(CalibrationError::InvalidStats { difficulty, reason });
        if samples == 0 {
            return bad("samples must be at least 1");
        }
        if ![mean_ms, stddev_ms, min_ms, max_ms].iter().all(|v| v.is_finite()) {
            return bad("values must be finite");
        }
        if stddev_ms < 0.0 {
            return bad("stddev must be non-negative");
        }
        if min_ms < 0.0 || !(min_ms <= mean_ms && mean_ms <= max_ms) {
            return bad("need 0 <= min <= mean <= max");
        }
        Ok(SolveTimeStats {
            difficulty,
            mean_ms,
            stddev_ms,
            samples,
            min_ms,
            max_ms,
        })
    }

    /// Summarizes measured solve times; stddev is the sample (n - 1) estimate.
    pub fn from_samples(difficulty: Difficulty, samples_ms: &[f64]) -> Result<Self, CalibrationError> {
        if samples_ms.is_empty() {
            return Err(CalibrationError::NoSamples(difficulty));
        }
        let n = samples_ms.len() as f64;
        let mean = samples_ms.iter().sum::<f64>() / n;
        let var = if samples_ms.len() > 1 {
            samples_ms.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let min = samples_ms.iter().copied().fold(f64::INFINITY, f64::min);
        let max = samples_ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // summation rounding can push the mean a hair outside [min, max]
        let mean = mean.clamp(min, max);
        SolveTimeStats::new(
            difficulty,
            mean,
            libm::sqrt(var),
            samples_ms.len() as u64,
            min,
            max,
        )
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        self.stddev_ms / libm::sqrt(self.samples as f64)
    }
}

/// Pooled standard error of the difference between two means.
pub fn pooled_standard_error(a: &SolveTimeStats, b: &SolveTimeStats) -> f64 {
    let sa = a.standard_error();
    let sb = b.standard_error();
    libm::sqrt(sa * sa + sb * sb)
}

/// Host-specific association from difficulty to solve-time statistics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DifficultyTimeMap {
    host: String,
    entries: BTreeMap<Difficulty, SolveTimeStats>,
}

impl DifficultyTimeMap {
    pub fn new(host_fingerprint: impl Into<String>) -> Self {
        DifficultyTimeMap {
            host: host_fingerprint.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn host_fingerprint(&self) -> &str {
        &self.host
    }

    pub fn insert(&mut self, stats: SolveTimeStats) -> Result<(), CalibrationError> {
        if self.entries.contains_key(&stats.difficulty) {
            return Err(CalibrationError::Duplicate(stats.difficulty));
        }
        self.entries.insert(stats.difficulty, stats);
        Ok(())
    }

    /// Lookup that treats an uncalibrated difficulty as an error.
    pub fn get(&self, d: Difficulty) -> Result<&SolveTimeStats, CalibrationError> {
        self.entries.get(&d).ok_or(CalibrationError::Miss(d))
    }

    pub fn contains(&self, d: Difficulty) -> bool {
        self.entries.contains_key(&d)
    }

    /// Entries in ascending `(L, M)` order.
    pub fn entries(&self) -> impl Iterator<Item = &SolveTimeStats> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Strategy turning stored statistics into one replayed solve time.
pub trait SolveTimeSampler: Send + Sync {
    fn sample(&self, stats: &SolveTimeStats, rng: &mut dyn RngCore) -> f64;
}

/// Normal draw with the entry's mean and stddev, censored below at
/// `max(min_ms, MIN_REPLAY_MS)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TruncatedNormal;

impl SolveTimeSampler for TruncatedNormal {
    fn sample(&self, stats: &SolveTimeStats, rng: &mut dyn RngCore) -> f64 {
        ClampedNormal {
            mean: stats.mean_ms,
            stddev: stats.stddev_ms,
            floor: stats.min_ms.max(MIN_REPLAY_MS),
        }
        .sample(rng)
    }
}

/// Replays one solve time for `d` with the default sampler.
pub fn sample_solve_time(
    map: &DifficultyTimeMap,
    d: Difficulty,
    rng: &mut dyn RngCore,
) -> Result<f64, CalibrationError> {
    Ok(TruncatedNormal.sample(map.get(d)?, rng))
}

/// Calibrated difficulty whose mean is nearest `target_ms`; ties go to the
/// smaller `(L, M)`.
pub fn select_difficulty(map: &DifficultyTimeMap, target_ms: f64) -> Result<Difficulty, CalibrationError> {
    let mut best: Option<(f64, Difficulty)> = None;
    for stats in map.entries() {
        let gap = (stats.mean_ms - target_ms).abs();
        if best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, stats.difficulty));
        }
    }
    best.map(|(_, d)| d).ok_or(CalibrationError::EmptyMap)
}

/// Expands `from:to` into every feasible `L.M` with `L` in `from.L..=to.L` and
/// `M` in `from.M..=to.M`, ascending.
pub fn expand_range(from: Difficulty, to: Difficulty) -> Vec<Difficulty> {
    let mut out = Vec::new();
    for l in from.leading()..=to.leading() {
        for m in from.middle()..=to.middle() {
            if let Ok(d) = Difficulty::new(l, m) {
                out.push(d);
            }
        }
    }
    out
}

/// Parses `L.M:L.M` (or a single `L.M`) into its expanded difficulty list.
pub fn parse_range(text: &str) -> Result<Vec<Difficulty>, CalibrationError> {
    let (lo, hi) = match text.split_once(':') {
        Some((lo, hi)) => (parse_difficulty(lo)?, parse_difficulty(hi)?),
        None => {
            let d = parse_difficulty(text)?;
            (d, d)
        }
    };
    if lo.leading() > hi.leading() || lo.middle() > hi.middle() {
        return Err(CalibrationError::InvalidRange(text.into()));
    }
    Ok(expand_range(lo, hi))
}
