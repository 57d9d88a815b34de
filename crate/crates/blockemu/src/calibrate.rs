//! Offline calibration: real solves over seeded headers, timed on the wall
//! clock.
//!
//! Sample `i` uses the same header at every difficulty, so attempt counts
//! are paired across difficulties and can only grow as the target tightens.

use std::time::{Duration, Instant};

use blockemu_core::calibration::{DifficultyTimeMap, SolveTimeStats};
use blockemu_core::puzzle::{solve, Difficulty, PuzzleError};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone)]
pub struct CalibrationPlan {
    pub difficulties: Vec<Difficulty>,
    pub samples: usize,
    pub budget: Duration,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Skip {
    /// The wall-clock budget ran out after this many finished samples.
    Budget { completed: usize },
    /// A point at most as hard already ran out of budget.
    Dominated { by: Difficulty },
}

#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub map: DifficultyTimeMap,
    pub skipped: Vec<(Difficulty, Skip)>,
}

#[derive(Debug, thiserror::Error)]
pub enum CalibrateError {
    #[error("samples per difficulty must be at least 1")]
    NoSamples,
    #[error("difficulty range is empty")]
    EmptyRange,
}

/// Header bytes for sample `index`, independent of difficulty.
pub fn sample_header(seed: u64, index: u64) -> [u8; 32] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut header = [0u8; 32];
    rng.fill_bytes(&mut header);
    header
}

/// One timed solve, or `None` once `deadline` passes.
fn timed_solve(header: &[u8], d: Difficulty, deadline: Instant) -> Option<f64> {
    let start = Instant::now();
    let mut nonce = 0;
    loop {
        match solve(header, d, nonce, CHUNK) {
            Ok(_) => return Some(start.elapsed().as_secs_f64() * 1000.0),
            Err(PuzzleError::NotFound { next_nonce, .. }) => {
                if Instant::now() >= deadline {
                    return None;
                }
                nonce = next_nonce;
            }
            Err(e) => unreachable!("solve with a positive chunk only exhausts: {e}"),
        }
    }
}

/// Times `count` samples starting at `first`; stops early at the deadline.
fn run_samples(seed: u64, d: Difficulty, first: usize, count: usize, deadline: Instant) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    for i in first..first + count {
        match timed_solve(&sample_header(seed, i as u64), d, deadline) {
            Some(ms) => out.push(ms),
            None => break,
        }
    }
    out
}

fn measure(plan: &CalibrationPlan, d: Difficulty) -> Vec<f64> {
    let deadline = Instant::now() + plan.budget;
    let workers = plan.workers.clamp(1, plan.samples);
    if workers == 1 {
        return run_samples(plan.seed, d, 0, plan.samples, deadline);
    }
    let per = plan.samples.div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let first = w * per;
                let count = per.min(plan.samples.saturating_sub(first));
                scope.spawn(move || run_samples(plan.seed, d, first, count, deadline))
            })
            .collect();
        let mut all = Vec::with_capacity(plan.samples);
        for h in handles {
            all.extend(h.join().expect("calibration worker panicked"));
        }
        all
    })
}

/// Calibrates every difficulty in the plan. `progress` sees each point as it
/// finishes, with either its statistics or the reason it was skipped.
pub fn calibrate(
    plan: &CalibrationPlan,
    host: &str,
    mut progress: impl FnMut(Difficulty, Result<&SolveTimeStats, &Skip>),
) -> Result<CalibrationReport, CalibrateError> {
    if plan.samples == 0 {
        return Err(CalibrateError::NoSamples);
    }
    if plan.difficulties.is_empty() {
        return Err(CalibrateError::EmptyRange);
    }
    let mut report = CalibrationReport {
        map: DifficultyTimeMap::new(host),
        skipped: Vec::new(),
    };
    let mut exhausted: Vec<Difficulty> = Vec::new();
    for &d in &plan.difficulties {
        let easier = exhausted
            .iter()
            .find(|e| e.leading() <= d.leading() && e.middle() <= d.middle());
        if let Some(&by) = easier {
            let skip = Skip::Dominated { by };
            progress(d, Err(&skip));
            report.skipped.push((d, skip));
            continue;
        }
        let times = measure(plan, d);
        if times.len() < plan.samples {
            exhausted.push(d);
            let skip = Skip::Budget {
                completed: times.len(),
            };
            progress(d, Err(&skip));
            report.skipped.push((d, skip));
            continue;
        }
        let stats = SolveTimeStats::from_samples(d, &times).expect("samples are non-empty and finite");
        progress(d, Ok(&stats));
        report.map.insert(stats).expect("difficulties in a plan are distinct");
    }
    Ok(report)
}
