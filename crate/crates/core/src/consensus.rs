//! Pluggable consensus: a provider generates a proof for a block candidate and
//! verifies proofs on received blocks.
//!
//! Two providers ship. [`NakamotoReal`] performs the nonce search and charges
//! the measured solve time. [`NakamotoReplay`] performs no search: it samples
//! a solve time from a difficulty-time map and stamps the block's header hash.
//! Replay verification checks header integrity and a positive claimed time
//! only; difficulty satisfaction is emulated, not re-derived.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::RngCore;

use crate::calibration::{CalibrationError, DifficultyTimeMap, SolveTimeSampler, TruncatedNormal};
use crate::ledger::{Block, NodeId};
use crate::puzzle::{self, Difficulty, Digest, PuzzleError, PuzzleSolution};

pub const NAKAMOTO_REAL: &str = "nakamoto-real";
pub const NAKAMOTO_REPLAY: &str = "nakamoto-replay";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConsensusError {
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Puzzle(#[from] PuzzleError),
    #[error("replay consensus needs a difficulty-time map")]
    MissingMap,
    #[error("unknown consensus provider `{0}`")]
    UnknownProvider(String),
    #[error("{0}")]
    Provider(String),
}

/// Consensus evidence attached to a mined block.
#[derive(Debug, Clone, PartialEq)]
pub enum Proof {
    /// Nonce found by real search and the digest it produced.
    RealPow { nonce: u64, digest: Digest },
    /// Header hash plus the replayed solve time in milliseconds.
    ReplayPow { digest: Digest, claimed_solve_ms: f64 },
    /// Opaque proof from a plugged-in provider. `payload` must not contain
    /// `|` or line breaks.
    Custom { provider: String, payload: String },
}

impl Proof {
    pub fn kind(&self) -> &str {
        match self {
            Proof::RealPow { .. } => "real",
            Proof::ReplayPow { .. } => "replay",
            Proof::Custom { .. } => "custom",
        }
    }
}

/// Canonical rendering: `real:<nonce>:<digest>`, `replay:<digest>:<ms>` or
/// `custom:<provider>:<payload>`.
impl fmt::Display for Proof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Proof::RealPow { nonce, digest } => write!(f, "real:{nonce}:{digest}"),
            Proof::ReplayPow {
                digest,
                claimed_solve_ms,
            } => write!(f, "replay:{digest}:{claimed_solve_ms}"),
            Proof::Custom { provider, payload } => write!(f, "custom:{provider}:{payload}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed proof `{0}`")]
pub struct ProofParseError(pub String);

impl FromStr for Proof {
    type Err = ProofParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ProofParseError(s.into());
        let (kind, rest) = s.split_once(':').ok_or_else(err)?;
        let (a, b) = rest.split_once(':').ok_or_else(err)?;
        match kind {
            "real" => Ok(Proof::RealPow {
                nonce: a.parse().map_err(|_| err())?,
                digest: b.parse().map_err(|_| err())?,
            }),
            "replay" => Ok(Proof::ReplayPow {
                digest: a.parse().map_err(|_| err())?,
                claimed_solve_ms: b.parse().map_err(|_| err())?,
            }),
            "custom" if !a.is_empty() => Ok(Proof::Custom {
                provider: a.into(),
                payload: b.into(),
            }),
            _ => Err(err()),
        }
    }
}

/// Per-call inputs a provider may draw on. The difficulty is supplied by the
/// engine rather than stored in the block.
pub struct ProofContext<'a> {
    pub node: NodeId,
    pub difficulty: Difficulty,
    pub rng: &'a mut dyn RngCore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mined {
    pub proof: Proof,
    /// Time the work took, used as the mining delay in simulated time.
    pub solve_ms: f64,
}

/// The plug-in boundary. Implementations must be callable concurrently for
/// distinct node contexts; `verify_proof` must be deterministic and pure.
pub trait ConsensusProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Checks up front that the provider can serve `difficulty`.
    fn prepare(&self, _difficulty: Difficulty) -> Result<(), ConsensusError> {
        Ok(())
    }

    fn generate_proof(&self, candidate: &Block, ctx: &mut ProofContext<'_>) -> Result<Mined, ConsensusError>;

    fn verify_proof(&self, block: &Block, difficulty: Difficulty) -> bool;
}

/// Source of the duration charged for a real solve.
pub trait SolveTimer: Send + Sync {
    /// Opaque start mark.
    fn start(&self) -> u64;
    fn elapsed_ms(&self, start: u64, attempts: u64) -> f64;
}

/// Charges a fixed cost per hash attempt; deterministic.
#[derive(Debug, Clone, Copy)]
pub struct AttemptTimer {
    pub ms_per_attempt: f64,
}

impl SolveTimer for AttemptTimer {
    fn start(&self) -> u64 {
        0
    }

    fn elapsed_ms(&self, _start: u64, attempts: u64) -> f64 {
        attempts as f64 * self.ms_per_attempt
    }
}

/// Real nonce search over the candidate's canonical header.
pub fn generate_proof_real(candidate: &Block, d: Difficulty) -> Result<(Proof, PuzzleSolution), ConsensusError> {
    let solution = puzzle::solve(&candidate.header_bytes(), d, 0, u64::MAX)?;
    Ok((
        Proof::RealPow {
            nonce: solution.nonce,
            digest: solution.digest,
        },
        solution,
    ))
}

/// Replay proof: header hash plus a sampled solve time.
pub fn generate_proof_replay(
    candidate: &Block,
    d: Difficulty,
    map: &DifficultyTimeMap,
    sampler: &dyn SolveTimeSampler,
    rng: &mut dyn RngCore,
) -> Result<Proof, ConsensusError> {
    let stats = map.get(d)?;
    Ok(Proof::ReplayPow {
        digest: candidate.header_hash(),
        claimed_solve_ms: sampler.sample(stats, rng),
    })
}

/// Verifies the two built-in proof kinds. Real proofs are recomputed and
/// checked against `d`; replay proofs are checked for header integrity and a
/// positive claimed time. Custom proofs and missing proofs fail.
pub fn verify_builtin(block: &Block, d: Difficulty) -> bool {
    match &block.proof {
        Some(Proof::RealPow { nonce, digest }) => puzzle::verify(
            &block.header_bytes(),
            &PuzzleSolution {
                nonce: *nonce,
                digest: *digest,
                attempts: 0,
            },
            d,
        ),
        Some(Proof::ReplayPow {
            digest,
            claimed_solve_ms,
        }) => *claimed_solve_ms > 0.0 && claimed_solve_ms.is_finite() && *digest == block.header_hash(),
        _ => false,
    }
}

/// Digest consistency without the difficulty check: real digests recompute
/// from the nonce, replay digests equal the header hash. Custom proofs pass.
pub fn proof_digest_consistent(block: &Block) -> bool {
    match &block.proof {
        Some(Proof::RealPow { nonce, digest }) => puzzle::hash_with_nonce(&block.header_bytes(), *nonce) == *digest,
        Some(Proof::ReplayPow { digest, .. }) => *digest == block.header_hash(),
        Some(Proof::Custom { .. }) => true,
        None => block.is_genesis(),
    }
}

pub struct NakamotoReal {
    timer: Arc<dyn SolveTimer>,
}

impl NakamotoReal {
    pub fn new(timer: Arc<dyn SolveTimer>) -> Self {
        NakamotoReal { timer }
    }
}

impl ConsensusProvider for NakamotoReal {
    fn name(&self) -> &str {
        NAKAMOTO_REAL
    }

    fn generate_proof(&self, candidate: &Block, ctx: &mut ProofContext<'_>) -> Result<Mined, ConsensusError> {
        let mark = self.timer.start();
        let (proof, solution) = generate_proof_real(candidate, ctx.difficulty)?;
        Ok(Mined {
            proof,
            solve_ms: self.timer.elapsed_ms(mark, solution.attempts),
        })
    }

    fn verify_proof(&self, block: &Block, difficulty: Difficulty) -> bool {
        matches!(block.proof, Some(Proof::RealPow { .. })) && verify_builtin(block, difficulty)
    }
}

pub struct NakamotoReplay {
    map: Arc<DifficultyTimeMap>,
    sampler: Arc<dyn SolveTimeSampler>,
}

impl NakamotoReplay {
    pub fn new(map: Arc<DifficultyTimeMap>) -> Self {
        Self::with_sampler(map, Arc::new(TruncatedNormal))
    }

    pub fn with_sampler(map: Arc<DifficultyTimeMap>, sampler: Arc<dyn SolveTimeSampler>) -> Self {
        NakamotoReplay { map, sampler }
    }

    pub fn map(&self) -> &DifficultyTimeMap {
        &self.map
    }
}

impl ConsensusProvider for NakamotoReplay {
    fn name(&self) -> &str {
        NAKAMOTO_REPLAY
    }

    fn prepare(&self, difficulty: Difficulty) -> Result<(), ConsensusError> {
        self.map.get(difficulty)?;
        Ok(())
    }

    fn generate_proof(&self, candidate: &Block, ctx: &mut ProofContext<'_>) -> Result<Mined, ConsensusError> {
        let proof = generate_proof_replay(candidate, ctx.difficulty, &self.map, self.sampler.as_ref(), ctx.rng)?;
        let Proof::ReplayPow { claimed_solve_ms, .. } = proof else {
            unreachable!("replay generator yields replay proofs")
        };
        Ok(Mined {
            proof,
            solve_ms: claimed_solve_ms,
        })
    }

    fn verify_proof(&self, block: &Block, difficulty: Difficulty) -> bool {
        matches!(block.proof, Some(Proof::ReplayPow { .. })) && verify_builtin(block, difficulty)
    }
}

/// What a factory may need to build a provider.
#[derive(Clone)]
pub struct ProviderSetup {
    pub map: Option<Arc<DifficultyTimeMap>>,
    pub timer: Arc<dyn SolveTimer>,
}

pub type ProviderFactory =
    Box<dyn Fn(&ProviderSetup) -> Result<Box<dyn ConsensusProvider>, ConsensusError> + Send + Sync>;

/// Name-indexed provider factories.
pub struct ProviderRegistry {
    factories: BTreeMap<String, ProviderFactory>,
}

impl Default for ProviderRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl ProviderRegistry {
    pub fn empty() -> Self {
        ProviderRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut registry = Self::empty();
        registry.register(NAKAMOTO_REAL, |setup| {
            Ok(Box::new(NakamotoReal::new(setup.timer.clone())))
        });
        registry.register(NAKAMOTO_REPLAY, |setup| {
            let map = setup.map.clone().ok_or(ConsensusError::MissingMap)?;
            Ok(Box::new(NakamotoReplay::new(map)))
        });
        registry
    }

    /// Registers (or replaces) a factory under `name`.
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&ProviderSetup) -> Result<Box<dyn ConsensusProvider>, ConsensusError> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str, setup: &ProviderSetup) -> Result<Box<dyn ConsensusProvider>, ConsensusError> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| ConsensusError::UnknownProvider(name.into()))?;
        factory(setup)
    }
}
