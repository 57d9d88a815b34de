//! Two-phase `L.M` proof-of-work puzzle over SHA-256.
//!
//! A difficulty `L.M` asks for a digest whose maximal run of leading zero hex
//! digits is at least `L` long, followed (anywhere, not necessarily
//! contiguously, trailing digits included) by at least `M` further zero digits.
//! The whole leading run is excluded from the `M` count, whatever its length
//! relative to `L`. A digest made of 64 zeros satisfies every feasible
//! difficulty.
//!
//! The puzzle preimage is the header bytes followed by the nonce rendered as
//! ASCII decimal text.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use sha2::{Digest as _, Sha256};

/// Number of hex digits in a SHA-256 digest.
pub const HEX_DIGITS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PuzzleError {
    #[error("malformed difficulty `{0}`, expected `L.M`")]
    MalformedDifficulty(String),
    #[error("difficulty {leading}.{middle} out of range (need L, M >= 0 and L + M <= 64)")]
    DifficultyRange { leading: i64, middle: i64 },
    #[error("empty digest")]
    EmptyDigest,
    #[error("invalid hex digit {found:?} at position {position}")]
    InvalidHex { position: usize, found: char },
    #[error("digest must have 64 hex digits, got {0}")]
    DigestLength(usize),
    #[error("max_attempts must be positive")]
    ZeroAttempts,
    #[error("no solution within {attempts} attempts, resume from nonce {next_nonce}")]
    NotFound { attempts: u64, next_nonce: u64 },
}

/// Puzzle hardness as leading-zero count `L` and additional-zero count `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Difficulty {
    leading: u8,
    middle: u8,
}

impl Difficulty {
    /// The vacuous difficulty `0.0`; every digest satisfies it.
    pub const ZERO: Difficulty = Difficulty { leading: 0, middle: 0 };

    pub fn new(leading: u32, middle: u32) -> Result<Self, PuzzleError> {
        Self::checked(i64::from(leading), i64::from(middle))
    }

    fn checked(leading: i64, middle: i64) -> Result<Self, PuzzleError> {
        if leading < 0 || middle < 0 || leading + middle > i64::from(HEX_DIGITS) {
            return Err(PuzzleError::DifficultyRange { leading, middle });
        }
        Ok(Difficulty {
            leading: leading as u8,
            middle: middle as u8,
        })
    }

    /// Required leading zero hex digits.
    pub fn leading(self) -> u32 {
        u32::from(self.leading)
    }

    /// Required zero hex digits after the leading run.
    pub fn middle(self) -> u32 {
        u32::from(self.middle)
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.leading, self.middle)
    }
}

impl FromStr for Difficulty {
    type Err = PuzzleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_difficulty(s)
    }
}

/// Parses the textual form `L.M`.
pub fn parse_difficulty(text: &str) -> Result<Difficulty, PuzzleError> {
    let malformed = || PuzzleError::MalformedDifficulty(text.into());
    let (l, m) = text.trim().split_once('.').ok_or_else(malformed)?;
    let part = |p: &str| -> Result<i64, PuzzleError> {
        let digits = p.strip_prefix('-').unwrap_or(p);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        // saturate absurd magnitudes so they surface as range errors
        Ok(p.parse::<i64>().unwrap_or(if p.starts_with('-') { i64::MIN / 2 } else { i64::MAX / 2 }))
    };
    Difficulty::checked(part(l)?, part(m)?)
}

/// A 256-bit SHA-256 output. Renders as 64 lowercase hex digits.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    /// Hex digit at position `i` (0 is the most significant).
    #[inline]
    pub fn nibble(&self, i: usize) -> u8 {
        let byte = self.0[i / 2];
        if i.is_multiple_of(2) {
            byte >> 4
        } else {
            byte & 0x0f
        }
    }

    /// Length of the maximal leading run of zero hex digits.
    pub fn leading_zero_digits(&self) -> u32 {
        let mut run = 0;
        for byte in self.0 {
            if byte == 0 {
                run += 2;
            } else {
                if byte >> 4 == 0 {
                    run += 1;
                }
                break;
            }
        }
        run
    }

    /// Number of zero hex digits strictly after the leading run.
    pub fn zeros_after_leading_run(&self) -> u32 {
        let run = self.leading_zero_digits() as usize;
        (run..HEX_DIGITS as usize)
            .filter(|&i| self.nibble(i) == 0)
            .count() as u32
    }

    pub fn satisfies(&self, d: Difficulty) -> bool {
        let run = self.leading_zero_digits();
        if run == HEX_DIGITS {
            return true;
        }
        run >= d.leading() && self.zeros_after_leading_run() >= d.middle()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Result<Self, PuzzleError> {
        validate_hex(text)?;
        if text.len() != HEX_DIGITS as usize {
            return Err(PuzzleError::DigestLength(text.len()));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(text, &mut out).map_err(|_| PuzzleError::DigestLength(text.len()))?;
        Ok(Digest(out))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({self})")
    }
}

impl FromStr for Digest {
    type Err = PuzzleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Digest::from_hex(s)
    }
}

fn validate_hex(text: &str) -> Result<(), PuzzleError> {
    if text.is_empty() {
        return Err(PuzzleError::EmptyDigest);
    }
    match text.bytes().position(|b| !b.is_ascii_hexdigit()) {
        Some(position) => Err(PuzzleError::InvalidHex {
            position,
            found: text[position..].chars().next().expect("position is a char boundary"),
        }),
        None => Ok(()),
    }
}

/// Length of the maximal leading run of `'0'` digits in a hex string.
pub fn count_leading_zeros(digest_hex: &str) -> Result<u32, PuzzleError> {
    validate_hex(digest_hex)?;
    Ok(digest_hex.bytes().take_while(|&b| b == b'0').count() as u32)
}

/// Number of `'0'` digits after the maximal leading run, trailing zeros included.
pub fn count_middle_zeros(digest_hex: &str) -> Result<u32, PuzzleError> {
    let run = count_leading_zeros(digest_hex)? as usize;
    Ok(digest_hex.bytes().skip(run).filter(|&b| b == b'0').count() as u32)
}

/// Checks a 64-digit hex digest against `d`.
pub fn check_difficulty(digest_hex: &str, d: Difficulty) -> Result<bool, PuzzleError> {
    validate_hex(digest_hex)?;
    if digest_hex.len() != HEX_DIGITS as usize {
        return Err(PuzzleError::DigestLength(digest_hex.len()));
    }
    let bytes = digest_hex.as_bytes();
    let run = bytes.iter().take_while(|&&b| b == b'0').count();
    if run == bytes.len() {
        return Ok(true);
    }
    let middle = bytes[run..].iter().filter(|&&b| b == b'0').count();
    Ok(run as u32 >= d.leading() && middle as u32 >= d.middle())
}

pub fn sha256(bytes: &[u8]) -> Digest {
    Digest(Sha256::digest(bytes).into())
}

/// Writes `n` as ASCII decimal into `buf`, returning the used tail.
fn decimal(n: u64, buf: &mut [u8; 20]) -> &[u8] {
    let mut i = buf.len();
    let mut n = n;
    loop {
        i -= 1;
        buf[i] = b'0' + (n % 10) as u8;
        n /= 10;
        if n == 0 {
            break;
        }
    }
    &buf[i..]
}

/// Hashes one header against many nonces, reusing the absorbed header state.
#[derive(Clone)]
pub struct NonceHasher {
    prefix: Sha256,
}

impl NonceHasher {
    pub fn new(header: &[u8]) -> Self {
        let mut prefix = Sha256::new();
        prefix.update(header);
        NonceHasher { prefix }
    }

    pub fn hash(&self, nonce: u64) -> Digest {
        let mut buf = [0u8; 20];
        let mut h = self.prefix.clone();
        h.update(decimal(nonce, &mut buf));
        Digest(h.finalize().into())
    }
}

/// `SHA-256(header ‖ decimal(nonce))`.
pub fn hash_with_nonce(header: &[u8], nonce: u64) -> Digest {
    NonceHasher::new(header).hash(nonce)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PuzzleSolution {
    pub nonce: u64,
    pub digest: Digest,
    /// Nonces tried, the winning one included.
    pub attempts: u64,
}

/// Scans nonces upward from `start_nonce` for a digest satisfying `d`.
///
/// On exhaustion the error carries the next untried nonce so the caller can
/// resume the scan.
pub fn solve(
    header: &[u8],
    d: Difficulty,
    start_nonce: u64,
    max_attempts: u64,
) -> Result<PuzzleSolution, PuzzleError> {
    if max_attempts == 0 {
        return Err(PuzzleError::ZeroAttempts);
    }
    let hasher = NonceHasher::new(header);
    let mut nonce = start_nonce;
    let mut attempts = 0u64;
    while attempts < max_attempts {
        let digest = hasher.hash(nonce);
        attempts += 1;
        if digest.satisfies(d) {
            return Ok(PuzzleSolution {
                nonce,
                digest,
                attempts,
            });
        }
        match nonce.checked_add(1) {
            Some(n) => nonce = n,
            None => {
                return Err(PuzzleError::NotFound {
                    attempts,
                    next_nonce: u64::MAX,
                })
            }
        }
    }
    Err(PuzzleError::NotFound {
        attempts,
        next_nonce: nonce,
    })
}

/// Recomputes the digest for `solution.nonce` and checks it against `d`.
pub fn verify(header: &[u8], solution: &PuzzleSolution, d: Difficulty) -> bool {
    hash_with_nonce(header, solution.nonce) == solution.digest && solution.digest.satisfies(d)
}
