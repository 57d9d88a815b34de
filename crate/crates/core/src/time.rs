use core::fmt;
use core::ops::Add;
use core::str::FromStr;

/// Simulated time in nanoseconds since the start of a run.
///
/// Rendered as milliseconds with six decimals, which is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    /// Rounds a non-negative millisecond quantity to the nearest nanosecond.
    pub fn from_ms(ms: f64) -> SimTime {
        if ms.is_nan() || ms <= 0.0 {
            return SimTime(0);
        }
        let ns = ms * 1e6 + 0.5;
        if ns >= u64::MAX as f64 {
            SimTime(u64::MAX)
        } else {
            SimTime(ns as u64)
        }
    }

    pub fn as_ms(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn nanos(self) -> u64 {
        self.0
    }

    /// `self + ms`, saturating.
    pub fn after_ms(self, ms: f64) -> SimTime {
        self + SimTime::from_ms(ms)
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid simulated time `{0}`, expected milliseconds with up to six decimals")]
pub struct SimTimeParseError(pub alloc::string::String);

impl FromStr for SimTime {
    type Err = SimTimeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || SimTimeParseError(s.into());
        let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
        let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
        if !digits(whole) || !(frac.is_empty() || digits(frac)) || frac.len() > 6 {
            return Err(err());
        }
        let ms: u64 = whole.parse().map_err(|_| err())?;
        let mut sub: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| err())? };
        for _ in frac.len()..6 {
            sub *= 10;
        }
        ms.checked_mul(1_000_000)
            .and_then(|n| n.checked_add(sub))
            .map(SimTime)
            .ok_or_else(err)
    }
}
