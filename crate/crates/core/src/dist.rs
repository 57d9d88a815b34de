use rand::RngCore;
use rand_distr::{Distribution, Normal};

/// Normal draw censored from below: values under `floor` become `floor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampedNormal {
    pub mean: f64,
    pub stddev: f64,
    pub floor: f64,
}

impl ClampedNormal {
    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        if self.stddev <= 0.0 || !self.stddev.is_finite() {
            return self.mean.max(self.floor);
        }
        // stddev is positive and finite here, so construction cannot fail
        let normal = Normal::new(self.mean, self.stddev).expect("valid normal parameters");
        normal.sample(rng).max(self.floor)
    }
}
