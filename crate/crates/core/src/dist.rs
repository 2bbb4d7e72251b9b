//! Small sampling helpers shared by routers, producers and workloads.

use rand::Rng;

use crate::time::SimDuration;

/// A delay of `min` plus uniform jitter in `[0, jitter]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DelaySpec {
    pub min: SimDuration,
    pub jitter: SimDuration,
}

impl DelaySpec {
    pub const ZERO: DelaySpec = DelaySpec { min: SimDuration::ZERO, jitter: SimDuration::ZERO };

    pub fn fixed(d: SimDuration) -> Self {
        DelaySpec { min: d, jitter: SimDuration::ZERO }
    }

    pub fn new(min: SimDuration, jitter: SimDuration) -> Self {
        DelaySpec { min, jitter }
    }

    pub fn is_zero(&self) -> bool {
        self.min == SimDuration::ZERO && self.jitter == SimDuration::ZERO
    }

    /// Draws only when jitter is non-zero, so a fixed delay consumes no randomness.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SimDuration {
        if self.jitter == SimDuration::ZERO {
            return self.min;
        }
        let extra = rng.random_range(0..=self.jitter.as_micros());
        self.min + SimDuration::from_micros(extra)
    }

    pub fn mean(&self) -> SimDuration {
        self.min + SimDuration::from_micros(self.jitter.as_micros() / 2)
    }
}

/// How long an inserted object may stay in a content store.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LifetimeDist {
    #[default]
    Infinite,
    Fixed(SimDuration),
    /// Uniform over `[lo, hi]`.
    Uniform { lo: SimDuration, hi: SimDuration },
}

impl LifetimeDist {
    /// `None` means the entry never expires.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<SimDuration> {
        match *self {
            LifetimeDist::Infinite => None,
            LifetimeDist::Fixed(d) => Some(d),
            LifetimeDist::Uniform { lo, hi } => {
                let (lo, hi) = (lo.as_micros(), hi.as_micros().max(lo.as_micros()));
                Some(SimDuration::from_micros(rng.random_range(lo..=hi)))
            }
        }
    }
}

/// Exponential inter-arrival gap for a Poisson process of `rate_per_s`.
pub fn exponential_gap<R: Rng + ?Sized>(rng: &mut R, rate_per_s: f64) -> SimDuration {
    debug_assert!(rate_per_s > 0.0);
    let u: f64 = rng.random::<f64>();
    // 1 - u lies in (0, 1]
    SimDuration::from_secs_f64(-(1.0 - u).ln() / rate_per_s)
}

/// Population mean and coefficient of variation (std / mean) of `xs`.
/// `None` for fewer than two samples or a zero mean.
pub fn mean_and_cv(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return None;
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt() / mean))
}
