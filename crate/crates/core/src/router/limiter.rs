//! Per-domain interest limiter: one token bucket per first name component.
//!
//! Token arithmetic is integer. A token is 10^9 "nano-tokens" and the rate
//! is kept in milli-interests per second, so one microsecond of refill adds
//! exactly `rate_milli` nano-tokens.

use std::collections::BTreeMap;

use crate::names::Name;
use crate::time::SimTime;

const NANO: u128 = 1_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateLimit {
    /// Sustained interests per second.
    pub rate: f64,
    /// Bucket depth in interests.
    pub burst: f64,
}

impl RateLimit {
    /// A limit whose burst is one second's worth (at least one interest).
    pub fn per_second(rate: f64) -> Self {
        RateLimit { rate, burst: rate.ceil().max(1.0) }
    }
}

#[derive(Clone, Debug)]
struct Bucket {
    tokens: u128,
    last: SimTime,
}

#[derive(Clone, Debug)]
pub struct DomainLimiter {
    rate_milli: u128,
    depth: u128,
    buckets: BTreeMap<String, Bucket>,
}

impl DomainLimiter {
    pub fn new(limit: RateLimit) -> Self {
        let rate_milli = (limit.rate.max(0.0) * 1_000.0).round() as u128;
        let depth = (limit.burst.max(1.0) * NANO as f64).round() as u128;
        DomainLimiter { rate_milli, depth, buckets: BTreeMap::new() }
    }

    /// The domain key of a name: its first component, or "/" for the root.
    pub fn domain(name: &Name) -> &str {
        name.first().unwrap_or("/")
    }

    /// Takes one token for `name`'s domain. `false` means drop.
    pub fn admit(&mut self, name: &Name, now: SimTime) -> bool {
        let depth = self.depth;
        let rate = self.rate_milli;
        let bucket = self
            .buckets
            .entry(Self::domain(name).to_string())
            .or_insert(Bucket { tokens: depth, last: now });
        let elapsed = now.since(bucket.last).as_micros() as u128;
        bucket.tokens = (bucket.tokens + elapsed * rate).min(depth);
        bucket.last = now;
        if bucket.tokens >= NANO {
            bucket.tokens -= NANO;
            true
        } else {
            false
        }
    }
}
