//! Seeded counter-based random streams.
//!
//! Every draw is a pure function of `(seed, channel, index)`, so noise
//! sequences are reproducible and independent across channels and runs
//! without shared mutable state.

use libm::{cos, log, sqrt};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A stateless stream of random values addressed by index.
#[derive(Clone, Copy, Debug)]
pub struct Stream {
    key: u64,
}

impl Stream {
    pub fn new(seed: u64, channel: u64) -> Self {
        Stream {
            key: mix(seed ^ mix(channel.wrapping_mul(GOLDEN))),
        }
    }

    pub fn bits_at(&self, index: u64) -> u64 {
        mix(self.key ^ mix(index.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in the half-open interval (0, 1].
    pub fn unit_at(&self, index: u64) -> f64 {
        ((self.bits_at(index) >> 11) as f64 + 1.0) * (1.0 / 9007199254740992.0)
    }

    pub fn uniform_at(&self, index: u64, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit_at(index)
    }

    /// Standard normal via the Box-Muller transform; consumes two sub-draws
    /// derived from one index.
    pub fn gaussian_at(&self, index: u64, sigma: f64) -> f64 {
        let u1 = self.unit_at(index.wrapping_mul(2));
        let u2 = self.unit_at(index.wrapping_mul(2).wrapping_add(1));
        sigma * sqrt(-2.0 * log(u1)) * cos(2.0 * core::f64::consts::PI * u2)
    }
}

/// Stateful convenience wrapper over a [`Stream`] for sequential sampling.
#[derive(Clone, Debug)]
pub struct Rng {
    stream: Stream,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64, channel: u64) -> Self {
        Rng {
            stream: Stream::new(seed, channel),
            counter: 0,
        }
    }

    pub fn next_unit(&mut self) -> f64 {
        let v = self.stream.unit_at(self.counter);
        self.counter += 1;
        v
    }

    pub fn next_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_unit()
    }

    pub fn next_gaussian(&mut self, sigma: f64) -> f64 {
        let v = self.stream.gaussian_at(self.counter, sigma);
        self.counter += 1;
        v
    }
}
