//! Counter-based random number generation.
//!
//! Every random quantity in the crate is a pure function of
//! `(seed, stream, counter)`, so results are identical regardless of call
//! order, thread count, or scheduling. Parallel callers take disjoint
//! streams; purpose tags keep initial-data sampling, Brownian increments,
//! and Monte Carlo trials on separate streams even for equal indices.

use crate::scalar::{r, Real};
use crate::vec3::Vector3;

/// Stream purpose tags, kept in the high bits of the stream id; substream
/// ids passed by callers must stay below 2^48.
pub mod tag {
    pub const INIT_POSITION: u64 = 1 << 56;
    pub const INIT_VELOCITY: u64 = 2 << 56;
    pub const NOISE: u64 = 3 << 56;
    pub const MONTE_CARLO: u64 = 5 << 56;
    pub const PROJECTION: u64 = 6 << 56;
}

/// Substream reserved for sampling the reference ensemble's initial data,
/// disjoint from the per-replication substreams used for Phi.
pub const REFERENCE_SUBSTREAM: u64 = 0x5eed << 32;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// SplitMix64-style avalanche of the full key. Statistically independent
/// outputs for distinct `(seed, stream, counter)` triples.
#[inline]
pub fn hash3(seed: u64, stream: u64, counter: u64) -> u64 {
    let mut h = mix(seed ^ 0x9e37_79b9_7f4a_7c15);
    h = mix(h ^ stream.wrapping_mul(0xff51_afd7_ed55_8ccd));
    mix(h ^ counter.wrapping_mul(0xc4ce_b9fe_1a85_ec53))
}

/// A deterministic stream of random numbers: `(seed, stream)` fixes the
/// sequence, the counter advances per draw.
#[derive(Debug, Clone)]
pub struct CounterStream {
    seed: u64,
    stream: u64,
    counter: u64,
}

impl CounterStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            seed,
            stream,
            counter: 0,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = hash3(self.seed, self.stream, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform draw in (0, 1].
    #[inline]
    pub fn uniform<R: Real>(&mut self) -> R {
        let bits = (self.next_u64() >> 11) + 1; // 53 bits, never zero
        r::<R>(bits as f64 * (1.0 / 9007199254740992.0))
    }

    /// Pair of independent standard normals (Box-Muller).
    #[inline]
    pub fn normal_pair<R: Real>(&mut self) -> (R, R) {
        let u1: R = self.uniform();
        let u2: R = self.uniform();
        let radial = (r::<R>(-2.0) * u1.ln()).sqrt();
        let angle = r::<R>(2.0) * R::PI() * u2;
        (radial * angle.cos(), radial * angle.sin())
    }

    #[inline]
    pub fn normal<R: Real>(&mut self) -> R {
        self.normal_pair().0
    }

    /// Standard normal vector in R^3.
    #[inline]
    pub fn normal3<R: Real>(&mut self) -> Vector3<R> {
        let (a, b) = self.normal_pair();
        let (c, _) = self.normal_pair();
        [a, b, c]
    }

    /// Uniformly distributed unit vector in R^3.
    pub fn unit_vector<R: Real>(&mut self) -> Vector3<R> {
        loop {
            let v: Vector3<R> = self.normal3();
            let n = crate::vec3::norm(v);
            if n > r(1e-8) {
                return crate::vec3::scale(v, R::one() / n);
            }
        }
    }
}

/// Brownian increments keyed by `(seed, particle, step)`.
///
/// Each increment is an i.i.d. centered Gaussian vector in R^3 with
/// per-component variance `dt`; the same key always reproduces the same
/// increment. `stream_offset` separates ensembles that must not share noise.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSource {
    seed: u64,
    stream_offset: u64,
    dt: f64,
}

impl NoiseSource {
    pub fn new(seed: u64, stream_offset: u64, dt: f64) -> Self {
        Self {
            seed,
            stream_offset,
            dt,
        }
    }

    /// The Brownian increment for (particle, step).
    #[inline]
    pub fn increment<R: Real>(&self, particle: usize, step: u64) -> Vector3<R> {
        let mut s = CounterStream {
            seed: self.seed,
            stream: tag::NOISE | (self.stream_offset + particle as u64),
            counter: step.wrapping_mul(4),
        };
        let v: Vector3<R> = s.normal3();
        crate::vec3::scale(v, r::<R>(self.dt.sqrt()))
    }
}
