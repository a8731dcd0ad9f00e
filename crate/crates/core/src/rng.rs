//! Counter-based random streams.
//!
//! Every random quantity in a simulation is drawn from a [`Stream`] addressed
//! by `(seed, kind, key words)` plus a draw counter, never from shared
//! mutable generator state. A draw is a pure function of its address, so
//!
//! * particle trajectories do not depend on the order particles are stored or
//!   advanced in,
//! * a face or halo cell shared by two grid patches regenerates the identical
//!   value on both sides,
//! * the hybrid consumes exactly the same face-noise values as a pure
//!   finite-volume run with the same seed.
//!
//! The generator is the splitmix64 finalizer applied to a mixed 64-bit key
//! advanced along a Weyl sequence, which is the standard construction for
//! reproducible parallel Monte Carlo.


use crate::math;
const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const TWO_PI: f64 = core::f64::consts::TAU;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Families of draws that must never collide with each other.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamKind {
    /// One standard normal per mesh face per step.
    FaceNoise = 1,
    /// Random-walk increments, keyed by (step, particle id).
    Walk = 2,
    /// Probabilistic rounding of ghost-cell particle counts.
    GhostCount = 3,
    /// Ghost particle positions within a boundary cell.
    GhostPosition = 4,
    /// Probabilistic rounding when filling cells that enter the particle region.
    RegridRound = 5,
    /// Particle positions for cells that enter the particle region.
    RegridPosition = 6,
    /// Initial particle positions at scenario construction.
    InitPosition = 7,
    /// Derivation of per-ensemble-member seeds.
    Member = 8,
}

/// Root of all randomness for one simulation (or one ensemble member).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimRng {
    seed: u64,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Open the stream addressed by `(kind, words)`.
    pub fn stream(&self, kind: StreamKind, words: &[u64]) -> Stream {
        let mut key = mix(self.seed ^ (kind as u64).wrapping_mul(GOLDEN));
        for &w in words {
            key = mix(key.wrapping_add(GOLDEN) ^ w);
        }
        Stream { key }
    }

    /// Derive the independent generator for ensemble member `index`.
    pub fn member(&self, index: u64) -> SimRng {
        SimRng {
            seed: self.stream(StreamKind::Member, &[index]).key,
        }
    }
}

/// An addressed stream of draws; `counter` selects the draw within the stream.
#[derive(Clone, Copy, Debug)]
pub struct Stream {
    key: u64,
}

impl Stream {
    #[inline]
    pub fn next_u64(&self, counter: u64) -> u64 {
        mix(self
            .key
            .wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&self, counter: u64) -> f64 {
        (self.next_u64(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`; safe as a logarithm argument.
    #[inline]
    pub fn uniform_open(&self, counter: u64) -> f64 {
        ((self.next_u64(counter) >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via Box-Muller.
    ///
    /// Consumes the two underlying uniforms at `2*counter` and `2*counter + 1`,
    /// so distinct counters always give independent normals.
    #[inline]
    pub fn normal(&self, counter: u64) -> f64 {
        let u1 = self.uniform_open(2 * counter);
        let u2 = self.uniform(2 * counter + 1);
        math::sqrt(-2.0 * math::ln(u1)) * math::cos(TWO_PI * u2)
    }
}
