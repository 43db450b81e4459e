//! Deterministic random streams and stateless hash randomness.
//!
//! Monte Carlo trials draw from a [`Stream`], a splitmix64 sequence keyed by
//! `(master_seed, trial_index)`, so results do not depend on scheduling or
//! iteration order. The genealogy simulator instead attaches uniforms to
//! positions in the family tree via [`combine`]/[`unit_f64`]; two runs with
//! different `(p, alpha)` but the same trial seed then share every underlying
//! uniform, which is what makes coupled comparisons possible.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child hash from a parent hash and a label.
#[inline]
pub fn combine(h: u64, label: u64) -> u64 {
    mix64(h ^ label.wrapping_mul(GOLDEN).wrapping_add(0x2545_F491_4F6C_DD1D))
}

/// Map a hash to a uniform in `[0, 1)` with 53-bit resolution.
#[inline]
pub fn unit_f64(h: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    ((h >> 11) as f64) * SCALE
}

/// A splitmix64 stream.
#[derive(Clone, Debug)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            state: mix64(seed ^ 0x6A09_E667_F3BC_C909),
        }
    }

    /// Independent stream for one work unit of a reproducible batch.
    pub fn from_parts(master_seed: u64, index: u64) -> Self {
        Stream {
            state: mix64(master_seed ^ combine(0x1F83_D9AB_FB41_BD6B, index)),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        (Stream::next_u64(self) >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        Stream::next_u64(self)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = Stream::next_u64(self).to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
