//! Seeded random streams.
//!
//! Every replica owns a `WalkRng` built from ChaCha8 (a counter-based stream
//! cipher generator whose output is fixed across platforms). Replica seeds are
//! derived from a master seed with the SplitMix64 finalizer, so results never
//! depend on how replicas are scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replica `index` under `master_seed`.
pub fn replica_seed(master_seed: u64, index: u64) -> u64 {
    mix64(mix64(master_seed) ^ index.wrapping_mul(GOLDEN_GAMMA))
}

/// Random source used by all walkers.
///
/// `below` consumes 32-bit words (Lemire's multiply-and-reject), `step_code`
/// consumes 2-bit slices of buffered 64-bit words. A given walker only ever
/// uses one of the two so trajectories stay reproducible.
#[derive(Clone, Debug)]
pub struct WalkRng {
    inner: ChaCha8Rng,
    buf: u64,
    codes_left: u32,
}

impl WalkRng {
    pub fn new(seed: u64) -> Self {
        WalkRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
            buf: 0,
            codes_left: 0,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform float in [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..d`; `d` must be nonzero.
    #[inline]
    pub fn below(&mut self, d: u32) -> u32 {
        debug_assert!(d > 0);
        let mut m = u64::from(self.inner.next_u32()) * u64::from(d);
        if (m as u32) < d {
            let threshold = d.wrapping_neg() % d;
            while (m as u32) < threshold {
                m = u64::from(self.inner.next_u32()) * u64::from(d);
            }
        }
        (m >> 32) as u32
    }

    /// Uniform 2-bit code in `0..4`.
    #[inline]
    pub fn step_code(&mut self) -> u8 {
        if self.codes_left == 0 {
            self.buf = self.inner.next_u64();
            self.codes_left = 32;
        }
        let c = (self.buf & 3) as u8;
        self.buf >>= 2;
        self.codes_left -= 1;
        c
    }
}
