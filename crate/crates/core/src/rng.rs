//! Deterministic counter-based random number generation.
//!
//! Everything that needs randomness (instance sampling, per-pixel path
//! seeds, weight init, batch shuffling) derives it from [`SplitMix64`] or
//! from [`hash64`], both fixed integer algorithms with identical output on
//! every platform. This is what makes datasets and renders bitwise
//! reproducible.

/// SplitMix64 (Steele, Lea, Flood: "Fast splittable pseudorandom number
/// generators"). One 64-bit state word, one mix per output.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_f32(&mut self) -> f32 {
        self.next_f64() as f32
    }

    /// Uniform in [lo, hi]. A collapsed interval returns exactly `lo`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        lo + (hi - lo) * self.next_f64()
    }

    pub fn uniform_f32(&mut self, lo: f32, hi: f32) -> f32 {
        self.uniform(lo as f64, hi as f64) as f32
    }

    /// Uniform integer in [0, n). n must be > 0.
    pub fn next_below(&mut self, n: u64) -> u64 {
        // 64-bit multiply-shift; bias is negligible for the n used here.
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive combination of integer words into one 64-bit value.
/// Used to derive independent streams, e.g. `hash64(&[seed, x, y, sample])`
/// for per-pixel path sampling so tile scheduling never changes results.
pub fn hash64(words: &[u64]) -> u64 {
    let mut h: u64 = 0x2545_f491_4f6c_dd1d;
    for &w in words {
        h = mix64(h ^ w).wrapping_add(0x9e37_79b9_7f4a_7c15);
    }
    mix64(h)
}
