use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use super::{Matrix, Real};
use crate::error::{Error, Result};

/// xoshiro256** seeded from a `u64` through splitmix64.
///
/// All draws are derived from `next_u64`, so the stream is identical on every
/// platform for a given seed.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: Xoshiro256StarStar,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream, keyed by `stream`.
    pub fn fork(&self, stream: u64) -> SeededRng {
        SeededRng::new(
            self.seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
                ^ stream,
        )
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` by rejection sampling. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Fisher-Yates, iterating from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

/// Matrix of i.i.d. uniform draws in `[lo, hi)`, consumed in row-major order
/// (one `next_f64` per entry, except rare redraws when rounding to `T` lands on `hi`).
pub fn seeded_uniform_init<T: Real>(
    rng: &mut SeededRng,
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
) -> Result<Matrix<T>> {
    if !(lo < hi) {
        return Err(Error::invalid(format!(
            "uniform init needs lo < hi, got [{lo}, {hi})"
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    let hi_t = T::lit(hi);
    while data.len() < rows * cols {
        let v = T::lit(lo + (hi - lo) * rng.next_f64());
        if v < hi_t {
            data.push(v);
        }
    }
    Matrix::from_vec(rows, cols, data)
}
