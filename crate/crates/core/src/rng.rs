//! Schedule-independent random streams.
//!
//! Every resampling loop derives the generator for iteration `k` from
//! `(seed, k)` alone, so results do not depend on how iterations are spread
//! over threads.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for the `index`-th draw under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Generator for a redraw of `index` after `retry` failed attempts.
pub fn retry_stream(seed: u64, index: u64, retry: u32) -> ChaCha8Rng {
    if retry == 0 {
        return stream(seed, index);
    }
    let mixed = seed ^ (u64::from(retry)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(index);
    rng
}

/// Uniformly random permutation of `0..n` for draw `(seed, index, retry)`.
pub fn permutation(n: usize, seed: u64, index: u64, retry: u32) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut retry_stream(seed, index, retry));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_is_reproducible_and_complete() {
        let a = permutation(50, 7, 3, 0);
        let b = permutation(50, 7, 3, 0);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(a, permutation(50, 7, 4, 0));
        assert_ne!(a, permutation(50, 7, 3, 1));
    }
}
