//! Small deterministic helpers shared across modules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;

/// Derive an independent stream seed from a base seed and a salt
/// (splitmix64 finalizer). Used everywhere a module needs its own RNG
/// stream without consuming state from a shared generator.
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded ChaCha stream for (base, salt).
pub fn seeded_rng(base: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(base, salt))
}

/// Xavier-uniform initialized `rows×cols` matrix.
pub fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| (2.0 * rng.random::<f64>() - 1.0) * bound)
        .collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

/// Index of the maximum value; ties resolve to the lowest index.
pub fn argmax_ties_low(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax_ties_low(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_ties_low(&[5.0]), 0);
        assert_eq!(argmax_ties_low(&[0.0, 0.0, 0.0]), 0);
    }

    #[test]
    fn mix_seed_separates_streams() {
        assert_ne!(mix_seed(1, 0), mix_seed(1, 1));
        assert_eq!(mix_seed(7, 3), mix_seed(7, 3));
    }
}
