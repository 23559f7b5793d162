use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    /// Tests for a positive mean.
    #[default]
    Greater,
    TwoSided,
}

/// Sign-flip permutation test on the mean of paired differences.
///
/// Each of `n_perm` draws flips the sign of every difference independently.
/// The p-value is `(1 + hits) / (n_perm + 1)`, where a hit is a permuted
/// mean at least as extreme as the observed one. Comparisons allow a
/// rounding slack of `1e-12` relative to the mean absolute difference.
pub fn paired_permutation_test(deltas: &[f64], n_perm: usize, seed: u64, sides: Sidedness) -> f64 {
    assert!(!deltas.is_empty(), "permutation test needs at least one difference");
    let n = deltas.len() as f64;
    let observed: f64 = deltas.iter().sum::<f64>() / n;
    let slack = 1e-12 * deltas.iter().map(|d| d.abs()).sum::<f64>() / n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n_perm {
        let mut sum = 0.0;
        for chunk in deltas.chunks(64) {
            let bits: u64 = rng.random();
            for (i, d) in chunk.iter().enumerate() {
                if bits >> i & 1 == 1 {
                    sum -= d;
                } else {
                    sum += d;
                }
            }
        }
        let mean = sum / n;
        let extreme = match sides {
            Sidedness::Greater => mean >= observed - slack,
            Sidedness::TwoSided => mean.abs() >= observed.abs() - slack,
        };
        hits += usize::from(extreme);
    }
    (1 + hits) as f64 / (n_perm + 1) as f64
}
