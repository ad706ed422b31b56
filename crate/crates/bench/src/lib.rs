//! Shared inputs for the benchmarks.

use cartographer_core::embed::EmbeddingMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `n` standard-normal points in `d` dimensions.
pub fn gaussian_matrix(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    let ids = (0..n).map(|i| format!("p{i:06}")).collect();
    EmbeddingMatrix::new(ids, d, data, "bench".into()).expect("valid matrix")
}
