//! Criterion benchmarks for the valuation engine; see `benches/`.

use dvrl_core::experiments::corrupt_labels;
use dvrl_core::experiments::synthetic::gaussian_blobs;
use dvrl_core::{Dataset, SplitRole};

/// Blobs with 20% flipped labels plus a clean validation split.
pub fn noisy_blobs(n: usize, dim: usize, seed: u64) -> (Dataset, Dataset) {
    let train = gaussian_blobs(n, dim, 2, 3.0, seed, SplitRole::Train).expect("blobs");
    let train = corrupt_labels(&train, 0.2, seed).expect("flip");
    let validation = gaussian_blobs(n / 2, dim, 2, 3.0, seed + 1, SplitRole::Validation).expect("blobs");
    (train, validation)
}
