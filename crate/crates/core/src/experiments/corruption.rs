use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitRole, TaskKind};
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionSpec {
    /// Exactly `⌊ratio · N⌋` rows get a label drawn uniformly from the other
    /// classes.
    LabelFlip { ratio: f64, seed: u64 },
    /// Every feature of every row gets independent `N(0, σ²)` noise.
    GaussianFeature { sigma: f64, seed: u64 },
}

/// `⌊ratio · n⌋`, robust to representation error such as `0.29 · 100`.
pub fn exact_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64 + 1e-9).floor() as usize).min(n)
}

pub fn corrupt(data: &Dataset, spec: &CorruptionSpec) -> Result<Dataset> {
    match *spec {
        CorruptionSpec::LabelFlip { ratio, seed } => corrupt_labels(data, ratio, seed),
        CorruptionSpec::GaussianFeature { sigma, seed } => corrupt_features(data, sigma, seed),
    }
}

/// Flips the labels of `⌊ratio · N⌋` distinct, uniformly chosen rows and
/// records them in the corruption flags.
pub fn corrupt_labels(data: &Dataset, ratio: f64, seed: u64) -> Result<Dataset> {
    if data.task() != TaskKind::Classification {
        return Err(Error::Invalid("label corruption needs a classification dataset".into()));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::config("ratio", format!("must lie in [0, 1], got {ratio}")));
    }
    let classes = data.label_dim();
    if classes < 2 {
        return Err(Error::Invalid("label corruption needs at least 2 classes".into()));
    }
    let n = data.len();
    let count = exact_count(ratio, n);
    let mut rng = seeded(seed);
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    rows.truncate(count);

    let mut labels = data.labels().clone();
    let mut flags = data.corruption_flags().map_or_else(|| vec![false; n], <[bool]>::to_vec);
    for &r in &rows {
        let old = data.classes()[r];
        // uniform over the c − 1 other classes
        let mut new = rng.random_range(0..classes - 1);
        if new >= old {
            new += 1;
        }
        labels.row_mut(r).fill(0.0);
        labels.set(r, new, 1.0);
        flags[r] = true;
    }
    data.clone().with_labels(labels)?.with_corruption_flags(flags)
}

/// Adds i.i.d. `N(0, σ²)` noise to every feature. Training split only.
pub fn corrupt_features(data: &Dataset, sigma: f64, seed: u64) -> Result<Dataset> {
    if data.role() != SplitRole::Train {
        return Err(Error::Invalid(format!(
            "feature noise is only applied to the training split, got {:?}",
            data.role()
        )));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::config("sigma", format!("must be > 0, got {sigma}")));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::config("sigma", e.to_string()))?;
    let mut rng = seeded(seed);
    let mut features = data.features().clone();
    for v in features.as_mut_slice() {
        *v += normal.sample(&mut rng);
    }
    data.clone().with_features(features)
}
