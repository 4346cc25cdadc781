//! Synthetic benchmark data.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, SplitRole};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::seeded;

/// Isotropic unit-variance Gaussian blobs with balanced classes.
///
/// Class `k` is centred at `separation · e_(k mod dim)`, shifted so the
/// class centres average to the origin.
pub fn gaussian_blobs(
    n: usize,
    dim: usize,
    classes: usize,
    separation: f64,
    seed: u64,
    role: SplitRole,
) -> Result<Dataset> {
    if dim == 0 || classes < 2 {
        return Err(Error::Invalid("blobs need dim >= 1 and classes >= 2".into()));
    }
    let mut centres = vec![vec![0.0; dim]; classes];
    for (k, c) in centres.iter_mut().enumerate() {
        c[k % dim] = separation;
    }
    for j in 0..dim {
        let mean = centres.iter().map(|c| c[j]).sum::<f64>() / classes as f64;
        centres.iter_mut().for_each(|c| c[j] -= mean);
    }
    let mut rng = seeded(seed);
    let mut x = DenseMatrix::zeros(n, dim);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let class = rng.random_range(0..classes);
        for (j, v) in x.row_mut(i).iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = centres[class][j] + z;
        }
        y.push(class);
    }
    Dataset::from_classes(x, &y, classes, role)
}

/// Two-domain covariate/concept shift benchmark.
///
/// Domain `A` sits at `(−sep, 0, 0)` and is labelled by the sign of the
/// second feature; domain `B` sits at `(+sep, 0, 0)` and is labelled by the
/// sign of the third. Rows come from `B` with probability `b_fraction` and
/// carry domain tags `"A"`/`"B"`.
pub fn two_domain_shift(n: usize, b_fraction: f64, separation: f64, seed: u64, role: SplitRole) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&b_fraction) {
        return Err(Error::Invalid("b_fraction must lie in [0, 1]".into()));
    }
    let mut rng = seeded(seed);
    let mut x = DenseMatrix::zeros(n, 3);
    let mut y = Vec::with_capacity(n);
    let mut tags = Vec::with_capacity(n);
    for i in 0..n {
        let in_b = rng.random::<f64>() < b_fraction;
        let row = x.row_mut(i);
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        row[0] += if in_b { separation } else { -separation };
        let label = if in_b { row[2] > 0.0 } else { row[1] > 0.0 };
        y.push(label as usize);
        tags.push(if in_b { "B" } else { "A" }.to_string());
    }
    Dataset::from_classes(x, &y, 2, role)?.with_domains(tags)
}
