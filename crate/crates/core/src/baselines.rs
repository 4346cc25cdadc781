//! Reference valuation methods: random values, leave-one-out, exact
//! Shapley (small `n`) and truncated Monte Carlo Shapley.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use crate::data::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::predictor::{score, Metric, PredictorModel, PredictorSpec};
use crate::rng::{derive_seed, seeded};

/// Largest `n` accepted by [`shapley_exact`].
pub const EXACT_SHAPLEY_MAX: usize = 12;

/// Scores subsets of a fixed ground set; larger is better.
pub trait SubsetScorer: Sync {
    fn ground_size(&self) -> usize;
    /// `subset` holds distinct indices in ascending order.
    fn score(&self, subset: &[usize]) -> Result<f64>;
}

/// Trains a fresh predictor on a subset of the training data and scores it
/// on a held-out set.
#[derive(Clone, Debug)]
pub struct MarginalEvaluator {
    pub predictor: PredictorSpec,
    pub metric: Metric,
    pub holdout: Dataset,
    pub seed: u64,
}

impl MarginalEvaluator {
    pub fn new(predictor: PredictorSpec, metric: Metric, holdout: Dataset, seed: u64) -> Self {
        MarginalEvaluator {
            predictor,
            metric,
            holdout,
            seed,
        }
    }

    /// Metric value (not performance-oriented) of a predictor trained on
    /// `train`, or of the empty-coalition fallback when `train` is empty.
    pub fn metric_value(&self, train: &Dataset, prior: &Dataset) -> Result<f64> {
        if train.is_empty() {
            return self.empty_metric(prior);
        }
        let mut model = PredictorModel::for_dataset(self.predictor.clone(), train, self.seed)?;
        model.fit(train, self.seed)?;
        model.evaluate(&self.holdout, self.metric)
    }

    /// Metric of the data-free predictor: the majority class of `prior`
    /// (lowest index on ties) or the mean of its regression targets.
    pub fn empty_metric(&self, prior: &Dataset) -> Result<f64> {
        let constant = match prior.task() {
            TaskKind::Classification => {
                let mut counts = vec![0usize; prior.label_dim()];
                for c in prior.classes() {
                    counts[c] += 1;
                }
                let mut majority = 0;
                for (k, &c) in counts.iter().enumerate() {
                    if c > counts[majority] {
                        majority = k;
                    }
                }
                let mut row = vec![0.0; prior.label_dim()];
                row[majority] = 1.0;
                row
            }
            TaskKind::Regression => {
                let y = prior.labels().as_slice();
                vec![y.iter().sum::<f64>() / y.len().max(1) as f64]
            }
        };
        let mut predictions = DenseMatrix::zeros(self.holdout.len(), constant.len());
        for r in 0..predictions.rows() {
            predictions.row_mut(r).copy_from_slice(&constant);
        }
        score(self.metric, &self.holdout, &predictions)
    }

    /// Binds the evaluator to a training set.
    pub fn bind<'a>(&'a self, data: &'a Dataset) -> DatasetScorer<'a> {
        DatasetScorer {
            evaluator: self,
            data,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

/// [`MarginalEvaluator`] over a concrete training set, memoising subset
/// scores.
pub struct DatasetScorer<'a> {
    evaluator: &'a MarginalEvaluator,
    data: &'a Dataset,
    cache: Mutex<HashMap<Vec<usize>, f64>>,
}

impl SubsetScorer for DatasetScorer<'_> {
    fn ground_size(&self) -> usize {
        self.data.len()
    }

    fn score(&self, subset: &[usize]) -> Result<f64> {
        if let Some(&v) = self.cache.lock().expect("score cache poisoned").get(subset) {
            return Ok(v);
        }
        let value = self
            .evaluator
            .metric_value(&self.data.subset(subset), self.data)?;
        let perf = self.evaluator.metric.as_performance(value);
        self.cache
            .lock()
            .expect("score cache poisoned")
            .insert(subset.to_vec(), perf);
        Ok(perf)
    }
}

/// I.i.d. `U[0, 1]` values.
pub fn random_values(n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Invalid("random_values needs n >= 1".into()));
    }
    let mut rng = seeded(seed);
    Ok((0..n).map(|_| rng.random::<f64>()).collect())
}

pub fn loo_values(data: &Dataset, evaluator: &MarginalEvaluator) -> Result<Vec<Result<f64>>> {
    loo_from_scorer(&evaluator.bind(data))
}

/// `v_i = perf(all) − perf(all \ {i})`. A failed retrain yields an error in
/// that slot only; a failure on the full set aborts.
pub fn loo_from_scorer<S: SubsetScorer>(scorer: &S) -> Result<Vec<Result<f64>>> {
    let n = scorer.ground_size();
    if n < 2 {
        return Err(Error::Invalid("leave-one-out needs at least 2 samples".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let full = scorer.score(&all)?;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let rest: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            scorer.score(&rest).map(|without| full - without)
        })
        .collect())
}

pub fn shapley_exact(data: &Dataset, evaluator: &MarginalEvaluator) -> Result<Vec<f64>> {
    shapley_exact_from_scorer(&evaluator.bind(data))
}

/// Exact Shapley values by enumerating all `2^n` coalitions.
pub fn shapley_exact_from_scorer<S: SubsetScorer>(scorer: &S) -> Result<Vec<f64>> {
    let n = scorer.ground_size();
    if n > EXACT_SHAPLEY_MAX {
        return Err(Error::Invalid(format!(
            "exact Shapley enumerates 2^n subsets and is limited to n <= {EXACT_SHAPLEY_MAX} (got {n}); use truncated Monte Carlo"
        )));
    }
    let scores: Vec<f64> = (0..1u64 << n)
        .into_par_iter()
        .map(|mask| scorer.score(&mask_members(mask, n)))
        .collect::<Result<_>>()?;
    // weight(|S|) = |S|! (n − |S| − 1)! / n!
    let mut fact = vec![1.0f64; n + 1];
    for k in 1..=n {
        fact[k] = fact[k - 1] * k as f64;
    }
    let weight: Vec<f64> = (0..n)
        .map(|s| fact[s] * fact[n - s - 1] / fact[n])
        .collect();
    let mut values = vec![0.0; n];
    for (i, value) in values.iter_mut().enumerate() {
        let bit = 1u64 << i;
        for mask in 0..1u64 << n {
            if mask & bit == 0 {
                let size = mask.count_ones() as usize;
                *value += weight[size] * (scores[(mask | bit) as usize] - scores[mask as usize]);
            }
        }
    }
    Ok(values)
}

fn mask_members(mask: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| mask >> i & 1 == 1).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TmcConfig {
    pub permutations: usize,
    /// Absolute tolerance; `None` means `0.001 · |perf(full)|`.
    pub truncation_tolerance: Option<f64>,
    pub seed: u64,
}

pub fn shapley_tmc(data: &Dataset, evaluator: &MarginalEvaluator, config: &TmcConfig) -> Result<Vec<f64>> {
    shapley_tmc_from_scorer(&evaluator.bind(data), config)
}

/// Truncated Monte Carlo Shapley.
///
/// Each permutation is scanned from the empty coalition; once the running
/// score is within the tolerance of `perf(full)`, the remaining members get
/// a zero marginal contribution.
pub fn shapley_tmc_from_scorer<S: SubsetScorer>(scorer: &S, config: &TmcConfig) -> Result<Vec<f64>> {
    if config.permutations == 0 {
        return Err(Error::config("permutations", "must be >= 1"));
    }
    let n = scorer.ground_size();
    let all: Vec<usize> = (0..n).collect();
    let full = scorer.score(&all)?;
    let empty = scorer.score(&[])?;
    let tolerance = config.truncation_tolerance.unwrap_or(0.001 * full.abs());
    if tolerance.is_nan() || tolerance < 0.0 {
        return Err(Error::config("truncation_tolerance", "must be >= 0"));
    }

    let contributions: Vec<Vec<f64>> = (0..config.permutations)
        .into_par_iter()
        .map(|p| {
            let mut order = all.clone();
            order.shuffle(&mut seeded(derive_seed(config.seed, p as u64)));
            let mut marginal = vec![0.0; n];
            let mut members: Vec<usize> = Vec::with_capacity(n);
            let mut running = empty;
            for &i in &order {
                if (full - running).abs() < tolerance {
                    break;
                }
                let pos = members.partition_point(|&m| m < i);
                members.insert(pos, i);
                let next = scorer.score(&members)?;
                marginal[i] = next - running;
                running = next;
            }
            Ok(marginal)
        })
        .collect::<Result<_>>()?;

    let mut values = vec![0.0; n];
    for m in &contributions {
        for (v, c) in values.iter_mut().zip(m) {
            *v += c;
        }
    }
    let count = config.permutations as f64;
    values.iter_mut().for_each(|v| *v /= count);
    Ok(values)
}
