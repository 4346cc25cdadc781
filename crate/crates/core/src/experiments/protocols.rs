//! End-to-end evaluation protocols built on [`train_dvrl`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::curves::{discovery_curve, CurvePoint};
use crate::data::{Dataset, SplitRole};
use crate::dvrl::{train_dvrl, DvrlConfig, IterationRecord, ValuationResult};
use crate::error::{Error, Result};
use crate::predictor::{Metric, PredictorModel};
use crate::rng::{derive_seed, sample_without_replacement, seeded};

/// Predictor fitted unweighted on `data` with the config's reference budget.
/// Uses the same initialisation and batch stream as the warm start inside
/// [`train_dvrl`], so the two are directly comparable.
pub fn reference_predictor(data: &Dataset, config: &DvrlConfig) -> Result<PredictorModel> {
    let train = data.clone().with_role(SplitRole::Train);
    let mut model = PredictorModel::for_dataset(config.predictor_spec(), &train, derive_seed(config.seed, 2))?;
    model.fit(&train, derive_seed(config.seed, 3))?;
    Ok(model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustReport {
    pub metric: Metric,
    pub dvrl: f64,
    pub baseline: f64,
    pub clean_only: f64,
    pub validation_only: f64,
    pub values: Vec<f64>,
    pub trace: Vec<IterationRecord>,
}

/// Test metric of four predictors: the DVRL re-weighted predictor, plain
/// training on all (noisy) rows, training on the unflagged rows only, and
/// training on the validation set alone.
pub fn robust_learning_eval(
    train: &Dataset,
    validation: &Dataset,
    test: &Dataset,
    config: &DvrlConfig,
) -> Result<RobustReport> {
    let flags = train
        .corruption_flags()
        .ok_or_else(|| Error::Invalid("robust learning needs corruption flags on the training set".into()))?;
    train.check_schema(test, "train vs test")?;
    let metric = Metric::default_for(train.task());

    let result = train_dvrl(train, validation, config)?;
    let dvrl = result.predictor.evaluate(test, metric)?;
    let baseline = reference_predictor(train, config)?.evaluate(test, metric)?;
    let clean_rows: Vec<usize> = (0..train.len()).filter(|&i| !flags[i]).collect();
    if clean_rows.is_empty() {
        return Err(Error::Invalid("every training row is flagged as corrupted".into()));
    }
    let clean_only = reference_predictor(&train.subset(&clean_rows), config)?.evaluate(test, metric)?;
    let validation_only = reference_predictor(validation, config)?.evaluate(test, metric)?;
    Ok(RobustReport {
        metric,
        dvrl,
        baseline,
        clean_only,
        validation_only,
        values: result.values,
        trace: result.trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationReport {
    pub metric: Metric,
    pub dvrl: f64,
    pub baseline: f64,
    /// Mean data value of source rows per domain tag (empty without tags).
    pub mean_value_by_domain: BTreeMap<String, f64>,
    pub values: Vec<f64>,
    pub trace: Vec<IterationRecord>,
}

/// DVRL valued against a target-domain validation set, compared with a
/// predictor trained naively on the whole source set.
pub fn domain_adaptation_eval(
    source: &Dataset,
    target_validation: &Dataset,
    target_test: &Dataset,
    config: &DvrlConfig,
) -> Result<AdaptationReport> {
    source.check_schema(target_validation, "source vs target validation")?;
    source.check_schema(target_test, "source vs target test")?;
    let metric = Metric::default_for(source.task());
    let result = train_dvrl(source, target_validation, config)?;
    let dvrl = result.predictor.evaluate(target_test, metric)?;
    let baseline = reference_predictor(source, config)?.evaluate(target_test, metric)?;
    let mean_value_by_domain = source
        .domains()
        .map(|tags| mean_by_group(&result.values, tags))
        .unwrap_or_default();
    Ok(AdaptationReport {
        metric,
        dvrl,
        baseline,
        mean_value_by_domain,
        values: result.values,
        trace: result.trace,
    })
}

pub fn mean_by_group(values: &[f64], tags: &[String]) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (v, t) in values.iter().zip(tags) {
        let e = sums.entry(t.clone()).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub validation_size: usize,
    pub curve: Vec<CurvePoint>,
    #[serde(skip)]
    pub values: Vec<f64>,
}

/// Seeded subset of `size` rows of `pool`, kept in pool order. The whole
/// pool is returned unchanged when `size == pool.len()`.
pub fn subsample_validation(pool: &Dataset, size: usize, seed: u64) -> Result<Dataset> {
    if size == 0 {
        return Err(Error::config("validation_size", "must be >= 1"));
    }
    if size > pool.len() {
        return Err(Error::config(
            "validation_size",
            format!("{size} exceeds the validation pool ({})", pool.len()),
        ));
    }
    if size == pool.len() {
        return Ok(pool.clone());
    }
    let mut rows = sample_without_replacement(&mut seeded(seed), pool.len(), size);
    rows.sort_unstable();
    Ok(pool.subset(&rows))
}

/// One DVRL run and discovery curve per validation-set size.
pub fn validation_size_sweep(
    train: &Dataset,
    validation_pool: &Dataset,
    sizes: &[usize],
    fractions: &[f64],
    config: &DvrlConfig,
) -> Result<Vec<SweepEntry>> {
    let flags = train
        .corruption_flags()
        .ok_or_else(|| Error::Invalid("validation sweep needs corruption flags on the training set".into()))?;
    // validate every size before any training
    for &size in sizes {
        subsample_validation(validation_pool, size, 0)?;
    }
    sizes
        .iter()
        .map(|&size| {
            let validation = subsample_validation(validation_pool, size, derive_seed(config.seed, 77))?;
            let ValuationResult { values, .. } = train_dvrl(train, &validation, config)?;
            Ok(SweepEntry {
                validation_size: size,
                curve: discovery_curve(&values, flags, fractions)?,
                values,
            })
        })
        .collect()
}
