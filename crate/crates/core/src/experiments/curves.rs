use serde::{Deserialize, Serialize};

use super::corruption::exact_count;
use crate::baselines::MarginalEvaluator;
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalEnd {
    /// Remove the highest-valued samples first.
    Most,
    /// Remove the lowest-valued samples first.
    Least,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    /// `None` marks a skipped point (e.g. nothing left to train on).
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end: Option<RemovalEnd>,
}

/// Evenly spaced grid `step, 2·step, ...` up to and including `max`.
pub fn fraction_grid(step: f64, max: f64) -> Vec<f64> {
    let n = (max / step + 1e-9).floor() as usize;
    (1..=n).map(|k| (k as f64 * step * 1e9).round() / 1e9).collect()
}

pub fn validate_fractions(fractions: &[f64], max: f64) -> Result<()> {
    if fractions.is_empty() {
        return Err(Error::config("fractions", "grid is empty"));
    }
    if let Some(f) = fractions.iter().find(|f| !(0.0..=max).contains(*f)) {
        return Err(Error::config("fractions", format!("{f} outside [0, {max}]")));
    }
    if fractions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("fractions", "must be strictly increasing"));
    }
    Ok(())
}

/// Indices sorted by ascending value, ties by ascending index.
pub fn rank_ascending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// Indices sorted by descending value, ties by ascending index.
pub fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Held-out metric after retraining without the top (`Most`) or bottom
/// (`Least`) fraction of samples by value. Every point retrains a fresh
/// predictor with the evaluator's seed.
pub fn removal_curve(
    values: &[f64],
    data: &Dataset,
    end: RemovalEnd,
    fractions: &[f64],
    evaluator: &MarginalEvaluator,
) -> Result<Vec<CurvePoint>> {
    if values.len() != data.len() {
        return Err(Error::shape("removal values", data.len(), values.len()));
    }
    validate_fractions(fractions, 0.9)?;
    let order = match end {
        RemovalEnd::Most => rank_descending(values),
        RemovalEnd::Least => rank_ascending(values),
    };
    fractions
        .iter()
        .map(|&fraction| {
            let removed = exact_count(fraction, data.len());
            let mut keep = order[removed..].to_vec();
            keep.sort_unstable();
            let value = if keep.is_empty() {
                None
            } else {
                Some(evaluator.metric_value(&data.subset(&keep), data)?)
            };
            Ok(CurvePoint {
                fraction,
                value,
                end: Some(end),
            })
        })
        .collect()
}

/// Share of all corrupted samples found among the lowest-valued
/// `⌊f · N⌋` samples, for each inspection fraction `f`.
pub fn discovery_curve(values: &[f64], flags: &[bool], fractions: &[f64]) -> Result<Vec<CurvePoint>> {
    if values.len() != flags.len() {
        return Err(Error::shape("corruption flags", values.len(), flags.len()));
    }
    validate_fractions(fractions, 1.0)?;
    let total = flags.iter().filter(|&&f| f).count();
    if total == 0 {
        return Err(Error::Invalid("discovery curve undefined: no corrupted samples".into()));
    }
    let order = rank_ascending(values);
    let mut found_prefix = Vec::with_capacity(order.len() + 1);
    found_prefix.push(0usize);
    for &i in &order {
        found_prefix.push(found_prefix.last().unwrap() + flags[i] as usize);
    }
    Ok(fractions
        .iter()
        .map(|&fraction| CurvePoint {
            fraction,
            value: Some(found_prefix[exact_count(fraction, values.len())] as f64 / total as f64),
            end: None,
        })
        .collect())
}

/// Value of the point at `fraction` (exact match).
pub fn value_at(curve: &[CurvePoint], fraction: f64) -> Option<f64> {
    curve
        .iter()
        .find(|p| (p.fraction - fraction).abs() < 1e-12)
        .and_then(|p| p.value)
}
