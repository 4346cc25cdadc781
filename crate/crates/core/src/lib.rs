//! Data valuation with a reinforcement-learned value estimator, plus the
//! leave-one-out and Shapley baselines and the evaluation protocols used to
//! compare them.

pub mod baselines;
pub mod data;
pub mod dvrl;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod io;
pub mod matrix;
pub mod nn;
pub mod predictor;
pub mod rng;

pub use data::{Dataset, SplitRole, TaskKind};
pub use dvrl::{
    infer_values, train_dvrl, train_dvrl_observed, BaselineTracker, DvrlConfig, IterationRecord, PredictorInit,
    Termination, ValuationResult,
};
pub use error::{Error, Result};
pub use estimator::{EstimatorSpec, SelectionVector, ValueEstimator};
pub use matrix::DenseMatrix;
pub use predictor::{Metric, PredictorKind, PredictorModel, PredictorSpec};
