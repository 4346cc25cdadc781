//! Evaluation protocols: noise injection, removal and discovery curves,
//! robust learning, domain adaptation and validation-size sweeps.

pub mod corruption;
pub mod curves;
pub mod protocols;
pub mod report;
pub mod synthetic;

pub use corruption::{corrupt, corrupt_features, corrupt_labels, CorruptionSpec};
pub use curves::{discovery_curve, removal_curve, CurvePoint, RemovalEnd};
pub use protocols::{
    domain_adaptation_eval, robust_learning_eval, validation_size_sweep, AdaptationReport, RobustReport,
    SweepEntry,
};
pub use report::{NamedCurve, Report};
