use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    Train,
    Validation,
    Test,
}

/// Features, labels and optional per-row metadata for one split.
///
/// Classification labels are one-hot rows (`N × c`); regression labels are a
/// single column (`N × 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: DenseMatrix,
    labels: DenseMatrix,
    task: TaskKind,
    role: SplitRole,
    corrupted: Option<Vec<bool>>,
    domains: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(
        features: DenseMatrix,
        labels: DenseMatrix,
        task: TaskKind,
        role: SplitRole,
    ) -> Result<Self> {
        if features.rows() != labels.rows() {
            return Err(Error::shape("dataset label rows", features.rows(), labels.rows()));
        }
        match task {
            TaskKind::Classification => {
                if labels.cols() < 2 {
                    return Err(Error::Invalid(
                        "classification labels need at least two one-hot columns".into(),
                    ));
                }
                for (r, row) in labels.iter_rows().enumerate() {
                    let ones = row.iter().filter(|&&v| v == 1.0).count();
                    let zeros = row.iter().filter(|&&v| v == 0.0).count();
                    if ones != 1 || ones + zeros != row.len() {
                        return Err(Error::Invalid(format!("label row {r} is not one-hot")));
                    }
                }
            }
            TaskKind::Regression => {
                if labels.cols() != 1 {
                    return Err(Error::shape("regression label columns", 1, labels.cols()));
                }
            }
        }
        Ok(Dataset {
            features,
            labels,
            task,
            role,
            corrupted: None,
            domains: None,
        })
    }

    /// Classification dataset from integer class ids.
    pub fn from_classes(
        features: DenseMatrix,
        classes: &[usize],
        num_classes: usize,
        role: SplitRole,
    ) -> Result<Self> {
        let mut labels = DenseMatrix::zeros(classes.len(), num_classes);
        for (r, &c) in classes.iter().enumerate() {
            if c >= num_classes {
                return Err(Error::Invalid(format!("class {c} at row {r} >= {num_classes}")));
            }
            labels.set(r, c, 1.0);
        }
        Self::new(features, labels, TaskKind::Classification, role)
    }

    pub fn with_corruption_flags(mut self, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != self.len() {
            return Err(Error::shape("corruption flags", self.len(), flags.len()));
        }
        self.corrupted = Some(flags);
        Ok(self)
    }

    pub fn with_domains(mut self, domains: Vec<String>) -> Result<Self> {
        if domains.len() != self.len() {
            return Err(Error::shape("domain tags", self.len(), domains.len()));
        }
        self.domains = Some(domains);
        Ok(self)
    }

    pub fn with_role(mut self, role: SplitRole) -> Self {
        self.role = role;
        self
    }

    pub fn with_labels(mut self, labels: DenseMatrix) -> Result<Self> {
        let meta = (self.corrupted.take(), self.domains.take());
        let mut out = Self::new(self.features, labels, self.task, self.role)?;
        (out.corrupted, out.domains) = meta;
        Ok(out)
    }

    pub fn with_features(mut self, features: DenseMatrix) -> Result<Self> {
        if features.rows() != self.len() {
            return Err(Error::shape("replacement features", self.len(), features.rows()));
        }
        self.features = features;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &DenseMatrix {
        &self.labels
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn role(&self) -> SplitRole {
        self.role
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn label_dim(&self) -> usize {
        self.labels.cols()
    }

    pub fn corruption_flags(&self) -> Option<&[bool]> {
        self.corrupted.as_deref()
    }

    pub fn domains(&self) -> Option<&[String]> {
        self.domains.as_deref()
    }

    /// Class id of every row (classification only).
    pub fn classes(&self) -> Vec<usize> {
        self.labels.argmax_rows()
    }

    /// Rows `indices`, in that order, with metadata carried along.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: self.labels.select_rows(indices),
            task: self.task,
            role: self.role,
            corrupted: self
                .corrupted
                .as_ref()
                .map(|f| indices.iter().map(|&i| f[i]).collect()),
            domains: self
                .domains
                .as_ref()
                .map(|d| indices.iter().map(|&i| d[i].clone()).collect()),
        }
    }

    /// Errors unless `other` has the same task and column layout.
    pub fn check_schema(&self, other: &Dataset, context: &str) -> Result<()> {
        if self.task != other.task {
            return Err(Error::Invalid(format!(
                "{context}: task kinds differ ({:?} vs {:?})",
                self.task, other.task
            )));
        }
        if self.feature_dim() != other.feature_dim() {
            return Err(Error::shape(
                format!("{context} feature columns"),
                self.feature_dim(),
                other.feature_dim(),
            ));
        }
        if self.label_dim() != other.label_dim() {
            return Err(Error::shape(
                format!("{context} label columns"),
                self.label_dim(),
                other.label_dim(),
            ));
        }
        Ok(())
    }
}
