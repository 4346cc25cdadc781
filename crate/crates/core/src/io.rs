//! CSV ingestion, train-fitted preprocessing and the `values.csv` format.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitRole, TaskKind};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub const DEFAULT_FLAG_COLUMN: &str = "corrupted";
pub const DEFAULT_DOMAIN_COLUMN: &str = "domain";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawColumn {
    pub name: String,
    pub data: ColumnData,
}

/// A parsed CSV file before preprocessing. Feature columns keep file order;
/// the label, flag and domain columns are split out.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub columns: Vec<RawColumn>,
    pub label_column: String,
    pub labels: Vec<String>,
    pub flags: Option<Vec<bool>>,
    pub domains: Option<Vec<String>>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&RawColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Numeric columns `x0, x1, ...`; labels are class ids or targets.
    pub fn from_dataset(data: &Dataset, label_column: &str) -> Self {
        let x = data.features();
        let columns = (0..data.feature_dim())
            .map(|j| RawColumn {
                name: format!("x{j}"),
                data: ColumnData::Numeric((0..data.len()).map(|r| x.get(r, j)).collect()),
            })
            .collect();
        let labels = match data.task() {
            TaskKind::Classification => data.classes().iter().map(usize::to_string).collect(),
            TaskKind::Regression => data.labels().as_slice().iter().map(f64::to_string).collect(),
        };
        RawTable {
            columns,
            label_column: label_column.to_string(),
            labels,
            flags: data.corruption_flags().map(<[bool]>::to_vec),
            domains: data.domains().map(<[String]>::to_vec),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub label_column: String,
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Read as corruption flags when present in the header.
    pub flag_column: Option<String>,
    /// Read as domain tags when present in the header.
    pub domain_column: Option<String>,
}

impl CsvOptions {
    pub fn new(label_column: impl Into<String>) -> Self {
        CsvOptions {
            label_column: label_column.into(),
            categorical: Vec::new(),
            flag_column: Some(DEFAULT_FLAG_COLUMN.into()),
            domain_column: Some(DEFAULT_DOMAIN_COLUMN.into()),
        }
    }

    pub fn with_categorical(mut self, columns: &[&str]) -> Self {
        self.categorical = columns.iter().map(|s| s.to_string()).collect();
        self
    }
}

fn csv_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn parse_flag(cell: &str) -> Option<bool> {
    match cell.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let label_idx = find(&options.label_column)
        .ok_or_else(|| csv_err(path, format!("label column `{}` not found in header", options.label_column)))?;
    for name in &options.categorical {
        if find(name).is_none() {
            return Err(csv_err(path, format!("categorical column `{name}` not found in header")));
        }
    }
    let flag_idx = options.flag_column.as_deref().and_then(find);
    let domain_idx = options.domain_column.as_deref().and_then(find);
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != label_idx && Some(i) != flag_idx && Some(i) != domain_idx)
        .collect();

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, format!("row {r}: {e}")))?;
        if record.len() != headers.len() {
            return Err(csv_err(
                path,
                format!("row {r}: expected {} cells, found {}", headers.len(), record.len()),
            ));
        }
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(csv_err(path, format!("row {r}, column `{}`: missing value", headers[c])));
            }
            cells[c].push(cell.to_string());
        }
    }

    let mut columns = Vec::with_capacity(feature_idx.len());
    for &c in &feature_idx {
        let name = headers[c].clone();
        let raw = std::mem::take(&mut cells[c]);
        let data = if options.categorical.contains(&name) {
            ColumnData::Categorical(raw)
        } else {
            let mut values = Vec::with_capacity(raw.len());
            for (r, cell) in raw.iter().enumerate() {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(v),
                    _ => {
                        return Err(csv_err(
                            path,
                            format!("row {r}, column `{name}`: cannot parse `{cell}` as a number"),
                        ))
                    }
                }
            }
            ColumnData::Numeric(values)
        };
        columns.push(RawColumn { name, data });
    }
    let flags = match flag_idx {
        Some(c) => {
            let mut out = Vec::with_capacity(cells[c].len());
            for (r, cell) in cells[c].iter().enumerate() {
                out.push(parse_flag(cell).ok_or_else(|| {
                    csv_err(path, format!("row {r}, column `{}`: `{cell}` is not a flag", headers[c]))
                })?);
            }
            Some(out)
        }
        None => None,
    };
    let domains = domain_idx.map(|c| std::mem::take(&mut cells[c]));
    Ok(RawTable {
        columns,
        label_column: options.label_column.clone(),
        labels: std::mem::take(&mut cells[label_idx]),
        flags,
        domains,
    })
}

/// Writes `table` back out: features in order, then label, flag and domain.
pub fn write_csv(path: &Path, table: &RawTable) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e.to_string()))?;
    let mut header: Vec<&str> = table.columns.iter().map(|c| c.name.as_str()).collect();
    header.push(&table.label_column);
    if table.flags.is_some() {
        header.push(DEFAULT_FLAG_COLUMN);
    }
    if table.domains.is_some() {
        header.push(DEFAULT_DOMAIN_COLUMN);
    }
    writer.write_record(&header).map_err(|e| csv_err(path, e.to_string()))?;
    for r in 0..table.len() {
        let mut row: Vec<String> = table
            .columns
            .iter()
            .map(|c| match &c.data {
                ColumnData::Numeric(v) => v[r].to_string(),
                ColumnData::Categorical(v) => v[r].clone(),
            })
            .collect();
        row.push(table.labels[r].clone());
        if let Some(f) = &table.flags {
            row.push(if f[r] { "1" } else { "0" }.into());
        }
        if let Some(d) = &table.domains {
            row.push(d[r].clone());
        }
        writer.write_record(&row).map_err(|e| csv_err(path, e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnTransform {
    Standardize { name: String, mean: f64, std: f64 },
    OneHot { name: String, vocabulary: Vec<String> },
    /// Constant on the training split; kept only so the table can be rebuilt.
    Dropped { name: String, value: f64 },
}

impl ColumnTransform {
    fn width(&self) -> usize {
        match self {
            ColumnTransform::Standardize { .. } => 1,
            ColumnTransform::OneHot { vocabulary, .. } => vocabulary.len(),
            ColumnTransform::Dropped { .. } => 0,
        }
    }
}

/// Train-fitted feature and label encoding, applied unchanged to every split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub task: TaskKind,
    pub columns: Vec<ColumnTransform>,
    /// Class names in one-hot order; empty for regression.
    pub classes: Vec<String>,
}

fn label_vocabulary(labels: &[String]) -> Vec<String> {
    let unique: BTreeSet<&String> = labels.iter().collect();
    let mut vocab: Vec<String> = unique.into_iter().cloned().collect();
    let numeric: Option<Vec<f64>> = vocab.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(vocab).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        vocab = pairs.into_iter().map(|p| p.1).collect();
    }
    vocab
}

impl PreprocessSpec {
    pub fn fit(train: &RawTable, task: TaskKind) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Invalid("cannot fit preprocessing on an empty table".into()));
        }
        let mut columns = Vec::with_capacity(train.columns.len());
        for col in &train.columns {
            columns.push(match &col.data {
                ColumnData::Numeric(v) => {
                    let n = v.len() as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                    let std = var.sqrt();
                    if std > 0.0 && std.is_finite() {
                        ColumnTransform::Standardize {
                            name: col.name.clone(),
                            mean,
                            std,
                        }
                    } else {
                        log::warn!("dropping constant column `{}`", col.name);
                        ColumnTransform::Dropped {
                            name: col.name.clone(),
                            value: v[0],
                        }
                    }
                }
                ColumnData::Categorical(v) => {
                    let vocab: BTreeSet<&String> = v.iter().collect();
                    ColumnTransform::OneHot {
                        name: col.name.clone(),
                        vocabulary: vocab.into_iter().cloned().collect(),
                    }
                }
            });
        }
        if columns.iter().all(|c| c.width() == 0) {
            return Err(Error::Invalid("no feature columns remain after dropping constant columns".into()));
        }
        let classes = match task {
            TaskKind::Classification => {
                let vocab = label_vocabulary(&train.labels);
                if vocab.len() < 2 {
                    return Err(Error::Invalid(format!(
                        "classification needs at least two classes in `{}`",
                        train.label_column
                    )));
                }
                vocab
            }
            TaskKind::Regression => Vec::new(),
        };
        Ok(PreprocessSpec { task, columns, classes })
    }

    pub fn feature_dim(&self) -> usize {
        self.columns.iter().map(ColumnTransform::width).sum()
    }

    /// Encoded feature names, `column=value` for one-hot slots.
    pub fn feature_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.columns {
            match c {
                ColumnTransform::Standardize { name, .. } => out.push(name.clone()),
                ColumnTransform::OneHot { name, vocabulary } => {
                    out.extend(vocabulary.iter().map(|v| format!("{name}={v}")))
                }
                ColumnTransform::Dropped { .. } => {}
            }
        }
        out
    }

    pub fn apply(&self, table: &RawTable, role: SplitRole) -> Result<Dataset> {
        let n = table.len();
        let dim = self.feature_dim();
        let mut features = DenseMatrix::zeros(n, dim);
        let mut offset = 0;
        for t in &self.columns {
            let name = match t {
                ColumnTransform::Standardize { name, .. }
                | ColumnTransform::OneHot { name, .. }
                | ColumnTransform::Dropped { name, .. } => name,
            };
            let col = table
                .column(name)
                .ok_or_else(|| Error::Invalid(format!("column `{name}` missing from split")))?;
            match (t, &col.data) {
                (ColumnTransform::Standardize { mean, std, .. }, ColumnData::Numeric(v)) => {
                    for (r, x) in v.iter().enumerate() {
                        features.set(r, offset, (x - mean) / std);
                    }
                }
                (ColumnTransform::OneHot { vocabulary, .. }, ColumnData::Categorical(v)) => {
                    let lookup: HashMap<&str, usize> =
                        vocabulary.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
                    let mut unseen = BTreeSet::new();
                    for (r, x) in v.iter().enumerate() {
                        match lookup.get(x.as_str()) {
                            Some(&k) => features.set(r, offset + k, 1.0),
                            None => {
                                unseen.insert(x.clone());
                            }
                        }
                    }
                    if !unseen.is_empty() {
                        let list: Vec<String> = unseen.into_iter().collect();
                        return Err(Error::Invalid(format!(
                            "column `{name}` has categories not seen in training: {}",
                            list.join(", ")
                        )));
                    }
                }
                (ColumnTransform::Dropped { .. }, ColumnData::Numeric(_)) => {}
                _ => return Err(Error::Invalid(format!("column `{name}` changed type between splits"))),
            }
            offset += t.width();
        }
        if table.columns.len() != self.columns.len() {
            return Err(Error::shape("split column count", self.columns.len(), table.columns.len()));
        }

        let labels = match self.task {
            TaskKind::Classification => {
                let lookup: HashMap<&str, usize> =
                    self.classes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
                let mut ids = Vec::with_capacity(n);
                for (r, l) in table.labels.iter().enumerate() {
                    let id = lookup.get(l.as_str()).ok_or_else(|| {
                        Error::Invalid(format!("row {r}: label `{l}` not seen in training"))
                    })?;
                    ids.push(*id);
                }
                return self.finish(Dataset::from_classes(features, &ids, self.classes.len(), role)?, table);
            }
            TaskKind::Regression => {
                let mut y = Vec::with_capacity(n);
                for (r, l) in table.labels.iter().enumerate() {
                    match l.parse::<f64>() {
                        Ok(v) if v.is_finite() => y.push(v),
                        _ => return Err(Error::Invalid(format!("row {r}: regression target `{l}` is not a number"))),
                    }
                }
                DenseMatrix::column(&y)?
            }
        };
        self.finish(Dataset::new(features, labels, self.task, role)?, table)
    }

    fn finish(&self, mut data: Dataset, table: &RawTable) -> Result<Dataset> {
        if let Some(f) = &table.flags {
            data = data.with_corruption_flags(f.clone())?;
        }
        if let Some(d) = &table.domains {
            data = data.with_domains(d.clone())?;
        }
        Ok(data)
    }

    /// Rebuilds raw columns from an encoded dataset. One-hot blocks decode
    /// by argmax; dropped columns get their constant back.
    pub fn invert(&self, data: &Dataset, label_column: &str) -> Result<RawTable> {
        if data.feature_dim() != self.feature_dim() {
            return Err(Error::shape("encoded feature columns", self.feature_dim(), data.feature_dim()));
        }
        let n = data.len();
        let x = data.features();
        let mut columns = Vec::with_capacity(self.columns.len());
        let mut offset = 0;
        for t in &self.columns {
            let (name, col) = match t {
                ColumnTransform::Standardize { name, mean, std } => (
                    name,
                    ColumnData::Numeric((0..n).map(|r| x.get(r, offset) * std + mean).collect()),
                ),
                ColumnTransform::OneHot { name, vocabulary } => {
                    let vals = (0..n)
                        .map(|r| {
                            let block = &x.row(r)[offset..offset + vocabulary.len()];
                            let mut best = 0;
                            for (k, v) in block.iter().enumerate() {
                                if *v > block[best] {
                                    best = k;
                                }
                            }
                            vocabulary[best].clone()
                        })
                        .collect();
                    (name, ColumnData::Categorical(vals))
                }
                ColumnTransform::Dropped { name, value } => (name, ColumnData::Numeric(vec![*value; n])),
            };
            columns.push(RawColumn {
                name: name.clone(),
                data: col,
            });
            offset += t.width();
        }
        let labels = match self.task {
            TaskKind::Classification => data.classes().into_iter().map(|c| self.classes[c].clone()).collect(),
            TaskKind::Regression => (0..n).map(|r| data.labels().get(r, 0).to_string()).collect(),
        };
        Ok(RawTable {
            columns,
            label_column: label_column.to_string(),
            labels,
            flags: data.corruption_flags().map(<[bool]>::to_vec),
            domains: data.domains().map(<[String]>::to_vec),
        })
    }
}

/// Encoded splits sharing one train-fitted [`PreprocessSpec`].
#[derive(Clone, Debug)]
pub struct Preprocessed {
    pub spec: PreprocessSpec,
    pub train: Dataset,
    pub validation: Option<Dataset>,
    pub test: Option<Dataset>,
}

pub fn preprocess(
    task: TaskKind,
    train: &RawTable,
    validation: Option<&RawTable>,
    test: Option<&RawTable>,
) -> Result<Preprocessed> {
    let spec = PreprocessSpec::fit(train, task)?;
    let encoded_train = spec.apply(train, SplitRole::Train)?;
    let validation = validation.map(|t| spec.apply(t, SplitRole::Validation)).transpose()?;
    let test = test.map(|t| spec.apply(t, SplitRole::Test)).transpose()?;
    Ok(Preprocessed {
        spec,
        train: encoded_train,
        validation,
        test,
    })
}

/// `index,value,flag` rows; the flag cell is empty when unknown.
pub fn write_values(path: &Path, values: &[f64], flags: Option<&[bool]>) -> Result<()> {
    if let Some(f) = flags {
        if f.len() != values.len() {
            return Err(Error::shape("value flags", values.len(), f.len()));
        }
    }
    let mut out = String::from("index,value,flag\n");
    for (i, v) in values.iter().enumerate() {
        let flag = match flags {
            Some(f) if f[i] => "1",
            Some(_) => "0",
            None => "",
        };
        out.push_str(&format!("{i},{v},{flag}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Values and (if every row has one) flags from a `values.csv` file.
pub fn read_values(path: &Path) -> Result<(Vec<f64>, Option<Vec<bool>>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e.to_string()))?;
    let mut values = Vec::new();
    let mut flags = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, format!("row {r}: {e}")))?;
        let index: usize = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| csv_err(path, format!("row {r}: bad index")))?;
        if index != r {
            return Err(csv_err(path, format!("row {r}: index {index} out of order")));
        }
        let value: f64 = record
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| csv_err(path, format!("row {r}: bad value")))?;
        values.push(value);
        flags.push(record.get(2).and_then(parse_flag));
    }
    let flags = flags.into_iter().collect::<Option<Vec<bool>>>();
    Ok((values, flags))
}
