//! CSV ingestion, preprocessing (one-hot expansion, z-score / min-max
//! normalization, constant-column removal) and stratified fold plans.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{LoclError, Result};
use crate::matrix::Matrix;
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Column {
    /// `None` marks an empty cell.
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            Column::Numeric(_) => ColumnKind::Numeric,
            Column::Categorical(_) => ColumnKind::Categorical,
        }
    }
}

/// A parsed CSV table before any preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub column_names: Vec<String>,
    pub columns: Vec<Column>,
    pub row_count: usize,
}

impl RawTable {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .map(|i| &self.columns[i])
    }

    /// Build a table from a header and string cells, inferring column kinds.
    /// `rows[i]` is data record `i + 1` (the header is record 0).
    pub fn from_records(
        header: Vec<String>,
        rows: Vec<Vec<String>>,
        schema_hint: Option<&HashMap<String, ColumnKind>>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for name in &header {
            if !seen.insert(name.as_str()) {
                return Err(LoclError::DuplicateColumn(name.clone()));
            }
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != header.len() {
                return Err(LoclError::RaggedRow {
                    index: i + 1,
                    expected: header.len(),
                    found: r.len(),
                });
            }
        }
        if rows.is_empty() || header.is_empty() {
            return Err(LoclError::EmptyTable);
        }
        let mut columns = Vec::with_capacity(header.len());
        for (j, name) in header.iter().enumerate() {
            let cells = rows.iter().map(|r| r[j].trim());
            let hinted = schema_hint.and_then(|h| h.get(name)).copied();
            let parsed: Vec<Option<std::result::Result<f64, ()>>> = cells
                .clone()
                .map(|c| {
                    if c.is_empty() {
                        None
                    } else {
                        Some(c.parse::<f64>().map_err(|_| ()))
                    }
                })
                .collect();
            let all_numeric = parsed.iter().all(|p| !matches!(p, Some(Err(_))));
            let kind = hinted.unwrap_or(if all_numeric {
                ColumnKind::Numeric
            } else {
                ColumnKind::Categorical
            });
            let column = match kind {
                ColumnKind::Numeric => {
                    let mut values = Vec::with_capacity(parsed.len());
                    for (i, p) in parsed.into_iter().enumerate() {
                        match p {
                            None => values.push(None),
                            Some(Ok(v)) => values.push(Some(v)),
                            Some(Err(())) => {
                                return Err(LoclError::Column {
                                    column: name.clone(),
                                    reason: format!(
                                        "cell {:?} at row {} is not a number",
                                        rows[i][j],
                                        i + 1
                                    ),
                                })
                            }
                        }
                    }
                    Column::Numeric(values)
                }
                ColumnKind::Categorical => Column::Categorical(cells.map(str::to_owned).collect()),
            };
            columns.push(column);
        }
        Ok(RawTable {
            column_names: header,
            row_count: rows.len(),
            columns,
        })
    }
}

pub fn load_csv(
    path: impl AsRef<Path>,
    schema_hint: Option<&HashMap<String, ColumnKind>>,
) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| LoclError::io(path, e))?;
    read_csv(file, schema_hint)
}

/// Parse comma-delimited CSV with a header row from any reader.
pub fn read_csv<R: Read>(
    reader: R,
    schema_hint: Option<&HashMap<String, ColumnKind>>,
) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    RawTable::from_records(header, rows, schema_hint)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    #[default]
    Zscore,
    Minmax,
}

impl std::str::FromStr for NormMode {
    type Err = LoclError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zscore" => Ok(NormMode::Zscore),
            "minmax" => Ok(NormMode::Minmax),
            other => Err(LoclError::invalid(format!("unknown normalization mode {other:?}"))),
        }
    }
}

/// How one output feature was derived from the raw table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureNorm {
    Zscore { mean: f64, std: f64 },
    Minmax { min: f64, max: f64 },
    /// 0/1 indicator; stored as-is.
    Onehot { source: String, category: String },
}

impl FeatureNorm {
    pub fn apply(&self, raw: f64) -> f64 {
        match *self {
            FeatureNorm::Zscore { mean, std } => (raw - mean) / std,
            FeatureNorm::Minmax { min, max } => (raw - min) / (max - min),
            FeatureNorm::Onehot { .. } => raw,
        }
    }

    pub fn invert(&self, value: f64) -> f64 {
        match *self {
            FeatureNorm::Zscore { mean, std } => value * std + mean,
            FeatureNorm::Minmax { min, max } => value * (max - min) + min,
            FeatureNorm::Onehot { .. } => value,
        }
    }

    fn fit(mode: NormMode, values: impl Iterator<Item = f64> + Clone) -> Self {
        match mode {
            NormMode::Zscore => {
                let (mean, std) = mean_std(values);
                FeatureNorm::Zscore {
                    mean,
                    std: if std > 0.0 { std } else { 1.0 },
                }
            }
            NormMode::Minmax => {
                let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
                if max > min {
                    FeatureNorm::Minmax { min, max }
                } else {
                    FeatureNorm::Minmax { min, max: min + 1.0 }
                }
            }
        }
    }
}

/// Two-pass population mean and standard deviation.
pub(crate) fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (sum, n) = values.clone().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / n as f64).sqrt())
}

/// Numeric matrix ready for learning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    pub x: Matrix,
    pub feature_names: Vec<String>,
    pub labels: Option<Vec<usize>>,
    /// Class names indexed by label id.
    pub class_names: Vec<String>,
    pub norm_stats: Vec<FeatureNorm>,
    pub mode: NormMode,
}

impl TabularDataset {
    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| LoclError::invalid("dataset has no labels"))
    }

    /// Build a dataset from an already-numeric matrix (no normalization recorded).
    pub fn from_matrix(x: Matrix, labels: Option<Vec<usize>>) -> Result<Self> {
        let feature_names = (0..x.cols()).map(|j| format!("f{j}")).collect();
        let n_classes = labels
            .as_ref()
            .map_or(0, |l| l.iter().copied().max().map_or(0, |m| m + 1));
        if let Some(l) = &labels {
            if l.len() != x.rows() {
                return Err(LoclError::shape(format!(
                    "{} labels for {} rows",
                    l.len(),
                    x.rows()
                )));
            }
        }
        let norm_stats = (0..x.cols())
            .map(|_| FeatureNorm::Zscore { mean: 0.0, std: 1.0 })
            .collect();
        Ok(TabularDataset {
            x,
            feature_names,
            labels,
            class_names: (0..n_classes).map(|c| c.to_string()).collect(),
            norm_stats,
            mode: NormMode::Zscore,
        })
    }

    /// Raw (pre-normalization) feature values recovered from the stored statistics.
    pub fn denormalized(&self) -> Matrix {
        let mut raw = self.x.clone();
        for i in 0..raw.rows() {
            for (v, s) in raw.row_mut(i).iter_mut().zip(&self.norm_stats) {
                *v = s.invert(*v);
            }
        }
        raw
    }

    /// Re-fit normalization statistics on `rows` only and re-normalize every row.
    /// One-hot indicators are untouched.
    pub fn refit_normalization(&self, rows: &[usize]) -> Result<TabularDataset> {
        if rows.is_empty() {
            return Err(LoclError::invalid("cannot fit normalization on zero rows"));
        }
        let raw = self.denormalized();
        let mut out = self.clone();
        for j in 0..raw.cols() {
            if matches!(self.norm_stats[j], FeatureNorm::Onehot { .. }) {
                continue;
            }
            let stat = FeatureNorm::fit(self.mode, rows.iter().map(|&i| raw[(i, j)]));
            for i in 0..raw.rows() {
                out.x[(i, j)] = stat.apply(raw[(i, j)]);
            }
            out.norm_stats[j] = stat;
        }
        Ok(out)
    }

    pub fn select_rows(&self, rows: &[usize]) -> TabularDataset {
        TabularDataset {
            x: self.x.select_rows(rows),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&i| l[i]).collect()),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneHotExpansion {
    pub source: String,
    pub categories: Vec<String>,
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedNorm {
    pub feature: String,
    #[serde(flatten)]
    pub stats: FeatureNorm,
}

/// Everything preprocessing decided, for the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub label_column: String,
    pub mode: NormMode,
    pub rows: usize,
    pub features: usize,
    pub classes: Vec<String>,
    pub dropped_columns: Vec<String>,
    pub one_hot: Vec<OneHotExpansion>,
    pub norm_stats: Vec<NamedNorm>,
}

fn first_appearance(values: &[String]) -> Vec<String> {
    let mut seen = HashSet::new();
    values
        .iter()
        .filter(|v| seen.insert(v.as_str()))
        .cloned()
        .collect()
}

fn label_strings(name: &str, col: &Column) -> Result<Vec<String>> {
    match col {
        Column::Categorical(v) => v
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if s.is_empty() {
                    Err(LoclError::MissingValue {
                        column: name.to_owned(),
                        row: i + 1,
                    })
                } else {
                    Ok(s.clone())
                }
            })
            .collect(),
        Column::Numeric(v) => v
            .iter()
            .enumerate()
            .map(|(i, x)| match x {
                None => Err(LoclError::MissingValue {
                    column: name.to_owned(),
                    row: i + 1,
                }),
                Some(x) if x.fract() == 0.0 && x.is_finite() => Ok(format!("{}", *x as i64)),
                Some(x) => Err(LoclError::Column {
                    column: name.to_owned(),
                    reason: format!("label value {x} is not an integer"),
                }),
            })
            .collect(),
    }
}

/// Turn a raw table into a normalized numeric dataset.
///
/// Statistics come from every row of `table`. Categorical columns expand
/// in place into one indicator per category, in first-appearance order.
/// Columns with zero raw standard deviation are dropped and listed in the
/// report.
pub fn preprocess(
    table: &RawTable,
    label_column: &str,
    mode: NormMode,
) -> Result<(TabularDataset, PreprocessReport)> {
    let label_idx = table
        .column_names
        .iter()
        .position(|c| c == label_column)
        .ok_or_else(|| LoclError::UnknownColumn(label_column.to_owned()))?;
    let label_str = label_strings(label_column, &table.columns[label_idx])?;
    let class_names = first_appearance(&label_str);
    if class_names.len() < 2 {
        return Err(LoclError::SingleClass(label_column.to_owned()));
    }
    let class_id: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let labels: Vec<usize> = label_str.iter().map(|s| class_id[s.as_str()]).collect();

    let n = table.row_count;
    let mut feature_cols: Vec<Vec<f64>> = Vec::new();
    let mut feature_names = Vec::new();
    let mut norm_stats = Vec::new();
    let mut dropped = Vec::new();
    let mut one_hot = Vec::new();

    for (j, (name, col)) in table.column_names.iter().zip(&table.columns).enumerate() {
        if j == label_idx {
            continue;
        }
        match col {
            Column::Numeric(cells) => {
                let mut values = Vec::with_capacity(n);
                for (i, c) in cells.iter().enumerate() {
                    match c {
                        Some(v) if v.is_finite() => values.push(*v),
                        Some(v) => {
                            return Err(LoclError::Column {
                                column: name.clone(),
                                reason: format!("non-finite value {v} at row {}", i + 1),
                            })
                        }
                        None => {
                            return Err(LoclError::MissingValue {
                                column: name.clone(),
                                row: i + 1,
                            })
                        }
                    }
                }
                let (_, std) = mean_std(values.iter().copied());
                if std == 0.0 {
                    dropped.push(name.clone());
                    continue;
                }
                let stat = FeatureNorm::fit(mode, values.iter().copied());
                feature_cols.push(values.iter().map(|&v| stat.apply(v)).collect());
                feature_names.push(name.clone());
                norm_stats.push(stat);
            }
            Column::Categorical(cells) => {
                if let Some(i) = cells.iter().position(String::is_empty) {
                    return Err(LoclError::MissingValue {
                        column: name.clone(),
                        row: i + 1,
                    });
                }
                let categories = first_appearance(cells);
                if categories.len() < 2 {
                    dropped.push(name.clone());
                    continue;
                }
                let mut features = Vec::with_capacity(categories.len());
                for cat in &categories {
                    let fname = format!("{name}={cat}");
                    feature_cols.push(
                        cells
                            .iter()
                            .map(|c| if c == cat { 1.0 } else { 0.0 })
                            .collect(),
                    );
                    feature_names.push(fname.clone());
                    norm_stats.push(FeatureNorm::Onehot {
                        source: name.clone(),
                        category: cat.clone(),
                    });
                    features.push(fname);
                }
                one_hot.push(OneHotExpansion {
                    source: name.clone(),
                    categories,
                    features,
                });
            }
        }
    }
    if feature_cols.is_empty() {
        return Err(LoclError::AllFeaturesDropped);
    }
    let m = feature_cols.len();
    let mut x = Matrix::zeros(n, m);
    for (j, col) in feature_cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    let report = PreprocessReport {
        label_column: label_column.to_owned(),
        mode,
        rows: n,
        features: m,
        classes: class_names.clone(),
        dropped_columns: dropped,
        one_hot,
        norm_stats: feature_names
            .iter()
            .zip(&norm_stats)
            .map(|(f, s)| NamedNorm {
                feature: f.clone(),
                stats: s.clone(),
            })
            .collect(),
    };
    let dataset = TabularDataset {
        x,
        feature_names,
        labels: Some(labels),
        class_names,
        norm_stats,
        mode,
    };
    Ok((dataset, report))
}

/// Stratified k-fold assignment plus, per fold, which training rows are
/// treated as unlabeled during pretraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub unlabeled_fraction: f64,
    /// Fold index of every row.
    pub fold_assignments: Vec<usize>,
    /// `unlabeled[f][row]`: row is in fold `f`'s training partition and unlabeled.
    pub unlabeled: Vec<Vec<bool>>,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_assignments.len())
            .filter(|&i| self.fold_assignments[i] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_assignments.len())
            .filter(|&i| self.fold_assignments[i] != fold)
            .collect()
    }

    pub fn unlabeled_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_assignments.len())
            .filter(|&i| self.unlabeled[fold][i])
            .collect()
    }

    /// Training rows whose labels the probe may use.
    pub fn labeled_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_assignments.len())
            .filter(|&i| self.fold_assignments[i] != fold && !self.unlabeled[fold][i])
            .collect()
    }
}

/// Number of unlabeled rows in a training partition of `n_train` rows.
pub fn unlabeled_count(n_train: usize, fraction: f64) -> usize {
    // 1e-9 absorbs representation error such as 0.9 * 80 = 72.00000000000001.
    ((fraction * n_train as f64) - 1e-9).ceil().max(0.0) as usize
}

pub fn make_folds(
    dataset: &TabularDataset,
    k: usize,
    unlabeled_fraction: f64,
    seed: u64,
) -> Result<FoldPlan> {
    if k < 2 {
        return Err(LoclError::invalid(format!("k must be >= 2, got {k}")));
    }
    if !(0.0..=1.0).contains(&unlabeled_fraction) {
        return Err(LoclError::invalid(format!(
            "unlabeled fraction {unlabeled_fraction} outside [0, 1]"
        )));
    }
    let labels = dataset.labels()?;
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for (class, rows) in by_class.iter().enumerate() {
        if !rows.is_empty() && rows.len() < k {
            return Err(LoclError::ClassTooSmall {
                class,
                count: rows.len(),
                k,
            });
        }
    }

    let mut rng = rng::stream(seed, &[tag::FOLDS]);
    let mut fold_assignments = vec![0usize; labels.len()];
    // Round-robin per class, continuing the offset across classes so fold
    // sizes stay balanced as well as class proportions.
    let mut offset = 0;
    for rows in &mut by_class {
        rows.shuffle(&mut rng);
        for (i, &r) in rows.iter().enumerate() {
            fold_assignments[r] = (offset + i) % k;
        }
        offset = (offset + rows.len()) % k;
    }

    let mut unlabeled = Vec::with_capacity(k);
    for fold in 0..k {
        let mut train: Vec<usize> = (0..labels.len())
            .filter(|&i| fold_assignments[i] != fold)
            .collect();
        let count = unlabeled_count(train.len(), unlabeled_fraction);
        train.shuffle(&mut rng::stream(seed, &[tag::UNLABELED, fold as u64]));
        let mut mask = vec![false; labels.len()];
        for &r in &train[..count] {
            mask[r] = true;
        }
        unlabeled.push(mask);
    }
    Ok(FoldPlan {
        k,
        seed,
        unlabeled_fraction,
        fold_assignments,
        unlabeled,
    })
}
