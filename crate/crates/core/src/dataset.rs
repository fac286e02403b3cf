//! Tabular classification data: loading, scaling, class balancing and splits.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Train fraction used by [`stratified_split`].
pub const TRAIN_FRACTION: f64 = 2.0 / 3.0;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset is empty")]
    Empty,
    #[error("row {row}: expected {expected} columns, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {column}: '{value}' is not a number")]
    NonNumeric { row: usize, column: usize, value: String },
    #[error("row {row}, column {column}: missing value")]
    MissingValue { row: usize, column: usize },
    #[error("row {row}, column {column}: value is not finite")]
    NonFinite { row: usize, column: usize },
    #[error("need at least two columns (features plus label)")]
    NoFeatures,
    #[error("class '{class}' has {count} instance(s); at least 2 required")]
    ClassTooSmall { class: String, count: usize },
    #[error("label {label} out of range for {class_count} classes")]
    LabelOutOfRange { label: usize, class_count: usize },
    #[error("snapshot metadata mismatch: {0}")]
    Metadata(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Class names in first-appearance order; `labels` index into this.
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Vec<Vec<f64>>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self, DatasetError> {
        if features.is_empty() {
            return Err(DatasetError::Empty);
        }
        let width = features[0].len();
        for (row, f) in features.iter().enumerate() {
            if f.len() != width {
                return Err(DatasetError::Ragged { row: row + 1, expected: width + 1, found: f.len() + 1 });
            }
            if let Some(column) = f.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite { row: row + 1, column: column + 1 });
            }
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(DatasetError::LabelOutOfRange { label, class_count: class_names.len() });
        }
        Ok(Self { name: name.into(), features, labels, class_names })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn attribute_count(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows belonging to `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Writes features followed by the class name, with a header row.
    pub fn write_csv(&self, path: &Path) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.attribute_count()).map(|i| format!("a{i}")).collect();
        header.push("class".into());
        w.write_record(&header)?;
        for (f, &l) in self.features.iter().zip(&self.labels) {
            let mut rec: Vec<String> = f.iter().map(|v| v.to_string()).collect();
            rec.push(self.class_names[l].clone());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
        Ok(())
    }
}

fn parse_rows<R: std::io::Read>(name: &str, reader: R, has_header: bool) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut width = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(DatasetError::Ragged { row, expected, found: rec.len() });
        }
        if expected < 2 {
            return Err(DatasetError::NoFeatures);
        }
        let mut f = Vec::with_capacity(expected - 1);
        for (c, field) in rec.iter().take(expected - 1).enumerate() {
            let column = c + 1;
            if field.is_empty() || field == "?" {
                return Err(DatasetError::MissingValue { row, column });
            }
            let v: f64 = field
                .parse()
                .map_err(|_| DatasetError::NonNumeric { row, column, value: field.to_string() })?;
            if !v.is_finite() {
                return Err(DatasetError::NonFinite { row, column });
            }
            f.push(v);
        }
        let label = &rec[expected - 1];
        if label.is_empty() || label == "?" {
            return Err(DatasetError::MissingValue { row, column: expected });
        }
        let next = class_names.len();
        let idx = *class_index.entry(label.to_string()).or_insert_with(|| {
            class_names.push(label.to_string());
            next
        });
        features.push(f);
        labels.push(idx);
    }
    if features.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(Dataset { name: name.to_string(), features, labels, class_names })
}

/// Loads a CSV with the class label in the last column.
pub fn load_csv(path: &Path, has_header: bool) -> Result<Dataset, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    let name = path.file_stem().map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    parse_rows(&name, file, has_header)
}

pub fn parse_csv_str(name: &str, text: &str, has_header: bool) -> Result<Dataset, DatasetError> {
    parse_rows(name, text.as_bytes(), has_header)
}

/// Per-attribute min/max used for scaling into `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationStats {
    pub fn fit(ds: &Dataset) -> Self {
        let n = ds.attribute_count();
        let mut min = vec![f64::INFINITY; n];
        let mut max = vec![f64::NEG_INFINITY; n];
        for row in &ds.features {
            for (a, &v) in row.iter().enumerate() {
                min[a] = min[a].min(v);
                max[a] = max[a].max(v);
            }
        }
        Self { min, max }
    }

    /// `2 (x - min) / (max - min) - 1`, clipped to `[-1, 1]`; constant attributes map to 0.
    pub fn scale(&self, attribute: usize, x: f64) -> f64 {
        let (lo, hi) = (self.min[attribute], self.max[attribute]);
        if hi <= lo {
            return 0.0;
        }
        (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
    }

    pub fn apply(&self, ds: &Dataset) -> Dataset {
        let features = ds
            .features
            .iter()
            .map(|row| row.iter().enumerate().map(|(a, &v)| self.scale(a, v)).collect())
            .collect();
        Dataset { features, ..ds.clone() }
    }
}

/// Min-max scaling of every attribute into `[-1, 1]` using the dataset's own range.
pub fn min_max_normalize(ds: &Dataset) -> Dataset {
    NormalizationStats::fit(ds).apply(ds)
}

pub fn one_hot_encode(label: usize, class_count: usize) -> Result<Vec<f64>, DatasetError> {
    if label >= class_count {
        return Err(DatasetError::LabelOutOfRange { label, class_count });
    }
    let mut v = vec![0.0; class_count];
    v[label] = 1.0;
    Ok(v)
}

fn indices_by_class(ds: &Dataset) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); ds.class_count()];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    by_class
}

fn check_class_sizes(ds: &Dataset) -> Result<(), DatasetError> {
    for (c, count) in ds.class_counts().into_iter().enumerate() {
        if count < 2 {
            return Err(DatasetError::ClassTooSmall { class: ds.class_names[c].clone(), count });
        }
    }
    Ok(())
}

/// Per-class training counts: `round(2/3 * total)` overall, shared across
/// classes by largest remainder so each class is within one instance of 2/3.
pub fn stratified_train_counts(class_counts: &[usize]) -> Vec<usize> {
    let total: usize = class_counts.iter().sum();
    let target = (TRAIN_FRACTION * total as f64 + 0.5).floor() as usize;
    let exact: Vec<f64> = class_counts.iter().map(|&c| TRAIN_FRACTION * c as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..class_counts.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut remaining = target.saturating_sub(counts.iter().sum());
    for &c in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        // keep at least one test instance per class
        if counts[c] + 1 < class_counts[c] {
            counts[c] += 1;
            remaining -= 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
}

/// Class-proportional 2/3 - 1/3 split; instances keep their shuffled order within each class.
pub fn stratified_split<R: Rng + ?Sized>(rng: &mut R, ds: &Dataset) -> Result<SplitDataset, DatasetError> {
    check_class_sizes(ds)?;
    let mut by_class = indices_by_class(ds);
    let train_counts = stratified_train_counts(&ds.class_counts());
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (members, &n_train) in by_class.iter_mut().zip(&train_counts) {
        members.shuffle(rng);
        train_idx.extend_from_slice(&members[..n_train]);
        test_idx.extend_from_slice(&members[n_train..]);
    }
    Ok(SplitDataset { train: ds.subset(&train_idx), test: ds.subset(&test_idx) })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Synthesizes `x + u (neighbor - x)` for a neighbour among the `k` nearest.
pub fn interpolate(base: &[f64], neighbor: &[f64], u: f64) -> Vec<f64> {
    base.iter().zip(neighbor).map(|(&x, &n)| x + u * (n - x)).collect()
}

/// Oversamples every class up to `target_per_class` (default: the largest class).
///
/// Synthetic points are appended after the original rows. Base instances are
/// taken round-robin through the class; each picks one of its `k_neighbors`
/// nearest same-class neighbours (Euclidean) at random.
pub fn smote<R: Rng + ?Sized>(rng: &mut R, ds: &Dataset, k_neighbors: usize, target_per_class: Option<usize>) -> Result<Dataset, DatasetError> {
    check_class_sizes(ds)?;
    let k_neighbors = k_neighbors.max(1);
    let counts = ds.class_counts();
    let target = target_per_class.unwrap_or_else(|| counts.iter().copied().max().unwrap_or(0));
    let mut out = ds.clone();
    for (class, members) in indices_by_class(ds).into_iter().enumerate() {
        let needed = target.saturating_sub(members.len());
        if needed == 0 {
            continue;
        }
        let neighbors: Vec<Vec<usize>> = members
            .iter()
            .map(|&i| {
                let mut others: Vec<(f64, usize)> = members
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| (squared_distance(&ds.features[i], &ds.features[j]), j))
                    .collect();
                others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
                others.into_iter().take(k_neighbors).map(|(_, j)| j).collect()
            })
            .collect();
        for s in 0..needed {
            let m = s % members.len();
            let base = members[m];
            let nb = neighbors[m][rng.random_range(0..neighbors[m].len())];
            let u: f64 = rng.random();
            out.features.push(interpolate(&ds.features[base], &ds.features[nb], u));
            out.labels.push(class);
        }
    }
    Ok(out)
}

/// Random presentation order for one epoch.
pub fn shuffle_epoch<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Sidecar written next to a normalized snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMetadata {
    pub name: String,
    pub instance_count: usize,
    pub attribute_count: usize,
    pub class_names: Vec<String>,
    pub class_counts: Vec<usize>,
    pub normalization: NormalizationStats,
}

/// Writes `<stem>.csv` and `<stem>.meta.json` into `dir`.
pub fn write_snapshot(dir: &Path, stem: &str, normalized: &Dataset, stats: &NormalizationStats) -> Result<(), DatasetError> {
    normalized.write_csv(&dir.join(format!("{stem}.csv")))?;
    let meta = SnapshotMetadata {
        name: normalized.name.clone(),
        instance_count: normalized.len(),
        attribute_count: normalized.attribute_count(),
        class_names: normalized.class_names.clone(),
        class_counts: normalized.class_counts(),
        normalization: stats.clone(),
    };
    let path = dir.join(format!("{stem}.meta.json"));
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    std::fs::write(&path, text).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })
}

/// Reads a snapshot back, restoring the class map from the sidecar.
pub fn read_snapshot(dir: &Path, stem: &str) -> Result<(Dataset, SnapshotMetadata), DatasetError> {
    let path = dir.join(format!("{stem}.meta.json"));
    let text = std::fs::read_to_string(&path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    let meta: SnapshotMetadata = serde_json::from_str(&text).map_err(|e| DatasetError::Metadata(e.to_string()))?;
    let mut ds = load_csv(&dir.join(format!("{stem}.csv")), true)?;
    let remap: Vec<usize> = ds
        .class_names
        .iter()
        .map(|n| meta.class_names.iter().position(|m| m == n).ok_or_else(|| DatasetError::Metadata(format!("unknown class {n}"))))
        .collect::<Result<_, _>>()?;
    ds.labels = ds.labels.iter().map(|&l| remap[l]).collect();
    ds.class_names = meta.class_names.clone();
    ds.name = meta.name.clone();
    if ds.len() != meta.instance_count || ds.attribute_count() != meta.attribute_count {
        return Err(DatasetError::Metadata("shape differs from sidecar".into()));
    }
    Ok((ds, meta))
}
