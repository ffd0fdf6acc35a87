//! Dataset files, splits, the synthetic blob fixture and embedding export.
//!
//! Formats:
//! - features and embeddings: headerless numeric CSV, one row per node;
//! - labels: one non-negative integer per line;
//! - splits: JSON object `{"train": [...], "val": [...], "test": [...]}`.
//!
//! Floats are written with Rust's shortest round-trip representation, so
//! write-then-read reproduces every value exactly.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    /// Class count is inferred as `max(label) + 1`.
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        let class_count = labels.iter().max().map_or(0, |m| m + 1);
        Self::with_classes(features, labels, class_count)
    }

    pub fn with_classes(features: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::invalid(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count) {
            return Err(Error::invalid(format!(
                "label {l} of node {i} is not below the class count {class_count}"
            )));
        }
        if features.rows() < class_count {
            return Err(Error::invalid(format!(
                "{} nodes cannot cover {class_count} classes",
                features.rows()
            )));
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    pub fn load(features: &Path, labels: &Path) -> Result<Self> {
        Self::new(load_features(features)?, load_labels(labels)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn save(&self, features: &Path, labels: &Path) -> Result<()> {
        save_matrix_csv(&self.features, features)?;
        save_labels(&self.labels, labels)
    }
}

pub fn load_features(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(parse_err(format!("expected {c} fields, found {}", record.len())));
            }
            _ => {}
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(format!("field {} is not a number: {field:?}", j + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(format!("field {} is not finite", j + 1)));
            }
            data.push(v);
        }
        rows += 1;
    }
    Matrix::new(rows, cols.unwrap_or(0), data)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Writes a headerless numeric CSV.
pub fn save_matrix_csv(m: &Matrix, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in 0..m.rows() {
        let line = m
            .row(r)
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Final-layer node embeddings as a headerless CSV, one row per node.
pub fn export_embeddings(embeddings: &Matrix, path: &Path) -> Result<()> {
    save_matrix_csv(embeddings, path)
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        labels.push(t.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("not a class index: {t:?}"),
        })?);
    }
    Ok(labels)
}

pub fn save_labels(labels: &[usize], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for l in labels {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Train / validation / test node indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    /// Checks range and pairwise disjointness; train and val must be non-empty.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train.is_empty() || self.val.is_empty() {
            return Err(Error::Split("train and val sets must be non-empty".into()));
        }
        let mut owner: HashMap<usize, &str> = HashMap::new();
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in set.iter() {
                if i >= n {
                    return Err(Error::Split(format!("{name} index {i} is out of range for {n} nodes")));
                }
                if let Some(prev) = owner.insert(i, name) {
                    return Err(Error::Split(format!("index {i} appears in both {prev} and {name}")));
                }
            }
        }
        if self.test.is_empty() {
            log::warn!("split has an empty test set; test evaluation will be skipped");
        }
        Ok(())
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(f), self)?;
        Ok(())
    }
}

/// Reads a split and validates it against `n` nodes.
pub fn load_split(path: &Path, n: usize) -> Result<SplitSpec> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let split: SplitSpec = serde_json::from_reader(BufReader::new(f))?;
    split.validate(n)?;
    Ok(split)
}

/// Stratified random split: per class, `per_class_labeled` training and
/// `per_class_val` validation nodes; everything else is test. Each set is
/// returned sorted.
pub fn make_splits(
    labels: &[usize],
    per_class_labeled: usize,
    per_class_val: usize,
    seed: u64,
) -> Result<SplitSpec> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = SplitSpec {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.len() < per_class_labeled + per_class_val {
            return Err(Error::invalid(format!(
                "class {c} has {} nodes, fewer than {} labeled + {} validation",
                members.len(),
                per_class_labeled,
                per_class_val
            )));
        }
        members.shuffle(&mut rng);
        split.train.extend_from_slice(&members[..per_class_labeled]);
        split.val.extend_from_slice(&members[per_class_labeled..per_class_labeled + per_class_val]);
        split.test.extend_from_slice(&members[per_class_labeled + per_class_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Gaussian blobs around `10·e_c` for class `c`, nodes ordered by class.
pub fn synthetic_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 || per_class < 2 {
        return Err(Error::invalid("synthetic blobs need at least 2 classes of 2 points"));
    }
    if dim < classes {
        return Err(Error::invalid(format!(
            "{classes} basis-direction centers need at least {classes} dimensions, got {dim}"
        )));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::invalid(format!("spread must be finite and >= 0, got {spread}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let n = classes * per_class;
    let mut features = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        for p in 0..per_class {
            let row = features.row_mut(c * per_class + p);
            for (j, v) in row.iter_mut().enumerate() {
                let center = if j == c { 10.0 } else { 0.0 };
                *v = center + spread * noise.sample(&mut rng);
            }
            labels.push(c);
        }
    }
    Dataset::with_classes(features, labels, classes)
}
