//! Toy data generation, CSV ingestion and the named toy networks.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

use crate::objective::{Dataset, MlpSpec, ObjectiveError};
use crate::rng::{self, Stream};

/// Class-0 disk radius and class-1 annulus radii of the toy problem.
pub const TOY_INNER_RADIUS: f64 = 0.35;
pub const TOY_ANNULUS: (f64, f64) = (0.6, 1.0);
pub const TOY_POINTS_PER_CLASS: usize = 50;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: label {label} outside [0, {n_classes})")]
    LabelRange { line: u64, label: usize, n_classes: usize },
    #[error("dataset {0} contains no rows")]
    Empty(PathBuf),
    #[error("unknown network '{0}' (expected small, medium or large)")]
    UnknownNetwork(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// 50 points uniform in the disk `‖x‖ ≤ 0.35` (class 0) followed by 50 points
/// uniform in the annulus `0.6 ≤ ‖x‖ ≤ 1` (class 1).
pub fn gen_toy_dataset(seed: u64) -> Dataset {
    let mut rng = rng::stream(seed, Stream::Data);
    let mut features = Vec::with_capacity(4 * TOY_POINTS_PER_CLASS);
    let mut labels = Vec::with_capacity(2 * TOY_POINTS_PER_CLASS);
    let (lo, hi) = TOY_ANNULUS;
    for (class, r2_lo, r2_hi) in [(0, 0.0, TOY_INNER_RADIUS * TOY_INNER_RADIUS), (1, lo * lo, hi * hi)] {
        for _ in 0..TOY_POINTS_PER_CLASS {
            // area-uniform radius
            let r = (r2_lo + (r2_hi - r2_lo) * rng.random::<f64>()).sqrt();
            let theta = 2.0 * PI * rng.random::<f64>();
            features.push(r * theta.cos());
            features.push(r * theta.sin());
            labels.push(class);
        }
    }
    Dataset::new(features, 2, labels, 2).expect("toy data is well formed")
}

/// Writes `x1,...,xk,label` rows with a header.
pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<(), DataError> {
    let io = |source| DataError::Io { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    let mut header: Vec<String> = (1..=data.input_dim()).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(|e| io(e.into()))?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.input(i).iter().map(|v| v.to_string()).collect();
        rec.push(data.label(i).to_string());
        w.write_record(&rec).map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

/// Reads rows of `n_features` floats followed by an integer label; the class
/// count is inferred as `max label + 1` (at least 2).
pub fn load_csv_dataset(path: &Path, n_features: usize, has_header: bool) -> Result<Dataset, DataError> {
    load_csv_dataset_with_classes(path, n_features, has_header, None)
}

/// As [`load_csv_dataset`], rejecting labels `≥ n_classes` when given.
pub fn load_csv_dataset_with_classes(
    path: &Path,
    n_features: usize,
    has_header: bool,
    n_classes: Option<usize>,
) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != n_features + 1 {
            return Err(DataError::Parse {
                line,
                message: format!("expected {} fields, found {}", n_features + 1, record.len()),
            });
        }
        for (j, field) in record.iter().take(n_features).enumerate() {
            let v: f64 = field.parse().map_err(|_| DataError::Parse {
                line,
                message: format!("feature {} is not a number: '{field}'", j + 1),
            })?;
            features.push(v);
        }
        let raw = &record[n_features];
        let label: usize = raw.parse().map_err(|_| DataError::Parse {
            line,
            message: format!("label is not a non-negative integer: '{raw}'"),
        })?;
        labels.push(label);
        lines.push(line);
    }
    if labels.is_empty() {
        return Err(DataError::Empty(path.to_path_buf()));
    }
    let classes = match n_classes {
        Some(k) => {
            if let Some((i, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
                return Err(DataError::LabelRange { line: lines[i], label, n_classes: k });
            }
            k
        }
        None => (labels.iter().max().unwrap() + 1).max(2),
    };
    Ok(Dataset::new(features, n_features, labels, classes)?)
}

/// Named toy networks. Each listed structure is followed by an extra 2-unit
/// affine output layer, giving 36, 176 and 908 parameters.
pub fn build_network(name: &str) -> Result<MlpSpec, DataError> {
    let sizes = match name {
        "small" => vec![2, 2, 2, 2, 2, 2, 2],
        "medium" => vec![2, 4, 8, 8, 4, 2, 2],
        "large" => vec![2, 10, 20, 20, 10, 2, 2],
        other => return Err(DataError::UnknownNetwork(other.to_string())),
    };
    Ok(MlpSpec::new(sizes)?)
}
