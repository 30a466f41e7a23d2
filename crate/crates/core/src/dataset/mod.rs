//! Feature extraction, selection, balancing and the `.tsds` dataset file.

mod features;
mod select;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{self, ContainerError, Tensor};
use crate::labeling::StabilityThresholds;

pub use features::{channel_names, channel_statistics, extract_features, feature_names, FeatureScheme, FeatureVector, STATISTICS};
pub use select::{anova_f, select_features};

pub const DATASET_MAGIC: &[u8; 4] = b"TSDS";
pub const DATASET_VERSION: u32 = 1;
/// Largest tolerated gap between a class share and the balance target.
pub const BALANCE_TOLERANCE: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label {label} outside [0, {n_classes})")]
    Label { label: u32, n_classes: usize },
    #[error("non-finite feature {name} in sample {row}")]
    NonFinite { row: usize, name: String },
    #[error("feature selection failed: {0}")]
    Selection(String),
    #[error("class {class} has no samples but the balance target requires it")]
    EmptyClass { class: String },
    #[error("class {class} has {count} samples, too few to populate every split")]
    ClassTooSmall { class: String, count: usize },
    #[error("invalid split fractions {0:?}: must be non-negative and sum to 1")]
    Fractions([f64; 3]),
    #[error("invalid balance ratio {0}: must lie in (0, 0.5]")]
    Ratio(f64),
    #[error("malformed dataset metadata: {0}")]
    Metadata(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DatasetMetadata {
    pub case_name: String,
    pub scheme: Option<FeatureScheme>,
    pub thresholds: Option<StabilityThresholds>,
    pub seed: u64,
    pub scenario_schema_version: u32,
    pub class_names: Vec<String>,
    /// Per-class counts before balancing.
    pub raw_counts: Vec<usize>,
    /// Per-class counts of `y`.
    pub class_counts: Vec<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// Row-major feature matrix with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f32>,
    pub y: Vec<u32>,
    pub n_classes: usize,
    pub names: Vec<String>,
    pub metadata: DatasetMetadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: u32,
}

pub fn class_counts(y: &[u32], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for &c in y {
        counts[c as usize] += 1;
    }
    counts
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.x[i * self.dim()..(i + 1) * self.dim()]
    }

    pub fn counts(&self) -> Vec<usize> {
        class_counts(&self.y, self.n_classes)
    }

    fn class_name(&self, c: usize) -> String {
        self.metadata.class_names.get(c).cloned().unwrap_or_else(|| c.to_string())
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let dim = self.dim();
        if self.x.len() != self.y.len() * dim {
            return Err(DatasetError::Shape(format!("{} values for {} rows of width {dim}", self.x.len(), self.y.len())));
        }
        for &c in &self.y {
            if c as usize >= self.n_classes {
                return Err(DatasetError::Label { label: c, n_classes: self.n_classes });
            }
        }
        if let Some(pos) = self.x.iter().position(|v| !v.is_finite()) {
            return Err(DatasetError::NonFinite { row: pos / dim.max(1), name: self.names[pos % dim].clone() });
        }
        if self.metadata.class_counts != self.counts() {
            return Err(DatasetError::Metadata(format!(
                "class counts {:?} do not match labels {:?}",
                self.metadata.class_counts,
                self.counts()
            )));
        }
        Ok(())
    }

    /// Rows in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let dim = self.dim();
        let x = rows.iter().flat_map(|&i| self.x[i * dim..(i + 1) * dim].iter().copied()).collect();
        let y: Vec<u32> = rows.iter().map(|&i| self.y[i]).collect();
        let mut metadata = self.metadata.clone();
        metadata.class_counts = class_counts(&y, self.n_classes);
        Dataset { x, y, n_classes: self.n_classes, names: self.names.clone(), metadata }
    }

    /// Projection onto the given columns.
    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        let dim = self.dim();
        let x = (0..self.len()).flat_map(|i| cols.iter().map(move |&j| self.x[i * dim + j])).collect();
        Dataset {
            x,
            y: self.y.clone(),
            n_classes: self.n_classes,
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::json!({
            "n_classes": self.n_classes,
            "names": self.names,
            "dataset": self.metadata,
        });
        let tensors = [
            Tensor::new("x", vec![self.len(), self.dim()], self.x.clone()),
            Tensor::new("y", vec![self.len()], self.y.iter().map(|&c| c as f32).collect()),
        ];
        container::encode(DATASET_MAGIC, DATASET_VERSION, meta, &tensors)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Dataset, DatasetError> {
        let (meta, tensors) = container::decode(bytes, DATASET_MAGIC, DATASET_VERSION)?;
        let bad = |m: &str| DatasetError::Metadata(m.to_string());
        let n_classes = meta["n_classes"].as_u64().ok_or_else(|| bad("missing n_classes"))? as usize;
        let names: Vec<String> = serde_json::from_value(meta["names"].clone()).map_err(|e| bad(&e.to_string()))?;
        let metadata: DatasetMetadata =
            serde_json::from_value(meta["dataset"].clone()).map_err(|e| bad(&e.to_string()))?;
        let [x, y]: [Tensor; 2] = tensors.try_into().map_err(|_| bad("expected payloads x and y"))?;
        if x.name != "x" || y.name != "y" {
            return Err(bad("expected payloads x and y"));
        }
        let labels = y
            .data
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && (v as usize) < n_classes {
                    Ok(v as u32)
                } else {
                    Err(bad(&format!("invalid label value {v}")))
                }
            })
            .collect::<Result<Vec<u32>, _>>()?;
        let ds = Dataset { x: x.data, y: labels, n_classes, names, metadata };
        ds.validate()?;
        Ok(ds)
    }

    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_bytes()).map_err(ContainerError::from)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Dataset, DatasetError> {
        let bytes = std::fs::read(path).map_err(ContainerError::from)?;
        Dataset::from_bytes(&bytes)
    }
}

/// Largest per-class count compatible with `ratio` given the smallest class.
fn class_cap(n_min: usize, ratio: f64) -> usize {
    ((n_min as f64) * (1.0 - ratio) / ratio).round() as usize
}

/// Builds a dataset, undersampling larger classes so that every present class
/// makes up at least `ratio` of any pair it forms with the smallest class.
///
/// When every such pair is already within [`BALANCE_TOLERANCE`] of the target
/// the samples are kept as they are. Selection is seeded and preserves input
/// order. `ratio = None` disables balancing. `required` lists classes that
/// must be present.
pub fn assemble(
    samples: &[LabeledSample],
    n_classes: usize,
    ratio: Option<f64>,
    required: &[u32],
    seed: u64,
    mut metadata: DatasetMetadata,
) -> Result<Dataset, DatasetError> {
    let names = samples.first().map(|s| s.features.names.clone()).unwrap_or_default();
    for (row, s) in samples.iter().enumerate() {
        if s.features.names != names {
            return Err(DatasetError::Shape(format!("sample {row} has a different feature layout")));
        }
        if s.label as usize >= n_classes {
            return Err(DatasetError::Label { label: s.label, n_classes });
        }
        if let Some(j) = s.features.values.iter().position(|v| !v.is_finite() || !(*v as f32).is_finite()) {
            return Err(DatasetError::NonFinite { row, name: names[j].clone() });
        }
    }
    if metadata.class_names.len() != n_classes {
        metadata.class_names = (0..n_classes).map(|c| c.to_string()).collect();
    }
    let y_all: Vec<u32> = samples.iter().map(|s| s.label).collect();
    let raw = class_counts(&y_all, n_classes);
    for &c in required {
        if raw.get(c as usize).copied().unwrap_or(0) == 0 {
            return Err(DatasetError::EmptyClass { class: metadata.class_names[c as usize].clone() });
        }
    }

    let mut keep: Vec<bool> = vec![true; samples.len()];
    if let Some(r) = ratio {
        if !(r > 0.0 && r <= 0.5) {
            return Err(DatasetError::Ratio(r));
        }
        let present: Vec<usize> = (0..n_classes).filter(|&c| raw[c] > 0).collect();
        if let Some(&n_min) = present.iter().map(|&c| &raw[c]).min() {
            let within = present
                .iter()
                .all(|&c| n_min as f64 / (n_min + raw[c]) as f64 >= r - BALANCE_TOLERANCE - 1e-12);
            if !within {
                let cap = class_cap(n_min, r);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for &c in &present {
                    if raw[c] <= cap {
                        continue;
                    }
                    let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| y_all[i] as usize == c).collect();
                    idx.shuffle(&mut rng);
                    for &i in &idx[cap..] {
                        keep[i] = false;
                    }
                }
            }
        }
    }

    let rows: Vec<usize> = (0..samples.len()).filter(|&i| keep[i]).collect();
    let x = rows.iter().flat_map(|&i| samples[i].features.values.iter().map(|&v| v as f32)).collect();
    let y: Vec<u32> = rows.iter().map(|&i| y_all[i]).collect();
    metadata.raw_counts = raw;
    metadata.class_counts = class_counts(&y, n_classes);
    metadata.seed = seed;
    if metadata.scheme.is_none() {
        metadata.scheme = samples.first().map(|s| s.features.scheme);
    }
    Ok(Dataset { x, y, n_classes, names, metadata })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Stratified, seeded three-way split. Row order within each part follows the source.
pub fn split(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Split, DatasetError> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DatasetError::Fractions(fractions));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for c in 0..ds.n_classes {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.y[i] as usize == c).collect();
        if idx.is_empty() {
            continue;
        }
        let n = idx.len();
        idx.shuffle(&mut rng);
        let n_train = ((n as f64) * fractions[0]).round() as usize;
        let n_val = (((n as f64) * fractions[1]).round() as usize).min(n - n_train.min(n));
        let n_train = n_train.min(n);
        let n_test = n - n_train - n_val;
        let sizes = [n_train, n_val, n_test];
        if (0..3).any(|p| fractions[p] > 0.0 && sizes[p] == 0) {
            return Err(DatasetError::ClassTooSmall { class: ds.class_name(c), count: n });
        }
        parts[0].extend_from_slice(&idx[..n_train]);
        parts[1].extend_from_slice(&idx[n_train..n_train + n_val]);
        parts[2].extend_from_slice(&idx[n_train + n_val..]);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(Split { train: ds.subset(&parts[0]), val: ds.subset(&parts[1]), test: ds.subset(&parts[2]) })
}
