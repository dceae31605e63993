//! Labeled datasets, the on-disk dataset directory format, the synthetic
//! blob generator, stratified splitting and client partitioning.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{RngStream, Tensor};

pub const DEFAULT_CLASS_NAMES: [&str; 4] = ["glioma", "meningioma", "pituitary", "notumor"];

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.bin";
pub const LABELS_FILE: &str = "labels.bin";
const DTYPE: &str = "f32le";

/// Ordered class names. Class `i` is `class_names[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    class_names: Vec<String>,
}

impl LabelSpace {
    pub fn new(class_names: Vec<String>) -> Result<Self> {
        if class_names.len() < 2 {
            return Err(Error::arg("a label space needs at least 2 classes"));
        }
        if class_names.len() > u16::MAX as usize {
            return Err(Error::arg("too many classes for 16-bit labels"));
        }
        for (i, name) in class_names.iter().enumerate() {
            if class_names[..i].contains(name) {
                return Err(Error::arg(format!("duplicate class name `{name}`")));
            }
        }
        Ok(Self { class_names })
    }

    pub fn len(&self) -> usize {
        self.class_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.class_names
    }
}

impl Default for LabelSpace {
    fn default() -> Self {
        Self {
            class_names: DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(ls: LabelSpace) -> Self {
        ls.class_names
    }
}

/// `m` samples stored as one tensor of shape `[m, feature_shape..]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    label_space: LabelSpace,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, label_space: LabelSpace) -> Result<Self> {
        if features.shape().is_empty() {
            return Err(Error::shape("dataset features need a leading sample axis"));
        }
        if features.shape()[0] != labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows but {} labels",
                features.shape()[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= label_space.len()) {
            return Err(Error::arg(format!(
                "label {bad} outside the {}-class label space",
                label_space.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            label_space,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn num_classes(&self) -> usize {
        self.label_space.len()
    }

    /// Per-sample shape (everything after the sample axis).
    pub fn feature_shape(&self) -> &[usize] {
        &self.features.shape()[1..]
    }

    pub fn feature_len(&self) -> usize {
        self.feature_shape().iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let w = self.feature_len();
        &self.features.data()[i * w..(i + 1) * w]
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let w = self.feature_len();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.feature_shape());
        Dataset {
            features: Tensor::from_parts(shape, data),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            label_space: self.label_space.clone(),
        }
    }

    /// Indices of every sample, grouped by class, in dataset order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Concatenates datasets sharing a feature shape and label space.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::arg("cannot concatenate zero datasets"))?;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.feature_shape() != first.feature_shape() || p.label_space != first.label_space {
                return Err(Error::incompatible(
                    "datasets differ in feature shape or label space",
                ));
            }
            data.extend_from_slice(p.features.data());
            labels.extend_from_slice(&p.labels);
        }
        let mut shape = vec![labels.len()];
        shape.extend_from_slice(first.feature_shape());
        Ok(Dataset {
            features: Tensor::from_parts(shape, data),
            labels,
            label_space: first.label_space.clone(),
        })
    }
}

/// Client shards produced by [`partition_clients`].
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub shards: Vec<Dataset>,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.shards.len()
    }
}

/// Four unit-variance Gaussian clusters, `per_class` samples each.
///
/// Cluster centers are pairwise at least `separation` apart: on a line for
/// `dim == 1`, on the corners of a square for `dim` 2 and 3, and on scaled,
/// evenly spaced coordinate axes otherwise.
pub fn generate_blobs(
    rng: &mut RngStream,
    per_class: usize,
    dim: usize,
    separation: f64,
) -> Result<Dataset> {
    if per_class == 0 {
        return Err(Error::arg("per_class must be at least 1"));
    }
    if dim == 0 {
        return Err(Error::arg("dim must be at least 1"));
    }
    if !(separation.is_finite() && separation > 0.0) {
        return Err(Error::arg(format!(
            "separation must be positive, got {separation}"
        )));
    }
    let centers = blob_centers(DEFAULT_CLASS_NAMES.len(), dim, separation);
    let m = per_class * centers.len();
    let mut data = Vec::with_capacity(m * dim);
    let mut labels = Vec::with_capacity(m);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            data.extend(center.iter().map(|&c| c + rng.standard_normal()));
            labels.push(class);
        }
    }
    Dataset::new(
        Tensor::from_parts(vec![m, dim], data),
        labels,
        LabelSpace::default(),
    )
}

fn blob_centers(classes: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    let mut centers = vec![vec![0.0; dim]; classes];
    match dim {
        1 => {
            for (k, c) in centers.iter_mut().enumerate() {
                c[0] = k as f64 * separation;
            }
        }
        2 | 3 if classes <= 4 => {
            for (k, c) in centers.iter_mut().enumerate() {
                c[0] = (k % 2) as f64 * separation;
                c[1] = (k / 2) as f64 * separation;
            }
        }
        _ => {
            // s/√2 on distinct axes puts every pair exactly s apart.
            let scale = separation / std::f64::consts::SQRT_2;
            let stride = (dim / classes).max(1);
            for (k, c) in centers.iter_mut().enumerate() {
                c[(k * stride) % dim] = scale;
            }
        }
    }
    centers
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    num_samples: usize,
    feature_shape: Vec<usize>,
    dtype: String,
    class_names: Vec<String>,
    data_file: String,
    labels_file: String,
}

/// Writes `d` as a dataset directory (`manifest.json`, `data.bin`,
/// `labels.bin`), creating the directory if needed.
pub fn save_dataset(d: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        num_samples: d.len(),
        feature_shape: d.feature_shape().to_vec(),
        dtype: DTYPE.to_string(),
        class_names: d.label_space.names().to_vec(),
        data_file: DATA_FILE.to_string(),
        labels_file: LABELS_FILE.to_string(),
    };

    let mut data = Vec::with_capacity(d.features.len() * 4);
    for (i, &v) in d.features.data().iter().enumerate() {
        let narrowed = v as f32;
        if !narrowed.is_finite() {
            return Err(Error::format(
                "data",
                format!("value {v} at flat index {i} does not fit in f32"),
            ));
        }
        data.extend_from_slice(&narrowed.to_le_bytes());
    }
    let mut labels = Vec::with_capacity(d.len() * 2);
    for &l in &d.labels {
        labels.extend_from_slice(&(l as u16).to_le_bytes());
    }

    let json = serde_json::to_string_pretty(&manifest)?;
    write_file(&dir.join(MANIFEST_FILE), json.as_bytes())?;
    write_file(&dir.join(DATA_FILE), &data)?;
    write_file(&dir.join(LABELS_FILE), &labels)?;
    Ok(())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let raw = read_file(&dir.join(MANIFEST_FILE))?;
    let manifest: Manifest =
        serde_json::from_slice(&raw).map_err(|e| Error::format(MANIFEST_FILE, e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::format(
            "format_version",
            format!("unsupported version {}", manifest.format_version),
        ));
    }
    if manifest.dtype != DTYPE {
        return Err(Error::format(
            "dtype",
            format!("unknown dtype `{}`, expected `{DTYPE}`", manifest.dtype),
        ));
    }
    let label_space = LabelSpace::new(manifest.class_names)
        .map_err(|e| Error::format("class_names", e.to_string()))?;
    let per_sample: usize = manifest.feature_shape.iter().product();
    let values = manifest.num_samples * per_sample;

    let data = read_file(&dir.join(&manifest.data_file))?;
    if data.len() != values * 4 {
        return Err(Error::format(
            "num_samples",
            format!(
                "manifest implies {values} f32 values ({} bytes) but `{}` holds {} bytes",
                values * 4,
                manifest.data_file,
                data.len()
            ),
        ));
    }
    let labels_raw = read_file(&dir.join(&manifest.labels_file))?;
    if labels_raw.len() != manifest.num_samples * 2 {
        return Err(Error::format(
            "num_samples",
            format!(
                "manifest declares {} labels but `{}` holds {} bytes",
                manifest.num_samples,
                manifest.labels_file,
                labels_raw.len()
            ),
        ));
    }

    let mut features = Vec::with_capacity(values);
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(
                "data_file",
                format!("non-finite value at flat index {i}"),
            ));
        }
        features.push(v as f64);
    }
    let labels: Vec<usize> = labels_raw
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]) as usize)
        .collect();
    if let Some(&bad) = labels.iter().find(|&&l| l >= label_space.len()) {
        return Err(Error::format(
            "labels_file",
            format!("label {bad} outside {} classes", label_space.len()),
        ));
    }

    let mut shape = vec![manifest.num_samples];
    shape.extend(manifest.feature_shape);
    Dataset::new(Tensor::from_parts(shape, features), labels, label_space)
}

/// Splits every class independently: `floor(train_fraction · count)` shuffled
/// samples go to the train side, the rest to the test side.
pub fn stratified_split(
    d: &Dataset,
    train_fraction: f64,
    rng: &mut RngStream,
) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::arg(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idx) in d.indices_by_class().into_iter().enumerate() {
        if idx.is_empty() {
            return Err(Error::arg(format!(
                "class `{}` has no samples to split",
                d.label_space.names()[class]
            )));
        }
        rng.shuffle(&mut idx);
        let n_train = train_count(idx.len(), train_fraction);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    Ok((d.subset(&train), d.subset(&test)))
}

/// `floor(fraction · count)`, tolerant of products like `0.29 · 100` that land
/// a hair below an integer in binary floating point.
pub fn train_count(count: usize, fraction: f64) -> usize {
    ((fraction * count as f64) + 1e-9).floor() as usize
}

/// Stratified round-robin deal: each class is shuffled, then its samples are
/// dealt to clients in turn. The dealer position carries over from one class
/// to the next, so per-class shard sizes differ by at most one and so do the
/// overall shard sizes.
pub fn partition_clients(d: &Dataset, clients: usize, rng: &mut RngStream) -> Result<Partition> {
    if clients == 0 {
        return Err(Error::arg("number of clients must be at least 1"));
    }
    if d.len() < clients {
        return Err(Error::arg(format!(
            "{} samples cannot fill {clients} client shards",
            d.len()
        )));
    }
    let mut assigned = vec![Vec::new(); clients];
    let mut dealer = 0;
    for mut idx in d.indices_by_class() {
        rng.shuffle(&mut idx);
        for i in idx {
            assigned[dealer].push(i);
            dealer = (dealer + 1) % clients;
        }
    }
    Ok(Partition {
        shards: assigned.iter().map(|idx| d.subset(idx)).collect(),
    })
}
