//! Training data: per-user shards and a held-out test set.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct UserData {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub dim: usize,
}

impl UserData {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::InvalidArgument(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("feature values must be finite".into()));
        }
        Ok(UserData { features, labels, dim })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.features.chunks_exact(self.dim)
    }

    /// All rows of several shards stacked in order.
    pub fn pooled(parts: &[UserData]) -> Result<UserData> {
        let dim = parts.first().map(|p| p.dim).ok_or(Error::InvalidArgument("nothing to pool".into()))?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.dim != dim {
                return Err(Error::InvalidArgument("shards differ in feature width".into()));
            }
            features.extend_from_slice(&p.features);
            labels.extend_from_slice(&p.labels);
        }
        UserData::new(features, labels, dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedData {
    pub users: Vec<UserData>,
    pub test: UserData,
    pub classes: usize,
    pub features: usize,
}

impl FederatedData {
    pub fn samples(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.len() as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[default]
    Synthetic,
    Mnist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub classes: usize,
    /// Feature width of the synthetic mixture (MNIST is fixed at 14×14).
    pub features: usize,
    pub samples_per_user: usize,
    pub test_samples: usize,
    /// Standard deviation of the synthetic class means; samples add unit noise.
    pub class_separation: f64,
    /// Directory holding the four standard MNIST IDX files.
    pub mnist_dir: Option<String>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Synthetic,
            classes: 10,
            features: 20,
            samples_per_user: 270,
            test_samples: 2000,
            class_separation: 0.4,
            mnist_dir: None,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.samples_per_user == 0 || self.test_samples == 0 {
            return Err(Error::Config(
                "dataset needs at least 2 classes and nonzero sample counts".into(),
            ));
        }
        match self.kind {
            DatasetKind::Synthetic => {
                if self.features == 0 || !(self.class_separation >= 0.0) {
                    return Err(Error::Config("synthetic dataset needs features ≥ 1 and separation ≥ 0".into()));
                }
            }
            DatasetKind::Mnist => {
                if self.mnist_dir.is_none() {
                    return Err(Error::Config("dataset.mnist_dir is required for MNIST".into()));
                }
            }
        }
        Ok(())
    }

    pub fn load(&self, users: usize, seed: u64) -> Result<FederatedData> {
        self.validate()?;
        match self.kind {
            DatasetKind::Synthetic => Ok(gaussian_mixture(
                users,
                self.classes,
                self.features,
                self.samples_per_user,
                self.test_samples,
                self.class_separation,
                seed,
            )),
            DatasetKind::Mnist => {
                let dir = self.mnist_dir.as_deref().unwrap_or_default();
                load_mnist(Path::new(dir), users, self.samples_per_user, self.test_samples, seed)
            }
        }
    }
}

/// IID shards of a Gaussian mixture: class means drawn from `N(0, sep² I)`,
/// samples from `N(mean, I)`, labels uniform.
pub fn gaussian_mixture(
    users: usize,
    classes: usize,
    features: usize,
    per_user: usize,
    test: usize,
    separation: f64,
    seed: u64,
) -> FederatedData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..features).map(|_| separation * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let draw = |n: usize, rng: &mut ChaCha8Rng| {
        let mut x = Vec::with_capacity(n * features);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let c = rng.random_range(0..classes);
            y.push(c);
            for m in &means[c] {
                x.push(m + rng.sample::<f64, _>(StandardNormal));
            }
        }
        UserData { features: x, labels: y, dim: features }
    };
    let shards = (0..users).map(|_| draw(per_user, &mut rng)).collect();
    let test = draw(test, &mut rng);
    FederatedData { users: shards, test, classes, features }
}

/// Parsed IDX array: dimensions and raw bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Parses an unsigned-byte IDX buffer with the given magic number.
pub fn parse_idx(bytes: &[u8], magic: u32) -> Result<IdxArray> {
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| Error::Format("IDX header is truncated".into()))
    };
    let found = word(0)?;
    if found != magic {
        return Err(Error::Format(format!("IDX magic {found:#010x}, expected {magic:#010x}")));
    }
    let ndim = (magic & 0xff) as usize;
    let dims: Vec<usize> = (1..=ndim).map(|i| word(i).map(|v| v as usize)).collect::<Result<_>>()?;
    let header = 4 * (ndim + 1);
    let count: usize = dims.iter().product();
    if bytes.len() != header + count {
        return Err(Error::Format(format!(
            "IDX body holds {} bytes, header promises {count}",
            bytes.len().saturating_sub(header)
        )));
    }
    Ok(IdxArray { dims, data: bytes[header..].to_vec() })
}

/// 28×28 images to 14×14 by 2×2 averaging, scaled to `[0, 1]`.
pub fn downsample_images(images: &IdxArray) -> Result<(Vec<f64>, usize)> {
    let [n, rows, cols] = images.dims[..] else {
        return Err(Error::Format("image file must be three-dimensional".into()));
    };
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(Error::Format("image sides must be even".into()));
    }
    let (hr, hc) = (rows / 2, cols / 2);
    let mut out = Vec::with_capacity(n * hr * hc);
    for k in 0..n {
        let img = &images.data[k * rows * cols..(k + 1) * rows * cols];
        for r in 0..hr {
            for c in 0..hc {
                let s: u32 = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|(dr, dc)| img[(2 * r + dr) * cols + 2 * c + dc] as u32)
                    .sum();
                out.push(s as f64 / (4.0 * 255.0));
            }
        }
    }
    Ok((out, hr * hc))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn images_and_labels(dir: &Path, images: &str, labels: &str) -> Result<UserData> {
    let img = parse_idx(&read(&dir.join(images))?, IDX_IMAGES_MAGIC)?;
    let lab = parse_idx(&read(&dir.join(labels))?, IDX_LABELS_MAGIC)?;
    let (x, dim) = downsample_images(&img)?;
    let y: Vec<usize> = lab.data.iter().map(|&v| v as usize).collect();
    if y.len() * dim != x.len() {
        return Err(Error::Format(format!("{} labels for {} images", y.len(), x.len() / dim)));
    }
    if y.iter().any(|&v| v >= 10) {
        return Err(Error::Format("MNIST labels must lie in 0..10".into()));
    }
    UserData::new(x, y, dim)
}

fn take(data: &UserData, idx: &[usize]) -> UserData {
    let mut x = Vec::with_capacity(idx.len() * data.dim);
    let mut y = Vec::with_capacity(idx.len());
    for &i in idx {
        x.extend_from_slice(&data.features[i * data.dim..(i + 1) * data.dim]);
        y.push(data.labels[i]);
    }
    UserData { features: x, labels: y, dim: data.dim }
}

/// MNIST from the standard IDX files, shuffled and split IID across users.
pub fn load_mnist(dir: &Path, users: usize, per_user: usize, test: usize, seed: u64) -> Result<FederatedData> {
    let train = images_and_labels(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte")?;
    let held = images_and_labels(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?;
    if users * per_user > train.len() || test > held.len() {
        return Err(Error::Config(format!(
            "MNIST has {} training and {} test images; {users}×{per_user} and {test} requested",
            train.len(),
            held.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let shards = (0..users)
        .map(|u| take(&train, &order[u * per_user..(u + 1) * per_user]))
        .collect();
    let mut test_order: Vec<usize> = (0..held.len()).collect();
    test_order.shuffle(&mut rng);
    let features = train.dim;
    Ok(FederatedData { users: shards, test: take(&held, &test_order[..test]), classes: 10, features })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(magic: u32, dims: &[u32], body: &[u8]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v.extend_from_slice(body);
        v
    }

    #[test]
    fn parses_and_downsamples() {
        let body: Vec<u8> = (0..16).map(|v| v as u8 * 10).collect();
        let arr = parse_idx(&idx(IDX_IMAGES_MAGIC, &[1, 4, 4], &body), IDX_IMAGES_MAGIC).unwrap();
        assert_eq!(arr.dims, vec![1, 4, 4]);
        let (x, d) = downsample_images(&arr).unwrap();
        assert_eq!(d, 4);
        // Top-left block holds 0, 10, 40, 50.
        assert!((x[0] - 100.0 / (4.0 * 255.0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_magic_and_length() {
        let buf = idx(IDX_LABELS_MAGIC, &[3], &[1, 2, 3]);
        assert!(parse_idx(&buf, IDX_IMAGES_MAGIC).is_err());
        assert!(parse_idx(&buf[..buf.len() - 1], IDX_LABELS_MAGIC).is_err());
        assert_eq!(parse_idx(&buf, IDX_LABELS_MAGIC).unwrap().data, vec![1, 2, 3]);
    }

    #[test]
    fn mixture_shapes_and_determinism() {
        let a = gaussian_mixture(3, 4, 5, 7, 11, 1.0, 9);
        let b = gaussian_mixture(3, 4, 5, 7, 11, 1.0, 9);
        assert_eq!(a, b);
        assert_eq!(a.users.len(), 3);
        assert!(a.users.iter().all(|u| u.len() == 7 && u.features.len() == 35));
        assert_eq!(a.test.len(), 11);
        assert!(a.users.iter().flat_map(|u| &u.labels).all(|&y| y < 4));
    }
}
