//! Synthetic two-class generators, IDX / CIFAR-10 binary loaders, binary
//! subsetting and unit-ball sampling.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

const IDX_IMAGES: u32 = 2051;
const IDX_LABELS: u32 = 2049;
const CIFAR_PIXELS: usize = 3072;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    SynI,
    SynIi,
    SynIii,
    SynIv,
    MnistPair,
    FashionPair,
    CifarPair,
    UnitBall,
}

impl DatasetName {
    pub const SYNTHETIC: [DatasetName; 4] = [Self::SynI, Self::SynIi, Self::SynIii, Self::SynIv];

    pub fn name(self) -> &'static str {
        match self {
            Self::SynI => "syn_i",
            Self::SynIi => "syn_ii",
            Self::SynIii => "syn_iii",
            Self::SynIv => "syn_iv",
            Self::MnistPair => "mnist_pair",
            Self::FashionPair => "fashion_pair",
            Self::CifarPair => "cifar_pair",
            Self::UnitBall => "unit_ball",
        }
    }

    pub fn is_synthetic(self) -> bool {
        Self::SYNTHETIC.contains(&self)
    }

    /// Noise level used when a spec leaves it unset.
    pub fn default_noise(self) -> f64 {
        match self {
            Self::SynI => 0.5,
            Self::SynIi => 0.15,
            Self::SynIii => 0.15,
            Self::SynIv => 0.2,
            _ => 0.0,
        }
    }
}

impl std::fmt::Display for DatasetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Self::SynI,
            Self::SynIi,
            Self::SynIii,
            Self::SynIv,
            Self::MnistPair,
            Self::FashionPair,
            Self::CifarPair,
            Self::UnitBall,
        ]
        .into_iter()
        .find(|d| d.name() == s)
        .ok_or_else(|| Error::UnknownDataset(s.to_string()))
    }
}

fn default_n_test() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: DatasetName,
    /// Original class ids relabelled to 0 and 1 (image datasets).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<(u8, u8)>,
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Directory holding the IDX or CIFAR binary files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Ambient dimension for `unit_ball`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::InvalidParameter(
                "n_train and n_test must be positive".into(),
            ));
        }
        if let Some((a, b)) = self.classes {
            if a == b {
                return Err(Error::InvalidParameter(format!(
                    "class pair must be distinct, got ({a}, {b})"
                )));
            }
        }
        Ok(())
    }

    /// Materializes the train and test clouds.
    pub fn load(&self) -> Result<(PointCloud, PointCloud)> {
        self.validate()?;
        match self.name {
            name if name.is_synthetic() => {
                let noise = self.noise.unwrap_or(name.default_noise());
                let all = generate_synthetic(name, self.n_train + self.n_test, noise, self.seed)?;
                let train: Vec<usize> = (0..self.n_train).collect();
                let test: Vec<usize> = (self.n_train..all.len()).collect();
                Ok((all.select(&train)?, all.select(&test)?))
            }
            DatasetName::UnitBall => {
                let d = self.dim.unwrap_or(3);
                Ok((
                    unit_ball_sample(self.n_train, d, self.seed)?,
                    unit_ball_sample(self.n_test, d, self.seed.wrapping_add(1))?,
                ))
            }
            name => {
                let dir = self.path.as_deref().ok_or_else(|| {
                    Error::InvalidParameter(format!("dataset {name} needs a source path"))
                })?;
                let (a, b) = self.classes.ok_or_else(|| {
                    Error::InvalidParameter(format!("dataset {name} needs a class pair"))
                })?;
                let cloud = if name == DatasetName::CifarPair {
                    load_cifar_binary(&files_matching(dir, |f| f.ends_with(".bin"))?)?
                } else {
                    load_idx_dir(dir)?
                };
                binary_subset(&cloud, a, b, self.n_train, self.n_test, self.seed)
            }
        }
    }
}

/// Balanced two-class synthetic cloud in the plane; labels alternate 0, 1, 0, ….
pub fn generate_synthetic(name: DatasetName, n: usize, noise: f64, seed: u64) -> Result<PointCloud> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "synthetic datasets need n >= 2, got {n}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise must be non-negative, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        noise * z
    };
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = (i % 2) as u8;
        let sign = if c == 0 { -1.0 } else { 1.0 };
        let point = match name {
            DatasetName::SynI => vec![2.5 * sign + gauss(&mut rng), gauss(&mut rng)],
            DatasetName::SynIi => {
                let t = rng.random_range(0.0..2.0 * PI);
                let r = 1.0 + f64::from(c) + gauss(&mut rng);
                vec![r * t.cos(), r * t.sin()]
            }
            DatasetName::SynIii => {
                let t = rng.random_range(0.0..PI);
                let (x, y) = if c == 0 {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                vec![x + gauss(&mut rng), y + gauss(&mut rng)]
            }
            DatasetName::SynIv => {
                let s: f64 = rng.random_range(0.0..1.0);
                let t = 0.25 * PI + 3.0 * PI * s.sqrt();
                let phase = if c == 0 { 0.0 } else { PI };
                let r = t / PI;
                vec![
                    r * (t + phase).cos() + gauss(&mut rng),
                    r * (t + phase).sin() + gauss(&mut rng),
                ]
            }
            other => return Err(Error::UnknownDataset(other.name().into())),
        };
        rows.push(point);
        labels.push(c);
    }
    PointCloud::from_rows(&rows, Some(labels))
}

fn open_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let file = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file).read_to_end(&mut bytes)?;
    } else {
        let mut file = file;
        file.read_to_end(&mut bytes)?;
    }
    Ok(bytes)
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Truncated(format!("{what}: header ends at byte {}", bytes.len())))
}

/// Parses IDX image bytes into `(n, dim, pixels /255)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let magic = be_u32(bytes, 0, "IDX images")?;
    if magic != IDX_IMAGES {
        return Err(Error::BadMagic(magic));
    }
    let n = be_u32(bytes, 4, "IDX images")? as usize;
    let rows = be_u32(bytes, 8, "IDX images")? as usize;
    let cols = be_u32(bytes, 12, "IDX images")? as usize;
    let dim = rows * cols;
    let body = &bytes[16..];
    if body.len() < n * dim {
        return Err(Error::Truncated(format!(
            "IDX images: expected {} pixel bytes, found {}",
            n * dim,
            body.len()
        )));
    }
    Ok((n, dim, body[..n * dim].iter().map(|&b| f64::from(b) / 255.0).collect()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "IDX labels")?;
    if magic != IDX_LABELS {
        return Err(Error::BadMagic(magic));
    }
    let n = be_u32(bytes, 4, "IDX labels")? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Truncated(format!(
            "IDX labels: expected {n} label bytes, found {}",
            body.len()
        )));
    }
    Ok(body[..n].to_vec())
}

/// Loads an IDX image/label pair; `.gz` files are decompressed.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<PointCloud> {
    let (n, dim, pixels) = parse_idx_images(&open_maybe_gz(images_path)?)?;
    let labels = parse_idx_labels(&open_maybe_gz(labels_path)?)?;
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    PointCloud::new(dim, pixels, Some(labels))
}

fn files_matching(dir: &Path, keep: impl Fn(&str) -> bool) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|f| f.to_str()).is_some_and(&keep))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no matching data files in {}",
            dir.display()
        )));
    }
    Ok(files)
}

/// Concatenates every `*idx3*` / `*idx1*` pair in `dir`, in file-name order.
pub fn load_idx_dir(dir: &Path) -> Result<PointCloud> {
    let images = files_matching(dir, |f| f.contains("idx3"))?;
    let labels = files_matching(dir, |f| f.contains("idx1"))?;
    if images.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: images.len(),
            got: labels.len(),
        });
    }
    let mut dim = None;
    let mut coords = Vec::new();
    let mut all_labels = Vec::new();
    for (i, l) in images.iter().zip(&labels) {
        let part = load_idx(i, l)?;
        if *dim.get_or_insert(part.dim()) != part.dim() {
            return Err(Error::DimensionMismatch {
                expected: dim.unwrap(),
                got: part.dim(),
            });
        }
        coords.extend_from_slice(part.coords());
        all_labels.extend_from_slice(part.labels().unwrap());
    }
    PointCloud::new(dim.unwrap(), coords, Some(all_labels))
}

/// Parses CIFAR-10 binary records (label byte + 3072 pixel bytes).
pub fn parse_cifar(bytes: &[u8]) -> Result<(Vec<f64>, Vec<u8>)> {
    let record = CIFAR_PIXELS + 1;
    if bytes.len() % record != 0 {
        return Err(Error::Truncated(format!(
            "CIFAR batch of {} bytes is not a multiple of {record}",
            bytes.len()
        )));
    }
    let mut coords = Vec::with_capacity(bytes.len() / record * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(bytes.len() / record);
    for rec in bytes.chunks_exact(record) {
        labels.push(rec[0]);
        coords.extend(rec[1..].iter().map(|&b| f64::from(b) / 255.0));
    }
    Ok((coords, labels))
}

pub fn load_cifar_binary(batch_paths: &[PathBuf]) -> Result<PointCloud> {
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        let (c, l) = parse_cifar(&open_maybe_gz(path)?)?;
        coords.extend(c);
        labels.extend(l);
    }
    PointCloud::new(CIFAR_PIXELS, coords, Some(labels))
}

/// Balanced, disjoint train/test subsets of classes `a → 0` and `b → 1`.
/// Class `a` takes the extra sample when a requested size is odd.
pub fn binary_subset(
    cloud: &PointCloud,
    class_a: u8,
    class_b: u8,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(PointCloud, PointCloud)> {
    if class_a == class_b {
        return Err(Error::InvalidParameter(format!(
            "class pair must be distinct, got ({class_a}, {class_b})"
        )));
    }
    let labels = cloud.labels().ok_or(Error::MissingLabels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n_test);
    for (slot, class) in [class_a, class_b].into_iter().enumerate() {
        let want_train = n_train / 2 + usize::from(slot == 0) * (n_train % 2);
        let want_test = n_test / 2 + usize::from(slot == 0) * (n_test % 2);
        let mut pool: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if pool.len() < want_train + want_test {
            return Err(Error::InsufficientSamples {
                class,
                needed: want_train + want_test,
                available: pool.len(),
            });
        }
        pool.shuffle(&mut rng);
        test.extend(pool[..want_test].iter().map(|&i| (i, slot as u8)));
        train.extend(pool[want_test..want_test + want_train].iter().map(|&i| (i, slot as u8)));
    }
    let build = |mut picked: Vec<(usize, u8)>| -> Result<PointCloud> {
        picked.sort_unstable();
        let idx: Vec<usize> = picked.iter().map(|p| p.0).collect();
        cloud
            .select(&idx)?
            .with_labels(Some(picked.iter().map(|p| p.1).collect()))
    };
    Ok((build(train)?, build(test)?))
}

/// Uniform samples in the closed unit `d`-ball.
pub fn unit_ball_sample(n: usize, d: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter(format!(
            "unit-ball sampling needs n, d >= 1, got n = {n}, d = {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(n * d);
    for _ in 0..n {
        let dir: Vec<f64> = loop {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            if v.iter().any(|&x| x != 0.0) {
                break v;
            }
        };
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let u: f64 = rng.random_range(0.0..=1.0);
        let radius = u.powf(1.0 / d as f64);
        coords.extend(dir.iter().map(|x| x / norm * radius));
    }
    PointCloud::new(d, coords, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(p: &[f64]) -> f64 {
        p.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn circles_without_noise_sit_on_their_radii() {
        let c = generate_synthetic(DatasetName::SynIi, 200, 0.0, 1).unwrap();
        for (p, &l) in c.points().zip(c.labels().unwrap()) {
            assert!((norm(p) - 1.0 - f64::from(l)).abs() < 1e-12);
        }
    }

    #[test]
    fn blobs_without_noise_collapse_on_their_means() {
        let c = generate_synthetic(DatasetName::SynI, 10, 0.0, 1).unwrap();
        for (p, &l) in c.points().zip(c.labels().unwrap()) {
            let centre = if l == 0 { -2.5 } else { 2.5 };
            assert_eq!(p, &[centre, 0.0]);
        }
    }

    #[test]
    fn generators_are_balanced_and_deterministic() {
        for name in DatasetName::SYNTHETIC {
            let a = generate_synthetic(name, 101, name.default_noise(), 7).unwrap();
            assert_eq!(a, generate_synthetic(name, 101, name.default_noise(), 7).unwrap());
            let ones = a.labels().unwrap().iter().filter(|&&l| l == 1).count();
            assert_eq!(ones, 50);
        }
        assert!(generate_synthetic(DatasetName::MnistPair, 10, 0.0, 0).is_err());
        assert!(generate_synthetic(DatasetName::SynI, 1, 0.0, 0).is_err());
    }

    #[test]
    fn names_round_trip() {
        for name in DatasetName::SYNTHETIC {
            assert_eq!(name.name().parse::<DatasetName>().unwrap(), name);
        }
        assert!(matches!("syn_v".parse::<DatasetName>(), Err(Error::UnknownDataset(_))));
    }

    #[test]
    fn idx_magic_is_checked() {
        let mut bytes = 2050u32.to_be_bytes().to_vec();
        bytes.extend([0; 12]);
        let err = parse_idx_images(&bytes).unwrap_err();
        assert_eq!(err.to_string(), "unexpected IDX magic 2050");
        assert!(matches!(parse_idx_labels(&[0, 0, 8]), Err(Error::Truncated(_))));
    }

    #[test]
    fn cifar_records() {
        let mut bytes = vec![0u8; 2 * (CIFAR_PIXELS + 1)];
        bytes[CIFAR_PIXELS + 1] = 3;
        bytes[1] = 255;
        let (coords, labels) = parse_cifar(&bytes).unwrap();
        assert_eq!(labels, vec![0, 3]);
        assert_eq!(coords.len(), 2 * CIFAR_PIXELS);
        assert_eq!(coords[0], 1.0);
        assert!(parse_cifar(&bytes[..100]).is_err());
    }

    #[test]
    fn subset_is_balanced_disjoint_and_relabelled() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64]).collect();
        let labels: Vec<u8> = (0..60).map(|i| [1, 7, 3][i % 3]).collect();
        let cloud = PointCloud::from_rows(&rows, Some(labels)).unwrap();
        let (train, test) = binary_subset(&cloud, 1, 7, 20, 10, 4).unwrap();
        assert_eq!(train.len(), 20);
        assert_eq!(test.len(), 10);
        let count = |c: &PointCloud, l: u8| c.labels().unwrap().iter().filter(|&&x| x == l).count();
        assert_eq!((count(&train, 0), count(&train, 1)), (10, 10));
        assert_eq!((count(&test, 0), count(&test, 1)), (5, 5));
        let ids = |c: &PointCloud| c.points().map(|p| p[0] as usize).collect::<Vec<_>>();
        let (a, b) = (ids(&train), ids(&test));
        assert!(a.iter().all(|x| !b.contains(x)));
        for (id, &l) in a.iter().zip(train.labels().unwrap()) {
            assert_eq!(l, u8::from(id % 3 == 1));
        }
        assert!(matches!(
            binary_subset(&cloud, 1, 7, 32, 10, 4),
            Err(Error::InsufficientSamples { class: 1, needed: 21, available: 20 })
        ));
    }

    #[test]
    fn ball_samples_stay_inside() {
        let c = unit_ball_sample(500, 3, 2).unwrap();
        assert!(c.points().all(|p| norm(p) <= 1.0));
        assert_eq!(c.dim(), 3);
    }
}
