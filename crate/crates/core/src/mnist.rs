//! MNIST ingestion and digit-pair task construction.
//!
//! Images are scaled to `[0, 1]` and centered with the per-pixel mean of all
//! meta-training samples; the same shift is applied to the few-shot task.

use std::collections::HashSet;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::container::MatrixBundle;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SeededRng};
use crate::tasks::{task_file_name, DatasetHeader, DatasetKind, TaskData};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
const UNSIGNED_BYTE: u8 = 0x08;

/// Parsed IDX container with an unsigned-byte payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxFile {
    pub magic: u32,
    pub dims: Vec<u32>,
    pub payload: Vec<u8>,
}

impl IdxFile {
    pub fn item_count(&self) -> usize {
        self.dims.first().copied().unwrap_or(0) as usize
    }

    /// Bytes per item (product of the trailing dimensions).
    pub fn item_len(&self) -> usize {
        self.dims.iter().skip(1).map(|&d| d as usize).product()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.payload.len());
        out.extend_from_slice(&self.magic.to_be_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxFile> {
    if bytes.len() < 4 {
        return Err(Error::TruncatedPayload { expected: 4, found: bytes.len() });
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    let ndims = bytes[3] as usize;
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != UNSIGNED_BYTE || ndims == 0 {
        return Err(Error::BadMagic(magic));
    }
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(Error::TruncatedPayload { expected: header_len, found: bytes.len() });
    }
    let dims: Vec<u32> = bytes[4..header_len].chunks_exact(4).map(|c| u32::from_be_bytes(c.try_into().unwrap())).collect();
    let expected = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize)).unwrap_or(usize::MAX);
    let payload = &bytes[header_len..];
    if payload.len() != expected {
        return Err(Error::TruncatedPayload { expected, found: payload.len() });
    }
    Ok(IdxFile { magic, dims, payload: payload.to_vec() })
}

/// Reads an IDX file, inflating it first when it is gzip-compressed.
pub fn read_idx(path: &Path) -> Result<IdxFile> {
    let raw = fs::read(path)?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        out
    } else {
        raw
    };
    parse_idx(&bytes).map_err(|e| match e {
        Error::BadMagic(_) | Error::TruncatedPayload { .. } => Error::Format { path: path.to_owned(), reason: e.to_string() },
        other => other,
    })
}

/// Images with their digit labels.
#[derive(Debug, Clone)]
pub struct ImageSet {
    pub pixels_per_image: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl ImageSet {
    pub fn from_idx(images: &IdxFile, labels: &IdxFile) -> Result<Self> {
        if images.magic != IMAGES_MAGIC {
            return Err(Error::BadMagic(images.magic));
        }
        if labels.magic != LABELS_MAGIC {
            return Err(Error::BadMagic(labels.magic));
        }
        if images.item_count() != labels.item_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} images but {} labels",
                images.item_count(),
                labels.item_count()
            )));
        }
        Ok(Self { pixels_per_image: images.item_len(), pixels: images.payload.clone(), labels: labels.payload.clone() })
    }

    /// Loads `<split>-images-idx3-ubyte` and `<split>-labels-idx1-ubyte` from
    /// `dir` (also accepting the `.idx3-ubyte` spelling and `.gz` suffixes).
    pub fn load(dir: &Path, split: &str) -> Result<Self> {
        let images = read_idx(&find_file(dir, split, "images", "idx3")?)?;
        let labels = read_idx(&find_file(dir, split, "labels", "idx1")?)?;
        Self::from_idx(&images, &labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * self.pixels_per_image..(i + 1) * self.pixels_per_image]
    }

    /// Indices of every image labelled `digit`, ascending.
    pub fn indices_of(&self, digit: u8) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|&(_, &l)| l == digit).map(|(i, _)| i).collect()
    }

    /// Pixel values scaled to `[0, 1]`.
    pub fn scaled(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.image(i).iter().map(|&p| p as f64 / 255.0)
    }
}

fn find_file(dir: &Path, split: &str, what: &str, idx: &str) -> Result<PathBuf> {
    let stems = [format!("{split}-{what}-{idx}-ubyte"), format!("{split}-{what}.{idx}-ubyte")];
    for stem in &stems {
        for suffix in ["", ".gz"] {
            let path = dir.join(format!("{stem}{suffix}"));
            if path.exists() {
                return Ok(path);
            }
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("no {} in {}", stems[0], dir.display()),
    )))
}

/// Meta-training pairs used when none are configured. Every digit appears at
/// least twice and the pair (1, 9) is left out for the few-shot task.
pub const DEFAULT_META_PAIRS: [(u8, u8); 15] = [
    (0, 1),
    (2, 3),
    (0, 8),
    (8, 4),
    (4, 5),
    (6, 7),
    (1, 2),
    (3, 5),
    (7, 9),
    (0, 6),
    (2, 8),
    (5, 9),
    (3, 7),
    (4, 6),
    (1, 8),
];

pub const DEFAULT_FEWSHOT_PAIR: (u8, u8) = (1, 9);

/// One binary task: label 1 for `positive`, 0 for `negative`.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitPairTask {
    pub positive: u8,
    pub negative: u8,
    /// Source image indices in sample order.
    pub indices: Vec<usize>,
    /// Centered pixels and labels.
    pub data: TaskData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitPairDataset {
    pub tasks: Vec<DigitPairTask>,
    /// Per-pixel mean of the scaled meta-training images.
    pub centering: Vec<f64>,
    pub seed: u64,
}

impl DigitPairDataset {
    pub fn task_data(&self) -> impl Iterator<Item = &TaskData> {
        self.tasks.iter().map(|t| &t.data)
    }

    pub fn d(&self) -> usize {
        self.centering.len()
    }

    /// Same directory layout as synthetic datasets, plus `centering.bin`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        DatasetHeader {
            format_version: 1,
            d: self.d(),
            r: 0,
            k: self.tasks.len(),
            kind: DatasetKind::MnistDigitPair,
            seed: self.seed,
        }
        .write(dir)?;
        MatrixBundle::new().with("mean", DenseMatrix::column_vector(&self.centering)).write(&dir.join("centering.bin"))?;
        for (id, task) in self.tasks.iter().enumerate() {
            MatrixBundle::new()
                .with("pair", DenseMatrix::from_rows(&[[task.positive as f64, task.negative as f64]]))
                .with("indices", DenseMatrix::column_vector(&task.indices.iter().map(|&i| i as f64).collect::<Vec<_>>()))
                .with("x", task.data.inputs.clone())
                .with("y", DenseMatrix::column_vector(&task.data.labels))
                .write(&dir.join(task_file_name(id)))?;
        }
        Ok(())
    }
}

fn validate_pair((a, b): (u8, u8)) -> Result<()> {
    if a > 9 || b > 9 || a == b {
        return Err(Error::DuplicatePair(a, b));
    }
    Ok(())
}

fn unordered(pair: (u8, u8)) -> (u8, u8) {
    (pair.0.min(pair.1), pair.0.max(pair.1))
}

/// `count` distinct indices drawn without replacement from `pool`.
fn draw(pool: &[usize], count: usize, digit: u8, rng: &mut SeededRng) -> Result<Vec<usize>> {
    if pool.len() < count {
        return Err(Error::InsufficientSamples { digit, needed: count, available: pool.len() });
    }
    let mut pool = pool.to_vec();
    let (chosen, _) = pool.partial_shuffle(rng, count);
    Ok(chosen.to_vec())
}

/// Builds one balanced task per pair with `per_class` images of each digit.
///
/// Pair `j` draws its images on stream `j` of `seed`; samples within a task
/// are shuffled so both halves of the split estimator see both classes.
pub fn build_digit_pair_tasks(set: &ImageSet, pairs: &[(u8, u8)], per_class: usize, seed: u64) -> Result<DigitPairDataset> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut seen = HashSet::new();
    for &pair in pairs {
        validate_pair(pair)?;
        if !seen.insert(unordered(pair)) {
            return Err(Error::DuplicatePair(pair.0, pair.1));
        }
    }
    let d = set.pixels_per_image;
    let mut selections = Vec::with_capacity(pairs.len());
    for (j, &(pos, neg)) in pairs.iter().enumerate() {
        let mut rng = SeededRng::new(seed, j as u64);
        let mut samples: Vec<(usize, f64)> = draw(&set.indices_of(pos), per_class, pos, &mut rng)?
            .into_iter()
            .map(|i| (i, 1.0))
            .chain(draw(&set.indices_of(neg), per_class, neg, &mut rng)?.into_iter().map(|i| (i, 0.0)))
            .collect();
        samples.shuffle(&mut rng);
        selections.push(samples);
    }

    let total: usize = selections.iter().map(Vec::len).sum();
    let mut centering = vec![0.0; d];
    for &(i, _) in selections.iter().flatten() {
        for (c, v) in centering.iter_mut().zip(set.scaled(i)) {
            *c += v;
        }
    }
    centering.iter_mut().for_each(|c| *c /= total as f64);

    let tasks = selections
        .into_iter()
        .zip(pairs)
        .enumerate()
        .map(|(id, (samples, &(positive, negative)))| {
            let indices: Vec<usize> = samples.iter().map(|&(i, _)| i).collect();
            let labels = samples.iter().map(|&(_, y)| y).collect();
            let inputs = centered_rows(set, &indices, &centering);
            Ok(DigitPairTask { positive, negative, indices, data: TaskData::new(id, inputs, labels)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DigitPairDataset { tasks, centering, seed })
}

fn centered_rows(set: &ImageSet, indices: &[usize], centering: &[f64]) -> DenseMatrix {
    let d = set.pixels_per_image;
    let mut out = DenseMatrix::zeros(indices.len(), d);
    for (row, &i) in indices.iter().enumerate() {
        for ((o, v), c) in out.row_mut(row).iter_mut().zip(set.scaled(i)).zip(centering) {
            *o = v - c;
        }
    }
    out
}

/// Few-shot training set plus disjoint held-out evaluation set.
#[derive(Debug, Clone)]
pub struct FewShotSplit {
    pub train_inputs: DenseMatrix,
    pub train_labels: Vec<f64>,
    pub train_indices: Vec<usize>,
    pub eval_inputs: DenseMatrix,
    pub eval_labels: Vec<f64>,
    pub eval_indices: Vec<usize>,
    /// Set when the pair also appears among the meta-training pairs.
    pub warning: Option<String>,
}

/// Draws `n` training images (the extra one going to the positive class when
/// `n` is odd) and `eval_n` held-out images of the pair, or all remaining ones
/// when `eval_n` is `None`. Uses `centering` from meta-training.
pub fn build_fewshot_task(
    set: &ImageSet,
    pair: (u8, u8),
    n: usize,
    eval_n: Option<usize>,
    centering: &[f64],
    meta_pairs: &[(u8, u8)],
    rng: &mut SeededRng,
) -> Result<FewShotSplit> {
    validate_pair(pair)?;
    if centering.len() != set.pixels_per_image {
        return Err(Error::DimensionMismatch(format!(
            "centering has {} entries for {}-pixel images",
            centering.len(),
            set.pixels_per_image
        )));
    }
    let (pos, neg) = pair;
    let mut pos_pool = set.indices_of(pos);
    let mut neg_pool = set.indices_of(neg);
    pos_pool.shuffle(rng);
    neg_pool.shuffle(rng);

    let pos_train = n.div_ceil(2);
    let neg_train = n / 2;
    let (pos_eval, neg_eval) = match eval_n {
        Some(e) => (e.div_ceil(2), e / 2),
        None => (pos_pool.len().saturating_sub(pos_train), neg_pool.len().saturating_sub(neg_train)),
    };
    for (digit, pool, needed) in [(pos, &pos_pool, pos_train + pos_eval), (neg, &neg_pool, neg_train + neg_eval)] {
        if pool.len() < needed {
            return Err(Error::InsufficientSamples { digit, needed, available: pool.len() });
        }
    }

    let mut train: Vec<(usize, f64)> = pos_pool[..pos_train]
        .iter()
        .map(|&i| (i, 1.0))
        .chain(neg_pool[..neg_train].iter().map(|&i| (i, 0.0)))
        .collect();
    let mut eval: Vec<(usize, f64)> = pos_pool[pos_train..pos_train + pos_eval]
        .iter()
        .map(|&i| (i, 1.0))
        .chain(neg_pool[neg_train..neg_train + neg_eval].iter().map(|&i| (i, 0.0)))
        .collect();
    train.shuffle(rng);
    eval.shuffle(rng);

    let warning = meta_pairs
        .iter()
        .any(|&p| unordered(p) == unordered(pair))
        .then(|| format!("few-shot pair ({pos}, {neg}) is also a meta-training pair"));
    let train_indices: Vec<usize> = train.iter().map(|&(i, _)| i).collect();
    let eval_indices: Vec<usize> = eval.iter().map(|&(i, _)| i).collect();
    Ok(FewShotSplit {
        train_inputs: centered_rows(set, &train_indices, centering),
        train_labels: train.iter().map(|&(_, y)| y).collect(),
        train_indices,
        eval_inputs: centered_rows(set, &eval_indices, centering),
        eval_labels: eval.iter().map(|&(_, y)| y).collect(),
        eval_indices,
        warning,
    })
}
