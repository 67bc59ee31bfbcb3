//! MNIST IDX ingestion and label-exclusion partitions.
//!
//! Pixels stay as bytes in one shared buffer; partitions are index lists
//! into it, and batches are normalized by /255 when they are built.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const PIXELS: usize = 28 * 28;
pub const CLASSES: usize = 10;

/// Environment variable naming the directory with the four IDX files.
pub const DATA_DIR_ENV: &str = "FLHHE_MNIST_DIR";

/// `$FLHHE_MNIST_DIR`, else `data/mnist` at the workspace root.
pub fn default_data_dir() -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(d) => PathBuf::from(d),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"),
    }
}

#[derive(Debug)]
pub struct Dataset {
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn from_raw(pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if pixels.len() != labels.len() * PIXELS {
            return Err(Error::Length { expected: labels.len() * PIXELS, actual: pixels.len() });
        }
        if let Some(l) = labels.iter().find(|&&l| l as usize >= CLASSES) {
            return Err(Error::Format(format!("label {l} out of range")));
        }
        Ok(Dataset { pixels, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image_bytes(&self, i: usize) -> &[u8] {
        &self.pixels[i * PIXELS..(i + 1) * PIXELS]
    }

    /// Rows of `indices` as a `len × 784` matrix scaled to `[0, 1]`.
    pub fn batch(&self, indices: &[usize]) -> Array2<f64> {
        let mut x = Array2::zeros((indices.len(), PIXELS));
        for (mut row, &i) in x.rows_mut().into_iter().zip(indices) {
            for (dst, &b) in row.iter_mut().zip(self.image_bytes(i)) {
                *dst = b as f64 / 255.0;
            }
        }
        x
    }
}

#[derive(Clone, Debug)]
pub struct Mnist {
    pub train: Arc<Dataset>,
    pub test: Arc<Dataset>,
}

fn read_be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Format("truncated IDX header".into()))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, Vec<u8>)> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!("bad image magic {magic:#010x}")));
    }
    let n = read_be_u32(bytes, 4)? as usize;
    let (rows, cols) = (read_be_u32(bytes, 8)? as usize, read_be_u32(bytes, 12)? as usize);
    if rows * cols != PIXELS {
        return Err(Error::Format(format!("unexpected image shape {rows}x{cols}")));
    }
    let body = &bytes[16..];
    if body.len() != n * PIXELS {
        return Err(Error::Format(format!("image file holds {} bytes, header promises {}", body.len(), n * PIXELS)));
    }
    Ok((n, body.to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!("bad label magic {magic:#010x}")));
    }
    let n = read_be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Format(format!("label file holds {} bytes, header promises {n}", body.len())));
    }
    Ok(body.to_vec())
}

fn load_pair(dir: &Path, prefix: &str) -> Result<Dataset> {
    let images = fs::read(dir.join(format!("{prefix}-images-idx3-ubyte")))?;
    let labels = fs::read(dir.join(format!("{prefix}-labels-idx1-ubyte")))?;
    let (n, pixels) = parse_idx_images(&images)?;
    let labels = parse_idx_labels(&labels)?;
    if labels.len() != n {
        return Err(Error::Format(format!("{n} images but {} labels", labels.len())));
    }
    Dataset::from_raw(pixels, labels)
}

pub fn load_mnist(dir: &Path) -> Result<Mnist> {
    Ok(Mnist { train: Arc::new(load_pair(dir, "train")?), test: Arc::new(load_pair(dir, "t10k")?) })
}

/// Samples of a dataset whose labels are not excluded.
#[derive(Clone, Debug)]
pub struct DataPartition {
    pub data: Arc<Dataset>,
    pub indices: Vec<usize>,
    pub excluded: BTreeSet<u8>,
}

impl DataPartition {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Every `stride`-th sample starting at `offset`, optionally capped.
    pub fn shard(&self, offset: usize, stride: usize, cap: Option<usize>) -> DataPartition {
        let mut indices: Vec<usize> = self.indices.iter().copied().skip(offset).step_by(stride.max(1)).collect();
        if let Some(c) = cap {
            indices.truncate(c);
        }
        DataPartition { data: self.data.clone(), indices, excluded: self.excluded.clone() }
    }
}

pub fn partition_exclude(data: &Arc<Dataset>, excluded: &[u8]) -> DataPartition {
    let excluded: BTreeSet<u8> = excluded.iter().copied().collect();
    let indices = (0..data.len()).filter(|&i| !excluded.contains(&data.label(i))).collect();
    DataPartition { data: data.clone(), indices, excluded }
}

/// Samples whose label is in `keep` (all samples when `keep` is empty).
pub fn filter_labels(data: &Arc<Dataset>, keep: &[u8]) -> DataPartition {
    let indices = (0..data.len()).filter(|&i| keep.is_empty() || keep.contains(&data.label(i))).collect();
    let excluded = (0..CLASSES as u8).filter(|l| !keep.is_empty() && !keep.contains(l)).collect();
    DataPartition { data: data.clone(), indices, excluded }
}
