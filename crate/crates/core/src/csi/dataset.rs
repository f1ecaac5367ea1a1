//! Datasets of channel pairs and the `CSID` binary file format.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic    4 bytes  "CSID"
//! version  u32      1
//! n_f      u32
//! n_b      u32
//! count    u64      number of samples
//! split    u64      index of the first test sample
//! samples  count x [downlink, uplink], each n_f*n_b (re: f64, im: f64) row-major
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use super::generator::{generate_channel_pair, pearson, ChannelModelConfig, CsiSamplePair};
use super::transform::{to_angle_delay, SpatialFrequencyCsi};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CSID";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct CsiDataset {
    samples: Vec<CsiSamplePair>,
    split: usize,
}

impl CsiDataset {
    pub fn new(samples: Vec<CsiSamplePair>, split: usize) -> Result<Self> {
        if split > samples.len() {
            return Err(Error::invalid(format!(
                "split {split} beyond {} samples",
                samples.len()
            )));
        }
        if let Some(first) = samples.first() {
            let dim = first.downlink.entries().dim();
            if let Some(i) = samples
                .iter()
                .position(|s| s.downlink.entries().dim() != dim || s.uplink.entries().dim() != dim)
            {
                return Err(Error::invalid(format!(
                    "sample {i} does not match the {dim:?} shape of sample 0"
                )));
            }
        }
        Ok(Self { samples, split })
    }

    pub fn samples(&self) -> &[CsiSamplePair] {
        &self.samples
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn train(&self) -> &[CsiSamplePair] {
        &self.samples[..self.split]
    }

    pub fn test(&self) -> &[CsiSamplePair] {
        &self.samples[self.split..]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(n_f, n_b)` of the samples, or `None` for an empty dataset.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.samples.first().map(|s| s.downlink.entries().dim())
    }

    /// Restricts the dataset to its first `n_train` training and first
    /// `n_test` test samples.
    pub fn subset(&self, n_train: usize, n_test: usize) -> Result<Self> {
        if n_train > self.train().len() || n_test > self.test().len() {
            return Err(Error::invalid("subset larger than the dataset"));
        }
        let mut samples = self.train()[..n_train].to_vec();
        samples.extend_from_slice(&self.test()[..n_test]);
        Self::new(samples, n_train)
    }
}

/// Draws `n_samples` pairs; sample `i` uses its own rng stream so the result
/// does not depend on generation order.
pub fn generate_dataset(cfg: &ChannelModelConfig, n_samples: usize, n_train: usize) -> Result<CsiDataset> {
    cfg.validate()?;
    let samples = (0..n_samples)
        .map(|i| generate_channel_pair(cfg, &mut cfg.sample_rng(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    CsiDataset::new(samples, n_train)
}

/// Per-sample Pearson correlation between downlink and uplink angle-delay
/// magnitudes, summarized over a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReciprocitySummary {
    pub mean: f64,
    pub min: f64,
    pub samples: usize,
}

/// Uses the full delay range, so no truncation choice enters the statistic.
pub fn magnitude_reciprocity(samples: &[CsiSamplePair]) -> Result<ReciprocitySummary> {
    if samples.is_empty() {
        return Err(Error::invalid("reciprocity needs at least one sample"));
    }
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    for s in samples {
        let n_f = s.downlink.n_f();
        let dl = to_angle_delay(&s.downlink, n_f, 0)?.entries().mapv(|z| z.norm());
        let ul = to_angle_delay(&s.uplink, n_f, 0)?.entries().mapv(|z| z.norm());
        let r = pearson(&dl, &ul);
        sum += r;
        min = min.min(r);
    }
    Ok(ReciprocitySummary {
        mean: sum / samples.len() as f64,
        min,
        samples: samples.len(),
    })
}

fn push_matrix(buf: &mut Vec<u8>, m: &Array2<Complex64>) {
    for z in m.iter() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
}

pub fn encode_dataset(ds: &CsiDataset) -> Vec<u8> {
    let (n_f, n_b) = ds.dims().unwrap_or((0, 0));
    let mut buf = Vec::with_capacity(HEADER_LEN + ds.len() * n_f * n_b * 32);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(n_f as u32).to_le_bytes());
    buf.extend_from_slice(&(n_b as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(ds.split as u64).to_le_bytes());
    for s in &ds.samples {
        push_matrix(&mut buf, s.downlink.entries());
        push_matrix(&mut buf, s.uplink.entries());
    }
    buf
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

fn read_f64(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

pub fn decode_dataset(bytes: &[u8]) -> Result<CsiDataset> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            bytes.len() as u64,
            format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len()),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::format(0, format!("bad magic {:?}", &bytes[0..4])));
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let n_f = read_u32(bytes, 8) as usize;
    let n_b = read_u32(bytes, 12) as usize;
    let count = read_u64(bytes, 16);
    let split = read_u64(bytes, 24);
    if split > count {
        return Err(Error::format(24, format!("split {split} exceeds count {count}")));
    }
    let matrix_bytes = (n_f as u64) * (n_b as u64) * 16;
    let expected = (HEADER_LEN as u64).saturating_add(count.saturating_mul(2 * matrix_bytes));
    if bytes.len() as u64 != expected {
        return Err(Error::format(
            bytes.len().min(expected as usize) as u64,
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    if count > 0 && (n_f == 0 || n_b == 0) {
        return Err(Error::format(8, "zero dimension with non-empty sample list"));
    }
    let mut at = HEADER_LEN;
    let read_matrix = |at: &mut usize| -> Result<SpatialFrequencyCsi> {
        let start = *at;
        let m = Array2::from_shape_fn((n_f, n_b), |(f, b)| {
            let off = start + (f * n_b + b) * 16;
            Complex64::new(read_f64(bytes, off), read_f64(bytes, off + 8))
        });
        *at += matrix_bytes as usize;
        SpatialFrequencyCsi::new(m).map_err(|e| Error::format(start as u64, e.to_string()))
    };
    let mut samples = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let dl = read_matrix(&mut at)?;
        let ul = read_matrix(&mut at)?;
        samples.push(CsiSamplePair::new(dl, ul)?);
    }
    CsiDataset::new(samples, split as usize)
}

pub fn dataset_save(ds: &CsiDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_dataset(ds)).map_err(|e| Error::io(path, e))
}

pub fn dataset_load(path: impl AsRef<Path>) -> Result<CsiDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}
