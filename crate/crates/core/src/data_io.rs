//! Synthetic embedding sets, embedding files and class-balanced batching.
//!
//! # Binary embedding format (`.acem`, version 1)
//!
//! All integers and floats little-endian:
//!
//! | bytes     | content                              |
//! |-----------|--------------------------------------|
//! | 4         | magic `ACEM`                         |
//! | 1         | version (`1`)                        |
//! | 4         | `n`, row count (u32)                 |
//! | 4         | `d`, dimension (u32)                 |
//! | 4·n       | class id per row (u32)               |
//! | 8·n·d     | features, row-major (f64)            |
//!
//! Files ending in `.csv` use a text layout instead, with header
//! `label,f0,...,f{d-1}` and one row per embedding.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{normalize_row, normalize_rows, EmbeddingBatch, ProxySet};
use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};
use crate::rng::SeededRng;
use crate::ClassId;

pub const MAGIC: &[u8; 4] = b"ACEM";
pub const FORMAT_VERSION: u8 = 1;
const HEADER_LEN: usize = 13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Orthonormalize the class means (needs `num_classes <= dim`).
    #[serde(default = "default_true")]
    pub orthonormal_means: bool,
}

fn default_true() -> bool {
    true
}

impl MixtureConfig {
    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.dim < 2 || self.samples_per_class < 1 {
            return Err(Error::InvalidConfig(
                "mixture needs at least 2 classes, dimension 2 and one sample per class".into(),
            ));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if self.orthonormal_means && self.num_classes > self.dim {
            return Err(Error::TooManyClasses { classes: self.num_classes, dim: self.dim });
        }
        Ok(())
    }
}

/// Gaussian clusters on the unit sphere.
///
/// Class means are standard-normal draws (orthonormalized by modified
/// Gram-Schmidt when requested, else just normalized). Each sample is
/// `mean + σ·z`, projected back to the sphere. Rows are grouped by class,
/// class 0 first. The random stream is consumed means first, then sample
/// noise in row order, so a seed fixes the output bit for bit.
pub fn generate_mixture(config: &MixtureConfig) -> Result<EmbeddingBatch<f64>> {
    config.validate()?;
    let (c, d) = (config.num_classes, config.dim);
    let mut rng = SeededRng::new(config.seed);
    let mut means = Matrix::new(c, d, (0..c * d).map(|_| rng.normal()).collect())?;
    if config.orthonormal_means {
        for i in 0..c {
            for j in 0..i {
                let prev = means.row(j).to_vec();
                let proj = dot(means.row(i), &prev);
                for (v, &b) in means.row_mut(i).iter_mut().zip(&prev) {
                    *v -= proj * b;
                }
            }
            normalize_row(means.row_mut(i)).ok_or(Error::DegenerateInput("dependent class means"))?;
        }
    } else {
        normalize_rows(&mut means)?;
    }

    let n = c * config.samples_per_class;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for class in 0..c {
        for _ in 0..config.samples_per_class {
            let mut row: Vec<f64> = means.row(class).iter().map(|&m| m + config.noise_sigma * rng.normal()).collect();
            normalize_row(&mut row).ok_or(Error::DegenerateInput("sample collapsed to the origin"))?;
            data.extend(row);
            labels.push(class as ClassId);
        }
    }
    EmbeddingBatch::new(Matrix::new(n, d, data)?, labels)
}

/// Encodes a batch in the binary format.
pub fn encode_embeddings(batch: &EmbeddingBatch<f64>) -> Result<Vec<u8>> {
    let (n, d) = batch.features().shape();
    let n32 = u32::try_from(n).map_err(|_| Error::InvalidConfig("too many rows for the file format".into()))?;
    let d32 = u32::try_from(d).map_err(|_| Error::InvalidConfig("dimension too large for the file format".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n + 8 * n * d);
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&n32.to_le_bytes());
    out.extend_from_slice(&d32.to_le_bytes());
    for &l in batch.labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for &v in batch.features().as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Project rows that are off the unit sphere back onto it instead of
    /// rejecting the file.
    pub renormalize: bool,
}

fn finish_load(features: Matrix<f64>, labels: Vec<ClassId>, opts: LoadOptions) -> Result<EmbeddingBatch<f64>> {
    if opts.renormalize {
        EmbeddingBatch::normalized(features, labels)
    } else {
        EmbeddingBatch::new(features, labels)
    }
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// Decodes the binary format.
pub fn decode_embeddings(bytes: &[u8], opts: LoadOptions) -> Result<EmbeddingBatch<f64>> {
    if bytes.len() < MAGIC.len() {
        return Err(if MAGIC.starts_with(bytes) { Error::TruncatedFile } else { Error::BadMagic });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedFile);
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    let n = u32_at(bytes, 5) as usize;
    let d = u32_at(bytes, 9) as usize;
    let expected = (n as u128) * 4 + (n as u128) * (d as u128) * 8 + HEADER_LEN as u128;
    if (bytes.len() as u128) < expected {
        return Err(Error::TruncatedFile);
    }
    if (bytes.len() as u128) > expected {
        return Err(Error::TrailingBytes(bytes.len() - expected as usize));
    }
    let labels: Vec<ClassId> = (0..n).map(|i| u32_at(bytes, HEADER_LEN + 4 * i)).collect();
    let base = HEADER_LEN + 4 * n;
    let mut data = Vec::with_capacity(n * d);
    for k in 0..n * d {
        let v = f64::from_le_bytes(bytes[base + 8 * k..base + 8 * k + 8].try_into().expect("8-byte slice"));
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { row: k / d });
        }
        data.push(v);
    }
    finish_load(Matrix::new(n, d, data)?, labels, opts)
}

fn encode_csv(batch: &EmbeddingBatch<f64>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    let mut header = vec!["label".to_string()];
    header.extend((0..batch.dim()).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, &l) in batch.labels().iter().enumerate() {
        let mut rec = vec![l.to_string()];
        rec.extend(batch.features().row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.to_string()))
}

fn decode_csv(bytes: &[u8], opts: LoadOptions) -> Result<EmbeddingBatch<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = r.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    if header.get(0) != Some("label") {
        return Err(Error::Csv("first column must be `label`".into()));
    }
    for (j, name) in header.iter().skip(1).enumerate() {
        if name != format!("f{j}") {
            return Err(Error::Csv(format!("expected column f{j}, found `{name}`")));
        }
    }
    let d = header.len() - 1;
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        if rec.len() != d + 1 {
            return Err(Error::Csv(format!("row {row} has {} fields, expected {}", rec.len(), d + 1)));
        }
        let label = rec[0].trim().parse::<ClassId>().map_err(|e| Error::Csv(format!("row {row} label: {e}")))?;
        labels.push(label);
        for field in rec.iter().skip(1) {
            let v = field.trim().parse::<f64>().map_err(|e| Error::Csv(format!("row {row}: {e}")))?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { row });
            }
            data.push(v);
        }
    }
    finish_load(Matrix::new(labels.len(), d, data)?, labels, opts)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes a batch; `.csv` paths get the text layout, anything else binary.
pub fn save_embeddings(batch: &EmbeddingBatch<f64>, path: &Path) -> Result<()> {
    let bytes = if is_csv(path) { encode_csv(batch)? } else { encode_embeddings(batch)? };
    let mut f = fs::File::create(path).map_err(Error::file(path))?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn load_embeddings(path: &Path, opts: LoadOptions) -> Result<EmbeddingBatch<f64>> {
    let bytes = fs::read(path).map_err(Error::file(path))?;
    if is_csv(path) {
        decode_csv(&bytes, opts)
    } else {
        decode_embeddings(&bytes, opts)
    }
}

/// Proxies use the embedding layout with one row per class.
pub fn save_proxies(proxies: &ProxySet<f64>, path: &Path) -> Result<()> {
    let batch = EmbeddingBatch::new_unchecked(proxies.matrix().clone(), proxies.class_ids().to_vec())?;
    save_embeddings(&batch, path)
}

pub fn load_proxies(path: &Path, opts: LoadOptions) -> Result<ProxySet<f64>> {
    let (m, ids) = load_embeddings(path, opts)?.into_parts();
    ProxySet::new(m, ids)
}

/// P classes × K samples per batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub classes_per_batch: usize,
    pub samples_per_class: usize,
}

impl BatchPlan {
    pub fn new(classes_per_batch: usize, samples_per_class: usize) -> Result<Self> {
        if classes_per_batch < 2 || samples_per_class < 1 {
            return Err(Error::InvalidConfig(format!(
                "batch plan needs P >= 2 and K >= 1, got P={classes_per_batch}, K={samples_per_class}"
            )));
        }
        Ok(Self { classes_per_batch, samples_per_class })
    }

    pub fn batch_size(&self) -> usize {
        self.classes_per_batch * self.samples_per_class
    }
}

impl Default for BatchPlan {
    /// 30 classes × 3 samples = 90 rows.
    fn default() -> Self {
        Self { classes_per_batch: 30, samples_per_class: 3 }
    }
}

/// Seeded PK sampler. Each epoch shuffles the classes, cuts them into groups
/// of P (a short final group is dropped) and draws K rows from each class.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    class_rows: BTreeMap<ClassId, Vec<usize>>,
    plan: BatchPlan,
    with_replacement: bool,
    rng: SeededRng,
}

impl BatchSampler {
    pub fn new(labels: &[ClassId], plan: BatchPlan, seed: u64, with_replacement: bool) -> Result<Self> {
        let plan = BatchPlan::new(plan.classes_per_batch, plan.samples_per_class)?;
        let mut class_rows: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            class_rows.entry(l).or_default().push(i);
        }
        if class_rows.len() < plan.classes_per_batch {
            return Err(Error::TooFewClasses { have: class_rows.len(), need: plan.classes_per_batch });
        }
        if !with_replacement {
            if let Some((&class, rows)) = class_rows.iter().find(|(_, r)| r.len() < plan.samples_per_class) {
                return Err(Error::ClassTooSmall { class, have: rows.len(), need: plan.samples_per_class });
            }
        }
        Ok(Self { class_rows, plan, with_replacement, rng: SeededRng::new(seed) })
    }

    pub fn plan(&self) -> BatchPlan {
        self.plan
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.class_rows.len() / self.plan.classes_per_batch
    }

    /// Row-index batches for the next epoch.
    pub fn epoch(&mut self) -> Vec<Vec<usize>> {
        let mut classes: Vec<ClassId> = self.class_rows.keys().copied().collect();
        self.rng.shuffle(&mut classes);
        let k = self.plan.samples_per_class;
        classes
            .chunks_exact(self.plan.classes_per_batch)
            .map(|group| {
                let mut batch = Vec::with_capacity(self.plan.batch_size());
                for c in group {
                    let rows = &self.class_rows[c];
                    if self.with_replacement {
                        batch.extend((0..k).map(|_| rows[self.rng.below(rows.len())]));
                    } else {
                        let mut pool = rows.clone();
                        self.rng.shuffle(&mut pool);
                        batch.extend_from_slice(&pool[..k]);
                    }
                }
                batch
            })
            .collect()
    }
}
