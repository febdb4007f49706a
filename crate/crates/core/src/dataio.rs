//! Dataset ingestion, quantization, histogram bucketing, and synthetic
//! generators shaped like the evaluation datasets.

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fixedpoint::{encode_rational, FixedPoint};
use crate::prng::PinnedPrng;
use num_rational::BigRational;

/// Labels carried alongside the feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    /// Regression targets at the dataset scale.
    Real(Vec<FixedPoint>),
    /// Class indices (0-based); binary tasks with {-1,+1} semantics keep
    /// classes {0,1} here and map at the consumer.
    Class(Vec<u32>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Real(v) => v.len(),
            Labels::Class(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    /// n x d row-major features at scale 2^l.
    pub features: Vec<Vec<FixedPoint>>,
    pub labels: Labels,
    pub frac_bits: u32,
    pub digest: [u8; 32],
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.features.len()
    }

    pub fn d(&self) -> usize {
        self.features.first().map(|r| r.len()).unwrap_or(0)
    }

    /// Canonical binary serialization: magic, dims, l, little-endian raws.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"VMLD");
        out.extend_from_slice(&(self.n() as u64).to_le_bytes());
        out.extend_from_slice(&(self.d() as u64).to_le_bytes());
        out.extend_from_slice(&self.frac_bits.to_le_bytes());
        let push_raw = |out: &mut Vec<u8>, raw: &BigInt| {
            let v = raw.to_i64().expect("dataset raws fit i64");
            out.extend_from_slice(&v.to_le_bytes());
        };
        for row in &self.features {
            for x in row {
                push_raw(&mut out, &x.raw);
            }
        }
        match &self.labels {
            Labels::Real(v) => {
                out.push(0);
                for y in v {
                    push_raw(&mut out, &y.raw);
                }
            }
            Labels::Class(v) => {
                out.push(1);
                for y in v {
                    out.extend_from_slice(&(*y as u64).to_le_bytes());
                }
            }
        }
        out
    }

    fn finalize(mut self) -> Self {
        self.digest = Sha256::digest(self.canonical_bytes()).into();
        self
    }
}

fn rational(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::Dataset(format!("non-finite value {x}")))
}

/// Min-max normalize each column to [0,1], then encode at scale 2^l.
/// A zero-range column maps to all zeros.
fn normalize_encode(cols: &[Vec<f64>], l: u32) -> Result<Vec<Vec<FixedPoint>>> {
    let n = cols.first().map(|c| c.len()).unwrap_or(0);
    let d = cols.len();
    let mut rows = vec![Vec::with_capacity(d); n];
    for col in cols {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &x in col {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let range = hi - lo;
        for (i, &x) in col.iter().enumerate() {
            let norm = if range == 0.0 { 0.0 } else { (x - lo) / range };
            rows[i].push(encode_rational(&rational(norm)?, l));
        }
    }
    Ok(rows)
}

/// Load a rectangular numeric CSV; `label_col` selects the target column.
/// Regression labels are min-max normalized like features; a column whose
/// values are all small non-negative integers is treated as classes.
pub fn load_csv(path: &std::path::Path, label_col: usize, l: u32) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(
        &text,
        label_col,
        l,
        path.file_name().and_then(|s| s.to_str()).unwrap_or("csv"),
    )
}

pub fn parse_csv(text: &str, label_col: usize, l: u32, name: &str) -> Result<Dataset> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let fields = match fields {
            Ok(f) => f,
            Err(_) if lineno == 0 => continue, // header row
            Err(e) => return Err(Error::Dataset(format!("line {}: {e}", lineno + 1))),
        };
        if let Some(w) = width {
            if fields.len() != w {
                return Err(Error::Dataset(format!(
                    "ragged row at line {}: {} fields, expected {w}",
                    lineno + 1,
                    fields.len()
                )));
            }
        } else {
            if label_col >= fields.len() {
                return Err(Error::Dataset(format!(
                    "label column {label_col} out of range for {} fields",
                    fields.len()
                )));
            }
            width = Some(fields.len());
        }
        rows.push(fields);
    }
    let width = width.ok_or_else(|| Error::Dataset("no data rows".into()))?;
    let n = rows.len();
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); width - 1];
    let mut label_raw = Vec::with_capacity(n);
    for row in &rows {
        let mut ci = 0;
        for (j, &x) in row.iter().enumerate() {
            if j == label_col {
                label_raw.push(x);
            } else {
                cols[ci].push(x);
                ci += 1;
            }
        }
    }
    let features = normalize_encode(&cols, l)?;
    let class_like = label_raw
        .iter()
        .all(|&y| y >= 0.0 && y.fract() == 0.0 && y < 64.0);
    let labels = if class_like {
        Labels::Class(label_raw.iter().map(|&y| y as u32).collect())
    } else {
        let norm = normalize_encode(std::slice::from_ref(&label_raw), l)?;
        Labels::Real(norm.into_iter().map(|mut r| r.remove(0)).collect())
    };
    Ok(Dataset {
        name: name.into(),
        features,
        labels,
        frac_bits: l,
        digest: [0; 32],
    }
    .finalize())
}

/// Per-feature equal-width bin edges plus per-class counts for the root.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSet {
    pub k_bins: usize,
    pub num_classes: usize,
    /// Bin index of every (sample, feature).
    pub bins: Vec<Vec<u32>>,
    /// Root counts indexed [feature][bin][class].
    pub root_counts: Vec<Vec<Vec<u64>>>,
}

/// Bucket features into k equal-width bins; the tree learner consumes only
/// the k*d histogram, never the raw values.
pub fn bucketize(ds: &Dataset, k_bins: usize) -> Result<HistogramSet> {
    if k_bins < 2 {
        return Err(Error::Dataset("k_bins must be at least 2".into()));
    }
    let classes = match &ds.labels {
        Labels::Class(c) => c,
        Labels::Real(_) => {
            return Err(Error::Dataset("bucketize needs class labels".into()));
        }
    };
    let num_classes = classes.iter().copied().max().unwrap_or(0) as usize + 1;
    let n = ds.n();
    let d = ds.d();
    // features are normalized to [0,1]; bin i covers [i/k, (i+1)/k)
    let mut bins = vec![vec![0u32; d]; n];
    let full = BigInt::from(1u64) << ds.frac_bits;
    for (i, row) in ds.features.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            let scaled = &x.raw * BigInt::from(k_bins as u64) / &full;
            let b = scaled.to_u64().unwrap_or(0).min(k_bins as u64 - 1);
            bins[i][j] = b as u32;
        }
    }
    let mut root_counts = vec![vec![vec![0u64; num_classes]; k_bins]; d];
    for (i, row) in bins.iter().enumerate() {
        let c = classes[i] as usize;
        for (j, &b) in row.iter().enumerate() {
            root_counts[j][b as usize][c] += 1;
        }
    }
    Ok(HistogramSet {
        k_bins,
        num_classes,
        bins,
        root_counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Regression,
    Binary,
    Blobs,
    Multiclass,
}

/// Deterministic synthetic datasets from the pinned stream.
pub fn synth(kind: SynthKind, n: usize, d: usize, seed: u64, l: u32) -> Result<Dataset> {
    synth_with(kind, n, d, seed, l, 0.01)
}

pub fn synth_with(
    kind: SynthKind,
    n: usize,
    d: usize,
    seed: u64,
    l: u32,
    noise: f64,
) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::Dataset("n and d must be positive".into()));
    }
    let mut prng = PinnedPrng::with_context(seed, "synth", &[kind_tag(kind)]);
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); d];
    let name;
    let labels;
    match kind {
        SynthKind::Regression => {
            name = "synth-regression";
            // planted linear model over uniform features
            let w: Vec<f64> = (0..d).map(|_| prng.next_f64() * 2.0 - 1.0).collect();
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let x: Vec<f64> = (0..d).map(|_| prng.next_f64()).collect();
                let y: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
                    + noise * prng.next_gaussian();
                for (j, &v) in x.iter().enumerate() {
                    cols[j].push(v);
                }
                ys.push(y);
            }
            let norm = normalize_encode(std::slice::from_ref(&ys), l)?;
            labels = Labels::Real(norm.into_iter().map(|mut r| r.remove(0)).collect());
        }
        SynthKind::Binary => {
            name = "synth-binary";
            // margin-separated classes with optional label noise scale
            let w: Vec<f64> = (0..d).map(|_| prng.next_f64() * 2.0 - 1.0).collect();
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let x: Vec<f64> = (0..d).map(|_| prng.next_f64() * 2.0 - 1.0).collect();
                let m = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / norm
                    + noise * prng.next_gaussian();
                for (j, &v) in x.iter().enumerate() {
                    cols[j].push(v);
                }
                ys.push((m > 0.0) as u32);
            }
            labels = Labels::Class(ys);
        }
        SynthKind::Blobs | SynthKind::Multiclass => {
            name = if kind == SynthKind::Blobs {
                "synth-blobs"
            } else {
                "synth-multiclass"
            };
            let k = 4usize;
            let centers: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..d).map(|_| prng.next_f64()).collect())
                .collect();
            let mut ys = Vec::with_capacity(n);
            for i in 0..n {
                let c = i % k;
                for j in 0..d {
                    cols[j].push(centers[c][j] + noise * prng.next_gaussian());
                }
                ys.push(c as u32);
            }
            labels = Labels::Class(ys);
        }
    }
    let features = normalize_encode(&cols, l)?;
    Ok(Dataset {
        name: name.into(),
        features,
        labels,
        frac_bits: l,
        digest: [0; 32],
    }
    .finalize())
}

fn kind_tag(kind: SynthKind) -> u8 {
    match kind {
        SynthKind::Regression => 0,
        SynthKind::Binary => 1,
        SynthKind::Blobs => 2,
        SynthKind::Multiclass => 3,
    }
}
