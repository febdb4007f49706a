//! Mini-batch K-means in fixed point.
//!
//! Assignment uses squared Euclidean distance at scale 2l with ties broken
//! by lowest centroid index; each batch sets a cluster's centroid to the
//! floor-mean of its assigned points, with divisor n_k + [n_k = 0] and a
//! zero-flag select so empty clusters keep their centroid, exactly as the
//! circuit does.

use num_bigint::BigInt;

use super::{ModelState, Prediction, StepOutput, TrainConfig};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::fixedpoint::FixedPoint;
use crate::prng::PinnedPrng;

pub fn init(cfg: &TrainConfig, ds: &Dataset, client_seed: u64) -> Result<ModelState> {
    let k = cfg.k_clusters;
    if k == 0 || k > ds.n() {
        return Err(Error::TaskConfig(format!(
            "k_clusters {k} out of range for n {}",
            ds.n()
        )));
    }
    let mut prng = PinnedPrng::with_context(client_seed, "kmeans-init", &[]);
    let picks = prng.sample_distinct(ds.n() as u64, k);
    let mut params = Vec::with_capacity(k * ds.d());
    for &i in &picks {
        params.extend(ds.features[i as usize].iter().cloned());
    }
    Ok(ModelState {
        kind: super::ModelKind::Kmeans,
        iteration: 0,
        frac_bits: cfg.frac_bits,
        dims: vec![k, ds.d()],
        params,
        tree: None,
        sigmoid: None,
    })
}

/// Squared distances to every centroid (scale 2l) and the tie-broken argmin.
pub fn distances(state: &ModelState, x: &[FixedPoint]) -> Result<(Vec<BigInt>, usize)> {
    let (k, d) = (state.dims[0], state.dims[1]);
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let mut acc = BigInt::ZERO;
        for j in 0..d {
            let diff = &x[j].raw - &state.params[c * d + j].raw;
            acc += &diff * &diff;
        }
        out.push(acc);
    }
    let mut best = 0usize;
    for c in 1..k {
        if out[c] < out[best] {
            best = c;
        }
    }
    Ok((out, best))
}

pub fn nearest(state: &ModelState, x: &[FixedPoint]) -> Result<(usize, BigInt)> {
    let (d, best) = distances(state, x)?;
    Ok((best, d[best].clone()))
}

pub fn step(state: &ModelState, x: &[Vec<FixedPoint>], cfg: &TrainConfig) -> Result<StepOutput> {
    if x.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    let l = cfg.frac_bits;
    let (k, d) = (state.dims[0], state.dims[1]);
    let mut counts = vec![0u64; k];
    let mut sums = vec![BigInt::ZERO; k * d];
    for xi in x {
        let (_, best) = distances(state, xi)?;
        counts[best] += 1;
        for j in 0..d {
            sums[best * d + j] += &xi[j].raw;
        }
    }
    let mut params = Vec::with_capacity(k * d);
    for c in 0..k {
        let zero = counts[c] == 0;
        let divisor = BigInt::from(counts[c].max(1));
        for j in 0..d {
            let q = &sums[c * d + j] / &divisor; // sums are non-negative at scale l
            let raw = if zero {
                state.params[c * d + j].raw.clone()
            } else {
                q
            };
            params.push(FixedPoint { raw, frac_bits: l });
        }
    }
    let untruncated = params.clone();
    Ok(StepOutput {
        next: ModelState {
            kind: state.kind,
            iteration: state.iteration + 1,
            frac_bits: l,
            dims: state.dims.clone(),
            params,
            tree: None,
            sigmoid: None,
        },
        untruncated,
    })
}

/// Nearest-centroid index.
pub fn predict(state: &ModelState, sample: &[FixedPoint]) -> Result<Prediction> {
    let (best, _) = nearest(state, sample)?;
    Ok(Prediction::Label(best as u32))
}
