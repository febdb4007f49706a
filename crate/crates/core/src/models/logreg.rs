//! Logistic-regression SGD with polynomial sigmoid approximations.
//!
//! Scale schedule:
//!   z_i   = sum x w                     2l
//!   zt_i  = z_i >> l, clamped to +-5    l
//!   p_i   = sigma~(zt_i)                l   (remez/taylor mirror the circuit)
//!   resid = p_i - (y_i << l)            l
//!   grad  = sum resid * x               2l
//!   upd   = (w << 2l) - c * grad        3l
//!   w'    = upd >> 2l                   l

use num_bigint::BigInt;

use super::{ModelState, Prediction, SigmoidKind, StepOutput, TrainConfig};
use crate::error::{Error, Result};
use crate::fixedpoint::FixedPoint;

/// Clamp a raw scale-l value into the approximation range [-5, 5].
pub fn clamp_range(z: &BigInt, l: u32) -> BigInt {
    let hi = BigInt::from(5i64) << l;
    let lo = -&hi;
    if z > &hi {
        hi
    } else if z < &lo {
        lo
    } else {
        z.clone()
    }
}

/// Native sigmoid at scale l, including the piecewise reference.
pub fn sigmoid_raw(kind: SigmoidKind, z: &BigInt, l: u32) -> BigInt {
    match kind.variant() {
        Some(v) => v.eval_raw(z, l),
        None => {
            // piecewise: 0 below -1/2, x + 1/2 inside, 1 above
            let half = BigInt::from(1i64) << (l - 1);
            let one = BigInt::from(1i64) << l;
            let shifted = z + &half;
            if shifted < BigInt::ZERO {
                BigInt::ZERO
            } else if shifted > one {
                BigInt::from(1i64) << l
            } else {
                shifted
            }
        }
    }
}

pub fn step(
    state: &ModelState,
    x: &[Vec<FixedPoint>],
    y: &[u32],
    cfg: &TrainConfig,
) -> Result<StepOutput> {
    let l = cfg.frac_bits;
    let d = state.params.len();
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: y.len().max(1),
            got: x.len(),
        });
    }
    let c = cfg.alpha_over_b_raw();
    let mut grads = vec![BigInt::ZERO; d];
    for (xi, &yi) in x.iter().zip(y) {
        let z: BigInt = xi
            .iter()
            .zip(&state.params)
            .map(|(a, w)| &a.raw * &w.raw)
            .sum();
        let zt = clamp_range(&(z >> l), l);
        let p = sigmoid_raw(cfg.sigmoid, &zt, l);
        let resid = p - (BigInt::from(yi as i64) << l);
        for (g, xij) in grads.iter_mut().zip(xi) {
            *g += &resid * &xij.raw;
        }
    }
    let mut untruncated = Vec::with_capacity(d);
    let mut params = Vec::with_capacity(d);
    for (w, g) in state.params.iter().zip(&grads) {
        let upd = (&w.raw << (2 * l)) - &c * g;
        params.push(FixedPoint {
            raw: &upd >> (2 * l),
            frac_bits: l,
        });
        untruncated.push(FixedPoint {
            raw: upd,
            frac_bits: 3 * l,
        });
    }
    Ok(StepOutput {
        next: ModelState {
            kind: state.kind,
            iteration: state.iteration + 1,
            frac_bits: l,
            dims: state.dims.clone(),
            params,
            tree: None,
            sigmoid: state.sigmoid,
        },
        untruncated,
    })
}

/// Probability score at scale l; label = score >= 1/2 at the caller.
pub fn predict(state: &ModelState, sample: &[FixedPoint]) -> Result<Prediction> {
    predict_with(state, sample, state.sigmoid.unwrap_or(SigmoidKind::Remez))
}

pub fn predict_with(
    state: &ModelState,
    sample: &[FixedPoint],
    kind: SigmoidKind,
) -> Result<Prediction> {
    if sample.len() != state.params.len() {
        return Err(Error::DimensionMismatch {
            expected: state.params.len(),
            got: sample.len(),
        });
    }
    let l = state.frac_bits;
    let z: BigInt = sample
        .iter()
        .zip(&state.params)
        .map(|(a, w)| &a.raw * &w.raw)
        .sum();
    let zt = clamp_range(&(z >> l), l);
    Ok(Prediction::Score(FixedPoint {
        raw: sigmoid_raw(kind, &zt, l),
        frac_bits: l,
    }))
}
