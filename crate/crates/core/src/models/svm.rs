//! Pegasos mini-batch SVM in fixed point.
//!
//! With eta = 1/(lambda t), one iteration costs b+1 comparisons and two
//! divisions (the shrink factor and the folded eta/b), plus the projection's
//! square root and rescale. Schedule:
//!   q1 = floor(2^2l / t)                    2l   (1 - eta lambda = 2^2l - q1)
//!   q2 = floor(2^3l / (lambda_raw t b))     2l   (eta / b)
//!   m_i = y_i <x_i, w>                      2l
//!   ind_i = [m_i < 1]                       comparisons (b)
//!   gsum_j = sum ind_i y_i x_ij             l
//!   upd_j = w_j (2^2l - q1) + q2 gsum_j     3l
//!   wp_j = upd_j >> 2l                      l
//!   norm2 = sum wp^2                        2l
//!   s = isqrt(norm2)                        l   R = floor(2^2l / isqrt(lambda_raw << l))
//!   if s > R (1 comparison): w' = (wp * floor(R << l / s)) >> l else wp

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::Zero;

use super::{ModelState, Prediction, StepOutput, TrainConfig};
use crate::error::{Error, Result};
use crate::fixedpoint::FixedPoint;

/// Floor integer square root.
pub fn isqrt(x: &BigInt) -> BigInt {
    assert!(!x.is_negative(), "isqrt of negative value");
    if x.is_zero() {
        return BigInt::ZERO;
    }
    let mut s = BigInt::from(1) << (x.bits() / 2 + 1);
    loop {
        let t = (&s + x / &s) >> 1;
        if t >= s {
            return s;
        }
        s = t;
    }
}

use num_traits::Signed;

/// Radius constant floor(2^2l / isqrt(lambda_raw << l)), i.e. 1/sqrt(lambda)
/// at scale l; both parties derive it from the task config alone.
pub fn radius_raw(lambda: &FixedPoint, l: u32) -> BigInt {
    let s_lam = isqrt(&(&lambda.raw << l));
    (BigInt::from(1) << (2 * l)) / s_lam
}

/// Labels come in as classes {0,1} and act as {-1,+1}.
pub fn to_pm1(y: u32) -> i64 {
    if y == 0 {
        -1
    } else {
        1
    }
}

pub fn step(
    state: &ModelState,
    x: &[Vec<FixedPoint>],
    y: &[u32],
    cfg: &TrainConfig,
    t_iter: u64,
) -> Result<StepOutput> {
    if t_iter == 0 {
        return Err(Error::TaskConfig(
            "Pegasos iteration counter starts at 1".into(),
        ));
    }
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: y.len().max(1),
            got: x.len(),
        });
    }
    let l = cfg.frac_bits;
    let d = state.params.len();
    let b = x.len() as i64;
    let t = BigInt::from(t_iter);
    let one_2l = BigInt::from(1) << (2 * l);
    let q1 = &one_2l / &t;
    let q2 = (BigInt::from(1) << (3 * l)) / (&cfg.lambda.raw * &t * b);
    let shrink = &one_2l - &q1;

    let mut gsum = vec![BigInt::ZERO; d];
    for (xi, &yi) in x.iter().zip(y) {
        let dot: BigInt = xi
            .iter()
            .zip(&state.params)
            .map(|(a, w)| &a.raw * &w.raw)
            .sum();
        let margin = dot * to_pm1(yi);
        if margin < one_2l {
            for (g, xij) in gsum.iter_mut().zip(xi) {
                *g += &xij.raw * to_pm1(yi);
            }
        }
    }

    let mut wp = Vec::with_capacity(d);
    for (w, g) in state.params.iter().zip(&gsum) {
        let upd = &w.raw * &shrink + &q2 * g; // 3l
        wp.push(upd >> (2 * l)); // l
    }

    let norm2: BigInt = wp.iter().map(|v| v * v).sum(); // 2l
    let s = isqrt(&norm2); // l
    let r = radius_raw(&cfg.lambda, l);
    let params: Vec<FixedPoint> = if s <= r {
        wp.into_iter()
            .map(|raw| FixedPoint { raw, frac_bits: l })
            .collect()
    } else {
        let f = (&r << l).div_floor(&s); // l
        wp.into_iter()
            .map(|raw| FixedPoint {
                raw: (raw * &f) >> l,
                frac_bits: l,
            })
            .collect()
    };
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

/// Label 1 when <w, x> >= 0 (acting as +1), else 0 (acting as -1).
pub fn predict(state: &ModelState, sample: &[FixedPoint]) -> Result<Prediction> {
    if sample.len() != state.params.len() {
        return Err(Error::DimensionMismatch {
            expected: state.params.len(),
            got: sample.len(),
        });
    }
    let dot: BigInt = sample
        .iter()
        .zip(&state.params)
        .map(|(a, w)| &a.raw * &w.raw)
        .sum();
    Ok(Prediction::Label((dot >= BigInt::ZERO) as u32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synth_with, Labels, SynthKind};
    use crate::models::{Activation, ModelKind, SigmoidKind};

    fn cfg(l: u32, b: usize) -> TrainConfig {
        TrainConfig {
            algorithm: ModelKind::Svm,
            frac_bits: l,
            batch_size: b,
            alpha: FixedPoint::from_raw(1 << l, l),
            conv_threshold: None,
            max_epochs: 1,
            int_budget: 16,
            lambda: FixedPoint::from_raw(1 << (l - 6), l), // 1/64
            k_clusters: 4,
            k_bins: 4,
            max_depth: 3,
            nn_hidden: vec![4],
            num_classes: 2,
            sigmoid: SigmoidKind::Remez,
            activation: Activation::Square,
        }
    }

    fn state(params: Vec<i64>, l: u32) -> ModelState {
        ModelState {
            kind: ModelKind::Svm,
            iteration: 0,
            frac_bits: l,
            dims: vec![params.len()],
            params: params
                .into_iter()
                .map(|r| FixedPoint::from_raw(r, l))
                .collect(),
            tree: None,
            sigmoid: None,
        }
    }

    #[test]
    fn isqrt_examples() {
        assert_eq!(isqrt(&BigInt::from(16)), BigInt::from(4));
        assert_eq!(isqrt(&BigInt::from(17)), BigInt::from(4));
        assert_eq!(isqrt(&BigInt::from(0)), BigInt::ZERO);
        assert_eq!(isqrt(&BigInt::from(24)), BigInt::from(4));
        assert_eq!(isqrt(&BigInt::from(25)), BigInt::from(5));
    }

    #[test]
    fn empty_margin_set_is_pure_shrink() {
        let l = 12;
        let c = cfg(l, 1);
        let x = vec![vec![FixedPoint::from_raw(10 << l, l)]];
        let y = vec![1u32];
        // w = 0.5, margin = 0.5 * 10 = 5 >= 1 -> A+ empty -> shrink only
        let st = state(vec![1 << (l - 1)], l);
        let out = step(&st, &x, &y, &c, 2).unwrap();
        let one_2l = BigInt::from(1) << (2 * l);
        let q1 = &one_2l / 2;
        let expect = (&st.params[0].raw * (&one_2l - &q1)) >> (2 * l);
        assert_eq!(out.next.params[0].raw, expect);
    }

    #[test]
    fn projection_caps_norm() {
        let l = 14;
        let c = cfg(l, 1);
        // huge w forces a projection back onto the 1/sqrt(lambda) ball
        let st = state(vec![12 << l, -9 << l], l);
        let x = vec![vec![
            FixedPoint::from_raw(1 << (l - 2), l),
            FixedPoint::from_raw(1 << (l - 2), l),
        ]];
        let y = vec![1u32];
        let out = step(&st, &x, &y, &c, 1).unwrap();
        let norm2: BigInt = out.next.params.iter().map(|p| &p.raw * &p.raw).sum();
        let r = radius_raw(&c.lambda, l);
        // post-projection norm <= R within d ulps
        let slack = BigInt::from(out.next.params.len() as i64) << l;
        assert!(
            isqrt(&norm2) <= &r + &slack,
            "norm {} vs radius {r}",
            isqrt(&norm2)
        );
    }

    #[test]
    fn separable_training_reaches_95_accuracy() {
        let l = 16;
        let b = 8;
        let c = cfg(l, b);
        let ds = synth_with(SynthKind::Binary, 240, 5, 9, l, 0.0).unwrap();
        let ys = match &ds.labels {
            Labels::Class(v) => v.clone(),
            _ => panic!(),
        };
        // the usual Pegasos bias augmentation: a constant-one feature
        let aug: Vec<Vec<FixedPoint>> = ds
            .features
            .iter()
            .map(|row| {
                let mut r = row.clone();
                r.push(FixedPoint::one(l));
                r
            })
            .collect();
        let mut st = state(vec![0; 6], l);
        let mut t = 0u64;
        for epoch in 0..67 {
            for s in 0..240 / b {
                t += 1;
                let idx: Vec<usize> = (0..b).map(|i| (s * b + i + epoch * 13) % 240).collect();
                let bx: Vec<Vec<FixedPoint>> = idx.iter().map(|&i| aug[i].clone()).collect();
                let by: Vec<u32> = idx.iter().map(|&i| ys[i]).collect();
                st = step(&st, &bx, &by, &c, t).unwrap().next;
            }
        }
        let (correct, total) = crate::models::accuracy(&st, &aug, &ds.labels).unwrap();
        assert!(
            correct as f64 / total as f64 >= 0.95,
            "accuracy {}/{total}",
            correct
        );
    }
}
