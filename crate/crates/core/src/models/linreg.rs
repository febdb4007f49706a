//! Linear-regression SGD in fixed point.
//!
//! Scale schedule per step (all shifts public constants):
//!   pred_i  = sum_j x_ij * w_j              2l
//!   resid_i = pred_i - (y_i << l)           2l
//!   grad_j  = sum_i resid_i * x_ij          3l
//!   upd_j   = (w_j << 3l) - c * grad_j      4l    c = round((alpha/b) 2^l)
//!   w'_j    = upd_j >> 3l                   l     (floor)

use num_bigint::BigInt;

use super::{ModelState, Prediction, StepOutput, TrainConfig};
use crate::error::{Error, Result};
use crate::fixedpoint::FixedPoint;

pub fn step(
    state: &ModelState,
    x: &[Vec<FixedPoint>],
    y: &[FixedPoint],
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
    for (xi, yi) in x.iter().zip(y) {
        if xi.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: xi.len(),
            });
        }
        let pred: BigInt = xi
            .iter()
            .zip(&state.params)
            .map(|(a, w)| &a.raw * &w.raw)
            .sum();
        let resid = pred - (&yi.raw << l);
        for (g, xij) in grads.iter_mut().zip(xi) {
            *g += &resid * &xij.raw;
        }
    }
    let mut untruncated = Vec::with_capacity(d);
    let mut params = Vec::with_capacity(d);
    for (w, g) in state.params.iter().zip(&grads) {
        let upd = (&w.raw << (3 * l)) - &c * g;
        params.push(FixedPoint {
            raw: &upd >> (3 * l),
            frac_bits: l,
        });
        untruncated.push(FixedPoint {
            raw: upd,
            frac_bits: 4 * l,
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

pub fn predict(state: &ModelState, sample: &[FixedPoint]) -> Result<Prediction> {
    if sample.len() != state.params.len() {
        return Err(Error::DimensionMismatch {
            expected: state.params.len(),
            got: sample.len(),
        });
    }
    let l = state.frac_bits;
    let acc: BigInt = sample
        .iter()
        .zip(&state.params)
        .map(|(a, w)| &a.raw * &w.raw)
        .sum();
    Ok(Prediction::Score(FixedPoint {
        raw: acc >> l,
        frac_bits: l,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    fn cfg(l: u32, b: usize, alpha_num: i64, alpha_den: u32) -> TrainConfig {
        TrainConfig {
            algorithm: ModelKind::Linreg,
            frac_bits: l,
            batch_size: b,
            alpha: FixedPoint::from_raw(alpha_num << (l - alpha_den), l),
            conv_threshold: None,
            max_epochs: 1,
            int_budget: 16,
            lambda: FixedPoint::from_raw(1, 4),
            k_clusters: 4,
            k_bins: 4,
            max_depth: 3,
            nn_hidden: vec![4],
            num_classes: 2,
            sigmoid: super::super::SigmoidKind::Remez,
            activation: super::super::Activation::Square,
        }
    }

    fn zero_state(d: usize, l: u32) -> ModelState {
        ModelState {
            kind: ModelKind::Linreg,
            iteration: 0,
            frac_bits: l,
            dims: vec![d],
            params: vec![FixedPoint::zero(l); d],
            tree: None,
            sigmoid: None,
        }
    }

    #[test]
    fn zero_gradient_batch_keeps_state() {
        let l = 8;
        let c = cfg(l, 1, 1, 0);
        // w = (1, 2); x = (3, 4); y = 11 fits exactly
        let mut st = zero_state(2, l);
        st.params = vec![
            FixedPoint::from_raw(1 << l, l),
            FixedPoint::from_raw(2 << l, l),
        ];
        let x = vec![vec![
            FixedPoint::from_raw(3 << l, l),
            FixedPoint::from_raw(4 << l, l),
        ]];
        let y = vec![FixedPoint::from_raw(11 << l, l)];
        let out = step(&st, &x, &y, &c).unwrap();
        assert_eq!(out.next.params, st.params);
    }

    #[test]
    fn hand_step_d1() {
        // d=1, w=0, alpha=1, b=1, x=1, y=1 -> w' = 1
        let l = 8;
        let c = cfg(l, 1, 1, 0);
        let st = zero_state(1, l);
        let x = vec![vec![FixedPoint::from_raw(1 << l, l)]];
        let y = vec![FixedPoint::from_raw(1 << l, l)];
        let out = step(&st, &x, &y, &c).unwrap();
        assert_eq!(out.next.params[0].raw, BigInt::from(1i64 << l));
        assert_eq!(out.untruncated[0].frac_bits, 4 * l);
    }

    #[test]
    fn converges_toward_planted_model_vs_float_oracle() {
        // small float-oracle cross-check; the full fidelity sweep lives in
        // the acceptance suite
        let l = 24;
        let d = 3;
        let n = 64;
        let b = 8;
        let cfgv = cfg(l, b, 1, 2); // alpha = 0.25
        let mut prng = crate::prng::PinnedPrng::new(5, b"linreg-oracle");
        let w_true: Vec<f64> = (0..d).map(|_| prng.next_f64()).collect();
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| prng.next_f64()).collect())
            .collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x.iter().zip(&w_true).map(|(a, b)| a * b).sum())
            .collect();

        let enc = |v: f64| crate::fixedpoint::encode(v, l).unwrap();
        let mut st = zero_state(d, l);
        let mut wf = vec![0.0f64; d];
        let alpha = 0.25f64;
        for epoch in 0..30 {
            for s in 0..n / b {
                let idx: Vec<usize> = (s * b..(s + 1) * b).map(|i| (i + epoch) % n).collect();
                let bx: Vec<Vec<FixedPoint>> = idx
                    .iter()
                    .map(|&i| xs[i].iter().map(|&v| enc(v)).collect())
                    .collect();
                let by: Vec<FixedPoint> = idx.iter().map(|&i| enc(ys[i])).collect();
                st = step(&st, &bx, &by, &cfgv).unwrap().next;
                // float mirror
                let mut grad = vec![0.0; d];
                for &i in &idx {
                    let pred: f64 = xs[i].iter().zip(&wf).map(|(a, b)| a * b).sum();
                    for j in 0..d {
                        grad[j] += (pred - ys[i]) * xs[i][j];
                    }
                }
                for j in 0..d {
                    wf[j] -= alpha / b as f64 * grad[j];
                }
            }
        }
        for j in 0..d {
            let got = st.params[j].to_f64();
            assert!(
                (got - wf[j]).abs() < 1e-3,
                "w[{j}] fixed {got} float {}",
                wf[j]
            );
        }
    }
}
