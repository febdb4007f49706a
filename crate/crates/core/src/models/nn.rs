//! Fully-connected network in fixed point: square or polynomial-sigmoid
//! hidden activations, square-softmax output, MSE-on-probabilities gradient.
//!
//! Forward (per layer): Z = A_prev W + (bias << l) at 2l, T = Z >> l,
//! A = act(T) at l. Output: s_c = T3_c^2, denom = sum s, probs = (s << l) /
//! (denom + [denom = 0]) at l. Backward mirrors the same truncation points;
//! updates are upd = (param << 2l) - c * grad_sum at 3l, truncated by 2l.
//! With num_classes = 1 the head is linear and the loss plain MSE, which is
//! what the toy gradient-check shape uses.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::{Activation, ModelState, Prediction, StepOutput, TrainConfig};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::fixedpoint::FixedPoint;
use crate::gadgets::SigmoidVariant;
use crate::models::logreg::clamp_range;
use crate::prng::PinnedPrng;

/// Offsets of each layer's weight block and bias block in the flat params.
pub struct Layout {
    pub shape: Vec<usize>,
    pub w_off: Vec<usize>,
    pub b_off: Vec<usize>,
    pub total: usize,
}

pub fn layout(shape: &[usize]) -> Layout {
    let mut w_off = Vec::new();
    let mut b_off = Vec::new();
    let mut off = 0usize;
    for i in 0..shape.len() - 1 {
        w_off.push(off);
        off += shape[i] * shape[i + 1];
        b_off.push(off);
        off += shape[i + 1];
    }
    Layout {
        shape: shape.to_vec(),
        w_off,
        b_off,
        total: off,
    }
}

pub fn init(cfg: &TrainConfig, ds: &Dataset, client_seed: u64) -> Result<ModelState> {
    let shape = super::nn_shape(cfg, ds.d());
    if shape.iter().any(|&s| s == 0) {
        return Err(Error::TaskConfig("nn layer sizes must be positive".into()));
    }
    let lay = layout(&shape);
    let l = cfg.frac_bits;
    let mut prng = PinnedPrng::with_context(client_seed, "nn-init", &[]);
    let mut params = vec![FixedPoint::zero(l); lay.total];
    for i in 0..shape.len() - 1 {
        let fan_in = shape[i] as f64;
        let r = 1.0 / fan_in.sqrt();
        for slot in 0..shape[i] * shape[i + 1] {
            let v = (prng.next_f64() * 2.0 - 1.0) * r;
            params[lay.w_off[i] + slot] = crate::fixedpoint::encode(v, l)?;
        }
    }
    Ok(ModelState {
        kind: super::ModelKind::Nn,
        iteration: 0,
        frac_bits: l,
        dims: shape,
        params,
        tree: None,
        sigmoid: Some(cfg.sigmoid),
    })
}

fn act_raw(cfg: &TrainConfig, t: &BigInt, l: u32) -> BigInt {
    match cfg.activation {
        Activation::Square => (t * t) >> l,
        Activation::Sigmoid => {
            let v = cfg.sigmoid.variant().unwrap_or(SigmoidVariant::Remez);
            v.eval_raw(&clamp_range(t, l), l)
        }
    }
}

/// Derivative of the activation at scale l.
fn act_deriv_raw(cfg: &TrainConfig, t: &BigInt, l: u32) -> BigInt {
    match cfg.activation {
        Activation::Square => t << 1,
        Activation::Sigmoid => {
            let v = cfg.sigmoid.variant().unwrap_or(SigmoidVariant::Remez);
            let (c3, c1, _) = v.coefficients(l);
            let tc = clamp_range(t, l);
            let t2 = (&tc * &tc) >> l;
            (BigInt::from(3) * &c3 * &t2 + (&c1 << l)) >> l
        }
    }
}

pub struct Forward {
    /// Pre-activations T per layer (scale l), batch-major.
    pub t: Vec<Vec<Vec<BigInt>>>,
    /// Activations A per layer including the input X as a[0] (scale l).
    pub a: Vec<Vec<Vec<BigInt>>>,
    /// Square-softmax pieces, empty when num_classes = 1.
    pub denom: Vec<BigInt>,
    pub probs: Vec<Vec<BigInt>>,
}

pub fn forward(state: &ModelState, x: &[Vec<FixedPoint>], cfg: &TrainConfig) -> Result<Forward> {
    let l = cfg.frac_bits;
    let shape = &state.dims;
    let lay = layout(shape);
    let layers = shape.len() - 1;
    let mut a: Vec<Vec<Vec<BigInt>>> = vec![x
        .iter()
        .map(|r| r.iter().map(|v| v.raw.clone()).collect())
        .collect()];
    let mut t = Vec::with_capacity(layers);
    for li in 0..layers {
        let (n_in, n_out) = (shape[li], shape[li + 1]);
        let mut tl = Vec::with_capacity(x.len());
        let mut al = Vec::with_capacity(x.len());
        for row in &a[li] {
            if row.len() != n_in {
                return Err(Error::DimensionMismatch {
                    expected: n_in,
                    got: row.len(),
                });
            }
            let mut trow = Vec::with_capacity(n_out);
            let mut arow = Vec::with_capacity(n_out);
            for k in 0..n_out {
                let mut z = &state.params[lay.b_off[li] + k].raw << l;
                for j in 0..n_in {
                    z += &row[j] * &state.params[lay.w_off[li] + j * n_out + k].raw;
                }
                let tv = z >> l;
                if li + 1 < layers {
                    arow.push(act_raw(cfg, &tv, l));
                }
                trow.push(tv);
            }
            tl.push(trow);
            if li + 1 < layers {
                al.push(arow);
            }
        }
        if li + 1 < layers {
            a.push(al);
        }
        t.push(tl);
    }
    // output head
    let t3 = &t[layers - 1];
    let kappa = shape[layers];
    let (denom, probs) = if kappa == 1 {
        (Vec::new(), Vec::new())
    } else {
        let mut denoms = Vec::with_capacity(x.len());
        let mut probs = Vec::with_capacity(x.len());
        for trow in t3 {
            let s: Vec<BigInt> = trow.iter().map(|v| v * v).collect();
            let denom: BigInt = s.iter().sum();
            let divisor = if denom.is_zero() {
                BigInt::one()
            } else {
                denom.clone()
            };
            probs.push(s.iter().map(|si| (si << l) / &divisor).collect());
            denoms.push(denom);
        }
        (denoms, probs)
    };
    Ok(Forward { t, a, denom, probs })
}

pub fn step(
    state: &ModelState,
    x: &[Vec<FixedPoint>],
    y: &[u32],
    cfg: &TrainConfig,
) -> Result<StepOutput> {
    let l = cfg.frac_bits;
    let shape = &state.dims;
    let lay = layout(shape);
    let layers = shape.len() - 1;
    let kappa = shape[layers];
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: y.len().max(1),
            got: x.len(),
        });
    }
    let fwd = forward(state, x, cfg)?;

    // output deltas at scale l
    let mut delta: Vec<Vec<BigInt>> = Vec::with_capacity(x.len());
    for (i, trow) in fwd.t[layers - 1].iter().enumerate() {
        if kappa == 1 {
            let target = BigInt::from(y[i] as i64) << l;
            delta.push(vec![&trow[0] - &target]);
        } else {
            let probs = &fwd.probs[i];
            let e: Vec<BigInt> = (0..kappa)
                .map(|c| {
                    let target = if y[i] as usize == c {
                        BigInt::one() << l
                    } else {
                        BigInt::ZERO
                    };
                    &probs[c] - &target
                })
                .collect();
            let ip = (e.iter().zip(probs).map(|(a, b)| a * b).sum::<BigInt>()) >> l;
            let divisor = if fwd.denom[i].is_zero() {
                BigInt::one()
            } else {
                fwd.denom[i].clone()
            };
            let row: Vec<BigInt> = (0..kappa)
                .map(|c| {
                    let a = &e[c] - &ip;
                    let bv = (&trow[c] * &a) >> l;
                    BigInt::div_floor(&((bv << 1) << (2 * l)), &divisor)
                })
                .collect();
            delta.push(row);
        }
    }

    // backward through layers, accumulating gradient sums at 2l
    let mut grads_w: Vec<Vec<BigInt>> = (0..layers)
        .map(|li| vec![BigInt::ZERO; shape[li] * shape[li + 1]])
        .collect();
    let mut grads_b: Vec<Vec<BigInt>> = (0..layers)
        .map(|li| vec![BigInt::ZERO; shape[li + 1]])
        .collect();
    let mut cur = delta;
    for li in (0..layers).rev() {
        let (n_in, n_out) = (shape[li], shape[li + 1]);
        for (i, drow) in cur.iter().enumerate() {
            for k in 0..n_out {
                grads_b[li][k] += &drow[k] << l;
                for j in 0..n_in {
                    grads_w[li][j * n_out + k] += &fwd.a[li][i][j] * &drow[k];
                }
            }
        }
        if li == 0 {
            break;
        }
        // propagate: dA = delta W^T >> l, then activation chain at T[li-1]
        let mut prev = Vec::with_capacity(cur.len());
        for (i, drow) in cur.iter().enumerate() {
            let mut row = Vec::with_capacity(n_in);
            for j in 0..n_in {
                let mut acc = BigInt::ZERO;
                for k in 0..n_out {
                    acc += &drow[k] * &state.params[lay.w_off[li] + j * n_out + k].raw;
                }
                let da = acc >> l;
                let g = act_deriv_raw(cfg, &fwd.t[li - 1][i][j], l);
                row.push((da * g) >> l);
            }
            prev.push(row);
        }
        cur = prev;
    }

    // updates at 3l, truncated back to l
    let c = cfg.alpha_over_b_raw();
    let mut untruncated = Vec::with_capacity(lay.total);
    let mut params = Vec::with_capacity(lay.total);
    for li in 0..layers {
        for slot in 0..shape[li] * shape[li + 1] {
            let w = &state.params[lay.w_off[li] + slot].raw;
            let upd = (w << (2 * l)) - &c * &grads_w[li][slot];
            params.push(FixedPoint {
                raw: &upd >> (2 * l),
                frac_bits: l,
            });
            untruncated.push(FixedPoint {
                raw: upd,
                frac_bits: 3 * l,
            });
        }
        for k in 0..shape[li + 1] {
            let bv = &state.params[lay.b_off[li] + k].raw;
            let upd = (bv << (2 * l)) - &c * &grads_b[li][k];
            params.push(FixedPoint {
                raw: &upd >> (2 * l),
                frac_bits: l,
            });
            untruncated.push(FixedPoint {
                raw: upd,
                frac_bits: 3 * l,
            });
        }
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

/// Argmax class over the square-softmax probabilities (lowest index wins ties).
pub fn predict(state: &ModelState, sample: &[FixedPoint]) -> Result<Prediction> {
    let cfg_like = TrainConfig {
        algorithm: super::ModelKind::Nn,
        frac_bits: state.frac_bits,
        batch_size: 1,
        alpha: FixedPoint::one(state.frac_bits),
        conv_threshold: None,
        max_epochs: 1,
        int_budget: crate::fixedpoint::DEFAULT_INT_BUDGET,
        lambda: FixedPoint::from_raw(1, 4),
        k_clusters: 4,
        k_bins: 4,
        max_depth: 3,
        nn_hidden: Vec::new(),
        num_classes: *state.dims.last().unwrap(),
        sigmoid: state.sigmoid.unwrap_or(super::SigmoidKind::Remez),
        activation: Activation::Square,
    };
    predict_with(state, sample, &cfg_like)
}

pub fn predict_with(
    state: &ModelState,
    sample: &[FixedPoint],
    cfg: &TrainConfig,
) -> Result<Prediction> {
    let fwd = forward(state, &[sample.to_vec()], cfg)?;
    let kappa = *state.dims.last().unwrap();
    if kappa == 1 {
        let t = &fwd.t[state.dims.len() - 2][0][0];
        return Ok(Prediction::Score(FixedPoint {
            raw: t.clone(),
            frac_bits: state.frac_bits,
        }));
    }
    let probs = &fwd.probs[0];
    let mut best = 0usize;
    for c in 1..kappa {
        if probs[c] > probs[best] {
            best = c;
        }
    }
    Ok(Prediction::Label(best as u32))
}

/// Exact-rational forward loss on fixed-point parameters with no
/// intermediate truncation; the independent oracle for gradient checks.
/// Loss = 1/2 sum (p - y)^2 (probabilities for kappa >= 2, linear head
/// otherwise).
pub fn exact_loss(
    params: &[BigRational],
    shape: &[usize],
    x: &[Vec<FixedPoint>],
    y: &[u32],
    cfg: &TrainConfig,
) -> BigRational {
    let lay = layout(shape);
    let layers = shape.len() - 1;
    let kappa = shape[layers];
    let act = |t: &BigRational| -> BigRational {
        match cfg.activation {
            Activation::Square => t * t,
            Activation::Sigmoid => {
                let v = cfg.sigmoid.variant().unwrap_or(SigmoidVariant::Remez);
                let l = cfg.frac_bits;
                let (c3, c1, c0) = v.coefficients(l);
                let scale = BigRational::new(BigInt::one(), BigInt::one() << l);
                let c3 = BigRational::from_integer(c3) * &scale;
                let c1 = BigRational::from_integer(c1) * &scale;
                let c0 = BigRational::from_integer(c0) * &scale;
                c3 * t * t * t + c1 * t + c0
            }
        }
    };
    let mut total = BigRational::zero();
    for (i, xi) in x.iter().enumerate() {
        let mut a: Vec<BigRational> = xi.iter().map(|v| v.to_rational()).collect();
        let mut t_last: Vec<BigRational> = Vec::new();
        for li in 0..layers {
            let (n_in, n_out) = (shape[li], shape[li + 1]);
            let mut next = Vec::with_capacity(n_out);
            for k in 0..n_out {
                let mut z = params[lay.b_off[li] + k].clone();
                for j in 0..n_in {
                    z += &a[j] * &params[lay.w_off[li] + j * n_out + k];
                }
                next.push(z);
            }
            t_last = next.clone();
            if li + 1 < layers {
                a = next.iter().map(&act).collect();
            }
        }
        if kappa == 1 {
            let target = BigRational::from_integer(BigInt::from(y[i] as i64));
            let d = &t_last[0] - target;
            total += &d * &d / BigRational::from_integer(BigInt::from(2));
        } else {
            let s: Vec<BigRational> = t_last.iter().map(|t| t * t).collect();
            let denom: BigRational = s.iter().sum();
            for (c, sc) in s.iter().enumerate() {
                let p = if denom.is_zero() {
                    BigRational::zero()
                } else {
                    sc / &denom
                };
                let target = if y[i] as usize == c {
                    BigRational::one()
                } else {
                    BigRational::zero()
                };
                let d = p - target;
                total += &d * &d / BigRational::from_integer(BigInt::from(2));
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelKind, SigmoidKind};
    use num_traits::Signed;

    fn cfg(l: u32, hidden: Vec<usize>, classes: usize, activation: Activation) -> TrainConfig {
        TrainConfig {
            algorithm: ModelKind::Nn,
            frac_bits: l,
            batch_size: 2,
            alpha: FixedPoint::from_raw(1 << (l - 2), l), // 0.25
            conv_threshold: None,
            max_epochs: 1,
            int_budget: 16,
            lambda: FixedPoint::from_raw(1, 4),
            k_clusters: 4,
            k_bins: 4,
            max_depth: 3,
            nn_hidden: hidden,
            num_classes: classes,
            sigmoid: SigmoidKind::Remez,
            activation,
        }
    }

    fn mk_state(shape: &[usize], raws: Vec<i64>, l: u32) -> ModelState {
        ModelState {
            kind: ModelKind::Nn,
            iteration: 0,
            frac_bits: l,
            dims: shape.to_vec(),
            params: raws
                .into_iter()
                .map(|r| FixedPoint::from_raw(r, l))
                .collect(),
            tree: None,
            sigmoid: Some(SigmoidKind::Remez),
        }
    }

    #[test]
    fn zero_weights_square_activation_gives_zero_hiddens() {
        let l = 12;
        let c = cfg(l, vec![3], 2, Activation::Square);
        let shape = [2usize, 3, 2];
        let lay = layout(&shape);
        let st = mk_state(&shape, vec![0; lay.total], l);
        let x = vec![vec![
            FixedPoint::from_raw(1 << l, l),
            FixedPoint::from_raw(2 << l, l),
        ]];
        let fwd = forward(&st, &x, &c).unwrap();
        assert!(fwd.a[1][0].iter().all(|v| v.is_zero()));
        assert!(fwd.denom[0].is_zero());
        assert!(fwd.probs[0].iter().all(|v| v.is_zero()));
    }

    #[test]
    fn gradient_matches_exact_finite_difference() {
        // 2-2-2-1 toy: fixed-point backward gradient within 2^-(l-4) of the
        // central finite difference of the exact-arithmetic loss
        let l = 24u32;
        let c = cfg(l, vec![2, 2], 1, Activation::Square);
        let shape = [2usize, 2, 2, 1];
        let lay = layout(&shape);
        let mut prng = crate::prng::PinnedPrng::new(77, b"gradcheck");
        let raws: Vec<i64> = (0..lay.total)
            .map(|_| (prng.next_below_u64(1 << (l - 1)) as i64) - (1 << (l - 2)))
            .collect();
        let st = mk_state(&shape, raws, l);
        let x = vec![
            vec![
                FixedPoint::from_raw(3 << (l - 2), l),
                FixedPoint::from_raw(1 << (l - 1), l),
            ],
            vec![
                FixedPoint::from_raw(1 << (l - 2), l),
                FixedPoint::from_raw(-3 << (l - 3), l),
            ],
        ];
        let y = vec![1u32, 0];

        // fixed-point gradient sums at 2l, per parameter, recovered from the
        // update: upd = (w << 2l) - c_lr * grad  =>  grad = ((w << 2l) - upd) / c_lr
        let out = step(&st, &x, &y, &c).unwrap();
        let c_lr = c.alpha_over_b_raw();
        let params_rat: Vec<BigRational> = st.params.iter().map(|p| p.to_rational()).collect();
        let eps = BigRational::new(BigInt::one(), BigInt::one() << 12);
        let tol = BigRational::new(BigInt::one(), BigInt::one() << (l - 4));
        for idx in 0..lay.total {
            let grad_fixed = ((&st.params[idx].raw << (2 * l)) - &out.untruncated[idx].raw) / &c_lr;
            let grad_fixed = BigRational::new(grad_fixed, BigInt::one() << (2 * l));
            let mut plus = params_rat.clone();
            plus[idx] += &eps;
            let mut minus = params_rat.clone();
            minus[idx] -= &eps;
            let fd = (exact_loss(&plus, &shape, &x, &y, &c)
                - exact_loss(&minus, &shape, &x, &y, &c))
                / (BigRational::from_integer(BigInt::from(2)) * &eps);
            let diff = (&grad_fixed - &fd).abs();
            assert!(
                diff <= tol,
                "param {idx}: fixed {} vs fd {} (diff {})",
                grad_fixed,
                fd,
                diff
            );
        }
    }

    #[test]
    fn training_separates_blobs() {
        let l = 16;
        let c = cfg(l, vec![6], 2, Activation::Square);
        let ds = crate::dataio::synth_with(crate::dataio::SynthKind::Binary, 80, 3, 21, l, 0.05)
            .unwrap();
        let ys = match &ds.labels {
            crate::dataio::Labels::Class(v) => v.clone(),
            _ => panic!(),
        };
        let mut st = init(&c, &ds, 4).unwrap();
        for epoch in 0..60 {
            for s in 0..80 / 4 {
                let idx: Vec<usize> = (0..4).map(|i| (s * 4 + i + epoch * 3) % 80).collect();
                let bx: Vec<Vec<FixedPoint>> =
                    idx.iter().map(|&i| ds.features[i].clone()).collect();
                let by: Vec<u32> = idx.iter().map(|&i| ys[i]).collect();
                st = step(&st, &bx, &by, &c).unwrap().next;
            }
        }
        let (correct, total) = crate::models::accuracy(&st, &ds.features, &ds.labels).unwrap();
        assert!(
            correct as f64 / total as f64 >= 0.8,
            "accuracy {correct}/{total}"
        );
    }
}
