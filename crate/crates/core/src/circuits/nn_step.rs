//! NN iteration circuit: Freivald-checked matrix products for the forward
//! and backward passes, truncation checks at every native truncation point,
//! square-softmax with witness probabilities, and the update schedule.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::One;

use super::steps::clamp_pm5;
use super::{IterParams, PublicWires};
use crate::error::{Error, Result};
use crate::gadgets;
use crate::models::Activation;
use crate::r1cs::{Builder, Lc, Visibility, Wire};

fn lc_val(b: &Builder, lc: &Lc) -> Option<BigInt> {
    super::value_to_bigint(b, lc)
}

/// Witness matrix for a claimed product A (n x m) * B (m x q), values
/// computed exactly; structure constrained by the Freivald check.
fn matmul_witness(
    b: &mut Builder,
    a: &[Vec<Lc>],
    bm: &[Vec<Lc>],
    r: &[crate::field::Fe],
) -> Result<Vec<Vec<Lc>>> {
    let ctx = b.field().clone();
    let n = a.len();
    let m = bm.len();
    let q = bm[0].len();
    let mut c = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(q);
        for k in 0..q {
            let v = if b.has_values() {
                let mut acc = BigInt::ZERO;
                for j in 0..m {
                    let av = lc_val(b, &a[i][j]).ok_or(Error::MissingAssignment(0))?;
                    let bv = lc_val(b, &bm[j][k]).ok_or(Error::MissingAssignment(0))?;
                    acc += av * bv;
                }
                Some(ctx.from_bigint(&acc))
            } else {
                None
            };
            row.push(Lc::single(b.new_wire(Visibility::Witness, v)?, &ctx));
        }
        c.push(row);
    }
    gadgets::freivald_matmul_check(b, a, bm, &c, r)?;
    Ok(c)
}

fn truncate_all(b: &mut Builder, m: &[Vec<Lc>], shift: u32) -> Result<Vec<Vec<Lc>>> {
    let ctx = b.field().clone();
    m.iter()
        .map(|row| {
            row.iter()
                .map(|lc| {
                    let (w, _) = gadgets::truncate_to(b, lc, shift)?;
                    Ok(Lc::single(w, &ctx))
                })
                .collect()
        })
        .collect()
}

pub(super) fn nn(
    b: &mut Builder,
    params: &IterParams,
    publics: &PublicWires,
    w_in: &[Lc],
) -> Result<Vec<Lc>> {
    let ctx = b.field().clone();
    let l = params.l;
    let shape = &params.nn_shape;
    let layers = shape.len() - 1;
    let kappa = shape[layers];
    let batch = publics.x.len();
    let lay = crate::models::nn::layout(shape);
    if w_in.len() != lay.total {
        return Err(Error::DimensionMismatch {
            expected: lay.total,
            got: w_in.len(),
        });
    }
    let weight =
        |li: usize, j: usize, k: usize| -> &Lc { &w_in[lay.w_off[li] + j * shape[li + 1] + k] };
    let bias = |li: usize, k: usize| -> &Lc { &w_in[lay.b_off[li] + k] };
    let lift_l = ctx.from_biguint(&(num_bigint::BigUint::one() << l));
    let mut r_iter = params.freivald_r.iter();
    let mut next_r = |cols: usize| -> Result<Vec<crate::field::Fe>> {
        let r = r_iter
            .next()
            .ok_or(Error::Protocol("missing freivald challenge".into()))?;
        if r.len() != cols {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: r.len(),
            });
        }
        Ok(r.clone())
    };

    // forward
    let mut acts: Vec<Vec<Vec<Lc>>> = vec![publics.x.clone()];
    let mut pre: Vec<Vec<Vec<Lc>>> = Vec::with_capacity(layers); // T at scale l
    let mut clamped: Vec<Vec<Vec<Lc>>> = Vec::with_capacity(layers); // sigmoid inputs
    for li in 0..layers {
        let w_mat: Vec<Vec<Lc>> = (0..shape[li])
            .map(|j| {
                (0..shape[li + 1])
                    .map(|k| weight(li, j, k).clone())
                    .collect()
            })
            .collect();
        let prod = matmul_witness(b, &acts[li], &w_mat, &next_r(shape[li + 1])?)?;
        // Z = prod + bias << l, truncated to l
        let mut t_rows = Vec::with_capacity(batch);
        for row in &prod {
            let mut t_row = Vec::with_capacity(shape[li + 1]);
            for (k, cell) in row.iter().enumerate() {
                let mut z = cell.clone();
                for &(wi, co) in &bias(li, k).0 {
                    z.add_term(&ctx, Wire(wi), ctx.mul(co, lift_l));
                }
                let (t, _) = gadgets::truncate_to(b, &z, l)?;
                t_row.push(Lc::single(t, &ctx));
            }
            t_rows.push(t_row);
        }
        if li + 1 < layers {
            let mut a_rows = Vec::with_capacity(batch);
            let mut c_rows = Vec::with_capacity(batch);
            for t_row in &t_rows {
                let mut a_row = Vec::with_capacity(shape[li + 1]);
                let mut c_row = Vec::with_capacity(shape[li + 1]);
                for t in t_row {
                    match params.activation {
                        Activation::Square => {
                            let sq = b.mul(t, t, "nn.actsq")?;
                            let (a, _) = gadgets::truncate_to(b, &Lc::single(sq, &ctx), l)?;
                            a_row.push(Lc::single(a, &ctx));
                            c_row.push(t.clone());
                        }
                        Activation::Sigmoid => {
                            let tc = clamp_pm5(b, t, params)?;
                            let (a, _) = gadgets::sigmoid_poly(b, &tc, params.sigmoid, l)?;
                            a_row.push(Lc::single(a, &ctx));
                            c_row.push(tc);
                        }
                    }
                }
                a_rows.push(a_row);
                c_rows.push(c_row);
            }
            acts.push(a_rows);
            clamped.push(c_rows);
        } else {
            clamped.push(t_rows.clone());
        }
        pre.push(t_rows);
    }

    // square-softmax head with witness probabilities
    let t3 = &pre[layers - 1];
    let range2l = params.value_bits(2 * l) + 2;
    let mut deltas: Vec<Vec<Lc>> = Vec::with_capacity(batch);
    for (i, t_row) in t3.iter().enumerate() {
        let mut denom = Lc::zero();
        let mut squares = Vec::with_capacity(kappa);
        for t in t_row {
            let s = b.mul(t, t, "nn.sq")?;
            denom.add_term(&ctx, s, ctx.one());
            squares.push(Lc::single(s, &ctx));
        }
        let (zf, _) = gadgets::is_zero(b, &denom)?;
        let mut divisor = denom.clone();
        divisor.add_term(&ctx, zf, ctx.one());
        let mut probs = Vec::with_capacity(kappa);
        for s in &squares {
            let q = {
                let v = if b.has_values() {
                    let sv = lc_val(b, s).ok_or(Error::MissingAssignment(0))?;
                    let dv = lc_val(b, &divisor).ok_or(Error::MissingAssignment(0))?;
                    Some(ctx.from_bigint(&((sv << l) / dv)))
                } else {
                    None
                };
                Lc::single(b.new_wire(Visibility::Witness, v)?, &ctx)
            };
            gadgets::division_check(b, s, &divisor, &q, l, range2l)?;
            probs.push(q);
        }
        // sum probs in (2^l - kappa, 2^l], zero-degenerate case shifted up
        let mut sum_p = Lc::zero();
        for p in &probs {
            sum_p.add_lc(&ctx, p);
        }
        let small_bits = usize::BITS - kappa.leading_zeros() + 1;
        let low_bound = (BigInt::one() << l) - BigInt::from(kappa as u64) + BigInt::one();
        let mut lower = sum_p.clone();
        lower.add_term(
            &ctx,
            zf,
            ctx.from_biguint(&(num_bigint::BigUint::one() << l)),
        );
        lower.add_term(&ctx, Wire(0), ctx.neg(ctx.from_bigint(&low_bound)));
        gadgets::enforce_nonneg(b, &lower, small_bits)?;
        let mut upper = Lc::constant(ctx.from_biguint(&(num_bigint::BigUint::one() << l)));
        for &(wi, co) in &sum_p.0 {
            upper.add_term(&ctx, Wire(wi), ctx.neg(co));
        }
        gadgets::enforce_nonneg(b, &upper, l + 1)?;

        // one-hot targets from the public class index
        let y_lc = &publics.y[i];
        let mut e = Vec::with_capacity(kappa);
        let mut onehot = Vec::with_capacity(kappa);
        for (c, p) in probs.iter().enumerate() {
            let mut diff = y_lc.clone();
            diff.add_term(&ctx, Wire(0), ctx.neg(ctx.from_u64(c as u64)));
            let (flag, _) = gadgets::is_zero(b, &diff)?;
            onehot.push(flag);
            let mut e_c = p.clone();
            e_c.add_term(&ctx, flag, ctx.neg(lift_l));
            e.push(e_c);
        }
        // ip = (sum e_c p_c) >> l
        let (ip_full, _) = gadgets::inner_product(b, &e, &probs)?;
        let (ip, _) = gadgets::truncate_to(b, &Lc::single(ip_full, &ctx), l)?;
        let ip_lc = Lc::single(ip, &ctx);
        let mut drow = Vec::with_capacity(kappa);
        for c in 0..kappa {
            let mut a_c = e[c].clone();
            for &(wi, co) in &ip_lc.0 {
                a_c.add_term(&ctx, Wire(wi), ctx.neg(co));
            }
            let bt_full = b.mul(&t_row[c], &a_c, "nn.bt")?;
            let (bt, _) = gadgets::truncate_to(b, &Lc::single(bt_full, &ctx), l)?;
            // dz = floor((2 bt << 2l) / divisor)
            let dividend = Lc::wire(bt, ctx.from_u64(2));
            let q = {
                let v = if b.has_values() {
                    let dv = lc_val(b, &dividend).ok_or(Error::MissingAssignment(0))?;
                    let dvr = lc_val(b, &divisor).ok_or(Error::MissingAssignment(0))?;
                    Some(ctx.from_bigint(&BigInt::div_floor(&(dv << (2 * l)), &dvr)))
                } else {
                    None
                };
                Lc::single(b.new_wire(Visibility::Witness, v)?, &ctx)
            };
            gadgets::division_check(b, &dividend, &divisor, &q, 2 * l, range2l)?;
            drow.push(q);
        }
        deltas.push(drow);
    }

    // backward: gradient sums at 2l per layer, delta propagation at l
    let mut grads_w: Vec<Vec<Vec<Lc>>> = Vec::with_capacity(layers);
    let mut grads_b: Vec<Vec<Lc>> = Vec::with_capacity(layers);
    for li in 0..layers {
        grads_w.push(vec![vec![Lc::zero(); shape[li + 1]]; shape[li]]);
        grads_b.push(vec![Lc::zero(); shape[li + 1]]);
    }
    let mut cur = deltas;
    for li in (0..layers).rev() {
        let (n_in, n_out) = (shape[li], shape[li + 1]);
        // dW = A^T delta as a Freivald-checked product (n_in x batch)(batch x n_out)
        let a_t: Vec<Vec<Lc>> = (0..n_in)
            .map(|j| (0..batch).map(|i| acts[li][i][j].clone()).collect())
            .collect();
        let dw = matmul_witness(b, &a_t, &cur, &next_r(n_out)?)?;
        for j in 0..n_in {
            for k in 0..n_out {
                grads_w[li][j][k] = dw[j][k].clone();
            }
        }
        for k in 0..n_out {
            let mut acc = Lc::zero();
            for drow in &cur {
                for &(wi, co) in &drow[k].0 {
                    acc.add_term(&ctx, Wire(wi), ctx.mul(co, lift_l));
                }
            }
            grads_b[li][k] = acc;
        }
        if li == 0 {
            break;
        }
        // dA = delta W^T, truncate, activation-derivative chain
        let w_t: Vec<Vec<Lc>> = (0..n_out)
            .map(|k| (0..n_in).map(|j| weight(li, j, k).clone()).collect())
            .collect();
        let da = matmul_witness(b, &cur, &w_t, &next_r(n_in)?)?;
        let dat = truncate_all(b, &da, l)?;
        let mut prev = Vec::with_capacity(batch);
        for i in 0..batch {
            let mut row = Vec::with_capacity(n_in);
            for j in 0..n_in {
                let chain = match params.activation {
                    Activation::Square => {
                        // 2 t * dA
                        let two_t = pre[li - 1][i][j].scaled(&ctx, ctx.from_u64(2));
                        let prod = b.mul(&two_t, &dat[i][j], "nn.dact")?;
                        let (t, _) = gadgets::truncate_to(b, &Lc::single(prod, &ctx), l)?;
                        Lc::single(t, &ctx)
                    }
                    Activation::Sigmoid => {
                        let tc = &clamped[li - 1][i][j];
                        let (c3, c1, _) = params.sigmoid.coefficients(l);
                        let sq = b.mul(tc, tc, "nn.dsig.sq")?;
                        let (t2, _) = gadgets::truncate_to(b, &Lc::single(sq, &ctx), l)?;
                        let mut dp_full = Lc::wire(t2, ctx.from_bigint(&(BigInt::from(3) * &c3)));
                        dp_full.add_term(&ctx, Wire(0), ctx.from_bigint(&(&c1 << l)));
                        let (dp, _) = gadgets::truncate_to(b, &dp_full, l)?;
                        let prod = b.mul(&Lc::single(dp, &ctx), &dat[i][j], "nn.dsig")?;
                        let (t, _) = gadgets::truncate_to(b, &Lc::single(prod, &ctx), l)?;
                        Lc::single(t, &ctx)
                    }
                };
                row.push(chain);
            }
            prev.push(row);
        }
        cur = prev;
    }

    // updates at 3l in canonical parameter order
    let neg_c = ctx.neg(ctx.from_bigint(&params.alpha_over_b));
    let lift_2l = ctx.from_biguint(&(num_bigint::BigUint::one() << (2 * l)));
    let mut updates = Vec::with_capacity(lay.total);
    for li in 0..layers {
        for j in 0..shape[li] {
            for k in 0..shape[li + 1] {
                let mut upd = weight(li, j, k).scaled(&ctx, lift_2l);
                for &(wi, co) in &grads_w[li][j][k].0 {
                    upd.add_term(&ctx, Wire(wi), ctx.mul(co, neg_c));
                }
                gadgets::truncate_to(b, &upd, 2 * l)?;
                updates.push(upd);
            }
        }
        for k in 0..shape[li + 1] {
            let mut upd = bias(li, k).scaled(&ctx, lift_2l);
            for &(wi, co) in &grads_b[li][k].0 {
                upd.add_term(&ctx, Wire(wi), ctx.mul(co, neg_c));
            }
            gadgets::truncate_to(b, &upd, 2 * l)?;
            updates.push(upd);
        }
    }
    Ok(updates)
}
