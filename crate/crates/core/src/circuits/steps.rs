//! Step subcircuits for the non-NN algorithms. Each returns the flattened
//! untruncated update LCs at the algorithm's committed scale, mirroring the
//! native schedule bit for bit.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::One;

use super::{IterParams, PublicWires};
use crate::error::{Error, Result};
use crate::gadgets::{self, AlphaMode};
use crate::models::svm::{isqrt, radius_raw};
use crate::r1cs::{Builder, Lc, Visibility, Wire};

fn lc_sub(b: &Builder, lhs: &Lc, rhs: &Lc) -> Lc {
    let ctx = b.field();
    let mut out = lhs.clone();
    for &(w, c) in &rhs.0 {
        out.add_term(ctx, Wire(w), ctx.neg(c));
    }
    out
}

/// Allocate a witness wire whose value is a function of already-assigned LCs.
fn alloc_from<F: FnOnce(&Builder) -> Option<BigInt>>(b: &mut Builder, f: F) -> Result<Wire> {
    let v = if b.has_values() {
        let raw = f(b).ok_or(Error::MissingAssignment(0))?;
        Some(b.field().from_bigint(&raw))
    } else {
        None
    };
    b.new_wire(Visibility::Witness, v)
}

pub(super) fn linreg(
    b: &mut Builder,
    params: &IterParams,
    publics: &PublicWires,
    w_in: &[Lc],
) -> Result<Vec<Lc>> {
    let out = gadgets::sgd_linreg_step(
        b,
        w_in,
        &publics.x,
        &publics.y,
        AlphaMode::Constant(params.alpha_over_b.clone()),
        params.l,
    )?;
    Ok(out.updates)
}

/// Clamp a scale-l LC into [-5, 5]: two comparisons and two selects.
pub(super) fn clamp_pm5(b: &mut Builder, z: &Lc, params: &IterParams) -> Result<Lc> {
    let ctx = b.field().clone();
    let l = params.l;
    let bound = BigInt::from(5) << l;
    let bits = params.value_bits(l) + 1;
    let hi = Lc::constant(ctx.from_bigint(&bound));
    let lo = Lc::constant(ctx.from_bigint(&-&bound));
    let (below_hi, _) = gadgets::compare_leq(b, z, &hi, bits)?;
    let (capped, _) = gadgets::select(b, below_hi, z, &hi)?;
    let (above_lo, _) = gadgets::compare_leq(b, &lo, &capped, bits)?;
    let (clamped, _) = gadgets::select(b, above_lo, &capped, &lo)?;
    Ok(clamped)
}

pub(super) fn logreg(
    b: &mut Builder,
    params: &IterParams,
    publics: &PublicWires,
    w_in: &[Lc],
) -> Result<Vec<Lc>> {
    let ctx = b.field().clone();
    let l = params.l;
    let d = w_in.len();
    let mut grads: Vec<Lc> = vec![Lc::zero(); d];
    for (xi, yi) in publics.x.iter().zip(&publics.y) {
        let (z, _) = gadgets::inner_product(b, xi, w_in)?; // 2l
        let (zt, _) = gadgets::truncate_to(b, &Lc::single(z, &ctx), l)?; // l
        let clamped = clamp_pm5(b, &Lc::single(zt, &ctx), params)?;
        let (p, _) = gadgets::sigmoid_poly(b, &clamped, params.sigmoid, l)?; // l
        let mut resid = Lc::single(p, &ctx); // l
        let lift = ctx.from_biguint(&(num_bigint::BigUint::one() << l));
        for &(wi, co) in &yi.0 {
            resid.add_term(&ctx, Wire(wi), ctx.neg(ctx.mul(co, lift)));
        }
        for (j, xij) in xi.iter().enumerate() {
            let t = b.mul(&resid, xij, "logreg.grad")?; // 2l
            grads[j].add_term(&ctx, t, ctx.one());
        }
    }
    let mut updates = Vec::with_capacity(d);
    let w_lift = ctx.from_biguint(&(num_bigint::BigUint::one() << (2 * l)));
    let neg_c = ctx.neg(ctx.from_bigint(&params.alpha_over_b));
    for j in 0..d {
        let mut upd = w_in[j].scaled(&ctx, w_lift);
        for &(wi, co) in &grads[j].0 {
            upd.add_term(&ctx, Wire(wi), ctx.mul(co, neg_c));
        }
        // bind the truncated next state like the native step
        gadgets::truncate_to(b, &upd, 2 * l)?;
        updates.push(upd);
    }
    Ok(updates)
}

pub(super) fn svm(
    b: &mut Builder,
    params: &IterParams,
    publics: &PublicWires,
    w_in: &[Lc],
) -> Result<Vec<Lc>> {
    let ctx = b.field().clone();
    let l = params.l;
    let d = w_in.len();
    let t_wire = publics
        .t_iter
        .clone()
        .ok_or(Error::Protocol("svm needs t".into()))?;
    let one_2l = BigInt::one() << (2 * l);
    let bits2l = params.value_bits(2 * l);

    // q1 = floor(2^2l / t): shrink factor numerator
    let q1 = alloc_from(b, |b| {
        super::value_to_bigint(b, &t_wire).map(|t| &one_2l / t)
    })?;
    let q1_lc = Lc::single(q1, &ctx);
    gadgets::division_check(
        b,
        &Lc::constant(ctx.from_bigint(&one_2l)),
        &t_wire,
        &q1_lc,
        0,
        bits2l,
    )?;
    // q2 = floor(2^3l / (lambda t b)): eta over batch
    let divisor2 = t_wire.scaled(
        &ctx,
        ctx.from_bigint(&(&params.lambda_raw * params.batch as u64)),
    );
    let q2 = alloc_from(b, |b| {
        super::value_to_bigint(b, &divisor2).map(|dv| (BigInt::one() << (3 * l)) / dv)
    })?;
    let q2_lc = Lc::single(q2, &ctx);
    gadgets::division_check(
        b,
        &Lc::constant(ctx.from_bigint(&(BigInt::one() << (2 * l)))),
        &divisor2,
        &q2_lc,
        l,
        bits2l + l,
    )?;

    // margins and the indicator set
    let mut gsum: Vec<Lc> = vec![Lc::zero(); d];
    for (xi, yi) in publics.x.iter().zip(&publics.y) {
        let (ip, _) = gadgets::inner_product(b, xi, w_in)?; // 2l
        let m = b.mul(&Lc::single(ip, &ctx), yi, "svm.margin")?; // 2l
        let hi = Lc::constant(ctx.from_bigint(&(&one_2l - BigInt::one())));
        let (ind, _) = gadgets::compare_leq(b, &Lc::single(m, &ctx), &hi, bits2l + 1)?;
        let a = b.mul(&Lc::single(ind, &ctx), yi, "svm.sel")?; // {-1,0,1}
        for (j, xij) in xi.iter().enumerate() {
            let t = b.mul(&Lc::single(a, &ctx), xij, "svm.gterm")?; // l
            gsum[j].add_term(&ctx, t, ctx.one());
        }
    }

    // upd = w (2^2l - q1) + q2 gsum at 3l, truncated to l
    let mut wp = Vec::with_capacity(d);
    let mut shrink = Lc::constant(ctx.from_bigint(&one_2l));
    shrink.add_term(&ctx, q1, ctx.neg(ctx.one()));
    for j in 0..d {
        let sh = b.mul(&w_in[j], &shrink, "svm.shrink")?; // 3l
        let g2 = b.mul(&q2_lc, &gsum[j], "svm.gscale")?; // 3l
        let mut upd = Lc::single(sh, &ctx);
        upd.add_term(&ctx, g2, ctx.one());
        let (w, _) = gadgets::truncate_to(b, &upd, 2 * l)?;
        wp.push(Lc::single(w, &ctx));
    }

    // projection onto the 1/sqrt(lambda) ball
    let (norm2, _) = gadgets::inner_product(b, &wp, &wp)?; // 2l
    let norm2_lc = Lc::single(norm2, &ctx);
    let s = alloc_from(b, |b| {
        super::value_to_bigint(b, &norm2_lc).map(|n| isqrt(&n))
    })?;
    let s_lc = Lc::single(s, &ctx);
    gadgets::sqrt_check(b, &norm2_lc, &s_lc, bits2l)?;
    let lam_fp = crate::fixedpoint::FixedPoint {
        raw: params.lambda_raw.clone(),
        frac_bits: l,
    };
    let r_const = radius_raw(&lam_fp, l);
    let (inside, _) =
        gadgets::compare_leq(b, &s_lc, &Lc::constant(ctx.from_bigint(&r_const)), bits2l)?;
    // guarded divisor: s + inside is never zero
    let mut div_guard = s_lc.clone();
    div_guard.add_term(&ctx, inside, ctx.one());
    let r_shift = &r_const << l;
    let f = alloc_from(b, |b| {
        super::value_to_bigint(b, &div_guard).map(|dv| BigInt::div_floor(&r_shift, &dv))
    })?;
    let f_lc = Lc::single(f, &ctx);
    gadgets::division_check(
        b,
        &Lc::constant(ctx.from_bigint(&r_const)),
        &div_guard,
        &f_lc,
        l,
        bits2l,
    )?;
    let mut out = Vec::with_capacity(d);
    for wj in &wp {
        let scaled_full = b.mul(wj, &f_lc, "svm.proj")?; // 2l
        let (scaled, _) = gadgets::truncate_to(b, &Lc::single(scaled_full, &ctx), l)?;
        let (sel, _) = gadgets::select(b, inside, wj, &Lc::single(scaled, &ctx))?;
        out.push(sel);
    }
    Ok(out)
}

pub(super) fn kmeans(
    b: &mut Builder,
    params: &IterParams,
    publics: &PublicWires,
    w_in: &[Lc],
) -> Result<Vec<Lc>> {
    let ctx = b.field().clone();
    let l = params.l;
    let k = params.k_clusters;
    let d = params.feat_dim;
    let bits2l = params.value_bits(2 * l) + 2;
    let mut counts: Vec<Lc> = vec![Lc::zero(); k];
    let mut sums: Vec<Lc> = vec![Lc::zero(); k * d];
    for xi in &publics.x {
        let mut dists = Vec::with_capacity(k);
        for c in 0..k {
            let diffs: Vec<Lc> = (0..d)
                .map(|j| lc_sub(b, &xi[j], &w_in[c * d + j]))
                .collect();
            let (dist, _) = gadgets::inner_product(b, &diffs, &diffs)?; // 2l
            dists.push(Lc::single(dist, &ctx));
        }
        let cand = alloc_from(b, |b| {
            dists
                .iter()
                .map(|dl| super::value_to_bigint(b, dl))
                .collect::<Option<Vec<_>>>()
                .map(|v| v.into_iter().min().unwrap())
        })?;
        let cand_lc = Lc::single(cand, &ctx);
        let closest = gadgets::closest_distance_check(b, &dists, &cand_lc, bits2l)?;
        for (c, hot) in closest.one_hot.iter().enumerate() {
            counts[c].add_lc(&ctx, hot);
            for j in 0..d {
                let t = b.mul(hot, &xi[j], "kmeans.sum")?;
                sums[c * d + j].add_term(&ctx, t, ctx.one());
            }
        }
    }
    let mut out = Vec::with_capacity(k * d);
    let div_bits = params.value_bits(l) + 1;
    for c in 0..k {
        let (zf, _) = gadgets::is_zero(b, &counts[c])?;
        let mut divisor = counts[c].clone();
        divisor.add_term(&ctx, zf, ctx.one());
        for j in 0..d {
            let q = alloc_from(b, |b| {
                match (
                    super::value_to_bigint(b, &sums[c * d + j]),
                    super::value_to_bigint(b, &divisor),
                ) {
                    (Some(s), Some(dv)) => Some(BigInt::div_floor(&s, &dv)),
                    _ => None,
                }
            })?;
            let q_lc = Lc::single(q, &ctx);
            gadgets::division_check(b, &sums[c * d + j], &divisor, &q_lc, 0, div_bits)?;
            let (sel, _) = gadgets::select(b, zf, &w_in[c * d + j], &q_lc)?;
            out.push(sel);
        }
    }
    Ok(out)
}

/// One tree partition at the baked node position: the children histograms
/// enter as fresh witnesses from the partition output, must sum to the
/// parent slice of the input state, and replace the children slots in the
/// committed output.
pub(super) fn tree(
    b: &mut Builder,
    params: &IterParams,
    w_in: &[Lc],
    data: Option<&super::IterationInputs>,
) -> Result<Vec<Lc>> {
    let ctx = b.field().clone();
    let per = params.tree_per_node;
    let p = params.tree_position;
    let (lch, rch) = (2 * p + 1, 2 * p + 2);
    if (rch + 1) * per > w_in.len() {
        return Err(Error::TaskConfig("tree position out of range".into()));
    }
    let mut left = Vec::with_capacity(per);
    let mut right = Vec::with_capacity(per);
    for side in [lch, rch] {
        for off in 0..per {
            let v = match data {
                Some(d) => Some(crate::fixedpoint::raw_to_field(
                    &d.w_out[side * per + off],
                    &ctx,
                )?),
                None => None,
            };
            let w = b.new_wire(Visibility::Witness, v)?;
            if side == lch {
                left.push(Lc::single(w, &ctx));
            } else {
                right.push(Lc::single(w, &ctx));
            }
        }
    }
    let parent: Vec<Lc> = (0..per).map(|off| w_in[p * per + off].clone()).collect();
    gadgets::histogram_sum_check(b, &parent, &left, &right)?;
    let mut out = w_in.to_vec();
    for off in 0..per {
        out[lch * per + off] = left[off].clone();
        out[rch * per + off] = right[off].clone();
    }
    Ok(out)
}
