//! Prediction-service circuits (result stays witness) and the delivery
//! accuracy attestation (test-set accuracy plus in-circuit model hash).

use num_bigint::BigInt;
use num_traits::One;

use super::steps::clamp_pm5;
use super::{IterParams, PublicLayout, StepCircuit};
use crate::error::{Error, Result};
use crate::fixedpoint::raw_to_field;
use crate::gadgets::sha256::{pack_bits, sha256_digest, BitLc};
use crate::gadgets::{self};
use crate::models::{ModelKind, TreeStructure};
use crate::r1cs::{Builder, Lc, Visibility, Wire};

#[derive(Debug, Clone)]
pub struct PredictionInputs {
    pub x: Vec<Vec<BigInt>>,
    pub model: Vec<BigInt>,
    pub tree: Option<TreeStructure>,
}

fn alloc_public_x(
    b: &mut Builder,
    rows: usize,
    cols: usize,
    data: Option<&Vec<Vec<BigInt>>>,
) -> Result<Vec<Vec<Lc>>> {
    let ctx = b.field().clone();
    let mut x = Vec::with_capacity(rows);
    for i in 0..rows {
        let mut row = Vec::with_capacity(cols);
        for j in 0..cols {
            let v = match data {
                Some(d) => Some(raw_to_field(&d[i][j], &ctx)?),
                None => None,
            };
            row.push(Lc::single(b.new_wire(Visibility::PublicInput, v)?, &ctx));
        }
        x.push(row);
    }
    Ok(x)
}

fn alloc_witness_vec(b: &mut Builder, n: usize, data: Option<&Vec<BigInt>>) -> Result<Vec<Lc>> {
    let ctx = b.field().clone();
    (0..n)
        .map(|i| {
            let v = match data {
                Some(d) => Some(raw_to_field(&d[i], &ctx)?),
                None => None,
            };
            Ok(Lc::single(b.new_wire(Visibility::Witness, v)?, &ctx))
        })
        .collect()
}

fn alloc_value(b: &mut Builder, v: Option<BigInt>) -> Result<Lc> {
    let ctx = b.field().clone();
    let fe = match v {
        Some(raw) => Some(raw_to_field(&raw, &ctx)?),
        None => None,
    };
    Ok(Lc::single(b.new_wire(Visibility::Witness, fe)?, &ctx))
}

/// Forward-only circuit; the per-sample results are witness wires the
/// verifier never learns, checked for consistency with the model witness.
pub fn build_prediction(
    params: &IterParams,
    batch: usize,
    data: Option<&PredictionInputs>,
) -> Result<StepCircuit> {
    let label = format!("{:?}-prediction", params.algorithm);
    let mut b = Builder::new(params.field.clone(), &label, data.is_some())?;
    let ctx = b.field().clone();
    let l = params.l;
    let x = alloc_public_x(&mut b, batch, params.feat_dim, data.map(|d| &d.x))?;
    let model = alloc_witness_vec(&mut b, params.state_len, data.map(|d| &d.model))?;

    match params.algorithm {
        ModelKind::Linreg => {
            for xi in &x {
                let (ip, _) = gadgets::inner_product(&mut b, xi, &model)?;
                gadgets::truncate_to(&mut b, &Lc::single(ip, &ctx), l)?;
            }
        }
        ModelKind::Logreg => {
            for xi in &x {
                let (ip, _) = gadgets::inner_product(&mut b, xi, &model)?;
                let (zt, _) = gadgets::truncate_to(&mut b, &Lc::single(ip, &ctx), l)?;
                let zc = clamp_pm5(&mut b, &Lc::single(zt, &ctx), params)?;
                gadgets::sigmoid_poly(&mut b, &zc, params.sigmoid, l)?;
            }
        }
        ModelKind::Svm => {
            let bits = params.value_bits(2 * l) + 1;
            for xi in &x {
                let (ip, _) = gadgets::inner_product(&mut b, xi, &model)?;
                gadgets::compare_leq(&mut b, &Lc::zero(), &Lc::single(ip, &ctx), bits)?;
            }
        }
        ModelKind::Kmeans => {
            let (k, d) = (params.k_clusters, params.feat_dim);
            let bits = params.value_bits(2 * l) + 2;
            for xi in &x {
                let mut dists = Vec::with_capacity(k);
                for c in 0..k {
                    let diffs: Vec<Lc> = (0..d)
                        .map(|j| {
                            let mut lc = xi[j].clone();
                            for &(wi, co) in &model[c * d + j].0 {
                                lc.add_term(&ctx, Wire(wi), ctx.neg(co));
                            }
                            lc
                        })
                        .collect();
                    let (dist, _) = gadgets::inner_product(&mut b, &diffs, &diffs)?;
                    dists.push(Lc::single(dist, &ctx));
                }
                let cand_val = if b.has_values() {
                    dists
                        .iter()
                        .map(|dl| super::value_to_bigint(&b, dl))
                        .collect::<Option<Vec<_>>>()
                        .map(|v| v.into_iter().min().unwrap())
                } else {
                    None
                };
                let cand = alloc_value(&mut b, cand_val)?;
                let closest = gadgets::closest_distance_check(&mut b, &dists, &cand, bits)?;
                // cluster index as the blinded result
                let mut result = Lc::zero();
                for (c, hot) in closest.one_hot.iter().enumerate() {
                    for &(wi, co) in &hot.0 {
                        result.add_term(&ctx, Wire(wi), ctx.mul(co, ctx.from_u64(c as u64)));
                    }
                }
                b.bind_witness(&result, "kmeans.result")?;
            }
        }
        ModelKind::Nn => {
            nn_forward_prediction(&mut b, params, &x, &model)?;
        }
        ModelKind::Dtree => {
            tree_prediction(
                &mut b,
                params,
                &x,
                &model,
                data.map(|d| d.tree.as_ref()).flatten(),
            )?;
        }
    }

    let layout = PublicLayout {
        x_wires: batch * params.feat_dim,
        y_wires: 0,
        iter_wires: 0,
        nonce_bits: 0,
        digest_chunk_bits: 0,
        digest_chunks: 0,
    };
    let (circuit, assignment) = b.freeze();
    Ok(StepCircuit {
        circuit,
        layout,
        assignment,
    })
}

/// Plain-product forward pass (no Freivald: prediction has no commitment to
/// draw post-hoc randomness from), square-softmax head, witness argmax.
fn nn_forward_prediction(
    b: &mut Builder,
    params: &IterParams,
    x: &[Vec<Lc>],
    model: &[Lc],
) -> Result<()> {
    let ctx = b.field().clone();
    let l = params.l;
    let shape = &params.nn_shape;
    let layers = shape.len() - 1;
    let kappa = shape[layers];
    let lay = crate::models::nn::layout(shape);
    let lift_l = ctx.from_biguint(&(num_bigint::BigUint::one() << l));
    for xi in x {
        let mut act: Vec<Lc> = xi.to_vec();
        let mut t_last: Vec<Lc> = Vec::new();
        for li in 0..layers {
            let (n_in, n_out) = (shape[li], shape[li + 1]);
            let mut next = Vec::with_capacity(n_out);
            for k in 0..n_out {
                let col: Vec<Lc> = (0..n_in)
                    .map(|j| model[lay.w_off[li] + j * n_out + k].clone())
                    .collect();
                let (ip, _) = gadgets::inner_product(b, &act, &col)?;
                let mut z = Lc::single(ip, &ctx);
                for &(wi, co) in &model[lay.b_off[li] + k].0 {
                    z.add_term(&ctx, Wire(wi), ctx.mul(co, lift_l));
                }
                let (t, _) = gadgets::truncate_to(b, &z, l)?;
                next.push(Lc::single(t, &ctx));
            }
            if li + 1 < layers {
                let mut a_next = Vec::with_capacity(n_out);
                for t in &next {
                    match params.activation {
                        crate::models::Activation::Square => {
                            let sq = b.mul(t, t, "nnp.act")?;
                            let (a, _) = gadgets::truncate_to(b, &Lc::single(sq, &ctx), l)?;
                            a_next.push(Lc::single(a, &ctx));
                        }
                        crate::models::Activation::Sigmoid => {
                            let tc = clamp_pm5(b, t, params)?;
                            let (a, _) = gadgets::sigmoid_poly(b, &tc, params.sigmoid, l)?;
                            a_next.push(Lc::single(a, &ctx));
                        }
                    }
                }
                act = a_next;
            }
            t_last = next;
        }
        // square-softmax probabilities as witnesses
        let range2l = params.value_bits(2 * l) + 2;
        let mut denom = Lc::zero();
        let mut squares = Vec::with_capacity(kappa);
        for t in &t_last {
            let s = b.mul(t, t, "nnp.sq")?;
            denom.add_term(&ctx, s, ctx.one());
            squares.push(Lc::single(s, &ctx));
        }
        let (zf, _) = gadgets::is_zero(b, &denom)?;
        let mut divisor = denom.clone();
        divisor.add_term(&ctx, zf, ctx.one());
        let mut probs = Vec::with_capacity(kappa);
        for s in &squares {
            let v = if b.has_values() {
                let sv = super::value_to_bigint(b, s).ok_or(Error::MissingAssignment(0))?;
                let dv = super::value_to_bigint(b, &divisor).ok_or(Error::MissingAssignment(0))?;
                Some((sv << l) / dv)
            } else {
                None
            };
            let q = alloc_value(b, v)?;
            gadgets::division_check(b, s, &divisor, &q, l, range2l)?;
            probs.push(q);
        }
        // witness one-hot argmax, lowest index on ties
        let argmax = if b.has_values() {
            let vals: Option<Vec<BigInt>> =
                probs.iter().map(|p| super::value_to_bigint(b, p)).collect();
            vals.map(|v| {
                let mut best = 0usize;
                for c in 1..kappa {
                    if v[c] > v[best] {
                        best = c;
                    }
                }
                best
            })
        } else {
            None
        };
        let mut hot_sum = Lc::zero();
        let mut sel_prob = Lc::zero();
        let mut hots = Vec::with_capacity(kappa);
        for c in 0..kappa {
            let v = argmax.map(|a| if a == c { BigInt::one() } else { BigInt::ZERO });
            let hot = alloc_value(b, v)?;
            // booleanity
            let mut minus_one = hot.clone();
            minus_one.add_term(&ctx, Wire(0), ctx.neg(ctx.one()));
            b.enforce(hot.clone(), minus_one, Lc::zero(), "nnp.hotbool")?;
            hot_sum.add_lc(&ctx, &hot);
            let m = b.mul(&hot, &probs[c], "nnp.sel")?;
            sel_prob.add_term(&ctx, m, ctx.one());
            hots.push(hot);
        }
        let mut one = hot_sum.clone();
        one.add_term(&ctx, Wire(0), ctx.neg(ctx.one()));
        b.enforce_zero(one, "nnp.hotsum")?;
        // selected probability dominates every class
        for p in &probs {
            let mut gap = sel_prob.clone();
            for &(wi, co) in &p.0 {
                gap.add_term(&ctx, Wire(wi), ctx.neg(co));
            }
            gadgets::enforce_nonneg(b, &gap, l + 2)?;
        }
    }
    Ok(())
}

/// Traversal over the padded perfect tree with witness split records:
/// per internal node a feature one-hot and threshold, per leaf a label.
fn tree_prediction(
    b: &mut Builder,
    params: &IterParams,
    x: &[Vec<Lc>],
    _model: &[Lc],
    tree: Option<&TreeStructure>,
) -> Result<()> {
    let ctx = b.field().clone();
    let d = params.feat_dim;
    let depth = match tree {
        Some(t) => t.depth,
        None => params.tree_depth,
    };
    let internal = (1usize << depth) - 1;
    let leaves = 1usize << depth;
    // witness split records; dummy and leaf-like nodes route left via a
    // threshold at the top bin
    let mut feat_hot: Vec<Vec<Lc>> = Vec::with_capacity(internal);
    let mut thresholds: Vec<Lc> = Vec::with_capacity(internal);
    for p in 0..internal {
        let rec = tree.map(|t| &t.nodes[p]);
        let (f_sel, thr) = match rec {
            Some(node) => match node.split {
                Some((f, t)) => (Some(f), Some(BigInt::from(t as i64))),
                None => (Some(0), Some(BigInt::from(u32::MAX as i64))),
            },
            None => (None, None),
        };
        let mut hot_sum = Lc::zero();
        let mut hots = Vec::with_capacity(d);
        for j in 0..d {
            let v = f_sel.map(|f| if f == j { BigInt::one() } else { BigInt::ZERO });
            let hot = alloc_value(b, v)?;
            let mut minus_one = hot.clone();
            minus_one.add_term(&ctx, Wire(0), ctx.neg(ctx.one()));
            b.enforce(hot.clone(), minus_one, Lc::zero(), "treep.hotbool")?;
            hot_sum.add_lc(&ctx, &hot);
            hots.push(hot);
        }
        let mut one = hot_sum;
        one.add_term(&ctx, Wire(0), ctx.neg(ctx.one()));
        b.enforce_zero(one, "treep.hotsum")?;
        feat_hot.push(hots);
        thresholds.push(alloc_value(b, thr)?);
    }
    let mut leaf_labels = Vec::with_capacity(leaves);
    for leaf in 0..leaves {
        let v = tree.map(|t| BigInt::from(t.nodes[internal + leaf].label as i64));
        leaf_labels.push(alloc_value(b, v)?);
    }
    let bits = 40u32; // bin indices and thresholds are tiny integers
    for xi in x {
        // indicator chain down the perfect tree
        let mut ind: Vec<Lc> = vec![Lc::constant(ctx.one())];
        let mut frontier = vec![0usize];
        for _level in 0..depth {
            let mut next_ind = Vec::with_capacity(frontier.len() * 2);
            let mut next_frontier = Vec::with_capacity(frontier.len() * 2);
            for (slot, &p) in frontier.iter().enumerate() {
                // selected feature bin for node p
                let mut sel = Lc::zero();
                for j in 0..d {
                    let m = b.mul(&feat_hot[p][j], &xi[j], "treep.featsel")?;
                    sel.add_term(&ctx, m, ctx.one());
                }
                let (go_left, _) = gadgets::compare_leq(b, &sel, &thresholds[p], bits)?;
                let left = b.mul(&ind[slot], &Lc::single(go_left, &ctx), "treep.left")?;
                let mut right = ind[slot].clone();
                right.add_term(&ctx, left, ctx.neg(ctx.one()));
                next_ind.push(Lc::single(left, &ctx));
                next_ind.push(right);
                next_frontier.push(2 * p + 1);
                next_frontier.push(2 * p + 2);
            }
            ind = next_ind;
            frontier = next_frontier;
        }
        // result = sum leaf indicator * label
        let mut result = Lc::zero();
        for (leaf, indicator) in ind.iter().enumerate() {
            let m = b.mul(indicator, &leaf_labels[leaf], "treep.label")?;
            result.add_term(&ctx, m, ctx.one());
        }
        b.bind_witness(&result, "treep.result")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AttestationInputs {
    pub model: Vec<BigInt>,
}

/// Accuracy-and-hash attestation for binary classifiers: the test set is
/// public, the model is witness, the circuit re-derives the model digest
/// (over the 8-byte little-endian two's-complement raws) as a public output
/// and enforces correct-count >= claimed.
pub fn build_attestation(
    params: &IterParams,
    test_x: &[Vec<BigInt>],
    test_y: &[u32],
    claimed_correct: u64,
    data: Option<&AttestationInputs>,
) -> Result<StepCircuit> {
    if !matches!(params.algorithm, ModelKind::Logreg | ModelKind::Svm) {
        return Err(Error::TaskConfig(
            "delivery attestation covers the binary classifiers".into(),
        ));
    }
    let mut b = Builder::new(params.field.clone(), "delivery-attestation", data.is_some())?;
    let ctx = b.field().clone();
    let l = params.l;
    let chunk = super::digest_chunk_bits(&params.field)?;
    let chunks = 256usize.div_ceil(chunk);
    let x = alloc_public_x(
        &mut b,
        test_x.len(),
        params.feat_dim,
        Some(&test_x.to_vec()),
    )?;
    let mut y = Vec::with_capacity(test_y.len());
    for &yi in test_y {
        let v = Some(ctx.from_u64(yi as u64));
        y.push(Lc::single(b.new_wire(Visibility::PublicInput, v)?, &ctx));
    }
    // model digest output wires
    let digest_vals = data
        .map(|d| -> Result<Vec<crate::field::Fe>> {
            let digest = params_payload_digest_raw(&d.model);
            super::pack_digest(&digest, chunk, &params.field)
        })
        .transpose()?;
    let mut id_wires = Vec::with_capacity(chunks);
    for i in 0..chunks {
        id_wires.push(b.new_wire(Visibility::PublicOutput, digest_vals.as_ref().map(|v| v[i]))?);
    }

    let model = alloc_witness_vec(&mut b, params.state_len, data.map(|d| &d.model))?;
    let mut correct_sum = Lc::zero();
    for (xi, yi) in x.iter().zip(&y) {
        let (ip, _) = gadgets::inner_product(&mut b, xi, &model)?;
        let label: Wire = match params.algorithm {
            ModelKind::Svm => {
                let bits = params.value_bits(2 * l) + 1;
                let (flag, _) =
                    gadgets::compare_leq(&mut b, &Lc::zero(), &Lc::single(ip, &ctx), bits)?;
                flag
            }
            _ => {
                let (zt, _) = gadgets::truncate_to(&mut b, &Lc::single(ip, &ctx), l)?;
                let zc = clamp_pm5(&mut b, &Lc::single(zt, &ctx), params)?;
                let (p, _) = gadgets::sigmoid_poly(&mut b, &zc, params.sigmoid, l)?;
                let half = Lc::constant(ctx.from_biguint(&(num_bigint::BigUint::one() << (l - 1))));
                let (flag, _) = gadgets::compare_leq(&mut b, &half, &Lc::single(p, &ctx), l + 2)?;
                flag
            }
        };
        let mut diff = Lc::single(label, &ctx);
        for &(wi, co) in &yi.0 {
            diff.add_term(&ctx, Wire(wi), ctx.neg(co));
        }
        let (ok, _) = gadgets::is_zero(&mut b, &diff)?;
        correct_sum.add_term(&ctx, ok, ctx.one());
    }
    let count_bits = usize::BITS - test_x.len().leading_zeros() + 1;
    let mut gap = correct_sum.clone();
    gap.add_term(&ctx, Wire(0), ctx.neg(ctx.from_u64(claimed_correct)));
    gadgets::enforce_nonneg(&mut b, &gap, count_bits)?;

    // in-circuit model hash over the canonical raw payload
    let mut message: Vec<BitLc> = Vec::with_capacity(model.len() * 64);
    let two63 = BigInt::one() << 63;
    for m in &model {
        let mut shifted = m.clone();
        shifted.add_term(&ctx, Wire(0), ctx.from_bigint(&two63));
        let (bits, _) = gadgets::split(&mut b, &shifted, 64)?;
        for (i, w) in bits.iter().enumerate() {
            let bit = BitLc::from_wire(&b, *w);
            // flip the sign bit back: two's complement byte encoding
            message.push(if i == 63 { bit.not(&b) } else { bit });
        }
    }
    let sha = sha256_digest(&mut b, &message)?;
    let packed = pack_bits(&b, &sha.digest, chunk);
    for (lc, w) in packed.iter().zip(&id_wires) {
        let mut diff = lc.clone();
        diff.add_term(&ctx, *w, ctx.neg(ctx.one()));
        b.enforce_zero(diff, "attest.hash")?;
    }

    let layout = PublicLayout {
        x_wires: test_x.len() * params.feat_dim,
        y_wires: test_y.len(),
        iter_wires: 0,
        nonce_bits: 0,
        digest_chunk_bits: chunk,
        digest_chunks: chunks,
    };
    let (circuit, assignment) = b.freeze();
    Ok(StepCircuit {
        circuit,
        layout,
        assignment,
    })
}

/// SHA-256 over 8-byte little-endian two's-complement raw parameters; the
/// native mirror of the attestation's in-circuit hash.
pub fn params_payload_digest_raw(raws: &[BigInt]) -> [u8; 32] {
    use num_traits::ToPrimitive;
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for r in raws {
        let v = r.to_i64().expect("attested raws fit i64");
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}
