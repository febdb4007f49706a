//! Circuit/native equivalence: a circuit evaluated on the prover assignment
//! with the *natively computed* identifiers as public outputs is satisfied
//! exactly when the in-circuit schedule reproduces the native one bit for
//! bit, so satisfaction doubles as the bit-exactness oracle.

use num_bigint::{BigInt, BigUint};

use super::*;
use crate::commitment::{self, CoefficientVector};
use crate::field::FieldConfig;
use crate::fixedpoint::FixedPoint;
use crate::models::{
    self, Activation, BatchLabels, ModelKind, ModelState, SigmoidKind, TrainConfig,
};
use crate::prng::PinnedPrng;

fn base_cfg(kind: ModelKind, l: u32, b: usize) -> TrainConfig {
    TrainConfig {
        algorithm: kind,
        frac_bits: l,
        batch_size: b,
        alpha: FixedPoint::from_raw(1i64 << (l - 2), l),
        conv_threshold: None,
        max_epochs: 1,
        int_budget: 16,
        lambda: FixedPoint::from_raw(1i64 << (l - 4), l),
        k_clusters: 3,
        k_bins: 4,
        max_depth: 2,
        nn_hidden: vec![4, 3],
        num_classes: 2,
        sigmoid: SigmoidKind::Remez,
        activation: Activation::Square,
    }
}

struct Fixture {
    params: IterParams,
    inputs: IterationInputs,
    id_prev: [u8; 32],
    id_cur: [u8; 32],
}

fn params_for(
    cfg: &TrainConfig,
    state_len: usize,
    feat_dim: usize,
    coeffs: CoefficientVector,
) -> IterParams {
    IterParams {
        field: FieldConfig::default_254bit(),
        algorithm: cfg.algorithm,
        l: cfg.frac_bits,
        int_budget: cfg.int_budget,
        state_len,
        feat_dim,
        batch: cfg.batch_size,
        coeffs,
        strict_tolerance: false,
        alpha_over_b: cfg.alpha_over_b_raw(),
        lambda_raw: cfg.lambda.raw.clone(),
        k_clusters: cfg.k_clusters,
        nn_shape: Vec::new(),
        activation: cfg.activation,
        sigmoid: cfg
            .sigmoid
            .variant()
            .unwrap_or(crate::gadgets::SigmoidVariant::Remez),
        freivald_r: Vec::new(),
        tree_position: 0,
        tree_per_node: 0,
        tree_depth: 0,
    }
}

/// Build a plausible previous iteration so the authenticity chain is honest:
/// random untruncated previous output, its truncation as the input state.
fn previous_iteration(
    prng: &mut PinnedPrng,
    kind: ModelKind,
    state_len: usize,
    l: u32,
    coeffs: &CoefficientVector,
    shared_seed: u64,
) -> (Vec<BigInt>, BigInt, [u8; 32]) {
    let u_scale = models::untrunc_scale(kind, l);
    let spread = u_scale + 2; // keep real values small
    let untrunc: Vec<FixedPoint> = (0..state_len)
        .map(|_| {
            let mag = BigInt::from(prng.next_below_u64(1u64 << (spread.min(60))) as i64)
                - BigInt::from(1i64 << (spread.min(60) - 1));
            FixedPoint {
                raw: mag,
                frac_bits: u_scale,
            }
        })
        .collect();
    let w_in: Vec<BigInt> = untrunc
        .iter()
        .map(|u| crate::fixedpoint::truncate(u, if kind == ModelKind::Dtree { 0 } else { l }).raw)
        .collect();
    let sum = commitment::weighted_sum(&untrunc, coeffs).unwrap();
    let pre = commitment::commit_preimage(&sum, l);
    let ctx = FieldConfig::default_254bit().ctx().unwrap();
    let id =
        commitment::identifier_from_preimage(&pre, &commitment::nonce(shared_seed, 0), 0, &ctx)
            .unwrap();
    (w_in, pre.raw, id.digest)
}

fn run_native_and_ids(
    cfg: &TrainConfig,
    state: &ModelState,
    x: &[Vec<FixedPoint>],
    y: &BatchLabels,
    coeffs: &CoefficientVector,
    shared_seed: u64,
    t_iter: u64,
) -> (models::StepOutput, [u8; 32]) {
    let out = models::step(state, x, y, cfg, t_iter).unwrap();
    let ctx = FieldConfig::default_254bit().ctx().unwrap();
    let (id, _) = commitment::identifier(
        &out.untruncated,
        coeffs,
        shared_seed,
        t_iter,
        cfg.frac_bits,
        &ctx,
    )
    .unwrap();
    (out, id.digest)
}

fn rand_features(prng: &mut PinnedPrng, b: usize, d: usize, l: u32) -> Vec<Vec<FixedPoint>> {
    (0..b)
        .map(|_| {
            (0..d)
                .map(|_| FixedPoint::from_raw(prng.next_below_u64(1u64 << l) as i64, l))
                .collect()
        })
        .collect()
}

fn linear_fixture(kind: ModelKind, seed: u64) -> Fixture {
    let l = 12u32;
    let d = 4usize;
    let b = 3usize;
    let cfg = base_cfg(kind, l, b);
    let mut prng = PinnedPrng::new(seed, b"fixture");
    let coeffs = commitment::gen_coefficients(seed, d, l, cfg.int_budget);
    let shared_seed = seed.wrapping_add(7);
    let (w_in, s_prev, id_prev) = previous_iteration(&mut prng, kind, d, l, &coeffs, shared_seed);
    let x = rand_features(&mut prng, b, d, l);
    let (y, yb) = match kind {
        ModelKind::Linreg => {
            let ys: Vec<FixedPoint> = (0..b)
                .map(|_| FixedPoint::from_raw(prng.next_below_u64(1u64 << l) as i64, l))
                .collect();
            (
                ys.iter().map(|v| v.raw.clone()).collect::<Vec<_>>(),
                BatchLabels::Real(ys),
            )
        }
        ModelKind::Svm => {
            let cls: Vec<u32> = (0..b).map(|_| (prng.next_u64() & 1) as u32).collect();
            (
                cls.iter()
                    .map(|&c| BigInt::from(models::svm::to_pm1(c)))
                    .collect(),
                BatchLabels::Class(cls),
            )
        }
        _ => {
            let cls: Vec<u32> = (0..b).map(|_| (prng.next_u64() & 1) as u32).collect();
            (
                cls.iter().map(|&c| BigInt::from(c as i64)).collect(),
                BatchLabels::Class(cls),
            )
        }
    };
    let state = ModelState {
        kind,
        iteration: 0,
        frac_bits: l,
        dims: vec![d],
        params: w_in
            .iter()
            .map(|r| FixedPoint {
                raw: r.clone(),
                frac_bits: l,
            })
            .collect(),
        tree: None,
        sigmoid: Some(cfg.sigmoid),
    };
    let t_iter = 5u64;
    let (out, id_cur) = run_native_and_ids(&cfg, &state, &x, &yb, &coeffs, shared_seed, t_iter);
    let inputs = IterationInputs {
        x: x.iter()
            .map(|r| r.iter().map(|v| v.raw.clone()).collect())
            .collect(),
        y,
        w_in,
        w_out: out.next.params.iter().map(|p| p.raw.clone()).collect(),
        s_prev,
        nonce_prev: commitment::nonce(shared_seed, 0),
        nonce_cur: commitment::nonce(shared_seed, t_iter),
        t_iter,
    };
    Fixture {
        params: params_for(&cfg, d, d, coeffs),
        inputs,
        id_prev,
        id_cur,
    }
}

fn assert_circuit_matches(fix: &Fixture) -> StepCircuit {
    let built =
        build_iteration(&fix.params, Some((&fix.inputs, &fix.id_prev, &fix.id_cur))).unwrap();
    let out = built
        .circuit
        .evaluate(built.assignment.as_ref().unwrap())
        .unwrap();
    assert!(
        out.satisfied,
        "{:?} circuit violated constraint {:?} ({})",
        fix.params.algorithm,
        out.first_violation,
        out.first_violation
            .map(|i| built.circuit.constraints()[i].label)
            .unwrap_or("")
    );
    built
}

#[test]
fn linreg_circuit_equals_native() {
    for seed in [1u64, 2, 3] {
        let fix = linear_fixture(ModelKind::Linreg, seed);
        let built = assert_circuit_matches(&fix);
        // tampered current identifier must break the digest binding
        let mut bad = fix.id_cur;
        bad[0] ^= 1;
        let rebuilt =
            build_iteration(&fix.params, Some((&fix.inputs, &fix.id_prev, &bad))).unwrap();
        let out = rebuilt
            .circuit
            .evaluate(rebuilt.assignment.as_ref().unwrap())
            .unwrap();
        assert!(!out.satisfied);
        // client-side structure agrees bit for bit
        let client = build_iteration(&fix.params, None).unwrap();
        assert_eq!(client.circuit.digest(), built.circuit.digest());
        assert_eq!(client.layout, built.layout);
    }
}

#[test]
fn logreg_circuit_equals_native() {
    for variant in [SigmoidKind::Remez, SigmoidKind::Taylor] {
        let mut fix = linear_fixture(ModelKind::Logreg, 11);
        // rebuild the fixture under the requested variant
        let l = 12;
        let mut cfg = base_cfg(ModelKind::Logreg, l, 3);
        cfg.sigmoid = variant;
        let mut prng = PinnedPrng::new(11, b"fixture");
        let coeffs = commitment::gen_coefficients(11, 4, l, cfg.int_budget);
        let shared = 18u64;
        let (w_in, s_prev, id_prev) =
            previous_iteration(&mut prng, ModelKind::Logreg, 4, l, &coeffs, shared);
        let x = rand_features(&mut prng, 3, 4, l);
        let cls: Vec<u32> = (0..3).map(|_| (prng.next_u64() & 1) as u32).collect();
        let state = ModelState {
            kind: ModelKind::Logreg,
            iteration: 0,
            frac_bits: l,
            dims: vec![4],
            params: w_in
                .iter()
                .map(|r| FixedPoint {
                    raw: r.clone(),
                    frac_bits: l,
                })
                .collect(),
            tree: None,
            sigmoid: Some(variant),
        };
        let (out, id_cur) = run_native_and_ids(
            &cfg,
            &state,
            &x,
            &BatchLabels::Class(cls.clone()),
            &coeffs,
            shared,
            1,
        );
        fix.params = params_for(&cfg, 4, 4, coeffs);
        fix.inputs = IterationInputs {
            x: x.iter()
                .map(|r| r.iter().map(|v| v.raw.clone()).collect())
                .collect(),
            y: cls.iter().map(|&c| BigInt::from(c as i64)).collect(),
            w_in,
            w_out: out.next.params.iter().map(|p| p.raw.clone()).collect(),
            s_prev,
            nonce_prev: commitment::nonce(shared, 0),
            nonce_cur: commitment::nonce(shared, 1),
            t_iter: 1,
        };
        fix.id_prev = id_prev;
        fix.id_cur = id_cur;
        assert_circuit_matches(&fix);
    }
}

#[test]
fn svm_circuit_equals_native() {
    let fix = linear_fixture(ModelKind::Svm, 23);
    assert_circuit_matches(&fix);
}

#[test]
fn all_zero_input_state_attack_is_unsatisfiable() {
    let fix = linear_fixture(ModelKind::Linreg, 4);
    let mut forged = fix.inputs.clone();
    forged.w_in = vec![BigInt::ZERO; forged.w_in.len()];
    // the authenticity range proof cannot witness the oversized difference
    let err = build_iteration(&fix.params, Some((&forged, &fix.id_prev, &fix.id_cur)));
    assert!(err.is_err(), "all-zero state must be rejected");
}

#[test]
fn wrong_previous_state_breaks_some_check() {
    let fix = linear_fixture(ModelKind::Linreg, 9);
    let mut forged = fix.inputs.clone();
    // bump one coordinate far beyond the tolerance
    forged.w_in[0] += BigInt::from(1i64) << 40;
    let res = build_iteration(&fix.params, Some((&forged, &fix.id_prev, &fix.id_cur)));
    match res {
        Err(_) => {}
        Ok(built) => {
            let out = built
                .circuit
                .evaluate(built.assignment.as_ref().unwrap())
                .unwrap();
            assert!(!out.satisfied);
        }
    }
}

#[test]
fn kmeans_circuit_equals_native() {
    let l = 12u32;
    let (k, d, b) = (3usize, 2usize, 4usize);
    let mut cfg = base_cfg(ModelKind::Kmeans, l, b);
    cfg.k_clusters = k;
    let mut prng = PinnedPrng::new(31, b"kmeans-fix");
    let state_len = k * d;
    let coeffs = commitment::gen_coefficients(31, state_len, l, cfg.int_budget);
    let shared = 44u64;
    // centroids within [0,1] like normalized data
    let untrunc: Vec<FixedPoint> = (0..state_len)
        .map(|_| FixedPoint::from_raw(prng.next_below_u64(1u64 << l) as i64, l))
        .collect();
    let w_in: Vec<BigInt> = untrunc.iter().map(|u| u.raw.clone()).collect();
    let sum = commitment::weighted_sum(&untrunc, &coeffs).unwrap();
    let pre = commitment::commit_preimage(&sum, l);
    let ctx = FieldConfig::default_254bit().ctx().unwrap();
    let id_prev =
        commitment::identifier_from_preimage(&pre, &commitment::nonce(shared, 0), 0, &ctx)
            .unwrap()
            .digest;
    let x = rand_features(&mut prng, b, d, l);
    let state = ModelState {
        kind: ModelKind::Kmeans,
        iteration: 0,
        frac_bits: l,
        dims: vec![k, d],
        params: untrunc.clone(),
        tree: None,
        sigmoid: None,
    };
    let (out, id_cur) =
        run_native_and_ids(&cfg, &state, &x, &BatchLabels::None, &coeffs, shared, 1);
    let mut params = params_for(&cfg, state_len, d, coeffs);
    params.k_clusters = k;
    let inputs = IterationInputs {
        x: x.iter()
            .map(|r| r.iter().map(|v| v.raw.clone()).collect())
            .collect(),
        y: Vec::new(),
        w_in,
        w_out: out.next.params.iter().map(|p| p.raw.clone()).collect(),
        s_prev: pre.raw,
        nonce_prev: commitment::nonce(shared, 0),
        nonce_cur: commitment::nonce(shared, 1),
        t_iter: 1,
    };
    let fix = Fixture {
        params,
        inputs,
        id_prev,
        id_cur,
    };
    assert_circuit_matches(&fix);
}

#[test]
fn nn_circuit_equals_native() {
    let l = 12u32;
    let shape = vec![3usize, 4, 3, 2];
    let b = 2usize;
    let mut cfg = base_cfg(ModelKind::Nn, l, b);
    cfg.nn_hidden = vec![4, 3];
    cfg.num_classes = 2;
    for activation in [Activation::Square, Activation::Sigmoid] {
        cfg.activation = activation;
        let lay = models::nn::layout(&shape);
        let mut prng = PinnedPrng::new(61, b"nn-fix");
        let coeffs = commitment::gen_coefficients(61, lay.total, l, cfg.int_budget);
        let shared = 77u64;
        let (w_in, s_prev, id_prev) =
            previous_iteration(&mut prng, ModelKind::Nn, lay.total, l, &coeffs, shared);
        let x = rand_features(&mut prng, b, shape[0], l);
        let cls: Vec<u32> = (0..b).map(|_| (prng.next_u64() & 1) as u32).collect();
        let state = ModelState {
            kind: ModelKind::Nn,
            iteration: 0,
            frac_bits: l,
            dims: shape.clone(),
            params: w_in
                .iter()
                .map(|r| FixedPoint {
                    raw: r.clone(),
                    frac_bits: l,
                })
                .collect(),
            tree: None,
            sigmoid: Some(cfg.sigmoid),
        };
        let (out, id_cur) = run_native_and_ids(
            &cfg,
            &state,
            &x,
            &BatchLabels::Class(cls.clone()),
            &coeffs,
            shared,
            1,
        );
        let mut params = params_for(&cfg, lay.total, shape[0], coeffs);
        params.nn_shape = shape.clone();
        // deterministic challenge vectors, as the protocol would derive them
        let ctx = FieldConfig::default_254bit().ctx().unwrap();
        let mut rp = PinnedPrng::new(5, b"freivald-test");
        params.freivald_r = freivald_lengths(&shape)
            .into_iter()
            .map(|n| {
                (0..n)
                    .map(|_| {
                        let mut bytes = [0u8; 16];
                        rp.fill_bytes(&mut bytes);
                        ctx.from_biguint(&BigUint::from_bytes_le(&bytes))
                    })
                    .collect()
            })
            .collect();
        let inputs = IterationInputs {
            x: x.iter()
                .map(|r| r.iter().map(|v| v.raw.clone()).collect())
                .collect(),
            y: cls.iter().map(|&c| BigInt::from(c as i64)).collect(),
            w_in,
            w_out: out.next.params.iter().map(|p| p.raw.clone()).collect(),
            s_prev,
            nonce_prev: commitment::nonce(shared, 0),
            nonce_cur: commitment::nonce(shared, 1),
            t_iter: 1,
        };
        let fix = Fixture {
            params,
            inputs,
            id_prev,
            id_cur,
        };
        assert_circuit_matches(&fix);
    }
}

#[test]
fn tree_circuit_equals_native() {
    let l = 8u32;
    let mut cfg = base_cfg(ModelKind::Dtree, l, 1);
    cfg.max_depth = 2;
    cfg.k_bins = 2;
    let ds =
        crate::dataio::parse_csv("0.1,0\n0.2,0\n0.8,1\n0.9,1\n0.3,0\n0.7,1\n", 1, l, "t").unwrap();
    let hist = crate::dataio::bucketize(&ds, 2).unwrap();
    let labels = match &ds.labels {
        crate::dataio::Labels::Class(v) => v.clone(),
        _ => panic!(),
    };
    let trace =
        models::tree::build(&hist, &labels, &cfg, models::tree::SplitCriterion::Gini).unwrap();
    let dims = models::tree::tree_dims(&cfg, &hist);
    let state_len = dims.nodes * dims.per_node;
    let coeffs = commitment::gen_coefficients(3, state_len, l, cfg.int_budget);
    let shared = 91u64;
    let ctx = FieldConfig::default_254bit().ctx().unwrap();
    // identifiers over the partition trace
    let mut prev_state = trace.initial.clone();
    let mut prev_pre = {
        let sum = commitment::weighted_sum(&prev_state.params, &coeffs).unwrap();
        commitment::commit_preimage(&sum, l)
    };
    let mut prev_id =
        commitment::identifier_from_preimage(&prev_pre, &commitment::nonce(shared, 0), 0, &ctx)
            .unwrap()
            .digest;
    for (i, step_out) in trace.states.iter().enumerate() {
        let iter = i as u64 + 1;
        let (id_cur, pre_cur) = {
            let sum = commitment::weighted_sum(&step_out.untruncated, &coeffs).unwrap();
            let pre = commitment::commit_preimage(&sum, l);
            let id = commitment::identifier_from_preimage(
                &pre,
                &commitment::nonce(shared, iter),
                iter,
                &ctx,
            )
            .unwrap();
            (id.digest, pre)
        };
        let mut params = params_for(&cfg, state_len, 0, coeffs.clone());
        params.batch = 0;
        params.tree_position = i;
        params.tree_per_node = dims.per_node;
        params.tree_depth = cfg.max_depth;
        let inputs = IterationInputs {
            x: Vec::new(),
            y: Vec::new(),
            w_in: prev_state.params.iter().map(|p| p.raw.clone()).collect(),
            w_out: step_out.next.params.iter().map(|p| p.raw.clone()).collect(),
            s_prev: prev_pre.raw.clone(),
            nonce_prev: commitment::nonce(shared, i as u64),
            nonce_cur: commitment::nonce(shared, iter),
            t_iter: iter,
        };
        let fix = Fixture {
            params,
            inputs,
            id_prev: prev_id,
            id_cur,
        };
        assert_circuit_matches(&fix);
        prev_state = step_out.next.clone();
        prev_pre = pre_cur;
        prev_id = id_cur;
    }
}

#[test]
#[ignore]
fn profile_build_and_eval() {
    let fix = linear_fixture(ModelKind::Linreg, 1);
    let t0 = std::time::Instant::now();
    let built =
        build_iteration(&fix.params, Some((&fix.inputs, &fix.id_prev, &fix.id_cur))).unwrap();
    let t1 = std::time::Instant::now();
    let out = built
        .circuit
        .evaluate(built.assignment.as_ref().unwrap())
        .unwrap();
    let t2 = std::time::Instant::now();
    assert!(out.satisfied);
    println!(
        "constraints={} wires={} build={:?} eval={:?}",
        built.circuit.count().constraints,
        built.circuit.wires().len(),
        t1 - t0,
        t2 - t1
    );
    // repeat builds to see steady-state cost
    let t3 = std::time::Instant::now();
    for _ in 0..5 {
        let b2 =
            build_iteration(&fix.params, Some((&fix.inputs, &fix.id_prev, &fix.id_cur))).unwrap();
        b2.circuit
            .evaluate(b2.assignment.as_ref().unwrap())
            .unwrap();
    }
    println!("5x build+eval: {:?}", std::time::Instant::now() - t3);
}

#[test]
fn randomized_step_subcircuits_equal_native_models() {
    // per-algorithm randomized (state, batch) pairs: the step subcircuit's
    // untruncated outputs equal the native trainer exactly (identifier
    // plumbing exercised separately by the full-circuit tests)
    let l = 10u32;
    let d = 3usize;
    let batch = 2usize;
    let mut prng = PinnedPrng::new(31337, b"step-equiv");
    let rand_fp =
        |p: &mut PinnedPrng| -> i64 { (p.next_below_u64(1 << (l + 2)) as i64) - (1 << (l + 1)) };
    let rand_pos = |p: &mut PinnedPrng| -> i64 { p.next_below_u64(1 << l) as i64 };
    for kind in [ModelKind::Logreg, ModelKind::Svm, ModelKind::Kmeans] {
        let mut cfg = base_cfg(kind, l, batch);
        cfg.k_clusters = 2;
        for trial in 0..34u64 {
            let state_len = match kind {
                ModelKind::Kmeans => cfg.k_clusters * d,
                _ => d,
            };
            let w: Vec<i64> = (0..state_len)
                .map(|_| if kind == ModelKind::Kmeans { rand_pos(&mut prng) } else { rand_fp(&mut prng) })
                .collect();
            let xs: Vec<Vec<i64>> =
                (0..batch).map(|_| (0..d).map(|_| rand_pos(&mut prng)).collect()).collect();
            let cls: Vec<u32> = (0..batch).map(|_| (prng.next_u64() & 1) as u32).collect();
            let t_iter = 1 + trial % 9;

            let state = ModelState {
                kind,
                iteration: 0,
                frac_bits: l,
                dims: if kind == ModelKind::Kmeans { vec![cfg.k_clusters, d] } else { vec![d] },
                params: w.iter().map(|&r| FixedPoint::from_raw(r, l)).collect(),
                tree: None,
                sigmoid: Some(cfg.sigmoid),
            };
            let bx: Vec<Vec<FixedPoint>> = xs
                .iter()
                .map(|r| r.iter().map(|&v| FixedPoint::from_raw(v, l)).collect())
                .collect();
            let by = match kind {
                ModelKind::Kmeans => BatchLabels::None,
                _ => BatchLabels::Class(cls.clone()),
            };
            let native = models::step(&state, &bx, &by, &cfg, t_iter).unwrap();

            let mut params = params_for(&cfg, state_len, d, commitment::gen_coefficients(1, state_len, l, 16));
            params.k_clusters = cfg.k_clusters;
            let mut b =
                crate::r1cs::Builder::new(FieldConfig::default_254bit(), "step-equiv", true).unwrap();
            let ctx = b.field().clone();
            let mut wit = |b: &mut crate::r1cs::Builder, v: BigInt| {
                crate::r1cs::Lc::single(
                    b.new_wire(crate::r1cs::Visibility::Witness, Some(ctx.from_bigint(&v))).unwrap(),
                    &ctx,
                )
            };
            let x_lcs: Vec<Vec<crate::r1cs::Lc>> = xs
                .iter()
                .map(|r| r.iter().map(|&v| wit(&mut b, BigInt::from(v))).collect())
                .collect();
            let y_lcs: Vec<crate::r1cs::Lc> = match kind {
                ModelKind::Kmeans => Vec::new(),
                ModelKind::Svm => cls
                    .iter()
                    .map(|&c| wit(&mut b, BigInt::from(models::svm::to_pm1(c))))
                    .collect(),
                _ => cls.iter().map(|&c| wit(&mut b, BigInt::from(c as i64))).collect(),
            };
            let t_lc = wit(&mut b, BigInt::from(t_iter));
            let w_lcs: Vec<crate::r1cs::Lc> =
                w.iter().map(|&v| wit(&mut b, BigInt::from(v))).collect();
            let publics = PublicWires {
                x: x_lcs,
                y: y_lcs,
                t_iter: Some(t_lc),
                nonce_prev: Vec::new(),
                nonce_cur: Vec::new(),
                id_prev: Vec::new(),
                id_cur: Vec::new(),
                layout: PublicLayout {
                    x_wires: 0,
                    y_wires: 0,
                    iter_wires: 0,
                    nonce_bits: 0,
                    digest_chunk_bits: 0,
                    digest_chunks: 0,
                },
            };
            let out = match kind {
                ModelKind::Logreg => steps::logreg(&mut b, &params, &publics, &w_lcs).unwrap(),
                ModelKind::Svm => steps::svm(&mut b, &params, &publics, &w_lcs).unwrap(),
                ModelKind::Kmeans => steps::kmeans(&mut b, &params, &publics, &w_lcs).unwrap(),
                _ => unreachable!(),
            };
            for (lc, fp) in out.iter().zip(&native.untruncated) {
                assert_eq!(
                    super::value_to_bigint(&b, lc).unwrap(),
                    fp.raw,
                    "{kind:?} trial {trial}"
                );
            }
            let (circ, ass) = b.freeze();
            assert!(circ.evaluate(&ass.unwrap()).unwrap().satisfied, "{kind:?} trial {trial}");
        }
    }
}
