use super::*;
use crate::dataio::{synth_with, SynthKind};
use crate::models::{Activation, SigmoidKind};

fn spec_for(kind: ModelKind, ds: &Dataset, seed: u64) -> TaskSpec {
    let l = 12u32;
    TaskSpec {
        task_id: format!("{kind:?}-test"),
        config: TrainConfig {
            algorithm: kind,
            frac_bits: l,
            batch_size: 4,
            alpha: FixedPoint::from_raw(1 << (l - 2), l),
            conv_threshold: None,
            max_epochs: 2,
            int_budget: 16,
            lambda: FixedPoint::from_raw(1 << (l - 4), l),
            k_clusters: 3,
            k_bins: 4,
            max_depth: 2,
            nn_hidden: vec![4],
            num_classes: 2,
            sigmoid: SigmoidKind::Remez,
            activation: Activation::Square,
        },
        dataset_digest: hex::encode(ds.digest),
        shared_seed: seed,
        client_seed: seed.wrapping_add(1),
        interval: 3,
        field: FieldConfig::default_254bit(),
        strict_tolerance: false,
        security_lambda: 128,
    }
}

fn dataset_for(kind: ModelKind, seed: u64) -> Dataset {
    let l = 12;
    match kind {
        ModelKind::Linreg => synth_with(SynthKind::Regression, 24, 3, seed, l, 0.01).unwrap(),
        ModelKind::Kmeans => synth_with(SynthKind::Blobs, 24, 3, seed, l, 0.02).unwrap(),
        ModelKind::Dtree => synth_with(SynthKind::Multiclass, 30, 3, seed, l, 0.05).unwrap(),
        _ => synth_with(SynthKind::Binary, 24, 3, seed, l, 0.05).unwrap(),
    }
}

#[test]
fn batch_schedule_deterministic_and_partitioning() {
    let (n, b) = (17usize, 4usize);
    let steps = n / b;
    let mut union = Vec::new();
    let mut batches = Vec::new();
    for s in 0..steps {
        let a = batch_indices(9, 2, s as u64, b, n).unwrap();
        let bb = batch_indices(9, 2, s as u64, b, n).unwrap();
        assert_eq!(a, bb);
        union.extend_from_slice(&a);
        batches.push(a);
    }
    validate_epoch_distinct(&batches).unwrap();
    union.sort_unstable();
    union.dedup();
    assert_eq!(union.len(), steps * b); // dropped remainder, no repeats
    assert!(batch_indices(9, 2, steps as u64, b, n).is_err());
    // a corrupted schedule trips the validator
    let mut bad = batches.clone();
    bad[1][0] = bad[0][0];
    assert!(validate_epoch_distinct(&bad).is_err());
}

#[test]
fn single_iteration_task_has_one_identifier_and_checkpoint() {
    let l = 12;
    let ds = synth_with(SynthKind::Regression, 4, 2, 5, l, 0.0).unwrap();
    let mut spec = spec_for(ModelKind::Linreg, &ds, 5);
    spec.config.batch_size = 4; // n = b, holdout collapses
    spec.config.max_epochs = 1;
    let out = server_train(&spec, &ds).unwrap();
    assert_eq!(out.iterations, 1);
    assert_eq!(out.commitment.identifiers.len(), 1);
    assert_eq!(out.checkpoints.states.len(), 1);
}

#[test]
fn infinite_threshold_stops_after_first_epoch_comparison() {
    let ds = dataset_for(ModelKind::Linreg, 7);
    let mut spec = spec_for(ModelKind::Linreg, &ds, 7);
    spec.config.max_epochs = 50;
    spec.config.conv_threshold = Some(FixedPoint::from_raw(1i64 << 40, 12));
    let out = server_train(&spec, &ds).unwrap();
    assert_eq!(out.epochs_run, 1);
}

#[test]
fn retrieval_matches_training_identifiers_exactly() {
    let ds = dataset_for(ModelKind::Linreg, 3);
    let spec = spec_for(ModelKind::Linreg, &ds, 3);
    let out = server_train(&spec, &ds).unwrap();
    let ctx = spec.field.ctx().unwrap();
    let coeffs = coefficients_for(&spec, out.final_state.params.len());
    for i in 1..=out.iterations {
        let before = retrieve_state(&out.checkpoints, i - 1, &spec, &ds).unwrap();
        let replay = run_step(&spec, &ds, &before, i).unwrap();
        let (id, _) = commitment::identifier(
            &replay.untruncated,
            &coeffs,
            spec.shared_seed,
            i,
            spec.config.frac_bits,
            &ctx,
        )
        .unwrap();
        assert_eq!(
            id.digest,
            out.commitment.get(i).unwrap().digest,
            "iteration {i}"
        );
        // checkpointed iterations replay zero steps
        if i % spec.interval == 1 {
            assert!(out.checkpoints.states.contains_key(&i));
        }
    }
}

#[test]
fn challenge_sampling_uniformity_and_edges() {
    let all = client_sample_challenges(6, 6, 1).unwrap();
    assert_eq!(all.indices, vec![1, 2, 3, 4, 5, 6]);
    let one = client_sample_challenges(100, 1, 2).unwrap();
    assert_eq!(one.indices.len(), 1);
    assert!(one.indices[0] >= 1 && one.indices[0] <= 100);
    // hit-rate within 3 sigma of c/N over many draws
    let (n, c, draws) = (20u64, 5usize, 4000u64);
    let mut hits = vec![0u64; n as usize + 1];
    for seed in 0..draws {
        for idx in client_sample_challenges(n, c, seed).unwrap().indices {
            hits[idx as usize] += 1;
        }
    }
    let p = c as f64 / n as f64;
    let sigma = (p * (1.0 - p) / draws as f64).sqrt();
    for (idx, &h) in hits.iter().enumerate().skip(1) {
        let rate = h as f64 / draws as f64;
        assert!(
            (rate - p).abs() <= 4.0 * sigma,
            "index {idx} rate {rate} vs {p}"
        );
    }
    assert!(client_sample_challenges(5, 6, 0).is_err());
}

fn end_to_end(kind: ModelKind, seed: u64) {
    let ds = dataset_for(kind, seed);
    let mut spec = spec_for(kind, &ds, seed);
    if kind == ModelKind::Nn {
        spec.config.batch_size = 3;
    }
    let out = server_train(&spec, &ds).unwrap();
    assert!(
        out.iterations >= 2,
        "{kind:?} needs at least 2 iterations for the test"
    );
    let commitment = &out.commitment;
    let digest: [u8; 32] = Sha256::digest(commitment.to_file_string().as_bytes()).into();
    let params = iter_params(&spec, &ds, Some(digest)).unwrap();
    let c = 2usize.min(out.iterations as usize);
    let challenge = client_sample_challenges(out.iterations, c, 99).unwrap();
    let proofs: Vec<IterationProof> = challenge
        .indices
        .iter()
        .map(|&i| server_prove_iteration(&spec, &out.checkpoints, &ds, &params, i).unwrap())
        .collect();
    // honest run accepts
    let verdict = client_verify(&spec, &ds, commitment, &challenge, &proofs).unwrap();
    assert_eq!(verdict, Verdict::Accept, "{kind:?}");

    // forged identifier at a challenged index: commitment mismatch. The
    // forged commitment is what the client received, so both parties derive
    // challenge randomness (and thus circuits) from it before proving.
    let mut forged = commitment.clone();
    let target = challenge.indices[0] as usize - 1;
    forged.identifiers[target].digest[0] ^= 0xff;
    let forged_digest: [u8; 32] = Sha256::digest(forged.to_file_string().as_bytes()).into();
    let forged_params = iter_params(&spec, &ds, Some(forged_digest)).unwrap();
    let proofs_forged: Vec<IterationProof> = challenge
        .indices
        .iter()
        .map(|&i| server_prove_iteration(&spec, &out.checkpoints, &ds, &forged_params, i).unwrap())
        .collect();
    match client_verify(&spec, &ds, &forged, &challenge, &proofs_forged).unwrap() {
        Verdict::Reject { iteration, reason } => {
            assert_eq!(iteration, challenge.indices[0]);
            assert_eq!(reason, RejectReason::CommitmentMismatch);
        }
        v => panic!("expected reject, got {v:?}"),
    }
}

#[test]
fn end_to_end_linreg() {
    end_to_end(ModelKind::Linreg, 11);
}

#[test]
fn end_to_end_logreg() {
    end_to_end(ModelKind::Logreg, 12);
}

#[test]
fn end_to_end_svm() {
    end_to_end(ModelKind::Svm, 13);
}

#[test]
fn end_to_end_kmeans() {
    end_to_end(ModelKind::Kmeans, 14);
}

#[test]
fn end_to_end_nn() {
    end_to_end(ModelKind::Nn, 15);
}

#[test]
fn end_to_end_dtree() {
    end_to_end(ModelKind::Dtree, 16);
}

#[test]
fn wrong_previous_state_is_detected_by_identifier_comparison() {
    let ds = dataset_for(ModelKind::Linreg, 21);
    let spec = spec_for(ModelKind::Linreg, &ds, 21);
    let out = server_train(&spec, &ds).unwrap();
    let digest: [u8; 32] = Sha256::digest(out.commitment.to_file_string().as_bytes()).into();
    let params = iter_params(&spec, &ds, Some(digest)).unwrap();
    let i = out.iterations; // challenge the last iteration
                            // a cheating server re-derives everything from a wrong previous state:
                            // internally consistent proof, but the identifiers no longer match
    let mut wrong_spec = spec.clone();
    wrong_spec.shared_seed ^= 0x5555; // different batches -> different states
    let wrong_out = server_train(&wrong_spec, &ds).unwrap();
    let forged_proof = server_prove_iteration(&wrong_spec, &wrong_out.checkpoints, &ds, &params, i);
    // the forged run still proves (completeness on its own inputs)...
    let forged_proof = forged_proof.unwrap();
    // ...but against the real commitment the client rejects
    let challenge = Challenge {
        indices: vec![i],
        count: 1,
    };
    match client_verify(
        &wrong_spec,
        &ds,
        &out.commitment,
        &challenge,
        &[forged_proof],
    )
    .unwrap()
    {
        Verdict::Reject { reason, .. } => assert_eq!(reason, RejectReason::CommitmentMismatch),
        v => panic!("expected reject, got {v:?}"),
    }
}

#[test]
fn prediction_protocol_roundtrip() {
    let ds = dataset_for(ModelKind::Linreg, 31);
    let spec = spec_for(ModelKind::Linreg, &ds, 31);
    let out = server_train(&spec, &ds).unwrap();
    // a batch of 64 predictions verified in one circuit
    let queries: Vec<Vec<FixedPoint>> = (0..64).map(|i| ds.features[i % ds.n()].clone()).collect();
    let run = prediction_prove(&spec, &ds, &out.final_state, &queries).unwrap();
    assert!(prediction_verify(&spec, &ds, &queries, &run.proof).unwrap());
    assert_eq!(run.results.len(), 64);
    // a corrupted proof payload fails
    let mut bad = run.proof.clone();
    bad.payload[0] = spec.field.ctx().unwrap().from_u64(12345);
    assert!(!prediction_verify(&spec, &ds, &queries, &bad).unwrap());
}

#[test]
fn attestation_accepts_truth_rejects_inflation() {
    let ds = dataset_for(ModelKind::Logreg, 41);
    let spec = spec_for(ModelKind::Logreg, &ds, 41);
    let out = server_train(&spec, &ds).unwrap();
    let test_x: Vec<Vec<FixedPoint>> = ds.features[0..8].to_vec();
    let test_y: Vec<u32> = match &ds.labels {
        Labels::Class(v) => v[0..8].to_vec(),
        _ => panic!(),
    };
    let (correct, _) =
        models::accuracy(&out.final_state, &test_x, &Labels::Class(test_y.clone())).unwrap();
    let run = attest_prove(&spec, &ds, &out.final_state, &test_x, &test_y, correct).unwrap();
    assert!(attest_verify(
        &spec,
        &ds,
        &test_x,
        &test_y,
        correct,
        &run.model_digest,
        &run.proof
    )
    .unwrap());
    // inflated claim is unsatisfiable at prove time
    assert!(attest_prove(&spec, &ds, &out.final_state, &test_x, &test_y, correct + 1).is_err());
    // a swapped model digest fails verification
    let mut wrong = run.model_digest;
    wrong[3] ^= 1;
    assert!(!attest_verify(&spec, &ds, &test_x, &test_y, correct, &wrong, &run.proof).unwrap());
}
