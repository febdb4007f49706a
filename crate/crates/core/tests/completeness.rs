//! End-to-end completeness as a property: honest server plus honest client
//! yields Accept for every algorithm across randomized task configurations.

use sha2::Digest;
use veriml_core::dataio::{synth_with, SynthKind};
use veriml_core::field::FieldConfig;
use veriml_core::fixedpoint::FixedPoint;
use veriml_core::models::{Activation, ModelKind, SigmoidKind, TrainConfig};
use veriml_core::prng::PinnedPrng;
use veriml_core::protocol::{self, TaskSpec, Verdict};

fn random_spec(kind: ModelKind, rng: &mut PinnedPrng, ds_digest: String) -> TaskSpec {
    let l = [10u32, 12, 16][rng.next_below_u64(3) as usize];
    let batch = [3usize, 4, 5][rng.next_below_u64(3) as usize];
    TaskSpec {
        task_id: format!("prop-{kind:?}"),
        config: TrainConfig {
            algorithm: kind,
            frac_bits: l,
            batch_size: batch,
            alpha: FixedPoint::from_raw(1i64 << (l - 2 - rng.next_below_u64(2) as u32), l),
            conv_threshold: None,
            max_epochs: 1 + rng.next_below_u64(2) as usize,
            int_budget: 16,
            lambda: FixedPoint::from_raw(1i64 << (l - 4), l),
            k_clusters: 2 + rng.next_below_u64(2) as usize,
            k_bins: 3 + rng.next_below_u64(2) as usize,
            max_depth: 2,
            nn_hidden: vec![3 + rng.next_below_u64(2) as usize],
            num_classes: 2,
            sigmoid: if rng.next_u64() & 1 == 0 {
                SigmoidKind::Remez
            } else {
                SigmoidKind::Taylor
            },
            activation: if rng.next_u64() & 1 == 0 {
                Activation::Square
            } else {
                Activation::Sigmoid
            },
        },
        dataset_digest: ds_digest,
        shared_seed: rng.next_u64(),
        client_seed: rng.next_u64(),
        interval: 2 + rng.next_below_u64(4),
        field: FieldConfig::default_254bit(),
        strict_tolerance: false,
        security_lambda: 128,
    }
}

#[test]
fn honest_parties_accept_over_randomized_tasks() {
    let mut rng = PinnedPrng::new(2718, b"completeness");
    let kinds = [
        ModelKind::Linreg,
        ModelKind::Logreg,
        ModelKind::Svm,
        ModelKind::Kmeans,
        ModelKind::Nn,
        ModelKind::Dtree,
    ];
    for (round, &kind) in kinds.iter().enumerate() {
        let seed = 100 + round as u64;
        let data_kind = match kind {
            ModelKind::Linreg => SynthKind::Regression,
            ModelKind::Kmeans => SynthKind::Blobs,
            ModelKind::Dtree => SynthKind::Multiclass,
            _ => SynthKind::Binary,
        };
        let mut spec_probe = random_spec(kind, &mut rng, String::new());
        let ds = synth_with(data_kind, 30, 3, seed, spec_probe.config.frac_bits, 0.03).unwrap();
        spec_probe.dataset_digest = hex::encode(ds.digest);
        let spec = spec_probe;
        let out = protocol::server_train(&spec, &ds).unwrap();
        assert!(out.iterations >= 1);
        let digest: [u8; 32] =
            sha2::Sha256::digest(out.commitment.to_file_string().as_bytes()).into();
        let params = protocol::iter_params(&spec, &ds, Some(digest)).unwrap();
        let c = 2usize.min(out.iterations as usize);
        let challenge =
            protocol::client_sample_challenges(out.iterations, c, rng.next_u64()).unwrap();
        let proofs: Vec<_> = challenge
            .indices
            .iter()
            .map(|&i| {
                protocol::server_prove_iteration(&spec, &out.checkpoints, &ds, &params, i).unwrap()
            })
            .collect();
        let verdict =
            protocol::client_verify(&spec, &ds, &out.commitment, &challenge, &proofs).unwrap();
        assert_eq!(verdict, Verdict::Accept, "{kind:?} with spec {spec:?}");
    }
}

#[test]
fn verdict_survives_transcript_serialization() {
    // file-format round trip of the transcript shell
    let t = protocol::Transcript {
        task_id: "t".into(),
        commitment_file: "commitment.txt".into(),
        challenges: vec![1, 5, 9],
        items: vec![protocol::TranscriptItem {
            iteration: 5,
            id_prev: "ab".repeat(32),
            id_cur: "cd".repeat(32),
            proof_file: "proof-5.bin".into(),
        }],
        verdict: Some(Verdict::Reject {
            iteration: 5,
            reason: protocol::RejectReason::CommitmentMismatch,
        }),
    };
    let json = t.to_json().unwrap();
    let back = protocol::Transcript::from_json(&json).unwrap();
    assert_eq!(back.challenges, t.challenges);
    assert!(matches!(
        back.verdict,
        Some(Verdict::Reject { iteration: 5, .. })
    ));
}
