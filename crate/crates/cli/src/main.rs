//! Single binary driving the whole workflow: train with identifiers and
//! checkpoints, sample challenges, prove and verify iterations, settle the
//! hash-locked exchange, and reproduce the evaluation curves.
//!
//! Exit codes: 0 success/Accept, 2 Reject, 3 malformed input or config.

mod bench;
mod taskfile;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use taskfile::TaskFile;
use veriml_core::backend::Proof;
use veriml_core::commitment::Commitment;
use veriml_core::models::ModelState;
use veriml_core::payment::{self, Ledger};
use veriml_core::prng::PinnedPrng;
use veriml_core::protocol::{
    self, sampling, Challenge, CheckpointStore, IterationProof, RejectReason, Transcript,
    TranscriptItem, Verdict,
};

#[derive(Parser)]
#[command(
    name = "veriml",
    about = "verifiable outsourced ML training at desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the training task, emitting model, commitment, and checkpoints.
    Train {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fault-injection harness: forge-identifiers:<frac>,
        /// skip-iterations:<frac>, or reorder-batches.
        #[arg(long)]
        tamper: Option<String>,
        /// Randomness seed for the tamper harness.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Draw challenge indices from a received commitment.
    Challenge {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        commitment: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Explicit challenge count; otherwise derived from --confidence.
        #[arg(long)]
        challenges: Option<usize>,
        #[arg(long, default_value_t = 0.99)]
        confidence: f64,
        /// Assumed genuine fraction when sizing the sample.
        #[arg(long, default_value_t = 0.7)]
        t_frac: f64,
        /// Client challenge randomness.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Produce per-challenge proofs and the transcript skeleton.
    Prove {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long)]
        challenges: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// wrong-prev-state or all-zero-state.
        #[arg(long)]
        tamper: Option<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Proof backend; the transparent re-execution backend is standard.
        #[arg(long, default_value = "re-execution")]
        backend: String,
    },
    /// Verify a transcript against the commitment; exit 0 Accept, 2 Reject.
    Verify {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long)]
        transcript: PathBuf,
        /// Proof backend; the transparent re-execution backend is standard.
        #[arg(long, default_value = "re-execution")]
        backend: String,
    },
    /// Settle the fair exchange for an accepted transcript.
    Exchange {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long, default_value_t = 100)]
        fee: u64,
        #[arg(long, default_value_t = 20)]
        timeout: u64,
        /// Server-side key randomness.
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
    /// Advance the ledger's logical clock.
    Tick {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long, default_value_t = 1)]
        by: u64,
    },
    /// Reproduce an evaluation curve as CSV.
    Bench {
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        frac_bits: u32,
        #[arg(long, default_value_t = 50)]
        interval: u64,
        /// Field name or decimal prime; VERIML_FIELD overrides the default.
        #[arg(long)]
        field: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train {
            task,
            out,
            tamper,
            seed,
        } => cmd_train(&task, &out, tamper.as_deref(), seed),
        Command::Challenge {
            task,
            commitment,
            out,
            challenges,
            confidence,
            t_frac,
            seed,
        } => cmd_challenge(
            &task,
            &commitment,
            &out,
            challenges,
            confidence,
            t_frac,
            seed,
        ),
        Command::Prove {
            task,
            artifacts,
            challenges,
            out,
            tamper,
            jobs,
            backend,
        } => {
            check_backend(&backend)?;
            cmd_prove(
                &task,
                &artifacts,
                &challenges,
                &out,
                tamper.as_deref(),
                jobs,
            )
        }
        Command::Verify {
            task,
            artifacts,
            transcript,
            backend,
        } => {
            check_backend(&backend)?;
            cmd_verify(&task, &artifacts, &transcript)
        }
        Command::Exchange {
            task,
            artifacts,
            transcript,
            ledger,
            fee,
            timeout,
            seed,
        } => cmd_exchange(&task, &artifacts, &transcript, &ledger, fee, timeout, seed),
        Command::Tick { ledger, by } => cmd_tick(&ledger, by),
        Command::Bench {
            experiment,
            out,
            frac_bits,
            interval,
            field,
        } => {
            if let Some(f) = field {
                std::env::set_var("VERIML_FIELD", f);
            }
            bench::run(&experiment, out.as_deref(), frac_bits, interval)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn check_backend(name: &str) -> Result<()> {
    if name != "re-execution" {
        bail!("unknown proof backend {name:?}; available: re-execution");
    }
    Ok(())
}

fn sha256(bytes: &[u8]) -> [u8; 32] {
    use sha2::Digest;
    sha2::Sha256::digest(bytes).into()
}

fn load_task(path: &Path) -> Result<(TaskFile, veriml_core::dataio::Dataset)> {
    let mut tf = TaskFile::load(path)?;
    let ds = tf.resolve()?;
    Ok((tf, ds))
}

fn parse_tamper(s: &str) -> Result<(String, f64)> {
    match s.split_once(':') {
        Some((name, frac)) => Ok((name.to_string(), frac.parse().context("tamper fraction")?)),
        None => Ok((s.to_string(), 0.0)),
    }
}

fn cmd_train(task: &Path, out: &Path, tamper: Option<&str>, seed: u64) -> Result<ExitCode> {
    let (tf, ds) = load_task(task)?;
    let mut result = if let Some(t) = tamper {
        let (name, frac) = parse_tamper(t)?;
        match name.as_str() {
            "reorder-batches" => {
                // train against a schedule the client never agreed to
                let mut cheat = tf.spec.clone();
                cheat.shared_seed ^= 0x5a5a_5a5a;
                protocol::server_train(&cheat, &ds)?
            }
            "forge-identifiers" | "skip-iterations" => {
                let mut r = protocol::server_train(&tf.spec, &ds)?;
                let n = r.commitment.identifiers.len();
                let forged = ((n as f64) * frac).round() as usize;
                let mut prng = PinnedPrng::new(seed, b"tamper-forge");
                let picks = prng.sample_distinct(n as u64, forged.min(n));
                for &i in &picks {
                    let mut digest = [0u8; 32];
                    prng.fill_bytes(&mut digest);
                    r.commitment.identifiers[i as usize].digest = digest;
                }
                r
            }
            other => bail!("unknown train tamper mode {other:?}"),
        }
    } else {
        protocol::server_train(&tf.spec, &ds)?
    };
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("task.json"), serde_json::to_string_pretty(&tf)?)?;
    result.final_state.iteration = result.iterations;
    std::fs::write(out.join("model.json"), result.final_state.to_json()?)?;
    std::fs::write(
        out.join("commitment.txt"),
        result.commitment.to_file_string(),
    )?;
    let ckpt_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;
    for (i, state) in &result.checkpoints.states {
        std::fs::write(ckpt_dir.join(format!("ckpt-{i}.json")), state.to_json()?)?;
    }
    std::fs::write(
        out.join("checkpoints.json"),
        serde_json::to_string(&result.checkpoints.interval)?,
    )?;
    println!("N={}", result.iterations);
    Ok(ExitCode::SUCCESS)
}

type Artifacts = (
    TaskFile,
    veriml_core::dataio::Dataset,
    Commitment,
    CheckpointStore,
);

fn load_artifacts(task: &Path, artifacts: &Path) -> Result<Artifacts> {
    let (tf, ds) = load_task(task)?;
    let commitment = Commitment::from_file_string(
        &std::fs::read_to_string(artifacts.join("commitment.txt")).context("commitment file")?,
    )?;
    let interval: u64 = serde_json::from_str(
        &std::fs::read_to_string(artifacts.join("checkpoints.json")).context("checkpoint meta")?,
    )?;
    let mut store = CheckpointStore::new(interval);
    let ckpt_dir = artifacts.join("checkpoints");
    if ckpt_dir.is_dir() {
        for entry in std::fs::read_dir(&ckpt_dir)? {
            let path = entry?.path();
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            if let Some(num) = name.strip_prefix("ckpt-") {
                let i: u64 = num.parse().context("checkpoint index")?;
                store
                    .states
                    .insert(i, ModelState::from_json(&std::fs::read_to_string(&path)?)?);
            }
        }
    }
    Ok((tf, ds, commitment, store))
}

fn cmd_challenge(
    task: &Path,
    commitment: &Path,
    out: &Path,
    challenges: Option<usize>,
    confidence: f64,
    t_frac: f64,
    seed: u64,
) -> Result<ExitCode> {
    let (_tf, _ds) = load_task(task)?;
    let commitment = Commitment::from_file_string(&std::fs::read_to_string(commitment)?)?;
    let n = commitment.claimed_iterations;
    let c = match challenges {
        Some(c) => c,
        None => {
            // size against a large claimed run; insensitive to N for N >> c
            let c = sampling::required_challenges(n.max(100_000), t_frac, confidence)? as usize;
            c.min(n as usize)
        }
    };
    let challenge = protocol::client_sample_challenges(n, c, seed)?;
    std::fs::write(out, serde_json::to_string_pretty(&challenge)?)?;
    println!("c={c}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_prove(
    task: &Path,
    artifacts: &Path,
    challenges: &Path,
    out: &Path,
    tamper: Option<&str>,
    jobs: usize,
) -> Result<ExitCode> {
    let (tf, ds, commitment, store) = load_artifacts(task, artifacts)?;
    let challenge: Challenge = serde_json::from_str(&std::fs::read_to_string(challenges)?)?;
    let digest = sha256(commitment.to_file_string().as_bytes());
    let params = protocol::iter_params(&tf.spec, &ds, Some(digest))?;
    std::fs::create_dir_all(out)?;

    let tamper_mode = tamper.map(parse_tamper).transpose()?;
    let prove_one = |i: u64| -> Result<IterationProof> {
        match tamper_mode.as_ref().map(|(n, _)| n.as_str()) {
            Some("wrong-prev-state") => {
                // substitute a neighboring state; internally consistent, but
                // the identifiers disagree with the commitment
                let spec = &tf.spec;
                let wrong_i = if i > 1 { i - 1 } else { i + 1 };
                let (mut inputs, _) = protocol::iteration_witness(spec, &store, &ds, wrong_i)?;
                let (real_inputs, _) = protocol::iteration_witness(spec, &store, &ds, i)?;
                inputs.x = real_inputs.x;
                inputs.y = real_inputs.y;
                inputs.t_iter = i;
                inputs.nonce_prev = real_inputs.nonce_prev;
                inputs.nonce_cur = real_inputs.nonce_cur;
                prove_from_inputs(spec, &params, i, inputs)
            }
            Some("all-zero-state") => {
                let (mut inputs, _) = protocol::iteration_witness(&tf.spec, &store, &ds, i)?;
                for w in &mut inputs.w_in {
                    *w = num_bigint::BigInt::ZERO;
                }
                if let Ok(p) = prove_from_inputs(&tf.spec, &params, i, inputs) {
                    return Ok(p);
                }
                // the authenticity bound is unwitnessable; emit a
                // structurally-valid but unsatisfying proof so the client
                // can observe the rejection
                let honest = protocol::server_prove_iteration(&tf.spec, &store, &ds, &params, i)?;
                let mut proof = honest.proof.clone();
                for fe in proof.payload.iter_mut().take(64) {
                    *fe = veriml_core::field::Fe::ZERO;
                }
                Ok(IterationProof { proof, ..honest })
            }
            Some(other) => bail!("unknown prove tamper mode {other:?}"),
            None => Ok(protocol::server_prove_iteration(
                &tf.spec, &store, &ds, &params, i,
            )?),
        }
    };

    let indices = challenge.indices.clone();
    let proofs: Vec<IterationProof> = if jobs > 1 {
        let chunks: Vec<Vec<u64>> = indices
            .chunks(indices.len().div_ceil(jobs))
            .map(|c| c.to_vec())
            .collect();
        let mut collected: Vec<IterationProof> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .iter()
                .map(|chunk| {
                    scope.spawn(|| {
                        chunk
                            .iter()
                            .map(|&i| prove_one(i))
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().map_err(|_| anyhow!("prover thread panicked"))?)
                .collect::<Result<Vec<_>>>()
        })?
        .into_iter()
        .flatten()
        .collect();
        collected.sort_by_key(|p| p.iteration);
        collected
    } else {
        indices
            .iter()
            .map(|&i| prove_one(i))
            .collect::<Result<Vec<_>>>()?
    };

    let mut items = Vec::with_capacity(proofs.len());
    for p in &proofs {
        let proof_file = format!("proof-{}.bin", p.iteration);
        let circuit = rebuild_circuit_for(&params, p.iteration)?;
        std::fs::write(out.join(&proof_file), p.proof.to_bytes(&circuit))?;
        items.push(TranscriptItem {
            iteration: p.iteration,
            id_prev: hex::encode(p.id_prev.digest),
            id_cur: hex::encode(p.id_cur.digest),
            proof_file,
        });
    }
    let transcript = Transcript {
        task_id: tf.spec.task_id.clone(),
        commitment_file: artifacts.join("commitment.txt").display().to_string(),
        challenges: challenge.indices.clone(),
        items,
        verdict: None,
    };
    std::fs::write(out.join("transcript.json"), transcript.to_json()?)?;
    println!("proofs={}", proofs.len());
    Ok(ExitCode::SUCCESS)
}

fn prove_from_inputs(
    spec: &veriml_core::protocol::TaskSpec,
    params: &veriml_core::circuits::IterParams,
    i: u64,
    inputs: veriml_core::circuits::IterationInputs,
) -> Result<IterationProof> {
    use veriml_core::backend::{ProofBackend, ReExecutionBackend};
    let ctx = spec.field.ctx()?;
    let l = spec.config.frac_bits;
    let id_prev = veriml_core::commitment::identifier_from_preimage(
        &veriml_core::fixedpoint::FixedPoint {
            raw: inputs.s_prev.clone(),
            frac_bits: 2 * l,
        },
        &inputs.nonce_prev,
        i - 1,
        &ctx,
    )?;
    // run the native step from the tampered inputs so the witness is at
    // least internally consistent where possible
    let state = veriml_core::models::ModelState {
        kind: spec.config.algorithm,
        iteration: i - 1,
        frac_bits: l,
        dims: vec![inputs.w_in.len()],
        params: inputs
            .w_in
            .iter()
            .map(|r| veriml_core::fixedpoint::FixedPoint {
                raw: r.clone(),
                frac_bits: l,
            })
            .collect(),
        tree: None,
        sigmoid: Some(spec.config.sigmoid),
    };
    let y = match spec.config.algorithm {
        veriml_core::models::ModelKind::Kmeans => veriml_core::models::BatchLabels::None,
        veriml_core::models::ModelKind::Linreg => veriml_core::models::BatchLabels::Real(
            inputs
                .y
                .iter()
                .map(|r| veriml_core::fixedpoint::FixedPoint {
                    raw: r.clone(),
                    frac_bits: l,
                })
                .collect(),
        ),
        veriml_core::models::ModelKind::Svm => veriml_core::models::BatchLabels::Class(
            inputs
                .y
                .iter()
                .map(|r| (r > &num_bigint::BigInt::ZERO) as u32)
                .collect(),
        ),
        _ => veriml_core::models::BatchLabels::Class(
            inputs
                .y
                .iter()
                .map(|r| num_traits::ToPrimitive::to_u32(r).unwrap_or(0))
                .collect(),
        ),
    };
    let x: Vec<Vec<veriml_core::fixedpoint::FixedPoint>> = inputs
        .x
        .iter()
        .map(|row| {
            row.iter()
                .map(|r| veriml_core::fixedpoint::FixedPoint {
                    raw: r.clone(),
                    frac_bits: l,
                })
                .collect()
        })
        .collect();
    let out = veriml_core::models::step(&state, &x, &y, &spec.config, i)?;
    let mut inputs = inputs;
    inputs.w_out = out.next.params.iter().map(|p| p.raw.clone()).collect();
    let (id_cur, _) = veriml_core::commitment::identifier(
        &out.untruncated,
        &params.coeffs,
        spec.shared_seed,
        i,
        l,
        &ctx,
    )?;
    let mut p = params.clone();
    if p.algorithm == veriml_core::models::ModelKind::Dtree {
        p.tree_position = i as usize - 1;
    }
    let built = veriml_core::circuits::build_iteration(
        &p,
        Some((&inputs, &id_prev.digest, &id_cur.digest)),
    )?;
    let backend = ReExecutionBackend;
    let (ek, _) = backend.keygen(&built.circuit, spec.security_lambda)?;
    let proof = backend.prove(&ek, &built.circuit, built.assignment.as_ref().unwrap())?;
    Ok(IterationProof {
        iteration: i,
        id_prev,
        id_cur,
        proof,
    })
}

fn rebuild_circuit_for(
    params: &veriml_core::circuits::IterParams,
    iteration: u64,
) -> Result<veriml_core::r1cs::Circuit> {
    let mut p = params.clone();
    if p.algorithm == veriml_core::models::ModelKind::Dtree {
        p.tree_position = iteration as usize - 1;
    }
    Ok(veriml_core::circuits::build_iteration(&p, None)?.circuit)
}

fn cmd_verify(task: &Path, artifacts: &Path, transcript_path: &Path) -> Result<ExitCode> {
    let (tf, ds, commitment, _store) = load_artifacts(task, artifacts)?;
    let mut transcript = Transcript::from_json(
        &std::fs::read_to_string(transcript_path).context("transcript file")?,
    )?;
    let digest = sha256(commitment.to_file_string().as_bytes());
    let params = protocol::iter_params(&tf.spec, &ds, Some(digest))?;
    let dir = transcript_path.parent().unwrap_or(Path::new("."));
    let mut proofs = Vec::with_capacity(transcript.items.len());
    for item in &transcript.items {
        let circuit = rebuild_circuit_for(&params, item.iteration)?;
        let bytes = std::fs::read(dir.join(&item.proof_file)).context("proof file")?;
        let proof = Proof::from_bytes(&bytes, &circuit)?;
        let parse32 = |s: &str| -> Result<[u8; 32]> {
            hex::decode(s)?
                .try_into()
                .map_err(|_| anyhow!("bad digest length"))
        };
        proofs.push(IterationProof {
            iteration: item.iteration,
            id_prev: veriml_core::commitment::Identifier {
                digest: parse32(&item.id_prev)?,
                iteration: item.iteration - 1,
            },
            id_cur: veriml_core::commitment::Identifier {
                digest: parse32(&item.id_cur)?,
                iteration: item.iteration,
            },
            proof,
        });
    }
    let challenge = Challenge {
        indices: transcript.challenges.clone(),
        count: transcript.challenges.len(),
    };
    let verdict = protocol::client_verify(&tf.spec, &ds, &commitment, &challenge, &proofs)?;
    transcript.verdict = Some(verdict.clone());
    std::fs::write(transcript_path, transcript.to_json()?)?;
    match verdict {
        Verdict::Accept => {
            println!("verdict=accept");
            Ok(ExitCode::SUCCESS)
        }
        Verdict::Reject { iteration, reason } => {
            let why = match reason {
                RejectReason::ProofInvalid => "proof-invalid",
                RejectReason::CommitmentMismatch => "commitment-mismatch",
            };
            println!("verdict=reject iteration={iteration} reason={why}");
            Ok(ExitCode::from(2))
        }
    }
}

fn cmd_exchange(
    task: &Path,
    artifacts: &Path,
    transcript_path: &Path,
    ledger_path: &Path,
    fee: u64,
    timeout: u64,
    seed: u64,
) -> Result<ExitCode> {
    let (_tf, _ds) = load_task(task)?;
    let transcript = Transcript::from_json(&std::fs::read_to_string(transcript_path)?)?;
    match transcript.verdict {
        Some(Verdict::Accept) => {}
        other => bail!("exchange requires an Accept verdict, found {other:?}"),
    }
    let model = ModelState::from_json(&std::fs::read_to_string(artifacts.join("model.json"))?)?;
    let mut ledger = if ledger_path.exists() {
        Ledger::from_json(&std::fs::read_to_string(ledger_path)?)?
    } else {
        Ledger::with_accounts(&[("client", 1000), ("server", 0)])
    };
    // server encrypts the canonical model bytes under a fresh key
    let mut key = [0u8; 32];
    PinnedPrng::new(seed, b"delivery-key").fill_bytes(&mut key);
    let plaintext = model.canonical_bytes();
    let ciphertext = payment::encrypt_delivery(&key, &plaintext);
    let lock = payment::key_digest(&key);
    std::fs::write(artifacts.join("delivery.bin"), &ciphertext)?;
    std::fs::write(
        artifacts.join("delivery.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "hash_lock": hex::encode(lock),
            "model_digest": hex::encode(model.digest()),
            "bytes": ciphertext.len(),
        }))?,
    )?;
    // client escrows the fee; server redeems with the preimage
    let deadline = ledger.clock + timeout;
    let tx = payment::post_escrow(&mut ledger, "client", "server", lock, fee, deadline)?;
    let redeemed = payment::redeem(&mut ledger, tx, &key)?;
    if !redeemed {
        bail!("redeem with the correct preimage failed");
    }
    // the published preimage decrypts the delivery; sanity-check the binding
    let recovered = payment::decrypt_delivery(&key, &ciphertext);
    if recovered != plaintext {
        bail!("delivery decryption mismatch");
    }
    std::fs::write(ledger_path, ledger.to_json()?)?;
    println!(
        "settled fee={fee} server_balance={} client_balance={}",
        ledger.balance("server"),
        ledger.balance("client")
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_tick(ledger_path: &Path, by: u64) -> Result<ExitCode> {
    let mut ledger = Ledger::from_json(&std::fs::read_to_string(ledger_path)?)?;
    ledger.tick(by);
    std::fs::write(ledger_path, ledger.to_json()?)?;
    println!("clock={}", ledger.clock);
    Ok(ExitCode::SUCCESS)
}
