//! Protocol orchestration: server-side training with per-iteration
//! identifiers and checkpoints, state retrieval, client-side challenge
//! sampling, iteration proving/verification, the prediction service, and
//! the delivery attestation.

pub mod sampling;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

use crate::backend::{EvalKey, Proof, ProofBackend, ReExecutionBackend, VerifKey};
use crate::circuits::{
    self, build_iteration, freivald_lengths, IterParams, IterationInputs, StepCircuit,
};
use crate::commitment::{self, CoefficientVector, Commitment, Identifier};
use crate::dataio::{Dataset, Labels};
use crate::error::{Error, Result};
use crate::field::FieldConfig;
use crate::fixedpoint::FixedPoint;
use crate::models::{self, BatchLabels, ModelKind, ModelState, StepOutput, TrainConfig};
use crate::prng::PinnedPrng;

/// Everything both parties agree on before training; identical circuits and
/// batch schedules derive from this alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub config: TrainConfig,
    pub dataset_digest: String,
    /// Seed driving the shared batch shuffle and the iteration nonces.
    pub shared_seed: u64,
    /// Seed driving the client's blinding coefficients (known to both; the
    /// binding comes from the identifiers, not from secrecy).
    pub client_seed: u64,
    /// Checkpoint interval m.
    #[serde(default = "default_interval")]
    pub interval: u64,
    pub field: FieldConfig,
    #[serde(default)]
    pub strict_tolerance: bool,
    #[serde(default = "default_lambda_sec")]
    pub security_lambda: u32,
}

fn default_lambda_sec() -> u32 {
    128
}

fn default_interval() -> u64 {
    50
}

impl TaskSpec {
    pub fn params_digest(&self) -> [u8; 32] {
        let canonical = serde_json::to_string(self).expect("task spec serializes");
        Sha256::digest(canonical.as_bytes()).into()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<TaskSpec> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        if hex::encode(ds.digest) != self.dataset_digest {
            return Err(Error::Protocol(
                "dataset digest does not match the task".into(),
            ));
        }
        if ds.frac_bits != self.config.frac_bits {
            return Err(Error::ScaleMismatch(self.config.frac_bits, ds.frac_bits));
        }
        Ok(())
    }
}

/// Training-set split: the last ceil(n/5) samples form the holdout fold for
/// the convergence metric, unless that starves the batch schedule.
pub fn train_holdout_split(n: usize, batch: usize) -> (usize, usize) {
    let holdout = n.div_ceil(5);
    if n - holdout >= batch {
        (n - holdout, holdout)
    } else {
        (n, 0)
    }
}

/// Epoch shuffle via the pinned stream; the batch is a contiguous slice, so
/// batches within an epoch are disjoint by construction.
pub fn batch_indices(
    shared_seed: u64,
    epoch: u64,
    step: u64,
    b: usize,
    n: usize,
) -> Result<Vec<usize>> {
    let steps = n / b;
    if step >= steps as u64 {
        return Err(Error::Protocol(format!(
            "step {step} beyond epoch length {steps}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut prng = PinnedPrng::with_context(shared_seed, "shuffle", &epoch.to_le_bytes());
    prng.shuffle(&mut perm);
    let start = step as usize * b;
    Ok(perm[start..start + b].to_vec())
}

/// Explicit distinctness validator over an epoch's schedule.
pub fn validate_epoch_distinct(batches: &[Vec<usize>]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for batch in batches {
        for &i in batch {
            if !seen.insert(i) {
                return Err(Error::Protocol(format!(
                    "index {i} repeats within an epoch"
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointStore {
    pub interval: u64,
    /// Output states of iterations congruent to 1 mod interval.
    pub states: BTreeMap<u64, ModelState>,
}

impl CheckpointStore {
    pub fn new(interval: u64) -> Self {
        CheckpointStore {
            interval,
            states: BTreeMap::new(),
        }
    }

    pub fn offer(&mut self, iteration: u64, state: &ModelState) {
        if iteration % self.interval == 1 || self.interval == 1 {
            self.states.insert(iteration, state.clone());
        }
    }

    /// Nearest stored iteration at or below `i` (0 means start from scratch).
    pub fn nearest_at_or_below(&self, i: u64) -> u64 {
        self.states
            .range(..=i)
            .next_back()
            .map(|(k, _)| *k)
            .unwrap_or(0)
    }

    /// Parameter payload in bits: l * d * (checkpoint count).
    pub fn storage_bits(&self) -> u64 {
        self.states
            .values()
            .map(|s| s.frac_bits.max(1) as u64 * s.params.len() as u64)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Challenge {
    pub indices: Vec<u64>,
    pub count: usize,
}

/// c distinct uniform indices in [1, N], drawn after the commitment.
pub fn client_sample_challenges(n: u64, c: usize, client_randomness: u64) -> Result<Challenge> {
    if c == 0 || c as u64 > n {
        return Err(Error::Protocol(format!(
            "cannot sample {c} of {n} iterations"
        )));
    }
    let mut prng = PinnedPrng::new(client_randomness, b"challenge");
    let indices = prng
        .sample_distinct(n, c)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    Ok(Challenge { indices, count: c })
}

pub struct TrainResult {
    pub final_state: ModelState,
    pub commitment: Commitment,
    pub checkpoints: CheckpointStore,
    pub iterations: u64,
    pub epochs_run: usize,
}

struct TreeContext {
    hist: crate::dataio::HistogramSet,
    labels: Vec<u32>,
}

fn tree_context(spec: &TaskSpec, ds: &Dataset) -> Result<TreeContext> {
    let labels = match &ds.labels {
        Labels::Class(v) => v.clone(),
        _ => return Err(Error::TaskConfig("decision trees need class labels".into())),
    };
    let hist = crate::dataio::bucketize(ds, spec.config.k_bins)?;
    Ok(TreeContext { hist, labels })
}

/// Both parties derive the initial state from the task alone.
pub fn initial_state(spec: &TaskSpec, ds: &Dataset) -> Result<ModelState> {
    match spec.config.algorithm {
        ModelKind::Dtree => {
            let tc = tree_context(spec, ds)?;
            models::tree::init(&spec.config, &tc.hist)
        }
        _ => models::init_state(&spec.config, ds, spec.client_seed),
    }
}

pub fn coefficients_for(spec: &TaskSpec, state_len: usize) -> CoefficientVector {
    commitment::gen_coefficients(
        spec.client_seed,
        state_len,
        spec.config.frac_bits,
        spec.config.int_budget,
    )
}

/// Replay the batch and native step of iteration `iter` (1-based) from the
/// given input state; the single source of truth for both training and
/// retrieval, hence bit-identical results.
pub fn run_step(
    spec: &TaskSpec,
    ds: &Dataset,
    state: &ModelState,
    iter: u64,
) -> Result<StepOutput> {
    let cfg = &spec.config;
    let (train_n, _) = train_holdout_split(ds.n(), cfg.batch_size);
    let steps_per_epoch = (train_n / cfg.batch_size) as u64;
    let epoch = (iter - 1) / steps_per_epoch;
    let step = (iter - 1) % steps_per_epoch;
    let idx = batch_indices(spec.shared_seed, epoch, step, cfg.batch_size, train_n)?;
    let x: Vec<Vec<FixedPoint>> = idx.iter().map(|&i| ds.features[i].clone()).collect();
    let y = match cfg.algorithm {
        ModelKind::Kmeans => BatchLabels::None,
        _ => BatchLabels::gather(&ds.labels, &idx),
    };
    models::step(state, &x, &y, cfg, iter)
}

/// Full training run: per-iteration identifiers, periodic checkpoints, the
/// epoch-metric stop rule.
pub fn server_train(spec: &TaskSpec, ds: &Dataset) -> Result<TrainResult> {
    spec.check_dataset(ds)?;
    let cfg = &spec.config;
    let ctx = spec.field.ctx()?;
    if ds.n() == 0 {
        return Err(Error::Dataset("empty dataset".into()));
    }
    if cfg.algorithm == ModelKind::Dtree {
        return server_train_tree(spec, ds, &ctx);
    }
    let l = cfg.frac_bits;
    let (train_n, holdout_n) = train_holdout_split(ds.n(), cfg.batch_size);
    let steps_per_epoch = train_n / cfg.batch_size;
    if steps_per_epoch == 0 {
        return Err(Error::TaskConfig(
            "batch larger than the training fold".into(),
        ));
    }
    // field-capacity check before any work
    iter_params(spec, ds, None)?.validate()?;

    let mut state = initial_state(spec, ds)?;
    let coeffs = coefficients_for(spec, state.params.len());
    let initial_id = {
        let (id, _) = commitment::identifier(&state.params, &coeffs, spec.shared_seed, 0, l, &ctx)?;
        id
    };
    let mut checkpoints = CheckpointStore::new(spec.interval.max(1));
    let mut identifiers: Vec<Identifier> = Vec::new();
    let holdout_x = &ds.features[train_n..train_n + holdout_n];
    let holdout_y = match &ds.labels {
        Labels::Real(v) => Labels::Real(v[train_n..train_n + holdout_n].to_vec()),
        Labels::Class(v) => Labels::Class(v[train_n..train_n + holdout_n].to_vec()),
    };
    let (metric_x, metric_y) = if holdout_n > 0 {
        (holdout_x, &holdout_y)
    } else {
        (&ds.features[..], &ds.labels)
    };
    let mut metric_prev = models::evaluate_metric(&state, metric_x, metric_y, cfg)?;
    let mut iter = 0u64;
    let mut epochs_run = 0usize;
    for _epoch in 0..cfg.max_epochs {
        for _step in 0..steps_per_epoch {
            iter += 1;
            let out = run_step(spec, ds, &state, iter)?;
            let (id, _) =
                commitment::identifier(&out.untruncated, &coeffs, spec.shared_seed, iter, l, &ctx)?;
            identifiers.push(id);
            checkpoints.offer(iter, &out.next);
            state = out.next;
        }
        epochs_run += 1;
        let metric = models::evaluate_metric(&state, metric_x, metric_y, cfg)?;
        if let Some(t) = &cfg.conv_threshold {
            let diff = if metric >= metric_prev {
                metric.clone() - &metric_prev
            } else {
                metric_prev.clone() - &metric
            };
            if diff < t.to_rational() {
                metric_prev = metric;
                break;
            }
        }
        metric_prev = metric;
    }
    let _ = metric_prev;
    Ok(TrainResult {
        final_state: state,
        commitment: Commitment {
            task_id: spec.task_id.clone(),
            claimed_iterations: iter,
            params_digest: spec.params_digest(),
            initial: initial_id,
            identifiers,
        },
        checkpoints,
        iterations: iter,
        epochs_run,
    })
}

fn server_train_tree(
    spec: &TaskSpec,
    ds: &Dataset,
    ctx: &crate::field::FieldCtx,
) -> Result<TrainResult> {
    let cfg = &spec.config;
    let l = cfg.frac_bits;
    let tc = tree_context(spec, ds)?;
    let trace = models::tree::build(
        &tc.hist,
        &tc.labels,
        cfg,
        models::tree::SplitCriterion::Gini,
    )?;
    let state_len = trace.initial.params.len();
    let coeffs = coefficients_for(spec, state_len);
    let initial_id =
        commitment::identifier(&trace.initial.params, &coeffs, spec.shared_seed, 0, l, ctx)?.0;
    let mut checkpoints = CheckpointStore::new(spec.interval.max(1));
    let mut identifiers = Vec::with_capacity(trace.states.len());
    for (i, out) in trace.states.iter().enumerate() {
        let iter = i as u64 + 1;
        let (id, _) =
            commitment::identifier(&out.untruncated, &coeffs, spec.shared_seed, iter, l, ctx)?;
        identifiers.push(id);
        checkpoints.offer(iter, &out.next);
    }
    let iterations = trace.states.len() as u64;
    Ok(TrainResult {
        final_state: trace
            .states
            .last()
            .map(|s| s.next.clone())
            .unwrap_or(trace.initial.clone()),
        commitment: Commitment {
            task_id: spec.task_id.clone(),
            claimed_iterations: iterations,
            params_digest: spec.params_digest(),
            initial: initial_id,
            identifiers,
        },
        checkpoints,
        iterations,
        epochs_run: 1,
    })
}

/// Crypto-free retrieval: from the nearest checkpoint at or below `i`,
/// re-run native steps; bit-identical to the training-time state.
pub fn retrieve_state(
    store: &CheckpointStore,
    i: u64,
    spec: &TaskSpec,
    ds: &Dataset,
) -> Result<ModelState> {
    if i == 0 {
        return initial_state(spec, ds);
    }
    if spec.config.algorithm == ModelKind::Dtree {
        if let Some(state) = store.states.get(&i) {
            return Ok(state.clone());
        }
        // the partition trace is deterministic and desk-scale; replay it
        let tc = tree_context(spec, ds)?;
        let trace = models::tree::build(
            &tc.hist,
            &tc.labels,
            &spec.config,
            models::tree::SplitCriterion::Gini,
        )?;
        return trace
            .states
            .get(i as usize - 1)
            .map(|s| s.next.clone())
            .ok_or_else(|| Error::Protocol(format!("iteration {i} beyond the tree trace")));
    }
    let from = store.nearest_at_or_below(i);
    let mut state = if from == 0 {
        initial_state(spec, ds)?
    } else {
        store
            .states
            .get(&from)
            .cloned()
            .ok_or_else(|| Error::Protocol(format!("missing checkpoint {from}")))?
    };
    for iter in from + 1..=i {
        state = run_step(spec, ds, &state, iter)?.next;
    }
    Ok(state)
}

/// Shared circuit parameters; the Freivald challenges need the commitment
/// digest, so pass it once the commitment exists (None is fine for
/// algorithms that do not use them).
pub fn iter_params(
    spec: &TaskSpec,
    ds: &Dataset,
    commitment_digest: Option<[u8; 32]>,
) -> Result<IterParams> {
    let cfg = &spec.config;
    let state = initial_state(spec, ds)?;
    let state_len = state.params.len();
    let shape = match cfg.algorithm {
        ModelKind::Nn => models::nn_shape(cfg, ds.d()),
        _ => Vec::new(),
    };
    let freivald_r = match (cfg.algorithm, commitment_digest) {
        (ModelKind::Nn, Some(digest)) => {
            let ctx = spec.field.ctx()?;
            let mut out = Vec::new();
            for (idx, len) in freivald_lengths(&shape).into_iter().enumerate() {
                let mut domain = b"freivald".to_vec();
                domain.extend_from_slice(&digest);
                domain.extend_from_slice(&(idx as u64).to_le_bytes());
                let mut prng = PinnedPrng::new(spec.client_seed, &domain);
                out.push(
                    (0..len)
                        .map(|_| ctx.from_biguint(&prng.next_below(ctx.modulus())))
                        .collect(),
                );
            }
            out
        }
        _ => Vec::new(),
    };
    let tree_per_node = if cfg.algorithm == ModelKind::Dtree {
        state.dims[1] * state.dims[2] * state.dims[3]
    } else {
        0
    };
    Ok(IterParams {
        field: spec.field.clone(),
        algorithm: cfg.algorithm,
        l: cfg.frac_bits,
        int_budget: cfg.int_budget,
        state_len,
        feat_dim: ds.d(),
        batch: cfg.batch_size,
        coeffs: coefficients_for(spec, state_len),
        strict_tolerance: spec.strict_tolerance,
        alpha_over_b: cfg.alpha_over_b_raw(),
        lambda_raw: cfg.lambda.raw.clone(),
        k_clusters: cfg.k_clusters,
        nn_shape: shape,
        activation: cfg.activation,
        sigmoid: cfg
            .sigmoid
            .variant()
            .unwrap_or(crate::gadgets::SigmoidVariant::Remez),
        freivald_r,
        tree_position: 0,
        tree_per_node,
        tree_depth: cfg.max_depth,
    })
}

/// One challenged iteration's proof output.
#[derive(Debug, Clone)]
pub struct IterationProof {
    pub iteration: u64,
    pub id_prev: Identifier,
    pub id_cur: Identifier,
    pub proof: Proof,
}

/// The witness inputs for iteration i, retrieved without cryptography.
pub fn iteration_witness(
    spec: &TaskSpec,
    store: &CheckpointStore,
    ds: &Dataset,
    i: u64,
) -> Result<(IterationInputs, StepOutput)> {
    let cfg = &spec.config;
    let l = cfg.frac_bits;
    let state_prev = retrieve_state(store, i - 1, spec, ds)?;
    let coeffs = coefficients_for(spec, state_prev.params.len());
    // committed preimage of iteration i-1
    let s_prev = if i == 1 {
        let sum = commitment::weighted_sum(&state_prev.params, &coeffs)?;
        commitment::commit_preimage(&sum, l)
    } else {
        let before = retrieve_state(store, i - 2, spec, ds)?;
        let replay = step_for(spec, ds, &before, i - 1)?;
        let sum = commitment::weighted_sum(&replay.untruncated, &coeffs)?;
        commitment::commit_preimage(&sum, l)
    };
    let out = step_for(spec, ds, &state_prev, i)?;
    let (x, y) = batch_raws(spec, ds, i)?;
    Ok((
        IterationInputs {
            x,
            y,
            w_in: state_prev.params.iter().map(|p| p.raw.clone()).collect(),
            w_out: out.next.params.iter().map(|p| p.raw.clone()).collect(),
            s_prev: s_prev.raw,
            nonce_prev: commitment::nonce(spec.shared_seed, i - 1),
            nonce_cur: commitment::nonce(spec.shared_seed, i),
            t_iter: i,
        },
        out,
    ))
}

fn step_for(spec: &TaskSpec, ds: &Dataset, state: &ModelState, iter: u64) -> Result<StepOutput> {
    if spec.config.algorithm == ModelKind::Dtree {
        let tc = tree_context(spec, ds)?;
        let trace = models::tree::build(
            &tc.hist,
            &tc.labels,
            &spec.config,
            models::tree::SplitCriterion::Gini,
        )?;
        return trace
            .states
            .get(iter as usize - 1)
            .cloned()
            .ok_or_else(|| Error::Protocol(format!("iteration {iter} beyond the tree trace")));
    }
    run_step(spec, ds, state, iter)
}

fn batch_raws(spec: &TaskSpec, ds: &Dataset, iter: u64) -> Result<(Vec<Vec<BigInt>>, Vec<BigInt>)> {
    let cfg = &spec.config;
    if cfg.algorithm == ModelKind::Dtree {
        return Ok((Vec::new(), Vec::new()));
    }
    let (train_n, _) = train_holdout_split(ds.n(), cfg.batch_size);
    let steps_per_epoch = (train_n / cfg.batch_size) as u64;
    let epoch = (iter - 1) / steps_per_epoch;
    let step = (iter - 1) % steps_per_epoch;
    let idx = batch_indices(spec.shared_seed, epoch, step, cfg.batch_size, train_n)?;
    let x = idx
        .iter()
        .map(|&i| ds.features[i].iter().map(|v| v.raw.clone()).collect())
        .collect();
    let y = match (&ds.labels, cfg.algorithm) {
        (_, ModelKind::Kmeans) => Vec::new(),
        (Labels::Real(v), _) => idx.iter().map(|&i| v[i].raw.clone()).collect(),
        (Labels::Class(v), ModelKind::Svm) => idx
            .iter()
            .map(|&i| BigInt::from(models::svm::to_pm1(v[i])))
            .collect(),
        (Labels::Class(v), _) => idx.iter().map(|&i| BigInt::from(v[i] as i64)).collect(),
    };
    Ok((x, y))
}

fn params_at_position(base: &IterParams, iteration: u64) -> IterParams {
    let mut p = base.clone();
    if p.algorithm == ModelKind::Dtree {
        p.tree_position = iteration as usize - 1;
    }
    p
}

/// Retrieve, rebuild, and prove one challenged iteration with the standard
/// transparent backend.
pub fn server_prove_iteration(
    spec: &TaskSpec,
    store: &CheckpointStore,
    ds: &Dataset,
    params: &IterParams,
    i: u64,
) -> Result<IterationProof> {
    server_prove_iteration_with(spec, store, ds, params, i, &ReExecutionBackend)
}

/// Backend-parametric prover: the protocol only touches the three-call
/// interface, so a succinct backend slots in without protocol changes.
pub fn server_prove_iteration_with(
    spec: &TaskSpec,
    store: &CheckpointStore,
    ds: &Dataset,
    params: &IterParams,
    i: u64,
    backend: &dyn ProofBackend,
) -> Result<IterationProof> {
    let ctx = spec.field.ctx()?;
    let (inputs, out) = iteration_witness(spec, store, ds, i)?;
    let coeffs = &params.coeffs;
    let id_prev = commitment::identifier_from_preimage(
        &FixedPoint {
            raw: inputs.s_prev.clone(),
            frac_bits: 2 * spec.config.frac_bits,
        },
        &inputs.nonce_prev,
        i - 1,
        &ctx,
    )?;
    let (id_cur, _) = commitment::identifier(
        &out.untruncated,
        coeffs,
        spec.shared_seed,
        i,
        spec.config.frac_bits,
        &ctx,
    )?;
    let p = params_at_position(params, i);
    let built = build_iteration(&p, Some((&inputs, &id_prev.digest, &id_cur.digest)))?;
    let (ek, _) = backend.keygen(&built.circuit, spec.security_lambda)?;
    let assignment = built
        .assignment
        .as_ref()
        .ok_or(Error::MissingAssignment(0))?;
    let proof = backend.prove(&ek, &built.circuit, assignment)?;
    Ok(IterationProof {
        iteration: i,
        id_prev,
        id_cur,
        proof,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum Verdict {
    Accept,
    Reject {
        iteration: u64,
        reason: RejectReason,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ProofInvalid,
    CommitmentMismatch,
}

/// Client-held verification context: the circuit structure rebuilt from the
/// task (per tree position where needed) and its verification keys.
pub struct ClientVerifier<'a> {
    pub params: IterParams,
    backend: &'a dyn ProofBackend,
    circuits: BTreeMap<usize, (StepCircuit, VerifKey, EvalKey)>,
}

impl<'a> ClientVerifier<'a> {
    pub fn new(spec: &TaskSpec, ds: &Dataset, commitment: &Commitment) -> Result<ClientVerifier<'a>> {
        ClientVerifier::with_backend(spec, ds, commitment, &ReExecutionBackend)
    }

    pub fn with_backend(
        spec: &TaskSpec,
        ds: &Dataset,
        commitment: &Commitment,
        backend: &'a dyn ProofBackend,
    ) -> Result<ClientVerifier<'a>> {
        let digest: [u8; 32] = Sha256::digest(commitment.to_file_string().as_bytes()).into();
        let params = iter_params(spec, ds, Some(digest))?;
        Ok(ClientVerifier {
            params,
            backend,
            circuits: BTreeMap::new(),
        })
    }

    fn circuit_for(
        &mut self,
        spec: &TaskSpec,
        iteration: u64,
    ) -> Result<&(StepCircuit, VerifKey, EvalKey)> {
        let pos = if self.params.algorithm == ModelKind::Dtree {
            iteration as usize - 1
        } else {
            0
        };
        if !self.circuits.contains_key(&pos) {
            let p = params_at_position(&self.params, iteration);
            let built = build_iteration(&p, None)?;
            let (ek, vk) = self.backend.keygen(&built.circuit, spec.security_lambda)?;
            self.circuits.insert(pos, (built, vk, ek));
        }
        Ok(self.circuits.get(&pos).unwrap())
    }

    pub fn evaluation_key(&mut self, spec: &TaskSpec, iteration: u64) -> Result<EvalKey> {
        Ok(self.circuit_for(spec, iteration)?.2.clone())
    }

    /// Verify one challenged iteration: the proof against the circuit, then
    /// the identifier pair against the commitment.
    pub fn verify_iteration(
        &mut self,
        spec: &TaskSpec,
        ds: &Dataset,
        commitment: &Commitment,
        item: &IterationProof,
    ) -> Result<Verdict> {
        let i = item.iteration;
        let (x, y) = batch_raws(spec, ds, i)?;
        let io = circuits::assemble_public_io(
            &params_at_position(&self.params, i),
            &x,
            &y,
            i,
            &commitment::nonce(spec.shared_seed, i - 1),
            &commitment::nonce(spec.shared_seed, i),
            &item.id_prev.digest,
            &item.id_cur.digest,
        )?;
        let backend = self.backend;
        let (built, vk, _) = self.circuit_for(spec, i)?;
        let ok = match backend.verify(vk, &built.circuit, &io, &item.proof) {
            Ok(v) => v,
            Err(Error::DigestMismatch) => false,
            Err(e) => return Err(e),
        };
        if !ok {
            return Ok(Verdict::Reject {
                iteration: i,
                reason: RejectReason::ProofInvalid,
            });
        }
        let prev_ok = commitment
            .get(i - 1)
            .map(|c| c.digest == item.id_prev.digest)
            .unwrap_or(false);
        let cur_ok = commitment
            .get(i)
            .map(|c| c.digest == item.id_cur.digest)
            .unwrap_or(false);
        if !prev_ok || !cur_ok {
            return Ok(Verdict::Reject {
                iteration: i,
                reason: RejectReason::CommitmentMismatch,
            });
        }
        Ok(Verdict::Accept)
    }
}

/// Full client pass over a transcript's proofs: Accept only when every
/// challenged iteration verifies and matches the commitment.
pub fn client_verify(
    spec: &TaskSpec,
    ds: &Dataset,
    commitment: &Commitment,
    challenge: &Challenge,
    proofs: &[IterationProof],
) -> Result<Verdict> {
    if proofs.len() != challenge.indices.len() {
        return Err(Error::Protocol(format!(
            "{} proofs for {} challenges",
            proofs.len(),
            challenge.indices.len()
        )));
    }
    let mut verifier = ClientVerifier::new(spec, ds, commitment)?;
    for (idx, item) in challenge.indices.iter().zip(proofs) {
        if *idx != item.iteration {
            return Err(Error::Protocol(
                "transcript order does not match challenges".into(),
            ));
        }
        match verifier.verify_iteration(spec, ds, commitment, item)? {
            Verdict::Accept => {}
            reject => return Ok(reject),
        }
    }
    Ok(Verdict::Accept)
}

/// Transcript file: challenges, hex identifier pairs, proof file references,
/// verdict. Proof payloads live in their referenced files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transcript {
    pub task_id: String,
    pub commitment_file: String,
    pub challenges: Vec<u64>,
    pub items: Vec<TranscriptItem>,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptItem {
    pub iteration: u64,
    pub id_prev: String,
    pub id_cur: String,
    pub proof_file: String,
}

impl Transcript {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Transcript> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Prediction service: the server proves the batch of predictions without
/// revealing them; the results stay in the witness.
pub struct PredictionRun {
    pub circuit_digest: [u8; 32],
    pub proof: Proof,
    pub results: Vec<models::Prediction>,
}

pub fn prediction_prove(
    spec: &TaskSpec,
    ds_for_params: &Dataset,
    state: &ModelState,
    inputs: &[Vec<FixedPoint>],
) -> Result<PredictionRun> {
    let params = iter_params(spec, ds_for_params, None)?;
    let data = circuits::PredictionInputs {
        x: inputs
            .iter()
            .map(|r| r.iter().map(|v| v.raw.clone()).collect())
            .collect(),
        model: state.params.iter().map(|p| p.raw.clone()).collect(),
        tree: state.tree.clone(),
    };
    let built = circuits::build_prediction(&params, inputs.len(), Some(&data))?;
    let backend: &dyn ProofBackend = &ReExecutionBackend;
    let (ek, _) = backend.keygen(&built.circuit, spec.security_lambda)?;
    let proof = backend.prove(&ek, &built.circuit, built.assignment.as_ref().unwrap())?;
    let results = inputs
        .iter()
        .map(|x| models::predict(state, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionRun {
        circuit_digest: built.circuit.digest(),
        proof,
        results,
    })
}

pub fn prediction_verify(
    spec: &TaskSpec,
    ds_for_params: &Dataset,
    inputs: &[Vec<FixedPoint>],
    proof: &Proof,
) -> Result<bool> {
    let params = iter_params(spec, ds_for_params, None)?;
    let built = circuits::build_prediction(&params, inputs.len(), None)?;
    let backend: &dyn ProofBackend = &ReExecutionBackend;
    let (_, vk) = backend.keygen(&built.circuit, spec.security_lambda)?;
    let mut io = Vec::new();
    let ctx = spec.field.ctx()?;
    for row in inputs {
        for v in row {
            io.push(crate::fixedpoint::raw_to_field(&v.raw, &ctx)?);
        }
    }
    backend.verify(&vk, &built.circuit, &io, proof)
}

/// Delivery attestation: prove the delivered parameters reach the claimed
/// test accuracy and hash to the declared digest.
pub struct AttestationRun {
    pub proof: Proof,
    pub model_digest: [u8; 32],
}

pub fn attest_prove(
    spec: &TaskSpec,
    ds_for_params: &Dataset,
    state: &ModelState,
    test_x: &[Vec<FixedPoint>],
    test_y: &[u32],
    claimed_correct: u64,
) -> Result<AttestationRun> {
    let params = iter_params(spec, ds_for_params, None)?;
    let raws: Vec<BigInt> = state.params.iter().map(|p| p.raw.clone()).collect();
    let x: Vec<Vec<BigInt>> = test_x
        .iter()
        .map(|r| r.iter().map(|v| v.raw.clone()).collect())
        .collect();
    let data = circuits::AttestationInputs {
        model: raws.clone(),
    };
    let built = circuits::build_attestation(&params, &x, test_y, claimed_correct, Some(&data))?;
    let backend: &dyn ProofBackend = &ReExecutionBackend;
    let (ek, _) = backend.keygen(&built.circuit, spec.security_lambda)?;
    let proof = backend.prove(&ek, &built.circuit, built.assignment.as_ref().unwrap())?;
    Ok(AttestationRun {
        proof,
        model_digest: circuits::predict::params_payload_digest_raw(&raws),
    })
}

pub fn attest_verify(
    spec: &TaskSpec,
    ds_for_params: &Dataset,
    test_x: &[Vec<FixedPoint>],
    test_y: &[u32],
    claimed_correct: u64,
    declared_digest: &[u8; 32],
    proof: &Proof,
) -> Result<bool> {
    let params = iter_params(spec, ds_for_params, None)?;
    let x: Vec<Vec<BigInt>> = test_x
        .iter()
        .map(|r| r.iter().map(|v| v.raw.clone()).collect())
        .collect();
    let built = circuits::build_attestation(&params, &x, test_y, claimed_correct, None)?;
    let backend: &dyn ProofBackend = &ReExecutionBackend;
    let (_, vk) = backend.keygen(&built.circuit, spec.security_lambda)?;
    let ctx = spec.field.ctx()?;
    let mut io = Vec::new();
    for row in test_x {
        for v in row {
            io.push(crate::fixedpoint::raw_to_field(&v.raw, &ctx)?);
        }
    }
    for &yv in test_y {
        io.push(ctx.from_u64(yv as u64));
    }
    let chunk = circuits::digest_chunk_bits(&spec.field)?;
    io.extend(circuits::pack_digest(declared_digest, chunk, &spec.field)?);
    backend.verify(&vk, &built.circuit, &io, proof)
}

#[cfg(test)]
mod tests;
