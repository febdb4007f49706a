//! Python bindings over the core: fixed-point arithmetic, the audit
//! sampling math, the escrow ledger, and an in-process demo pipeline.

// the pymethods expansion trips useless_conversion on PyResult returns
#![allow(clippy::useless_conversion)]

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use veriml_core::dataio::{synth_with, SynthKind};
use veriml_core::field::FieldConfig;
use veriml_core::fixedpoint;
use veriml_core::models::{Activation, ModelKind, SigmoidKind, TrainConfig};
use veriml_core::payment;
use veriml_core::protocol::{self, sampling, TaskSpec, Verdict};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Scaled two's-complement fixed-point value: raw / 2^frac_bits.
#[pyclass(name = "FixedPoint")]
#[derive(Clone)]
struct PyFixedPoint {
    inner: fixedpoint::FixedPoint,
}

#[pymethods]
impl PyFixedPoint {
    /// encode(x, frac_bits): round-half-away-from-zero at scale 2^frac_bits.
    #[staticmethod]
    fn encode(x: f64, frac_bits: u32) -> PyResult<Self> {
        Ok(PyFixedPoint {
            inner: fixedpoint::encode(x, frac_bits).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_raw(raw: &str, frac_bits: u32) -> PyResult<Self> {
        let raw = raw
            .parse()
            .map_err(|_| PyValueError::new_err("bad raw integer"))?;
        Ok(PyFixedPoint {
            inner: fixedpoint::FixedPoint { raw, frac_bits },
        })
    }

    #[getter]
    fn raw(&self) -> String {
        self.inner.raw.to_string()
    }

    #[getter]
    fn frac_bits(&self) -> u32 {
        self.inner.frac_bits
    }

    fn to_float(&self) -> f64 {
        self.inner.to_f64()
    }

    /// Raw product: the scale doubles, matching circuit semantics.
    fn mul(&self, other: &PyFixedPoint) -> PyResult<Self> {
        Ok(PyFixedPoint {
            inner: fixedpoint::mul_raw(&self.inner, &other.inner).map_err(err)?,
        })
    }

    /// Floor-truncate down to target_l fractional bits.
    fn truncate(&self, target_l: u32) -> Self {
        PyFixedPoint {
            inner: fixedpoint::truncate(&self.inner, target_l),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "FixedPoint(raw={}, frac_bits={}, value={})",
            self.inner.raw,
            self.inner.frac_bits,
            self.inner.to_f64()
        )
    }
}

/// 1 - C(tN, c)/C(N, c): chance a uniform c-sample hits a forged iteration.
#[pyfunction]
fn detection_probability(n: u64, t_frac: f64, c: u64) -> PyResult<f64> {
    sampling::detection_probability(n, t_frac, c).map_err(err)
}

/// Smallest challenge count reaching the confidence.
#[pyfunction]
fn required_challenges(n: u64, t_frac: f64, confidence: f64) -> PyResult<u64> {
    sampling::required_challenges(n, t_frac, confidence).map_err(err)
}

/// p + (1-p)/(2^l - 1).
#[pyfunction]
fn relaxed_soundness_bound(p: f64, l: u32) -> f64 {
    sampling::relaxed_soundness_bound(p, l)
}

/// Checkpoint storage in bits: l*d*N/m.
#[pyfunction]
fn storage_cost(l: u64, d: u64, n: u64, m: u64) -> PyResult<u64> {
    sampling::storage_cost(l, d, n, m).map_err(err)
}

/// Hash-locked escrow ledger with a logical clock.
#[pyclass(name = "Ledger")]
struct PyLedger {
    inner: payment::Ledger,
}

#[pymethods]
impl PyLedger {
    #[new]
    fn new(client_balance: u64, server_balance: u64) -> Self {
        PyLedger {
            inner: payment::Ledger::with_accounts(&[
                ("client", client_balance),
                ("server", server_balance),
            ]),
        }
    }

    fn balance(&self, account: &str) -> u64 {
        self.inner.balance(account)
    }

    fn total_value(&self) -> u64 {
        self.inner.total_value()
    }

    fn tick(&mut self, by: u64) {
        self.inner.tick(by);
    }

    /// Lock `fee` from the payer behind SHA-256(preimage) until `timeout`.
    fn post_escrow(
        &mut self,
        payer: &str,
        payee: &str,
        preimage: &[u8],
        fee: u64,
        timeout: u64,
    ) -> PyResult<u64> {
        let lock = payment::key_digest(&key32(preimage)?);
        payment::post_escrow(&mut self.inner, payer, payee, lock, fee, timeout).map_err(err)
    }

    fn redeem(&mut self, tx: u64, preimage: &[u8]) -> PyResult<bool> {
        let key = key32(preimage)?;
        payment::redeem(&mut self.inner, tx, &key).map_err(err)
    }

    fn refund(&mut self, tx: u64) -> PyResult<bool> {
        payment::refund(&mut self.inner, tx).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }
}

fn key32(bytes: &[u8]) -> PyResult<[u8; 32]> {
    let mut k = [0u8; 32];
    if bytes.len() > 32 {
        return Err(PyValueError::new_err("key must be at most 32 bytes"));
    }
    k[..bytes.len()].copy_from_slice(bytes);
    Ok(k)
}

/// SHA-256 keystream encryption of a delivery (decrypts with the same call).
#[pyfunction]
fn encrypt_delivery(key: &[u8], data: &[u8]) -> PyResult<Vec<u8>> {
    Ok(payment::encrypt_delivery(&key32(key)?, data))
}

fn demo_spec(algorithm: &str, l: u32, digest: &str, seed: u64) -> PyResult<TaskSpec> {
    let kind = match algorithm {
        "linreg" => ModelKind::Linreg,
        "logreg" => ModelKind::Logreg,
        "svm" => ModelKind::Svm,
        "kmeans" => ModelKind::Kmeans,
        "nn" => ModelKind::Nn,
        "dtree" => ModelKind::Dtree,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown algorithm {other:?}"
            )))
        }
    };
    Ok(TaskSpec {
        task_id: format!("py-{algorithm}"),
        config: TrainConfig {
            algorithm: kind,
            frac_bits: l,
            batch_size: 4,
            alpha: fixedpoint::FixedPoint::from_raw(1i64 << (l - 2), l),
            conv_threshold: None,
            max_epochs: 2,
            int_budget: 16,
            lambda: fixedpoint::FixedPoint::from_raw(1i64 << (l - 4), l),
            k_clusters: 3,
            k_bins: 4,
            max_depth: 2,
            nn_hidden: vec![4],
            num_classes: 2,
            sigmoid: SigmoidKind::Remez,
            activation: Activation::Square,
        },
        dataset_digest: digest.to_string(),
        shared_seed: seed,
        client_seed: seed + 1,
        interval: 5,
        field: FieldConfig::default_254bit(),
        strict_tolerance: false,
        security_lambda: 128,
    })
}

/// Run the whole pipeline in process on synthetic data: train with
/// identifiers, sample challenges, prove, verify. Set forge_fraction > 0 to
/// corrupt that share of the commitment tail and watch the verdict flip.
#[pyfunction]
#[pyo3(signature = (algorithm="linreg", n=24, d=3, challenges=2, forge_fraction=0.0, seed=11))]
fn run_demo(
    py: Python<'_>,
    algorithm: &str,
    n: usize,
    d: usize,
    challenges: usize,
    forge_fraction: f64,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let l = 12u32;
    let kind_data = match algorithm {
        "linreg" => SynthKind::Regression,
        "kmeans" => SynthKind::Blobs,
        "dtree" => SynthKind::Multiclass,
        _ => SynthKind::Binary,
    };
    let ds = synth_with(kind_data, n, d, seed, l, 0.02).map_err(err)?;
    let spec = demo_spec(algorithm, l, &hex::encode(ds.digest), seed)?;
    let out = protocol::server_train(&spec, &ds).map_err(err)?;
    let mut commitment = out.commitment.clone();
    if forge_fraction > 0.0 {
        let total = commitment.identifiers.len();
        let forged = ((total as f64) * forge_fraction).round() as usize;
        for entry in commitment.identifiers.iter_mut().rev().take(forged) {
            entry.digest[0] ^= 0xa5;
        }
    }
    use sha2::Digest;
    let digest: [u8; 32] = sha2::Sha256::digest(commitment.to_file_string().as_bytes()).into();
    let params = protocol::iter_params(&spec, &ds, Some(digest)).map_err(err)?;
    let challenge = protocol::client_sample_challenges(
        out.iterations,
        challenges.min(out.iterations as usize),
        seed + 7,
    )
    .map_err(err)?;
    let proofs: Vec<_> = challenge
        .indices
        .iter()
        .map(|&i| protocol::server_prove_iteration(&spec, &out.checkpoints, &ds, &params, i))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let verdict =
        protocol::client_verify(&spec, &ds, &commitment, &challenge, &proofs).map_err(err)?;

    let dict = PyDict::new_bound(py);
    dict.set_item("algorithm", algorithm)?;
    dict.set_item("iterations", out.iterations)?;
    dict.set_item("challenges", challenge.indices.clone())?;
    let (accepted, reason) = match &verdict {
        Verdict::Accept => (true, None),
        Verdict::Reject { iteration, reason } => {
            (false, Some(format!("{reason:?} at iteration {iteration}")))
        }
    };
    dict.set_item("accepted", accepted)?;
    dict.set_item("reject_reason", reason)?;
    Ok(dict.into())
}

#[pymodule]
fn veriml_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFixedPoint>()?;
    m.add_class::<PyLedger>()?;
    m.add_function(wrap_pyfunction!(detection_probability, m)?)?;
    m.add_function(wrap_pyfunction!(required_challenges, m)?)?;
    m.add_function(wrap_pyfunction!(relaxed_soundness_bound, m)?)?;
    m.add_function(wrap_pyfunction!(storage_cost, m)?)?;
    m.add_function(wrap_pyfunction!(encrypt_delivery, m)?)?;
    m.add_function(wrap_pyfunction!(run_demo, m)?)?;
    Ok(())
}
