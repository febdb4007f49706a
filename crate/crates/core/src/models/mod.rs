//! Native fixed-point training for the six algorithms, producing exactly the
//! values the iteration circuits verify. Every step documents its scale
//! schedule; the circuit builders in `circuits` replay the same schedule so
//! native and in-circuit results agree bit for bit.

pub mod kmeans;
pub mod linreg;
pub mod logreg;
pub mod nn;
pub mod svm;
pub mod tree;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{Dataset, Labels};
use crate::error::{Error, Result};
use crate::fixedpoint::FixedPoint;
use crate::gadgets::SigmoidVariant;
use crate::prng::PinnedPrng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linreg,
    Logreg,
    Nn,
    Svm,
    Kmeans,
    Dtree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmoidKind {
    Remez,
    Taylor,
    /// Comparison-based reference; native only, no circuit counterpart.
    Piecewise,
}

impl SigmoidKind {
    pub fn variant(self) -> Option<SigmoidVariant> {
        match self {
            SigmoidKind::Remez => Some(SigmoidVariant::Remez),
            SigmoidKind::Taylor => Some(SigmoidVariant::Taylor),
            SigmoidKind::Piecewise => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Square,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: ModelKind,
    pub frac_bits: u32,
    pub batch_size: usize,
    pub alpha: FixedPoint,
    /// Stop when the epoch metric moves less than this; None disables.
    pub conv_threshold: Option<FixedPoint>,
    pub max_epochs: usize,
    #[serde(default = "default_int_budget")]
    pub int_budget: u32,
    #[serde(default = "default_lambda")]
    pub lambda: FixedPoint,
    #[serde(default = "default_k")]
    pub k_clusters: usize,
    #[serde(default = "default_bins")]
    pub k_bins: usize,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    /// Hidden layer widths; the full shape is [d, hidden..., num_classes].
    #[serde(default = "default_hidden")]
    pub nn_hidden: Vec<usize>,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    #[serde(default = "default_sigmoid")]
    pub sigmoid: SigmoidKind,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_int_budget() -> u32 {
    crate::fixedpoint::DEFAULT_INT_BUDGET
}
fn default_lambda() -> FixedPoint {
    FixedPoint::from_raw(1, 4) // 1/16
}
fn default_k() -> usize {
    4
}
fn default_bins() -> usize {
    4
}
fn default_depth() -> usize {
    3
}
fn default_hidden() -> Vec<usize> {
    vec![128, 128]
}
fn default_classes() -> usize {
    2
}
fn default_sigmoid() -> SigmoidKind {
    SigmoidKind::Remez
}
fn default_activation() -> Activation {
    Activation::Sigmoid
}

impl TrainConfig {
    pub fn l(&self) -> u32 {
        self.frac_bits
    }

    /// round((alpha / b) * 2^l), the folded learning-rate constant.
    pub fn alpha_over_b_raw(&self) -> BigInt {
        div_round_half(&self.alpha.raw, self.batch_size as i64)
    }
}

/// round(a / b) with half away from zero, b > 0.
pub fn div_round_half(a: &BigInt, b: i64) -> BigInt {
    let b = BigInt::from(b);
    let two_a = a * 2;
    let q = (&two_a + a.signum() * &b) / (&b * 2);
    q
}

/// Tree structure kept beside the histogram state for prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// (feature, threshold bin): goes left when bin <= threshold.
    pub split: Option<(usize, u32)>,
    pub label: u32,
    /// False for padding nodes added to make the tree perfect.
    pub real: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeStructure {
    /// Level-order perfect binary tree; children of i are 2i+1, 2i+2.
    pub nodes: Vec<TreeNode>,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub kind: ModelKind,
    pub iteration: u64,
    pub frac_bits: u32,
    /// Shape metadata: layer sizes for NN, [k, d] for K-means, [d] for the
    /// linear models, [nodes, d, bins, classes] for trees.
    pub dims: Vec<usize>,
    pub params: Vec<FixedPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeStructure>,
    /// Sigmoid flavor baked at init for models that predict through one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigmoid: Option<SigmoidKind>,
}

impl ModelState {
    pub fn d(&self) -> usize {
        self.params.len()
    }

    /// Canonical binary encoding (magic, kind, dims, l, raws as i64 LE);
    /// SHA-256 of this is the model digest used by payment and delivery.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"VMLM");
        out.push(kind_tag(self.kind));
        out.extend_from_slice(&self.frac_bits.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            let v: i64 = num_traits::ToPrimitive::to_i64(&p.raw)
                .expect("model raw fits i64 at delivery scales");
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(t) = &self.tree {
            out.extend_from_slice(&(t.nodes.len() as u64).to_le_bytes());
            for n in &t.nodes {
                match n.split {
                    Some((f, b)) => {
                        out.push(1);
                        out.extend_from_slice(&(f as u32).to_le_bytes());
                        out.extend_from_slice(&b.to_le_bytes());
                    }
                    None => out.push(0),
                }
                out.extend_from_slice(&n.label.to_le_bytes());
                out.push(n.real as u8);
            }
        }
        out
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_bytes()).into()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<ModelState> {
        Ok(serde_json::from_str(s)?)
    }
}

fn kind_tag(k: ModelKind) -> u8 {
    match k {
        ModelKind::Linreg => 0,
        ModelKind::Logreg => 1,
        ModelKind::Nn => 2,
        ModelKind::Svm => 3,
        ModelKind::Kmeans => 4,
        ModelKind::Dtree => 5,
    }
}

/// One training step's result: the truncated next state plus the flattened
/// untruncated output the identifier commits to.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub next: ModelState,
    pub untruncated: Vec<FixedPoint>,
}

/// Scale of the untruncated per-iteration output, per algorithm.
pub fn untrunc_scale(kind: ModelKind, l: u32) -> u32 {
    match kind {
        ModelKind::Linreg => 4 * l,
        ModelKind::Logreg | ModelKind::Nn => 3 * l,
        ModelKind::Svm | ModelKind::Kmeans => l,
        ModelKind::Dtree => 0,
    }
}

/// Initial state both parties derive from the task alone.
pub fn init_state(cfg: &TrainConfig, ds: &Dataset, client_seed: u64) -> Result<ModelState> {
    let l = cfg.frac_bits;
    let d = ds.d();
    match cfg.algorithm {
        ModelKind::Linreg | ModelKind::Logreg | ModelKind::Svm => Ok(ModelState {
            kind: cfg.algorithm,
            iteration: 0,
            frac_bits: l,
            dims: vec![d],
            params: vec![FixedPoint::zero(l); d],
            tree: None,
            sigmoid: (cfg.algorithm == ModelKind::Logreg).then_some(cfg.sigmoid),
        }),
        ModelKind::Kmeans => kmeans::init(cfg, ds, client_seed),
        ModelKind::Nn => nn::init(cfg, ds, client_seed),
        ModelKind::Dtree => Err(Error::TaskConfig(
            "decision trees initialize from the bucketized histogram".into(),
        )),
    }
}

/// Dispatch one iteration; trees train through their own partition trace.
pub fn step(
    state: &ModelState,
    x: &[Vec<FixedPoint>],
    y: &BatchLabels,
    cfg: &TrainConfig,
    t_iter: u64,
) -> Result<StepOutput> {
    match state.kind {
        ModelKind::Linreg => linreg::step(state, x, y.reals()?, cfg),
        ModelKind::Logreg => logreg::step(state, x, y.classes()?, cfg),
        ModelKind::Svm => svm::step(state, x, y.classes()?, cfg, t_iter),
        ModelKind::Kmeans => kmeans::step(state, x, cfg),
        ModelKind::Nn => nn::step(state, x, y.classes()?, cfg),
        ModelKind::Dtree => Err(Error::TaskConfig(
            "use tree::build for decision trees".into(),
        )),
    }
}

/// Labels of one batch.
#[derive(Debug, Clone)]
pub enum BatchLabels {
    Real(Vec<FixedPoint>),
    Class(Vec<u32>),
    None,
}

impl BatchLabels {
    pub fn reals(&self) -> Result<&[FixedPoint]> {
        match self {
            BatchLabels::Real(v) => Ok(v),
            _ => Err(Error::TaskConfig("regression labels required".into())),
        }
    }

    pub fn classes(&self) -> Result<&[u32]> {
        match self {
            BatchLabels::Class(v) => Ok(v),
            _ => Err(Error::TaskConfig("class labels required".into())),
        }
    }

    pub fn gather(labels: &Labels, idx: &[usize]) -> BatchLabels {
        match labels {
            Labels::Real(v) => BatchLabels::Real(idx.iter().map(|&i| v[i].clone()).collect()),
            Labels::Class(v) => BatchLabels::Class(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Score(FixedPoint),
    Label(u32),
}

pub fn predict(state: &ModelState, sample: &[FixedPoint]) -> Result<Prediction> {
    match state.kind {
        ModelKind::Linreg => linreg::predict(state, sample),
        ModelKind::Logreg => logreg::predict(state, sample),
        ModelKind::Svm => svm::predict(state, sample),
        ModelKind::Kmeans => kmeans::predict(state, sample),
        ModelKind::Nn => nn::predict(state, sample),
        ModelKind::Dtree => tree::predict(state, sample),
    }
}

/// Epoch metric for the convergence rule: exact rational MSE for regression,
/// error rate for classifiers, mean nearest-centroid distance for K-means.
pub fn evaluate_metric(
    state: &ModelState,
    features: &[Vec<FixedPoint>],
    labels: &Labels,
    _cfg: &TrainConfig,
) -> Result<BigRational> {
    let n = features.len().max(1);
    match (&state.kind, labels) {
        (ModelKind::Linreg, Labels::Real(ys)) => {
            let mut acc = BigRational::zero();
            for (x, y) in features.iter().zip(ys) {
                if let Prediction::Score(p) = linreg::predict(state, x)? {
                    let diff = p.to_rational() - y.to_rational();
                    acc += &diff * &diff;
                }
            }
            Ok(acc / BigRational::from_integer(BigInt::from(n as u64)))
        }
        (ModelKind::Kmeans, _) => {
            let mut acc = BigRational::zero();
            for x in features {
                let (_, best) = kmeans::nearest(state, x)?;
                acc += FixedPoint {
                    raw: best,
                    frac_bits: 2 * state.frac_bits,
                }
                .to_rational();
            }
            Ok(acc / BigRational::from_integer(BigInt::from(n as u64)))
        }
        (_, Labels::Class(ys)) => {
            let mut wrong = 0u64;
            for (x, &y) in features.iter().zip(ys) {
                let got = match predict(state, x)? {
                    Prediction::Label(lbl) => lbl,
                    Prediction::Score(s) => {
                        (s.raw >= (BigInt::one() << (state.frac_bits - 1))) as u32
                    }
                };
                if got != y {
                    wrong += 1;
                }
            }
            Ok(BigRational::new(
                BigInt::from(wrong),
                BigInt::from(n as u64),
            ))
        }
        _ => Err(Error::TaskConfig(
            "metric undefined for this label/model pair".into(),
        )),
    }
}

/// Accuracy as (correct, total); classification models only.
pub fn accuracy(
    state: &ModelState,
    features: &[Vec<FixedPoint>],
    labels: &Labels,
) -> Result<(u64, u64)> {
    let ys = match labels {
        Labels::Class(v) => v,
        _ => return Err(Error::TaskConfig("accuracy needs class labels".into())),
    };
    let mut correct = 0u64;
    for (x, &y) in features.iter().zip(ys) {
        let got = match predict(state, x)? {
            Prediction::Label(lbl) => lbl,
            Prediction::Score(s) => (s.raw >= (BigInt::one() << (state.frac_bits - 1))) as u32,
        };
        if got == y {
            correct += 1;
        }
    }
    Ok((correct, features.len() as u64))
}

/// NN layer shape [d, hidden..., classes].
pub fn nn_shape(cfg: &TrainConfig, d: usize) -> Vec<usize> {
    let mut shape = vec![d];
    shape.extend_from_slice(&cfg.nn_hidden);
    shape.push(cfg.num_classes);
    shape
}

/// Deterministic helper shared by NN init and dropout-style randomness.
pub fn init_prng(client_seed: u64, tag: &str) -> PinnedPrng {
    PinnedPrng::with_context(client_seed, tag, &[])
}
