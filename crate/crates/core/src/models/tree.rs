//! Histogram-based CART in fixed point (counts are exact integers).
//!
//! The model state is the flattened per-node histogram tensor of a perfect
//! binary tree, indexed [node][feature][bin][class]; training is a sequence
//! of partition steps in level order, one per internal node, so the tree
//! shape never leaks through the iteration count. A real split routes the
//! node's samples; a pure/dummy node copies its histogram to the left child
//! and zeroes the right, keeping parent = left + right everywhere.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use super::{ModelState, Prediction, StepOutput, TrainConfig, TreeNode, TreeStructure};
use crate::dataio::HistogramSet;
use crate::error::{Error, Result};
use crate::fixedpoint::FixedPoint;

pub struct TreeDims {
    pub nodes: usize,
    pub internal: usize,
    pub d: usize,
    pub bins: usize,
    pub classes: usize,
    pub per_node: usize,
}

pub fn tree_dims(cfg: &TrainConfig, hist: &HistogramSet) -> TreeDims {
    let d = hist.bins[0].len();
    let nodes = (1usize << (cfg.max_depth + 1)) - 1;
    TreeDims {
        nodes,
        internal: (1 << cfg.max_depth) - 1,
        d,
        bins: hist.k_bins,
        classes: hist.num_classes,
        per_node: d * hist.k_bins * hist.num_classes,
    }
}

fn slot(dims: &TreeDims, node: usize, f: usize, b: usize, c: usize) -> usize {
    ((node * dims.d + f) * dims.bins + b) * dims.classes + c
}

/// Root-only histogram state: every other node zero.
pub fn init(cfg: &TrainConfig, hist: &HistogramSet) -> Result<ModelState> {
    let dims = tree_dims(cfg, hist);
    if hist.bins.is_empty() {
        return Err(Error::Dataset(
            "tree training needs at least one sample".into(),
        ));
    }
    let mut params = vec![FixedPoint::zero(0); dims.nodes * dims.per_node];
    for f in 0..dims.d {
        for b in 0..dims.bins {
            for c in 0..dims.classes {
                params[slot(&dims, 0, f, b, c)] =
                    FixedPoint::from_raw(hist.root_counts[f][b][c] as i64, 0);
            }
        }
    }
    Ok(ModelState {
        kind: super::ModelKind::Dtree,
        iteration: 0,
        frac_bits: 0,
        dims: vec![dims.nodes, dims.d, dims.bins, dims.classes],
        params,
        tree: None,
        sigmoid: None,
    })
}

fn gini_impurity_times_n(class_counts: &[u64]) -> BigRational {
    // n * (1 - sum (c/n)^2) = n - sum c^2 / n
    let n: u64 = class_counts.iter().sum();
    if n == 0 {
        return BigRational::zero();
    }
    let sq: u64 = class_counts.iter().map(|&c| c * c).sum();
    BigRational::from_integer(BigInt::from(n)) - BigRational::new(BigInt::from(sq), BigInt::from(n))
}

fn entropy_times_n(class_counts: &[u64]) -> BigRational {
    // exactness is not needed for the entropy option; scale a careful f64
    let n: u64 = class_counts.iter().sum();
    if n == 0 {
        return BigRational::zero();
    }
    let mut h = 0.0f64;
    for &c in class_counts {
        if c > 0 {
            let p = c as f64 / n as f64;
            h -= p * p.log2();
        }
    }
    BigRational::from_float(h * n as f64).unwrap_or_else(BigRational::zero)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    Gini,
    Entropy,
}

/// Best (feature, threshold bin) by impurity gain over the node histogram;
/// ties break to the lowest (feature, bin). Returns None when nothing gains.
pub fn best_split(
    node_hist: &[Vec<Vec<u64>>],
    criterion: SplitCriterion,
) -> Option<(usize, u32, BigRational)> {
    let d = node_hist.len();
    let bins = node_hist[0].len();
    let classes = node_hist[0][0].len();
    let imp = |counts: &[u64]| match criterion {
        SplitCriterion::Gini => gini_impurity_times_n(counts),
        SplitCriterion::Entropy => entropy_times_n(counts),
    };
    let mut parent_counts = vec![0u64; classes];
    for b in 0..bins {
        for c in 0..classes {
            parent_counts[c] += node_hist[0][b][c];
        }
    }
    let parent_imp = imp(&parent_counts);
    let mut best: Option<(usize, u32, BigRational)> = None;
    for f in 0..d {
        let mut left = vec![0u64; classes];
        // threshold t sends bins <= t left; the last bin never splits
        for t in 0..bins - 1 {
            for c in 0..classes {
                left[c] += node_hist[f][t][c];
            }
            let mut right = vec![0u64; classes];
            for b in t + 1..bins {
                for c in 0..classes {
                    right[c] += node_hist[f][b][c];
                }
            }
            if left.iter().sum::<u64>() == 0 || right.iter().sum::<u64>() == 0 {
                continue;
            }
            let gain = &parent_imp - imp(&left) - imp(&right);
            if gain > BigRational::zero() {
                let better = match &best {
                    None => true,
                    Some((_, _, g)) => gain > *g,
                };
                if better {
                    best = Some((f, t as u32, gain.clone()));
                }
            }
        }
    }
    best
}

pub struct TreeTrace {
    pub initial: ModelState,
    /// State after each partition step, one per internal node in level order.
    pub states: Vec<StepOutput>,
    pub structure: TreeStructure,
}

fn majority(class_counts: &[u64]) -> u32 {
    let mut best = 0usize;
    for c in 1..class_counts.len() {
        if class_counts[c] > class_counts[best] {
            best = c;
        }
    }
    best as u32
}

fn node_class_counts(hist: &[Vec<Vec<u64>>]) -> Vec<u64> {
    let classes = hist[0][0].len();
    let mut counts = vec![0u64; classes];
    for b in 0..hist[0].len() {
        for c in 0..classes {
            counts[c] += hist[0][b][c];
        }
    }
    counts
}

/// Greedy top-down build over the bucketized data, emitting one partition
/// step per internal node of the padded perfect tree.
pub fn build(
    hist: &HistogramSet,
    labels: &[u32],
    cfg: &TrainConfig,
    criterion: SplitCriterion,
) -> Result<TreeTrace> {
    let n = hist.bins.len();
    if n == 0 {
        return Err(Error::Dataset("zero samples at root".into()));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    let dims = tree_dims(cfg, hist);
    let initial = init(cfg, hist)?;

    // per-node sample index sets; dummies own no samples
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); dims.nodes];
    members[0] = (0..n).collect();
    let mut node_hists: Vec<Option<Vec<Vec<Vec<u64>>>>> = vec![None; dims.nodes];
    node_hists[0] = Some(histogram_of(hist, &members[0], labels));
    let mut nodes = vec![
        TreeNode {
            split: None,
            label: 0,
            real: false
        };
        dims.nodes
    ];
    nodes[0].real = true;

    let mut state = initial.clone();
    let mut states = Vec::with_capacity(dims.internal);
    for p in 0..dims.internal {
        let (lch, rch) = (2 * p + 1, 2 * p + 2);
        let mut params = state.params.clone();
        let split;
        let node_hist = node_hists[p].clone();
        match &node_hist {
            Some(h) if nodes[p].real => {
                let counts = node_class_counts(h);
                nodes[p].label = majority(&counts);
                let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
                split = if pure { None } else { best_split(h, criterion) };
                match split {
                    Some((f, t, _)) => {
                        nodes[p].split = Some((f, t));
                        let (lm, rm): (Vec<usize>, Vec<usize>) =
                            members[p].iter().partition(|&&i| hist.bins[i][f] <= t);
                        let lh = histogram_of(hist, &lm, labels);
                        let rh = histogram_of(hist, &rm, labels);
                        write_node(&mut params, &dims, lch, &lh);
                        write_node(&mut params, &dims, rch, &rh);
                        node_hists[lch] = Some(lh);
                        node_hists[rch] = Some(rh);
                        members[lch] = lm;
                        members[rch] = rm;
                        nodes[lch].real = true;
                        nodes[rch].real = true;
                        nodes[lch].label = nodes[p].label;
                        nodes[rch].label = nodes[p].label;
                    }
                    None => {
                        // pure or gainless: copy left, zero right
                        copy_node(&mut params, &dims, p, lch);
                        node_hists[lch] = node_hist.clone();
                        nodes[lch].label = nodes[p].label;
                    }
                }
            }
            _ => {
                // dummy padding keeps parent = left + right
                copy_node(&mut params, &dims, p, lch);
                node_hists[lch] = node_hist.clone();
                nodes[lch].label = nodes[p].label;
            }
        }
        let next = ModelState {
            kind: state.kind,
            iteration: state.iteration + 1,
            frac_bits: 0,
            dims: state.dims.clone(),
            params,
            tree: None,
            sigmoid: None,
        };
        let untruncated = next.params.clone();
        states.push(StepOutput {
            next: next.clone(),
            untruncated,
        });
        state = next;
    }
    // labels for leaf positions that never saw a split keep their ancestor label
    let structure = TreeStructure {
        nodes,
        depth: cfg.max_depth,
    };
    let mut last = states
        .last()
        .map(|s| s.next.clone())
        .unwrap_or_else(|| initial.clone());
    last.tree = Some(structure.clone());
    if let Some(s) = states.last_mut() {
        s.next = last;
    }
    Ok(TreeTrace {
        initial,
        states,
        structure,
    })
}

fn histogram_of(hist: &HistogramSet, members: &[usize], labels: &[u32]) -> Vec<Vec<Vec<u64>>> {
    let d = hist.bins[0].len();
    let mut out = vec![vec![vec![0u64; hist.num_classes]; hist.k_bins]; d];
    for &i in members {
        for f in 0..d {
            out[f][hist.bins[i][f] as usize][labels[i] as usize] += 1;
        }
    }
    out
}

fn write_node(params: &mut [FixedPoint], dims: &TreeDims, node: usize, hist: &[Vec<Vec<u64>>]) {
    for f in 0..dims.d {
        for b in 0..dims.bins {
            for c in 0..dims.classes {
                params[slot(dims, node, f, b, c)] = FixedPoint::from_raw(hist[f][b][c] as i64, 0);
            }
        }
    }
}

fn copy_node(params: &mut [FixedPoint], dims: &TreeDims, from: usize, to: usize) {
    for off in 0..dims.per_node {
        params[to * dims.per_node + off] = params[from * dims.per_node + off].clone();
    }
}

/// Traverse real splits; expects the sample as bucketized bin indices
/// encoded at scale 0.
pub fn predict(state: &ModelState, sample: &[FixedPoint]) -> Result<Prediction> {
    let t = state
        .tree
        .as_ref()
        .ok_or_else(|| Error::TaskConfig("tree state lacks structure".into()))?;
    let mut node = 0usize;
    loop {
        match t.nodes[node].split {
            Some((f, thr)) => {
                if f >= sample.len() {
                    return Err(Error::DimensionMismatch {
                        expected: f + 1,
                        got: sample.len(),
                    });
                }
                let bin = num_traits::ToPrimitive::to_u32(&sample[f].raw).unwrap_or(0);
                node = if bin <= thr {
                    2 * node + 1
                } else {
                    2 * node + 2
                };
            }
            None => return Ok(Prediction::Label(t.nodes[node].label)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{bucketize, parse_csv};
    use crate::models::{Activation, ModelKind, SigmoidKind};

    fn cfg(depth: usize, bins: usize) -> TrainConfig {
        TrainConfig {
            algorithm: ModelKind::Dtree,
            frac_bits: 8,
            batch_size: 1,
            alpha: FixedPoint::from_raw(1 << 8, 8),
            conv_threshold: None,
            max_epochs: 1,
            int_budget: 16,
            lambda: FixedPoint::from_raw(1, 4),
            k_clusters: 4,
            k_bins: bins,
            max_depth: depth,
            nn_hidden: vec![],
            num_classes: 2,
            sigmoid: SigmoidKind::Remez,
            activation: Activation::Square,
        }
    }

    fn labels_of(ds: &crate::dataio::Dataset) -> Vec<u32> {
        match &ds.labels {
            crate::dataio::Labels::Class(v) => v.clone(),
            _ => panic!(),
        }
    }

    #[test]
    fn pure_dataset_yields_single_leaf() {
        let text = "0.1,0\n0.6,0\n0.9,0\n";
        let ds = parse_csv(text, 1, 8, "t").unwrap();
        let h = bucketize(&ds, 2).unwrap();
        let c = cfg(2, 2);
        let trace = build(&h, &labels_of(&ds), &c, SplitCriterion::Gini).unwrap();
        assert!(trace.structure.nodes[0].split.is_none());
        assert_eq!(trace.structure.nodes[0].label, 0);
        assert_eq!(trace.states.len(), 3); // padded partition steps
    }

    #[test]
    fn perfect_binary_feature_splits_at_depth_one() {
        let text = "0.1,0\n0.2,0\n0.8,1\n0.9,1\n";
        let ds = parse_csv(text, 1, 8, "t").unwrap();
        let h = bucketize(&ds, 2).unwrap();
        let c = cfg(2, 2);
        let trace = build(&h, &labels_of(&ds), &c, SplitCriterion::Gini).unwrap();
        assert_eq!(trace.structure.nodes[0].split, Some((0, 0)));
        // gain equals parent impurity for a perfect split
        let hist = vec![vec![vec![2u64, 0], vec![0, 2]]];
        let (_, _, gain) = best_split(&hist, SplitCriterion::Gini).unwrap();
        assert_eq!(gain, gini_impurity_times_n(&[2, 2]));
        // children are pure leaves with the right labels
        let final_state = &trace.states.last().unwrap().next;
        let t = final_state.tree.as_ref().unwrap();
        assert_eq!(t.nodes[1].label, 0);
        assert_eq!(t.nodes[2].label, 1);
    }

    #[test]
    fn parent_equals_children_sum_everywhere() {
        let ds =
            crate::dataio::synth_with(crate::dataio::SynthKind::Multiclass, 300, 4, 13, 8, 0.05)
                .unwrap();
        let h = bucketize(&ds, 4).unwrap();
        let c = cfg(3, 4);
        let trace = build(&h, &labels_of(&ds), &c, SplitCriterion::Gini).unwrap();
        let final_state = &trace.states.last().unwrap().next;
        let dims = tree_dims(&c, &h);
        for p in 0..dims.internal {
            for off in 0..dims.per_node {
                let parent = &final_state.params[p * dims.per_node + off].raw;
                let left = &final_state.params[(2 * p + 1) * dims.per_node + off].raw;
                let right = &final_state.params[(2 * p + 2) * dims.per_node + off].raw;
                assert_eq!(parent, &(left + right), "node {p} offset {off}");
            }
        }
    }

    #[test]
    fn training_samples_from_pure_leaves_predict_their_label() {
        let text = "0.1,0\n0.2,0\n0.8,1\n0.9,1\n";
        let ds = parse_csv(text, 1, 8, "t").unwrap();
        let h = bucketize(&ds, 2).unwrap();
        let c = cfg(2, 2);
        let trace = build(&h, &labels_of(&ds), &c, SplitCriterion::Gini).unwrap();
        let state = &trace.states.last().unwrap().next;
        let ys = labels_of(&ds);
        for i in 0..ds.n() {
            let sample: Vec<FixedPoint> = h.bins[i]
                .iter()
                .map(|&b| FixedPoint::from_raw(b as i64, 0))
                .collect();
            match predict(state, &sample).unwrap() {
                Prediction::Label(lbl) => assert_eq!(lbl, ys[i]),
                _ => panic!(),
            }
        }
    }
}
