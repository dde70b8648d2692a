//! Path-dependent TreeSHAP and its exponential-time reference.
//!
//! Both compute Shapley values of the same game: v(S) descends the tree
//! following the instance on features in S and averages both children by
//! cover on every other feature.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{NodeKind, Tree};
use super::{Forest, ModelError};

pub const SHAP_VARIANT: &str = "tree_path_dependent";
pub const BRUTE_FORCE_MAX_FEATURES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub variant: String,
    pub feature_names: Vec<String>,
    pub base_value: f64,
    /// One row per instance, one column per feature.
    pub values: Vec<Vec<f64>>,
}

impl ShapMatrix {
    /// Mean |φ| per feature.
    pub fn mean_abs(&self) -> Vec<f64> {
        let p = self.feature_names.len();
        let mut out = vec![0.0; p];
        for row in &self.values {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v.abs();
            }
        }
        let n = self.values.len().max(1) as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

#[derive(Clone, Copy, Debug)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: Option<usize>) {
    let depth = path.len();
    path.push(PathElement { feature, zero_fraction, one_fraction, weight: if depth == 0 { 1.0 } else { 0.0 } });
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one_fraction * path[i].weight * (i + 1) as f64 / d1;
        path[i].weight = zero_fraction * path[i].weight * (depth - i) as f64 / d1;
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let PathElement { zero_fraction, one_fraction, .. } = path[index];
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].weight;
    for i in (0..depth).rev() {
        if one_fraction != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next_one * d1 / ((i + 1) as f64 * one_fraction);
            next_one = tmp - path[i].weight * zero_fraction * (depth - i) as f64 / d1;
        } else {
            path[i].weight = path[i].weight * d1 / (zero_fraction * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

/// Total permutation weight of the path with element `index` removed.
fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let PathElement { zero_fraction, one_fraction, .. } = path[index];
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one_fraction != 0.0 {
            let tmp = next_one * d1 / ((i + 1) as f64 * one_fraction);
            total += tmp;
            next_one = path[i].weight - tmp * zero_fraction * (depth - i) as f64 / d1;
        } else if zero_fraction != 0.0 {
            total += path[i].weight / zero_fraction / ((depth - i) as f64 / d1);
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &Tree,
    node: usize,
    row: &[f64],
    phi: &mut [f64],
    parent_path: &[PathElement],
    zero_fraction: f64,
    one_fraction: f64,
    feature: Option<usize>,
) {
    let mut path = Vec::with_capacity(parent_path.len() + 1);
    path.extend_from_slice(parent_path);
    extend(&mut path, zero_fraction, one_fraction, feature);

    match tree.nodes[node].kind {
        NodeKind::Leaf { value } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let el = path[i];
                if let Some(f) = el.feature {
                    phi[f] += w * (el.one_fraction - el.zero_fraction) * value;
                }
            }
        }
        NodeKind::Split { feature: split, left, right, .. } => {
            let hot = tree.route(node, row);
            let cold = if hot == left { right } else { left };
            let cover = tree.nodes[node].cover;
            let hot_zero = tree.nodes[hot].cover / cover;
            let cold_zero = tree.nodes[cold].cover / cover;

            let (mut incoming_zero, mut incoming_one) = (1.0, 1.0);
            if let Some(k) = path.iter().position(|e| e.feature == Some(split)) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind(&mut path, k);
            }
            recurse(tree, hot, row, phi, &path, hot_zero * incoming_zero, incoming_one, Some(split));
            recurse(tree, cold, row, phi, &path, cold_zero * incoming_zero, 0.0, Some(split));
        }
    }
}

/// Exact path-dependent Shapley values of one tree for one instance.
pub fn tree_shap(tree: &Tree, row: &[f64], n_features: usize) -> Vec<f64> {
    let mut phi = vec![0.0; n_features];
    if tree.root().cover > 0.0 {
        recurse(tree, 0, row, &mut phi, &[], 1.0, 1.0, None);
    }
    phi
}

pub fn shap_values(forest: &Forest, instances: &[Vec<f64>]) -> Result<ShapMatrix, ModelError> {
    let p = forest.n_features();
    let n_trees = forest.trees.len() as f64;
    let values = instances
        .par_iter()
        .map(|row| {
            if row.len() != p {
                return Err(ModelError::Shape { expected: p, got: row.len() });
            }
            let mut phi = vec![0.0; p];
            for tree in &forest.trees {
                for (acc, v) in phi.iter_mut().zip(tree_shap(tree, row, p)) {
                    *acc += v;
                }
            }
            phi.iter_mut().for_each(|v| *v /= n_trees);
            Ok(phi)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ShapMatrix {
        variant: SHAP_VARIANT.into(),
        feature_names: forest.feature_names.clone(),
        base_value: forest.expected_value(),
        values,
    })
}

/// v(S) for a feature subset given as a bitmask.
fn conditional_value(tree: &Tree, node: usize, row: &[f64], known: u64) -> f64 {
    match tree.nodes[node].kind {
        NodeKind::Leaf { value } => value,
        NodeKind::Split { feature, left, right, .. } => {
            if known & (1 << feature) != 0 {
                conditional_value(tree, tree.route(node, row), row, known)
            } else {
                let (cl, cr) = (tree.nodes[left].cover, tree.nodes[right].cover);
                let total = cl + cr;
                if total == 0.0 {
                    return 0.0;
                }
                (cl * conditional_value(tree, left, row, known) + cr * conditional_value(tree, right, row, known)) / total
            }
        }
    }
}

/// Shapley values by enumerating every feature subset (2^p evaluations of
/// the path-dependent value function). Reference for [`shap_values`].
pub fn shap_brute_force(trees: &[Tree], row: &[f64], n_features: usize) -> Result<Vec<f64>, ModelError> {
    if n_features > BRUTE_FORCE_MAX_FEATURES {
        return Err(ModelError::TooManyFeatures { got: n_features, max: BRUTE_FORCE_MAX_FEATURES });
    }
    if row.len() != n_features {
        return Err(ModelError::Shape { expected: n_features, got: row.len() });
    }
    let p = n_features;
    let subsets = 1usize << p;
    let values: Vec<f64> = (0..subsets)
        .map(|mask| trees.iter().map(|t| conditional_value(t, 0, row, mask as u64)).sum::<f64>() / trees.len() as f64)
        .collect();

    let mut factorial = vec![1.0f64; p + 1];
    for k in 1..=p {
        factorial[k] = factorial[k - 1] * k as f64;
    }
    let weight = |s: usize| factorial[s] * factorial[p - s - 1] / factorial[p];

    let mut phi = vec![0.0; p];
    for (j, slot) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        for mask in 0..subsets {
            if mask & bit == 0 {
                *slot += weight(mask.count_ones() as usize) * (values[mask | bit] - values[mask]);
            }
        }
    }
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tree::Node;

    fn stump(feature: usize, threshold: f64, left: f64, right: f64, cl: f64, cr: f64) -> Tree {
        Tree {
            nodes: vec![
                Node { kind: NodeKind::Split { feature, threshold, left: 1, right: 2 }, cover: cl + cr },
                Node { kind: NodeKind::Leaf { value: left }, cover: cl },
                Node { kind: NodeKind::Leaf { value: right }, cover: cr },
            ],
        }
    }

    #[test]
    fn stump_attributes_everything_to_its_feature() {
        let t = stump(2, 0.5, 0.2, 0.8, 30.0, 10.0);
        let base = t.expected_value();
        assert!((base - (0.2 * 30.0 + 0.8 * 10.0) / 40.0).abs() < 1e-15);
        let row = [9.0, 9.0, 1.0, 9.0];
        let phi = tree_shap(&t, &row, 4);
        assert!((phi[2] - (0.8 - base)).abs() < 1e-12);
        assert_eq!(phi[0], 0.0);
        assert_eq!(phi[1], 0.0);
        assert_eq!(phi[3], 0.0);
        let brute = shap_brute_force(std::slice::from_ref(&t), &row, 4).unwrap();
        for (a, b) in phi.iter().zip(&brute) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_tree_is_null_game() {
        let t = Tree::leaf(0.7, 12.0);
        assert_eq!(shap_brute_force(std::slice::from_ref(&t), &[1.0, 2.0], 2).unwrap(), vec![0.0, 0.0]);
        assert_eq!(tree_shap(&t, &[1.0, 2.0], 2), vec![0.0, 0.0]);
    }

    #[test]
    fn repeated_feature_on_path() {
        // Split on 0, then again on 0 below, then on 1.
        let t = Tree {
            nodes: vec![
                Node { kind: NodeKind::Split { feature: 0, threshold: 0.5, left: 1, right: 2 }, cover: 10.0 },
                Node { kind: NodeKind::Leaf { value: 0.1 }, cover: 4.0 },
                Node { kind: NodeKind::Split { feature: 0, threshold: 1.5, left: 3, right: 4 }, cover: 6.0 },
                Node { kind: NodeKind::Split { feature: 1, threshold: 0.5, left: 5, right: 6 }, cover: 3.0 },
                Node { kind: NodeKind::Leaf { value: 0.9 }, cover: 3.0 },
                Node { kind: NodeKind::Leaf { value: 0.3 }, cover: 1.0 },
                Node { kind: NodeKind::Leaf { value: 0.6 }, cover: 2.0 },
            ],
        };
        for row in [[1.0, 0.0], [1.0, 1.0], [2.0, 0.0], [0.0, 1.0]] {
            let fast = tree_shap(&t, &row, 2);
            let slow = shap_brute_force(std::slice::from_ref(&t), &row, 2).unwrap();
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "{fast:?} vs {slow:?}");
            }
            let total: f64 = fast.iter().sum::<f64>() + t.expected_value();
            assert!((total - t.predict(&row)).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_force_limits() {
        let t = Tree::leaf(0.5, 1.0);
        assert!(matches!(
            shap_brute_force(&[t], &[0.0; 13], 13),
            Err(ModelError::TooManyFeatures { got: 13, .. })
        ));
    }
}
