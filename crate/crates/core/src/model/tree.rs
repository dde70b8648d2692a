use rand::seq::SliceRandom;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodeKind {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] < threshold` (or NaN → right) go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    /// Training rows reaching this node, bootstrap duplicates included.
    pub cover: f64,
}

/// Binary decision tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, cover: f64) -> Tree {
        Tree { nodes: vec![Node { kind: NodeKind::Leaf { value }, cover }] }
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    /// Index of the child `row` is routed to at split node `node`.
    pub fn route(&self, node: usize, row: &[f64]) -> usize {
        match self.nodes[node].kind {
            NodeKind::Split { feature, threshold, left, right } => {
                if row[feature] < threshold {
                    left
                } else {
                    right
                }
            }
            NodeKind::Leaf { .. } => node,
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i].kind {
                NodeKind::Leaf { value } => return value,
                NodeKind::Split { .. } => i = self.route(i, row),
            }
        }
    }

    /// Cover-weighted mean leaf value, i.e. the prediction with no feature known.
    pub fn expected_value(&self) -> f64 {
        let root = self.root().cover;
        if root <= 0.0 {
            return 0.0;
        }
        self.nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Leaf { value } => Some(value * n.cover),
                NodeKind::Split { .. } => None,
            })
            .sum::<f64>()
            / root
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i].kind {
                NodeKind::Leaf { .. } => 0,
                NodeKind::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n.kind {
            NodeKind::Split { feature, .. } => Some(feature),
            NodeKind::Leaf { .. } => None,
        })
    }
}

pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub features_per_split: usize,
}

pub(crate) struct TrainView<'a> {
    pub x: &'a [f64],
    pub p: usize,
    pub labels: &'a [bool],
}

impl TrainView<'_> {
    fn value(&self, row: usize, feature: usize) -> f64 {
        self.x[row * self.p + feature]
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    /// Lower impurity wins; ties go to the lower feature index, then the
    /// lower threshold.
    fn beats(&self, other: &Candidate) -> bool {
        self.impurity < other.impurity
            || (self.impurity == other.impurity
                && (self.feature < other.feature || (self.feature == other.feature && self.threshold < other.threshold)))
    }
}

/// Weighted Gini impurity n·(1 − p² − (1−p)²) of a node with `pos` positives out of `n`.
fn gini_mass(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        n - (pos * pos + (n - pos) * (n - pos)) / n
    }
}

/// Grows a CART tree on the (possibly repeated) row indices `sample`.
pub(crate) fn grow_tree(view: &TrainView<'_>, sample: Vec<usize>, params: &GrowParams, rng: &mut ChaCha8Rng) -> Tree {
    let mut tree = Tree { nodes: Vec::new() };
    grow_node(view, sample, 0, params, rng, &mut tree);
    tree
}

fn grow_node(view: &TrainView<'_>, mut sample: Vec<usize>, depth: usize, params: &GrowParams, rng: &mut ChaCha8Rng, tree: &mut Tree) -> usize {
    let n = sample.len() as f64;
    let pos = sample.iter().filter(|&&i| view.labels[i]).count() as f64;
    let id = tree.nodes.len();
    let value = if n > 0.0 { pos / n } else { 0.0 };
    tree.nodes.push(Node { kind: NodeKind::Leaf { value }, cover: n });

    let pure = pos == 0.0 || pos == n;
    let depth_reached = params.max_depth.is_some_and(|d| depth >= d);
    if pure || depth_reached || sample.len() < 2 * params.min_samples_leaf.max(1) {
        return id;
    }

    let Some(best) = best_split(view, &mut sample, params, rng) else {
        return id;
    };
    let (left, right): (Vec<usize>, Vec<usize>) =
        sample.into_iter().partition(|&i| view.value(i, best.feature) < best.threshold);
    let l = grow_node(view, left, depth + 1, params, rng, tree);
    let r = grow_node(view, right, depth + 1, params, rng, tree);
    tree.nodes[id].kind = NodeKind::Split { feature: best.feature, threshold: best.threshold, left: l, right: r };
    id
}

fn best_split(view: &TrainView<'_>, sample: &mut [usize], params: &GrowParams, rng: &mut ChaCha8Rng) -> Option<Candidate> {
    let mut features: Vec<usize> = (0..view.p).collect();
    features.shuffle(rng);
    let min_leaf = params.min_samples_leaf.max(1);
    let total = sample.len();
    let total_pos = sample.iter().filter(|&&i| view.labels[i]).count();

    let mut best: Option<Candidate> = None;
    let mut visited = 0;
    for &f in &features {
        if visited >= params.features_per_split {
            break;
        }
        sample.sort_by(|&a, &b| view.value(a, f).total_cmp(&view.value(b, f)).then(a.cmp(&b)));
        let first = view.value(sample[0], f);
        let last = view.value(sample[total - 1], f);
        if first == last {
            // Constant in this node; does not count toward the budget.
            continue;
        }
        visited += 1;

        let mut left_pos = 0usize;
        for k in 0..total - 1 {
            left_pos += usize::from(view.labels[sample[k]]);
            let here = view.value(sample[k], f);
            let next = view.value(sample[k + 1], f);
            if here == next {
                continue;
            }
            let n_left = k + 1;
            let n_right = total - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let impurity = gini_mass(left_pos as f64, n_left as f64)
                + gini_mass((total_pos - left_pos) as f64, n_right as f64);
            let mut threshold = here + (next - here) / 2.0;
            if threshold <= here {
                threshold = next;
            }
            let cand = Candidate { impurity, feature: f, threshold };
            if best.as_ref().is_none_or(|b| cand.beats(b)) {
                best = Some(cand);
            }
        }
    }
    best
}

/// Bootstrap draw of `n` rows with replacement, sorted for reproducible
/// downstream ordering.
pub(crate) fn bootstrap(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    v.sort_unstable();
    v
}
