use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};
use crate::math;
use crate::types::Dataset;

/// Node of a flattened CART tree; `x[feature] <= threshold` goes left.
/// Children always have larger indices than their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        proba: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub n_features: usize,
    pub n_classes: usize,
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    /// Node indices visited from the root to the leaf reached by `x`.
    pub fn decision_path(&self, x: &[f64]) -> Vec<usize> {
        let mut path = vec![0];
        let mut at = 0;
        while let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } = &self.nodes[at]
        {
            at = if x[*feature] <= *threshold { *left } else { *right };
            path.push(at);
        }
        path
    }

    pub fn proba(&self, x: &[f64]) -> &[f64] {
        let leaf = *self.decision_path(x).last().unwrap();
        match &self.nodes[leaf] {
            TreeNode::Leaf { proba } => proba,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

/// Bootstrap-aggregated trees; probabilities are the mean of the trees' leaf distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub n_features: usize,
    pub n_classes: usize,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn proba(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        for t in &self.trees {
            math::axpy(&mut p, 1.0, t.proba(x));
        }
        let m = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= m);
        p
    }
}

struct Builder<'a, R> {
    xs: &'a [Vec<f64>],
    ys: &'a [usize],
    n_classes: usize,
    max_depth: usize,
    max_features: usize,
    rng: Option<R>,
    nodes: Vec<TreeNode>,
}

fn gini_weighted(counts: &[usize], n: usize) -> f64 {
    // n * gini = n - sum c^2 / n
    if n == 0 {
        return 0.0;
    }
    let s: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - s / n as f64
}

impl<R: Rng> Builder<'_, R> {
    fn leaf(&self, idx: &[usize]) -> TreeNode {
        let mut counts = vec![0.0; self.n_classes];
        for &i in idx {
            counts[self.ys[i]] += 1.0;
        }
        let n = idx.len() as f64;
        TreeNode::Leaf {
            proba: counts.into_iter().map(|c| c / n).collect(),
        }
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64)> {
        let d = self.xs[0].len();
        let features: Vec<usize> = match self.rng.as_mut() {
            Some(rng) if self.max_features < d => sample(rng, d, self.max_features).into_vec(),
            _ => (0..d).collect(),
        };
        let mut total = vec![0usize; self.n_classes];
        for &i in idx {
            total[self.ys[i]] += 1;
        }
        let parent = gini_weighted(&total, idx.len());
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = idx.to_vec();
        for f in features {
            sorted.sort_by(|&a, &b| self.xs[a][f].total_cmp(&self.xs[b][f]));
            let mut left = vec![0usize; self.n_classes];
            let mut right = total.clone();
            for k in 0..sorted.len() - 1 {
                let c = self.ys[sorted[k]];
                left[c] += 1;
                right[c] -= 1;
                let (v, v_next) = (self.xs[sorted[k]][f], self.xs[sorted[k + 1]][f]);
                if v == v_next {
                    continue;
                }
                let nl = k + 1;
                let score = gini_weighted(&left, nl) + gini_weighted(&right, sorted.len() - nl);
                if best.is_none_or(|(s, _, _)| score < s) {
                    best = Some((score, f, 0.5 * (v + v_next)));
                }
            }
        }
        match best {
            Some((score, f, t)) if score < parent - 1e-12 => Some((f, t)),
            _ => None,
        }
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { proba: vec![] });
        let first = self.ys[idx[0]];
        let pure = idx.iter().all(|&i| self.ys[i] == first);
        let split = if depth >= self.max_depth || pure || idx.len() < 2 {
            None
        } else {
            self.best_split(idx)
        };
        match split {
            None => self.nodes[at] = self.leaf(idx),
            Some((feature, threshold)) => {
                let mut cut = 0;
                for k in 0..idx.len() {
                    if self.xs[idx[k]][feature] <= threshold {
                        idx.swap(k, cut);
                        cut += 1;
                    }
                }
                let (l, r) = idx.split_at_mut(cut);
                let left = self.build(l, depth + 1);
                let right = self.build(r, depth + 1);
                self.nodes[at] = TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
            }
        }
        at
    }
}

fn check_inputs(data: &Dataset, max_depth: usize) -> Result<usize> {
    if max_depth < 1 {
        return Err(ProbeError::Spec("max_depth must be at least 1".into()));
    }
    if data.is_empty() {
        return Err(ProbeError::Spec("cannot fit a tree on an empty dataset".into()));
    }
    data.task()
        .n_classes()
        .ok_or_else(|| ProbeError::Arity("trees need classification labels".into()))
}

fn grow<R: Rng>(
    xs: &[Vec<f64>],
    ys: &[usize],
    mut idx: Vec<usize>,
    n_classes: usize,
    max_depth: usize,
    max_features: usize,
    rng: Option<R>,
) -> DecisionTree {
    let mut b = Builder {
        xs,
        ys,
        n_classes,
        max_depth,
        max_features,
        rng,
        nodes: Vec::new(),
    };
    b.build(&mut idx, 0);
    DecisionTree {
        n_features: xs[0].len(),
        n_classes,
        nodes: b.nodes,
    }
}

/// CART with Gini impurity.
pub fn fit_tree(data: &Dataset, max_depth: usize) -> Result<DecisionTree> {
    let n_classes = check_inputs(data, max_depth)?;
    let xs = data.features();
    let ys = data.class_labels()?;
    Ok(grow::<rand_chacha::ChaCha8Rng>(
        &xs,
        &ys,
        (0..xs.len()).collect(),
        n_classes,
        max_depth,
        data.dim(),
        None,
    ))
}

/// Bagged CART trees with `floor(sqrt(d))` candidate features per split.
/// Each tree's RNG derives from `seed` and its index, so the result does not
/// depend on thread scheduling.
pub fn fit_forest(data: &Dataset, n_trees: usize, max_depth: usize, seed: u64) -> Result<RandomForest> {
    let n_classes = check_inputs(data, max_depth)?;
    if n_trees == 0 {
        return Err(ProbeError::Spec("a forest needs at least one tree".into()));
    }
    let xs = data.features();
    let ys = data.class_labels()?;
    let n = xs.len();
    let max_features = ((data.dim() as f64).sqrt().floor() as usize).max(1);
    let trees = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = math::rng_from_seed(math::derive_seed(seed, t as u64));
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            grow(&xs, &ys, idx, n_classes, max_depth, max_features, Some(rng))
        })
        .collect();
    Ok(RandomForest {
        n_features: data.dim(),
        n_classes,
        trees,
    })
}
