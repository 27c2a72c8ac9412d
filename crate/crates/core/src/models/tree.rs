//! CART classification tree with Gini impurity.
//!
//! Every feature is scanned at every node, candidate thresholds are the
//! midpoints between consecutive distinct sorted values, and a row goes left
//! when `value <= threshold`. Among equally good splits the lowest feature
//! index wins, then the lowest threshold. Splits with zero impurity decrease
//! are still taken (XOR needs one at the root); growth stops at pure nodes,
//! at the depth cap, or when no split can leave `min_samples_leaf` rows on
//! both sides.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::ModelError;
use crate::payload::{ClassScores, FeatureSchema, FeatureVector, Labels};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub seed: u64,
    /// Additive (Laplace) smoothing of leaf class counts.
    pub leaf_smoothing: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: Some(4),
            min_samples_leaf: 1,
            seed: 0,
            leaf_smoothing: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature_index: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class_distribution: ClassScores,
        samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub schema: Arc<FeatureSchema>,
    pub classes: Labels,
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
    pub params: TreeParams,
    /// Set when the training data held a single class.
    pub degenerate: bool,
}

struct Builder<'a> {
    data: &'a Dataset,
    params: &'a TreeParams,
    n_classes: usize,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.data.label_indices()[i]] += 1;
        }
        c
    }

    fn leaf(&self, counts: &[usize]) -> Result<TreeNode, ModelError> {
        let alpha = self.params.leaf_smoothing;
        let weights: Vec<f64> = counts.iter().map(|&c| c as f64 + alpha).collect();
        Ok(TreeNode::Leaf {
            class_distribution: ClassScores::from_weights(self.data.classes().clone(), &weights)?,
            samples: counts.iter().sum(),
        })
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> Result<usize, ModelError> {
        let counts = self.counts(&idx);
        let slot = self.nodes.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let capped = self.params.max_depth.is_some_and(|m| depth >= m);
        let split = if pure || capped {
            None
        } else {
            self.best_split(&idx)
        };
        let Some(split) = split else {
            let leaf = self.leaf(&counts)?;
            self.nodes.push(leaf);
            return Ok(slot);
        };
        // placeholder, patched once children exist
        self.nodes.push(TreeNode::Split {
            feature_index: split.feature,
            threshold: split.threshold,
            left: 0,
            right: 0,
        });
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.data.rows()[i].values()[split.feature] <= split.threshold);
        let left = self.build(l, depth + 1)?;
        let right = self.build(r, depth + 1)?;
        self.nodes[slot] = TreeNode::Split {
            feature_index: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        Ok(slot)
    }

    fn best_split(&self, idx: &[usize]) -> Option<BestSplit> {
        let n = idx.len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        if n < 2 * min_leaf {
            return None;
        }
        let labels = self.data.label_indices();
        let total = self.counts(idx);
        let mut best: Option<BestSplit> = None;
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
        for feature in 0..self.data.n_features() {
            order.clear();
            order.extend(
                idx.iter()
                    .map(|&i| (self.data.rows()[i].values()[feature], labels[i])),
            );
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0usize; self.n_classes];
            for k in 0..n - 1 {
                left[order[k].1] += 1;
                let (v, next) = (order[k].0, order[k + 1].0);
                if v == next {
                    continue;
                }
                let nl = k + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let impurity = weighted_gini(&left, &total, nl, nr) / n as f64;
                let threshold = v + (next - v) / 2.0;
                let better = match &best {
                    None => true,
                    Some(b) => impurity < b.impurity - 1e-12,
                };
                if better {
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }
}

/// `nl * gini(left) + nr * gini(right)`, from class counts.
fn weighted_gini(left: &[usize], total: &[usize], nl: usize, nr: usize) -> f64 {
    let mut sl = 0.0;
    let mut sr = 0.0;
    for (l, t) in left.iter().zip(total) {
        let l = *l as f64;
        let r = (*t as f64) - l;
        sl += l * l;
        sr += r * r;
    }
    (nl as f64 - sl / nl as f64) + (nr as f64 - sr / nr as f64)
}

pub fn fit_tree(data: &Dataset, params: &TreeParams) -> Result<TreeModel, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if params.leaf_smoothing < 0.0 || !params.leaf_smoothing.is_finite() {
        return Err(ModelError::InvalidParameter("leaf_smoothing must be >= 0".into()));
    }
    let mut builder = Builder {
        data,
        params,
        n_classes: data.classes().len(),
        nodes: Vec::new(),
    };
    builder.build((0..data.len()).collect(), 0)?;
    Ok(TreeModel {
        schema: data.features().clone(),
        classes: data.classes().clone(),
        nodes: builder.nodes,
        params: params.clone(),
        degenerate: data.classes_present() < 2,
    })
}

impl TreeModel {
    pub fn predict_proba(&self, x: &FeatureVector) -> Result<ClassScores, ModelError> {
        x.check_schema(&self.schema)?;
        Ok(self.leaf_for(x.values()).clone())
    }

    pub(crate) fn leaf_for(&self, values: &[f64]) -> &ClassScores {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    at = if values[*feature_index] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
                TreeNode::Leaf {
                    class_distribution, ..
                } => return class_distribution,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    /// Node indices in range, no cycles, every node reached exactly once.
    pub fn is_well_formed(&self) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(at) = stack.pop() {
            if at >= self.nodes.len() || seen[at] {
                return false;
            }
            seen[at] = true;
            if let TreeNode::Split { left, right, .. } = &self.nodes[at] {
                stack.push(*left);
                stack.push(*right);
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::dataset::DatasetSchema;
    use crate::payload::labels;

    pub(crate) fn xor() -> Dataset {
        let fs = FeatureSchema::new("xor", vec!["x1".into(), "x2".into()]).unwrap();
        let schema = DatasetSchema::new(fs.clone(), labels(&["0", "1"])).unwrap();
        let pts = [(0.0, 0.0, "0"), (0.0, 1.0, "1"), (1.0, 0.0, "1"), (1.0, 1.0, "0")];
        let rows = pts
            .iter()
            .map(|(a, b, _)| FeatureVector::new(fs.clone(), vec![*a, *b]).unwrap())
            .collect();
        Dataset::new(schema, rows, pts.iter().map(|p| p.2.to_string()).collect(), "xor").unwrap()
    }

    fn unsmoothed(depth: Option<usize>) -> TreeParams {
        TreeParams {
            max_depth: depth,
            min_samples_leaf: 1,
            seed: 0,
            leaf_smoothing: 0.0,
        }
    }

    #[test]
    fn xor_depth_two_is_exact() {
        let d = xor();
        let t = fit_tree(&d, &unsmoothed(Some(2))).unwrap();
        assert!(t.is_well_formed());
        assert_eq!(t.depth(), 2);
        // root: all four candidate splits tie, so feature 0 at 0.5 wins
        assert!(matches!(t.nodes[0], TreeNode::Split { feature_index: 0, threshold, .. } if threshold == 0.5));
        for (i, row) in d.rows().iter().enumerate() {
            assert_eq!(t.predict_proba(row).unwrap().top_label(), d.label(i));
        }
        let p = t.predict_proba(&d.rows()[2]).unwrap();
        assert_eq!(p.get("1"), Some(1.0));
    }

    #[test]
    fn xor_depth_one_cannot_separate() {
        let d = xor();
        let t = fit_tree(&d, &unsmoothed(Some(1))).unwrap();
        let correct = d
            .rows()
            .iter()
            .enumerate()
            .filter(|(i, r)| t.predict_proba(r).unwrap().top_label() == d.label(*i))
            .count();
        assert_eq!(correct, 2);
    }

    #[test]
    fn pure_data_gives_single_leaf() {
        let d = xor();
        let mut pure = d.clone();
        for i in 0..pure.len() {
            pure = pure.with_label(i, "1").unwrap();
        }
        let t = fit_tree(&pure, &unsmoothed(None)).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert!(t.degenerate);
        assert_eq!(t.predict_proba(&d.rows()[0]).unwrap().get("1"), Some(1.0));

        // default Laplace smoothing: (4 + 1) / (4 + 2)
        let smoothed = fit_tree(&pure, &TreeParams::default()).unwrap();
        let p = smoothed.predict_proba(&d.rows()[0]).unwrap().get("1").unwrap();
        assert!((p - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn min_samples_leaf_blocks_small_splits() {
        let d = xor();
        let t = fit_tree(
            &d,
            &TreeParams {
                min_samples_leaf: 3,
                ..unsmoothed(None)
            },
        )
        .unwrap();
        assert_eq!(t.n_leaves(), 1);
    }

    #[test]
    fn empty_dataset_errors() {
        let d = xor().subset(&[]);
        assert!(matches!(fit_tree(&d, &TreeParams::default()), Err(ModelError::EmptyDataset)));
    }

    #[test]
    fn serde_round_trip() {
        let t = fit_tree(&xor(), &unsmoothed(Some(2))).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        let back: TreeModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }
}
