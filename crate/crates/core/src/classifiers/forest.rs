//! CART decision tree, random forest and extremely randomized trees.

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, restrict, Columns, Gini, GrowParams, Tree};
use super::{derive_seed, ClassifierError, ProbabilisticClassifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.max_depth == Some(0) {
            return Err(ClassifierError::hyper("max_depth must be >= 1"));
        }
        if self.min_samples_leaf == 0 {
            return Err(ClassifierError::hyper("min_samples_leaf must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    /// Features examined per split; `None` means `floor(sqrt(d))`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            tree: TreeParams::default(),
            max_features: None,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        self.tree.validate()?;
        if self.n_trees == 0 {
            return Err(ClassifierError::hyper("n_trees must be >= 1"));
        }
        if self.max_features == Some(0) {
            return Err(ClassifierError::hyper("max_features must be >= 1"));
        }
        Ok(())
    }

    fn features_per_split(&self, d: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1))
            .min(d)
    }
}

/// Single CART tree with Gini impurity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub tree: Tree,
    pub n_classes: usize,
    pub n_features: usize,
}

impl DecisionTree {
    pub fn fit(
        params: &TreeParams,
        x: ArrayView2<f64>,
        y: &[usize],
        weights: &[f64],
        n_classes: usize,
        seed: u64,
    ) -> Result<Self, ClassifierError> {
        params.validate()?;
        let cols = Columns::new(x);
        let keep: Vec<bool> = weights.iter().map(|&w| w > 0.0).collect();
        let sorted = restrict(&cols.presort(), &keep);
        let mut acc = Gini::new(y, weights, n_classes);
        let grow_params = GrowParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            max_features: cols.n_features(),
            random_thresholds: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = grow(&cols, sorted, &mut acc, &grow_params, &mut rng);
        Ok(Self {
            tree,
            n_classes,
            n_features: cols.n_features(),
        })
    }
}

impl ProbabilisticClassifier for DecisionTree {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba_row(&self, row: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.tree.leaf(row));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForestKind {
    /// Bootstrap rows, best threshold among a random feature subset.
    RandomForest,
    /// All rows, one random threshold per examined feature.
    ExtraTrees,
}

/// Soft-voting tree ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub kind: ForestKind,
    pub trees: Vec<Tree>,
    pub n_classes: usize,
    pub n_features: usize,
}

impl Forest {
    pub fn fit(
        kind: ForestKind,
        params: &ForestParams,
        x: ArrayView2<f64>,
        y: &[usize],
        weights: &[f64],
        n_classes: usize,
        seed: u64,
    ) -> Result<Self, ClassifierError> {
        params.validate()?;
        let cols = Columns::new(x);
        let n = cols.n_rows();
        let presorted = cols.presort();
        let grow_params = GrowParams {
            max_depth: params.tree.max_depth,
            min_samples_leaf: params.tree.min_samples_leaf,
            max_features: params.features_per_split(cols.n_features()),
            random_thresholds: kind == ForestKind::ExtraTrees,
        };
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
                let tree_weights: Vec<f64> = match kind {
                    ForestKind::RandomForest => {
                        let mut counts = vec![0u32; n];
                        for _ in 0..n {
                            counts[rng.random_range(0..n)] += 1;
                        }
                        counts
                            .iter()
                            .zip(weights)
                            .map(|(&c, &w)| c as f64 * w)
                            .collect()
                    }
                    ForestKind::ExtraTrees => weights.to_vec(),
                };
                let keep: Vec<bool> = tree_weights.iter().map(|&w| w > 0.0).collect();
                let sorted = restrict(&presorted, &keep);
                let mut acc = Gini::new(y, &tree_weights, n_classes);
                grow(&cols, sorted, &mut acc, &grow_params, &mut rng)
            })
            .collect();
        Ok(Self {
            kind,
            trees,
            n_classes,
            n_features: cols.n_features(),
        })
    }

    /// Class distribution of one member tree.
    pub fn tree_proba(&self, tree: usize, row: &[f64]) -> &[f64] {
        self.trees[tree].leaf(row)
    }
}

impl ProbabilisticClassifier for Forest {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba_row(&self, row: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for tree in &self.trees {
            for (o, p) in out.iter_mut().zip(tree.leaf(row)) {
                *o += p;
            }
        }
        let m = self.trees.len() as f64;
        out.iter_mut().for_each(|v| *v /= m);
    }
}
