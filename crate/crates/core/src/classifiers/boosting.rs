//! AdaBoost (multi-class SAMME on depth-1 stumps) and gradient boosting
//! with multinomial deviance.

use ndarray::ArrayView2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forest::{DecisionTree, TreeParams};
use super::tree::{grow, restrict, Columns, GrowParams, SquaredError, Tree};
use super::{argmax, derive_seed, softmax_in_place, ClassifierError, ProbabilisticClassifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
        }
    }
}

impl AdaBoostParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.n_rounds == 0 {
            return Err(ClassifierError::hyper("n_rounds must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifierError::hyper("learning_rate must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    /// `(stump, vote weight)` pairs.
    pub stumps: Vec<(Tree, f64)>,
    pub n_classes: usize,
    pub n_features: usize,
}

impl AdaBoost {
    pub fn fit(
        params: &AdaBoostParams,
        x: ArrayView2<f64>,
        y: &[usize],
        weights: &[f64],
        n_classes: usize,
        seed: u64,
    ) -> Result<Self, ClassifierError> {
        params.validate()?;
        let k = n_classes as f64;
        let total: f64 = weights.iter().sum();
        let mut w: Vec<f64> = weights.iter().map(|v| v / total).collect();
        let stump_params = TreeParams {
            max_depth: Some(1),
            min_samples_leaf: 1,
        };
        let mut stumps: Vec<(Tree, f64)> = Vec::new();
        for round in 0..params.n_rounds {
            let stump = DecisionTree::fit(
                &stump_params,
                x,
                y,
                &w,
                n_classes,
                derive_seed(seed, round as u64),
            )?
            .tree;
            let missed: Vec<bool> = x
                .outer_iter()
                .zip(y)
                .map(|(row, &label)| {
                    argmax(stump.leaf(row.as_slice().expect("standard layout"))) != label
                })
                .collect();
            let err: f64 = missed
                .iter()
                .zip(&w)
                .filter(|(m, _)| **m)
                .map(|(_, wi)| wi)
                .sum::<f64>()
                / w.iter().sum::<f64>();
            if err <= 0.0 {
                stumps.push((stump, 1.0));
                break;
            }
            if err >= 1.0 - 1.0 / k {
                // no better than chance; keep the first stump so the model is usable
                if stumps.is_empty() {
                    stumps.push((stump, 1.0));
                }
                break;
            }
            let alpha = params.learning_rate * (((1.0 - err) / err).ln() + (k - 1.0).ln());
            for (wi, &m) in w.iter_mut().zip(&missed) {
                if m {
                    *wi *= alpha.exp();
                }
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            stumps.push((stump, alpha));
        }
        Ok(Self {
            stumps,
            n_classes,
            n_features: x.ncols(),
        })
    }
}

impl ProbabilisticClassifier for AdaBoost {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba_row(&self, row: &[f64], out: &mut [f64]) {
        let k = self.n_classes as f64;
        // symmetric SAMME codes: +1 for the voted class, -1/(K-1) elsewhere
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut alpha_sum = 0.0;
        for (stump, alpha) in &self.stumps {
            let c = argmax(stump.leaf(row));
            for (j, o) in out.iter_mut().enumerate() {
                *o += if j == c { *alpha } else { -alpha / (k - 1.0) };
            }
            alpha_sum += alpha;
        }
        out.iter_mut().for_each(|v| *v /= alpha_sum * (k - 1.0));
        softmax_in_place(out);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoostingParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for GradientBoostingParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 1,
        }
    }
}

impl GradientBoostingParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.n_rounds == 0 {
            return Err(ClassifierError::hyper("n_rounds must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifierError::hyper("learning_rate must be > 0"));
        }
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(ClassifierError::hyper(
                "max_depth and min_samples_leaf must be >= 1",
            ));
        }
        Ok(())
    }
}

/// One regression tree per class per round on the softmax link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub init: Vec<f64>,
    /// `rounds[m][k]`: tree for class `k` in round `m`.
    pub rounds: Vec<Vec<Tree>>,
    pub learning_rate: f64,
    pub n_classes: usize,
    pub n_features: usize,
}

impl GradientBoosting {
    pub fn fit(
        params: &GradientBoostingParams,
        x: ArrayView2<f64>,
        y: &[usize],
        weights: &[f64],
        n_classes: usize,
        seed: u64,
    ) -> Result<Self, ClassifierError> {
        params.validate()?;
        let n = y.len();
        let k = n_classes;
        let cols = Columns::new(x);
        let keep: Vec<bool> = weights.iter().map(|&w| w > 0.0).collect();
        let presorted = restrict(&cols.presort(), &keep);

        let mut prior = vec![0.0; k];
        for (&l, &w) in y.iter().zip(weights) {
            prior[l] += w;
        }
        let total: f64 = prior.iter().sum();
        let init: Vec<f64> = prior.iter().map(|p| (p / total).max(1e-12).ln()).collect();

        let mut scores: Vec<f64> = (0..n).flat_map(|_| init.iter().copied()).collect();
        let mut probs = vec![0.0; n * k];
        let mut residual = vec![0.0; n];
        let grow_params = GrowParams {
            max_depth: Some(params.max_depth),
            min_samples_leaf: params.min_samples_leaf,
            max_features: cols.n_features(),
            random_thresholds: false,
        };
        let scale = (k as f64 - 1.0) / k as f64;
        let mut rounds = Vec::with_capacity(params.n_rounds);
        for round in 0..params.n_rounds {
            probs.copy_from_slice(&scores);
            probs.chunks_exact_mut(k).for_each(softmax_in_place);
            let mut trees = Vec::with_capacity(k);
            for class in 0..k {
                for i in 0..n {
                    let target = if y[i] == class { 1.0 } else { 0.0 };
                    residual[i] = target - probs[i * k + class];
                }
                let r = &residual;
                // Newton step for the multinomial deviance
                let leaf = |samples: &[u32]| {
                    let (mut num, mut den) = (0.0, 0.0);
                    for &i in samples {
                        let (ri, wi) = (r[i as usize], weights[i as usize]);
                        num += wi * ri;
                        den += wi * ri.abs() * (1.0 - ri.abs());
                    }
                    if den.abs() < 1e-150 {
                        0.0
                    } else {
                        scale * num / den
                    }
                };
                let mut acc = SquaredError::new(r, weights, leaf);
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, (round * k + class) as u64));
                let tree = grow(&cols, presorted.clone(), &mut acc, &grow_params, &mut rng);
                for (i, row) in x.outer_iter().enumerate() {
                    scores[i * k + class] += params.learning_rate
                        * tree.leaf(row.as_slice().expect("standard layout"))[0];
                }
                trees.push(tree);
            }
            rounds.push(trees);
        }
        Ok(Self {
            init,
            rounds,
            learning_rate: params.learning_rate,
            n_classes,
            n_features: cols.n_features(),
        })
    }
}

impl ProbabilisticClassifier for GradientBoosting {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba_row(&self, row: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.init);
        for trees in &self.rounds {
            for (o, tree) in out.iter_mut().zip(trees) {
                *o += self.learning_rate * tree.leaf(row)[0];
            }
        }
        softmax_in_place(out);
    }
}
