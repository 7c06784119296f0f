use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{ClassifierError, ProbabilisticClassifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Brute-force Euclidean k-nearest neighbours with uniform votes.
/// Equal distances are ordered by training row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub train: Array2<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Knn {
    pub fn fit(
        params: &KnnParams,
        x: ArrayView2<f64>,
        y: &[usize],
        n_classes: usize,
    ) -> Result<Self, ClassifierError> {
        if params.k == 0 {
            return Err(ClassifierError::hyper("k must be >= 1"));
        }
        Ok(Self {
            k: params.k.min(y.len()),
            train: x.as_standard_layout().into_owned(),
            labels: y.to_vec(),
            n_classes,
        })
    }

    /// Indices of the `k` nearest training rows, nearest first.
    pub fn neighbors(&self, row: &[f64]) -> Vec<usize> {
        let mut dist: Vec<(f64, u32)> = self
            .train
            .outer_iter()
            .enumerate()
            .map(|(i, t)| {
                let d: f64 = t.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, i as u32)
            })
            .collect();
        let cmp = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
            dist.truncate(self.k);
        }
        dist.sort_unstable_by(cmp);
        dist.into_iter().map(|(_, i)| i as usize).collect()
    }
}

impl ProbabilisticClassifier for Knn {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.train.ncols()
    }

    fn predict_proba_row(&self, row: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let nn = self.neighbors(row);
        for &i in &nn {
            out[self.labels[i]] += 1.0;
        }
        let k = nn.len() as f64;
        out.iter_mut().for_each(|v| *v /= k);
    }
}
