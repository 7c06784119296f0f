use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, ProbabilisticClassifier};

// finite so fitted models stay JSON-serializable
const ABSENT_LOG_PRIOR: f64 = -1e300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbParams {
    /// Added to every variance, as a fraction of the largest feature variance.
    pub var_smoothing: f64,
}

impl Default for GaussianNbParams {
    fn default() -> Self {
        Self {
            var_smoothing: 1e-9,
        }
    }
}

/// Gaussian naive Bayes with empirical class priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    /// `means[k][j]`
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub log_priors: Vec<f64>,
}

impl GaussianNb {
    pub fn fit(
        params: &GaussianNbParams,
        x: ArrayView2<f64>,
        y: &[usize],
        n_classes: usize,
    ) -> Result<Self, ClassifierError> {
        if !(params.var_smoothing >= 0.0 && params.var_smoothing.is_finite()) {
            return Err(ClassifierError::hyper("var_smoothing must be >= 0"));
        }
        let (n, d) = x.dim();
        let mut max_var: f64 = 0.0;
        for col in x.columns() {
            let m = col.sum() / n as f64;
            let v = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            max_var = max_var.max(v);
        }
        let epsilon = params.var_smoothing * max_var;

        let mut counts = vec![0usize; n_classes];
        let mut means = vec![vec![0.0; d]; n_classes];
        for (row, &l) in x.outer_iter().zip(y) {
            counts[l] += 1;
            for (m, v) in means[l].iter_mut().zip(row) {
                *m += v;
            }
        }
        for (m, &c) in means.iter_mut().zip(&counts) {
            if c > 0 {
                m.iter_mut().for_each(|v| *v /= c as f64);
            }
        }
        let mut variances = vec![vec![0.0; d]; n_classes];
        for (row, &l) in x.outer_iter().zip(y) {
            for ((s, v), m) in variances[l].iter_mut().zip(row).zip(&means[l]) {
                *s += (v - m) * (v - m);
            }
        }
        for (var, &c) in variances.iter_mut().zip(&counts) {
            var.iter_mut()
                .for_each(|v| *v = if c > 0 { *v / c as f64 } else { 0.0 } + epsilon);
        }
        if variances.iter().flatten().any(|&v| v <= 0.0) {
            return Err(ClassifierError::Singular(
                "zero variance in a feature; increase var_smoothing".into(),
            ));
        }
        let log_priors = counts
            .iter()
            .map(|&c| {
                if c > 0 {
                    (c as f64 / n as f64).ln()
                } else {
                    ABSENT_LOG_PRIOR
                }
            })
            .collect();
        Ok(Self {
            means,
            variances,
            log_priors,
        })
    }

    /// Unnormalized joint log-likelihood per class.
    pub fn joint_log_likelihood(&self, row: &[f64], out: &mut [f64]) {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        for (k, o) in out.iter_mut().enumerate() {
            let mut s = self.log_priors[k];
            for ((x, m), v) in row.iter().zip(&self.means[k]).zip(&self.variances[k]) {
                s -= 0.5 * (ln2pi + v.ln()) + 0.5 * (x - m) * (x - m) / v;
            }
            *o = s;
        }
    }
}

impl ProbabilisticClassifier for GaussianNb {
    fn n_classes(&self) -> usize {
        self.means.len()
    }

    fn n_features(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    fn predict_proba_row(&self, row: &[f64], out: &mut [f64]) {
        self.joint_log_likelihood(row, out);
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let norm = out.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        out.iter_mut().for_each(|v| *v = (*v - norm).exp());
    }
}
