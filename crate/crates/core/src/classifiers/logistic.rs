use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{softmax_rows, ClassifierError, ProbabilisticClassifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub max_iter: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            max_iter: 200,
            learning_rate: 0.5,
            l2: 1e-4,
        }
    }
}

impl LogisticParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifierError::hyper("learning_rate must be > 0"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(ClassifierError::hyper("l2 must be >= 0"));
        }
        Ok(())
    }
}

/// Multinomial logistic regression trained by full-batch gradient descent
/// on the sample-weighted mean cross-entropy plus an L2 penalty on weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    /// `d x K`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LogisticRegression {
    pub fn zeros(n_features: usize, n_classes: usize) -> Self {
        Self {
            weights: Array2::zeros((n_features, n_classes)),
            bias: Array1::zeros(n_classes),
        }
    }

    pub fn fit(
        params: &LogisticParams,
        x: ArrayView2<f64>,
        y: &[usize],
        sample_weights: &[f64],
        n_classes: usize,
    ) -> Result<Self, ClassifierError> {
        params.validate()?;
        let mut model = Self::zeros(x.ncols(), n_classes);
        let total: f64 = sample_weights.iter().sum();
        let w = Array1::from_iter(sample_weights.iter().map(|v| v / total));
        for _ in 0..params.max_iter {
            let mut delta = model.logits(x);
            softmax_rows(&mut delta);
            for (mut row, &label) in delta.outer_iter_mut().zip(y) {
                row[label] -= 1.0;
            }
            delta *= &w.view().insert_axis(Axis(1));
            let grad_w = x.t().dot(&delta) + &(params.l2 * &model.weights);
            let grad_b = delta.sum_axis(Axis(0));
            model.weights.scaled_add(-params.learning_rate, &grad_w);
            model.bias.scaled_add(-params.learning_rate, &grad_b);
        }
        Ok(model)
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }
}

impl ProbabilisticClassifier for LogisticRegression {
    fn n_classes(&self) -> usize {
        self.bias.len()
    }

    fn n_features(&self) -> usize {
        self.weights.nrows()
    }

    fn predict_proba_row(&self, row: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.bias.as_slice().expect("contiguous"));
        for (x, wrow) in row.iter().zip(self.weights.outer_iter()) {
            for (o, w) in out.iter_mut().zip(wrow) {
                *o += x * w;
            }
        }
        super::softmax_in_place(out);
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ClassifierError> {
        self.check_width(x.ncols())?;
        let mut p = self.logits(x);
        softmax_rows(&mut p);
        Ok(p)
    }
}
