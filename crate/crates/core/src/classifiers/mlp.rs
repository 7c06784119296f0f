//! Dense feed-forward network: rectified hidden layers, softmax output,
//! sample-weighted cross-entropy, mini-batch SGD with momentum.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{softmax_in_place, softmax_rows, ClassifierError, ProbabilisticClassifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_layers: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![64, 64],
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-3,
            momentum: 0.9,
            l2: 1e-4,
        }
    }
}

impl MlpConfig {
    /// "2 Hidden": (64, 64).
    pub fn two_hidden() -> Self {
        Self::default()
    }

    /// "3 Hidden": (64, 64, 64).
    pub fn three_hidden() -> Self {
        Self {
            hidden_layers: vec![64, 64, 64],
            ..Self::default()
        }
    }

    /// "3 Hidden, Wider": (256, 256, 256).
    pub fn three_hidden_wide() -> Self {
        Self {
            hidden_layers: vec![256, 256, 256],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return Err(ClassifierError::hyper(
                "need at least one hidden layer, all widths >= 1",
            ));
        }
        if self.batch_size == 0 {
            return Err(ClassifierError::hyper("batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifierError::hyper("learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ClassifierError::hyper("momentum must lie in [0, 1)"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(ClassifierError::hyper("l2 must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `inputs x outputs`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Gradient of the loss with respect to one layer.
#[derive(Debug, Clone)]
pub struct DenseGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Mlp {
    /// He-normal weights, zero biases.
    pub fn init(n_inputs: usize, hidden: &[usize], n_classes: usize, rng: &mut impl Rng) -> Self {
        let mut widths = vec![n_inputs];
        widths.extend_from_slice(hidden);
        widths.push(n_classes);
        let layers = widths
            .windows(2)
            .map(|w| {
                let std = (2.0 / w[0] as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((w[0], w[1]), || {
                    let z: f64 = rng.sample(StandardNormal);
                    std * z
                });
                Dense {
                    weights,
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn fit(
        config: &MlpConfig,
        x: ArrayView2<f64>,
        y: &[usize],
        sample_weights: &[f64],
        n_classes: usize,
        seed: u64,
    ) -> Result<Self, ClassifierError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::init(x.ncols(), &config.hidden_layers, n_classes, &mut rng);
        let mut velocity: Vec<DenseGrad> = net
            .layers
            .iter()
            .map(|l| DenseGrad {
                weights: Array2::zeros(l.weights.raw_dim()),
                bias: Array1::zeros(l.bias.len()),
            })
            .collect();
        let mut order: Vec<usize> = (0..y.len()).collect();
        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(config.batch_size) {
                let xb = x.select(Axis(0), batch);
                let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
                let wb: Vec<f64> = batch.iter().map(|&i| sample_weights[i]).collect();
                let (loss, grads) = net.loss_and_gradients(xb.view(), &yb, &wb, config.l2);
                epoch_loss += loss * batch.len() as f64;
                for ((layer, grad), vel) in net.layers.iter_mut().zip(&grads).zip(&mut velocity) {
                    vel.weights *= config.momentum;
                    vel.weights.scaled_add(-config.learning_rate, &grad.weights);
                    vel.bias *= config.momentum;
                    vel.bias.scaled_add(-config.learning_rate, &grad.bias);
                    layer.weights += &vel.weights;
                    layer.bias += &vel.bias;
                }
            }
            log::debug!("mlp epoch {epoch}: loss {:.6}", epoch_loss / y.len() as f64);
            if !epoch_loss.is_finite() {
                return Err(ClassifierError::Diverged(format!(
                    "non-finite loss at epoch {epoch}"
                )));
            }
        }
        Ok(net)
    }

    /// Output logits for a batch.
    pub fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            a = a.dot(&layer.weights) + &layer.bias;
            if i < last {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        a
    }

    /// Weighted mean cross-entropy plus `l2 / 2 * sum(W^2)`, and its gradient.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<f64>,
        y: &[usize],
        sample_weights: &[f64],
        l2: f64,
    ) -> (f64, Vec<DenseGrad>) {
        let last = self.layers.len() - 1;
        // inputs to each layer; the final entry is the output logits
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&layer.weights) + &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        let mut probs = acts.pop().expect("output layer");
        softmax_rows(&mut probs);

        let total_w: f64 = sample_weights.iter().sum();
        let mut loss = 0.0;
        for ((mut row, &label), &w) in probs.outer_iter_mut().zip(y).zip(sample_weights) {
            loss -= w * row[label].max(f64::MIN_POSITIVE).ln();
            row[label] -= 1.0;
            row *= w / total_w;
        }
        loss /= total_w;
        loss += 0.5
            * l2
            * self
                .layers
                .iter()
                .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
                .sum::<f64>();

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = probs;
        for i in (0..self.layers.len()).rev() {
            let input = &acts[i];
            let mut gw = input.t().dot(&delta);
            gw.scaled_add(l2, &self.layers[i].weights);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights.t());
                // rectifier derivative from the stored activation
                back.zip_mut_with(input, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            grads.push(DenseGrad {
                weights: gw,
                bias: gb,
            });
        }
        grads.reverse();
        (loss, grads)
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All parameters, layer by layer: weights (row-major) then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        let mut it = params.iter();
        for l in &mut self.layers {
            l.weights
                .iter_mut()
                .for_each(|w| *w = *it.next().expect("parameter count"));
            l.bias
                .iter_mut()
                .for_each(|b| *b = *it.next().expect("parameter count"));
        }
    }

    pub fn flatten_grads(grads: &[DenseGrad]) -> Vec<f64> {
        let mut out = Vec::new();
        for g in grads {
            out.extend(g.weights.iter());
            out.extend(g.bias.iter());
        }
        out
    }
}

impl ProbabilisticClassifier for Mlp {
    fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.bias.len())
    }

    fn n_features(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weights.nrows())
    }

    fn predict_proba_row(&self, row: &[f64], out: &mut [f64]) {
        let last = self.layers.len() - 1;
        let mut cur: Vec<f64> = row.to_vec();
        let mut next: Vec<f64> = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            next.clear();
            next.extend(layer.bias.iter());
            for (a, wrow) in cur.iter().zip(layer.weights.outer_iter()) {
                if *a == 0.0 {
                    continue;
                }
                let wrow = wrow.to_slice().expect("standard layout");
                for (n, w) in next.iter_mut().zip(wrow) {
                    *n += a * w;
                }
            }
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        out.copy_from_slice(&cur);
        softmax_in_place(out);
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ClassifierError> {
        self.check_width(x.ncols())?;
        let mut out = Array2::zeros((x.nrows(), self.n_classes()));
        for (chunk_in, mut chunk_out) in x
            .axis_chunks_iter(Axis(0), 4096)
            .zip(out.axis_chunks_iter_mut(Axis(0), 4096))
        {
            let mut p = self.logits(chunk_in);
            softmax_rows(&mut p);
            chunk_out.assign(&p);
        }
        Ok(out)
    }
}
