//! Model suite behind a single probabilistic-classifier contract.

pub mod artifact;
pub mod boosting;
pub mod forest;
pub mod grid_search;
pub mod knn;
pub mod logistic;
pub mod mlp;
pub mod naive_bayes;
pub mod tree;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{balanced_class_weights, LabeledDataset};
use crate::metrics::{offline_metrics, Averaging, MetricsError, OfflineMetrics};

pub use boosting::{AdaBoost, AdaBoostParams, GradientBoosting, GradientBoostingParams};
pub use forest::{DecisionTree, Forest, ForestKind, ForestParams, TreeParams};
pub use knn::{Knn, KnnParams};
pub use logistic::{LogisticParams, LogisticRegression};
pub use mlp::{Mlp, MlpConfig};
pub use naive_bayes::{GaussianNb, GaussianNbParams};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),
    #[error("singular fit: {0}")]
    Singular(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("feature width {found}, model expects {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set has {0} class(es); at least 2 are required")]
    TooFewClasses(usize),
    #[error("{0} labels for {1} rows")]
    LengthMismatch(usize, usize),
    #[error("stratification: {0}")]
    Stratification(String),
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("artifact: {0}")]
    Artifact(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ClassifierError {
    pub fn hyper(msg: impl Into<String>) -> Self {
        Self::Hyperparameter(msg.into())
    }
}

impl From<MetricsError> for ClassifierError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Empty => Self::EmptyTestSet,
            other => Self::Artifact(other.to_string()),
        }
    }
}

/// Fitted model producing a class-probability simplex per sample.
pub trait ProbabilisticClassifier: Send + Sync {
    fn n_classes(&self) -> usize;
    fn n_features(&self) -> usize;

    /// Writes `n_classes` probabilities for one row into `out`.
    /// Row width is not checked here.
    fn predict_proba_row(&self, row: &[f64], out: &mut [f64]);

    fn check_width(&self, found: usize) -> Result<(), ClassifierError> {
        if found != self.n_features() {
            return Err(ClassifierError::WidthMismatch {
                expected: self.n_features(),
                found,
            });
        }
        Ok(())
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ClassifierError> {
        self.check_width(x.ncols())?;
        let mut out = Array2::zeros((x.nrows(), self.n_classes()));
        let mut buf = vec![0.0; x.ncols()];
        for (row, mut o) in x.outer_iter().zip(out.outer_iter_mut()) {
            buf.iter_mut().zip(row).for_each(|(b, v)| *b = *v);
            self.predict_proba_row(&buf, o.as_slice_mut().expect("fresh array is contiguous"));
        }
        Ok(out)
    }

    /// Argmax of `predict_proba`, ties to the lowest class index.
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>, ClassifierError> {
        let p = self.predict_proba(x)?;
        Ok(p.outer_iter()
            .map(|r| argmax(r.as_slice().expect("contiguous")))
            .collect())
    }
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

pub fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.outer_iter_mut() {
        match row.as_slice_mut() {
            Some(s) => softmax_in_place(s),
            None => {
                let mut s = row.to_vec();
                softmax_in_place(&mut s);
                row.iter_mut().zip(s).for_each(|(r, v)| *r = v);
            }
        }
    }
}

/// Splitmix64 of `seed + stream`, for independent per-member seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    ExtraTrees(ForestParams),
    Adaboost(AdaBoostParams),
    GradientBoosting(GradientBoostingParams),
    Knn(KnnParams),
    GaussianNb(GaussianNbParams),
    LogisticRegression(LogisticParams),
    Mlp(MlpConfig),
}

impl ModelParams {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::DecisionTree(_) => "decision_tree",
            Self::RandomForest(_) => "random_forest",
            Self::ExtraTrees(_) => "extra_trees",
            Self::Adaboost(_) => "adaboost",
            Self::GradientBoosting(_) => "gradient_boosting",
            Self::Knn(_) => "knn",
            Self::GaussianNb(_) => "gaussian_nb",
            Self::LogisticRegression(_) => "logistic_regression",
            Self::Mlp(_) => "mlp",
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        match self {
            Self::DecisionTree(p) => p.validate(),
            Self::RandomForest(p) | Self::ExtraTrees(p) => p.validate(),
            Self::Adaboost(p) => p.validate(),
            Self::GradientBoosting(p) => p.validate(),
            Self::Knn(p) => {
                if p.k == 0 {
                    Err(ClassifierError::hyper("k must be >= 1"))
                } else {
                    Ok(())
                }
            }
            Self::GaussianNb(p) => {
                if p.var_smoothing >= 0.0 && p.var_smoothing.is_finite() {
                    Ok(())
                } else {
                    Err(ClassifierError::hyper("var_smoothing must be >= 0"))
                }
            }
            Self::LogisticRegression(p) => p.validate(),
            Self::Mlp(c) => c.validate(),
        }
    }

    /// Whether fitting uses per-sample weights.
    pub fn supports_weights(&self) -> bool {
        !matches!(self, Self::Knn(_) | Self::GaussianNb(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "weights", rename_all = "snake_case")]
pub enum ClassWeighting {
    None,
    /// `N / (K * n_k)`.
    Balanced,
    /// One weight per encoded class.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Short identifier used on the command line and in reports.
    pub name: String,
    pub params: ModelParams,
    pub class_weighting: ClassWeighting,
    pub seed: u64,
}

/// Command-line names of the preset model suite, in report order.
pub const PRESET_NAMES: [&str; 11] = [
    "decision_tree",
    "random_forest",
    "extra_trees",
    "adaboost",
    "gradient_boosting",
    "knn",
    "gaussian_nb",
    "logistic_regression",
    "mlp_2h",
    "mlp_3h",
    "mlp_wide",
];

impl ModelSpec {
    pub fn new(name: impl Into<String>, params: ModelParams, seed: u64) -> Self {
        Self {
            name: name.into(),
            params,
            class_weighting: ClassWeighting::Balanced,
            seed,
        }
    }

    /// Default-hyperparameter spec for a preset name.
    pub fn preset(name: &str, seed: u64) -> Result<Self, ClassifierError> {
        let params = match name {
            "decision_tree" => ModelParams::DecisionTree(TreeParams::default()),
            "random_forest" => ModelParams::RandomForest(ForestParams::default()),
            "extra_trees" => ModelParams::ExtraTrees(ForestParams::default()),
            "adaboost" => ModelParams::Adaboost(AdaBoostParams::default()),
            "gradient_boosting" => ModelParams::GradientBoosting(GradientBoostingParams::default()),
            "knn" => ModelParams::Knn(KnnParams::default()),
            "gaussian_nb" => ModelParams::GaussianNb(GaussianNbParams::default()),
            "logistic_regression" => ModelParams::LogisticRegression(LogisticParams::default()),
            "mlp_2h" => ModelParams::Mlp(MlpConfig::two_hidden()),
            "mlp_3h" => ModelParams::Mlp(MlpConfig::three_hidden()),
            "mlp_wide" => ModelParams::Mlp(MlpConfig::three_hidden_wide()),
            other => return Err(ClassifierError::UnknownModel(other.to_string())),
        };
        Ok(Self::new(name, params, seed))
    }

    pub fn display_name(&self) -> String {
        match self.name.as_str() {
            "decision_tree" => "Decision Tree".into(),
            "random_forest" => "Random Forest".into(),
            "extra_trees" => "Extra Trees".into(),
            "adaboost" => "AdaBoost".into(),
            "gradient_boosting" => "Gradient Boosting".into(),
            "knn" => "k-NN".into(),
            "gaussian_nb" => "Gaussian NB".into(),
            "logistic_regression" => "Logistic Regression".into(),
            "mlp_2h" => "MLP (2 Hidden)".into(),
            "mlp_3h" => "MLP (3 Hidden)".into(),
            "mlp_wide" => "MLP (3 Hidden, Wider)".into(),
            other => other.to_string(),
        }
    }
}

/// A fitted model of any supported kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "snake_case")]
pub enum Model {
    DecisionTree(DecisionTree),
    Forest(Forest),
    Adaboost(AdaBoost),
    GradientBoosting(GradientBoosting),
    Knn(Knn),
    GaussianNb(GaussianNb),
    LogisticRegression(LogisticRegression),
    Mlp(Mlp),
}

impl Model {
    fn inner(&self) -> &dyn ProbabilisticClassifier {
        match self {
            Self::DecisionTree(m) => m,
            Self::Forest(m) => m,
            Self::Adaboost(m) => m,
            Self::GradientBoosting(m) => m,
            Self::Knn(m) => m,
            Self::GaussianNb(m) => m,
            Self::LogisticRegression(m) => m,
            Self::Mlp(m) => m,
        }
    }
}

impl ProbabilisticClassifier for Model {
    fn n_classes(&self) -> usize {
        self.inner().n_classes()
    }

    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn predict_proba_row(&self, row: &[f64], out: &mut [f64]) {
        self.inner().predict_proba_row(row, out)
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ClassifierError> {
        self.inner().predict_proba(x)
    }
}

/// Fits `spec` on standardized features `x` with encoded labels `y`.
/// `sample_weights` defaults to all ones.
pub fn fit(
    spec: &ModelSpec,
    x: ArrayView2<f64>,
    y: &[usize],
    n_classes: usize,
    sample_weights: Option<&[f64]>,
) -> Result<Model, ClassifierError> {
    spec.params.validate()?;
    if y.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    if x.nrows() != y.len() {
        return Err(ClassifierError::LengthMismatch(y.len(), x.nrows()));
    }
    let mut present = vec![false; n_classes];
    for &l in y {
        if l >= n_classes {
            return Err(ClassifierError::hyper(format!(
                "label {l} outside 0..{n_classes}"
            )));
        }
        present[l] = true;
    }
    let n_present = present.iter().filter(|&&p| p).count();
    if n_present < 2 {
        return Err(ClassifierError::TooFewClasses(n_present));
    }
    let ones;
    let weights = match sample_weights {
        Some(w) => {
            if w.len() != y.len() {
                return Err(ClassifierError::LengthMismatch(w.len(), y.len()));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(ClassifierError::hyper(
                    "sample weights must be finite, >= 0, not all 0",
                ));
            }
            if !spec.params.supports_weights() && w.iter().any(|&v| v != w[0]) {
                log::debug!("{} ignores sample weights", spec.params.kind());
            }
            w
        }
        None => {
            ones = vec![1.0; y.len()];
            &ones
        }
    };
    let x = x.as_standard_layout();
    let x = x.view();
    let seed = spec.seed;
    let model = match &spec.params {
        ModelParams::DecisionTree(p) => {
            Model::DecisionTree(DecisionTree::fit(p, x, y, weights, n_classes, seed)?)
        }
        ModelParams::RandomForest(p) => Model::Forest(Forest::fit(
            ForestKind::RandomForest,
            p,
            x,
            y,
            weights,
            n_classes,
            seed,
        )?),
        ModelParams::ExtraTrees(p) => Model::Forest(Forest::fit(
            ForestKind::ExtraTrees,
            p,
            x,
            y,
            weights,
            n_classes,
            seed,
        )?),
        ModelParams::Adaboost(p) => {
            Model::Adaboost(AdaBoost::fit(p, x, y, weights, n_classes, seed)?)
        }
        ModelParams::GradientBoosting(p) => {
            Model::GradientBoosting(GradientBoosting::fit(p, x, y, weights, n_classes, seed)?)
        }
        ModelParams::Knn(p) => Model::Knn(Knn::fit(p, x, y, n_classes)?),
        ModelParams::GaussianNb(p) => Model::GaussianNb(GaussianNb::fit(p, x, y, n_classes)?),
        ModelParams::LogisticRegression(p) => {
            Model::LogisticRegression(LogisticRegression::fit(p, x, y, weights, n_classes)?)
        }
        ModelParams::Mlp(c) => Model::Mlp(Mlp::fit(c, x, y, weights, n_classes, seed)?),
    };
    Ok(model)
}

/// Per-sample weights implied by the spec's class weighting.
pub fn spec_sample_weights(
    spec: &ModelSpec,
    y: &[usize],
    n_classes: usize,
) -> Result<Vec<f64>, ClassifierError> {
    let class_weights = match &spec.class_weighting {
        ClassWeighting::None => return Ok(vec![1.0; y.len()]),
        ClassWeighting::Balanced => balanced_class_weights(y, n_classes),
        ClassWeighting::Custom(w) => {
            if w.len() != n_classes {
                return Err(ClassifierError::hyper(format!(
                    "{} class weights for {n_classes} classes",
                    w.len()
                )));
            }
            w.clone()
        }
    };
    Ok(y.iter().map(|&l| class_weights[l]).collect())
}

/// Fits on a standardized dataset, applying the spec's class weighting.
pub fn fit_dataset(spec: &ModelSpec, train: &LabeledDataset) -> Result<Model, ClassifierError> {
    let k = train.n_classes();
    let w = spec_sample_weights(spec, &train.labels, k)?;
    fit(spec, train.features.view(), &train.labels, k, Some(&w))
}

/// Accuracy and averaged precision/recall/F1 on a held-out split.
pub fn evaluate_offline(
    model: &dyn ProbabilisticClassifier,
    test: &LabeledDataset,
    averaging: Averaging,
) -> Result<OfflineMetrics, ClassifierError> {
    if test.is_empty() {
        return Err(ClassifierError::EmptyTestSet);
    }
    let pred = model.predict(test.features.view())?;
    Ok(offline_metrics(
        &test.labels,
        &pred,
        model.n_classes(),
        averaging,
    )?)
}
