//! Plain-text run configuration: `key = value` lines plus event lines of
//! the form `train: class_id, start, end` or `stream: class_id, start, end`.
//! `#` starts a comment. Event lines for a record replace its default schedule.

use std::str::FromStr;

use gridsentry::classifiers::{
    ClassWeighting, ForestParams, ModelParams, ModelSpec, TreeParams, PRESET_NAMES,
};
use gridsentry::comtrade::DataFormat;
use gridsentry::event_sim::{AttackParams, GridConfig};
use gridsentry::metrics::Averaging;
use gridsentry::schedule::{parse_event_fields, EventSchedule, ScheduledEvent};
use gridsentry::stream::StreamConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_MODELS: [&str; 11] = PRESET_NAMES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub line_frequency: f64,
    pub sample_rate: f64,
    pub noise_sigma: f64,
    pub energization: bool,
    pub random_point_on_wave: bool,
    pub ct_ratio_factor: f64,
    pub pt_ratio_factor: f64,
    pub gps_shift: f64,
    pub train_duration: f64,
    pub stream_duration: f64,
    /// `None` keeps the built-in schedule.
    pub train_events: Option<Vec<ScheduledEvent>>,
    pub stream_events: Option<Vec<ScheduledEvent>>,
    pub dat_format: DataFormat,
    pub test_fraction: f64,
    pub models: Vec<String>,
    /// Set when `models` came from the config or the command line.
    #[serde(skip)]
    pub models_explicit: bool,
    pub tune: Vec<String>,
    pub folds: usize,
    pub class_weights: String,
    pub averaging: Averaging,
    pub tau: f64,
    /// `None` derives the window from the record's rates.
    pub n_cyc: Option<usize>,
    /// Samples trimmed from each end of an event in the per-event table;
    /// `None` uses one cycle.
    pub event_margin: Option<usize>,
    pub n_trees: Option<usize>,
    pub boosting_rounds: Option<usize>,
    pub knn_k: Option<usize>,
    pub mlp_epochs: Option<usize>,
    pub mlp_learning_rate: Option<f64>,
    pub mlp_batch_size: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            line_frequency: 60.0,
            sample_rate: 4800.0,
            noise_sigma: 0.01,
            energization: true,
            random_point_on_wave: true,
            ct_ratio_factor: 0.5,
            pt_ratio_factor: 0.5,
            gps_shift: 10.0 / 4800.0,
            train_duration: 22.0,
            stream_duration: 6.0,
            train_events: None,
            stream_events: None,
            dat_format: DataFormat::Binary16,
            test_fraction: 0.2,
            models: DEFAULT_MODELS.iter().map(|s| s.to_string()).collect(),
            models_explicit: false,
            tune: Vec::new(),
            folds: 3,
            class_weights: "balanced".into(),
            averaging: Averaging::Weighted,
            tau: 0.6,
            n_cyc: None,
            event_margin: None,
            n_trees: None,
            boosting_rounds: None,
            knn_k: None,
            mlp_epochs: None,
            mlp_learning_rate: None,
            mlp_batch_size: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Validation(format!("config line {line}: `{key}`: {e}")))
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::Validation(format!(
            "config line {line}: `{key}` expects true/false, got `{value}`"
        ))),
    }
}

pub fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut c = Self::default();
        let mut train = Vec::new();
        let mut stream = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("train:") {
                train.push(parse_event_fields(rest, line_no)?);
                continue;
            }
            if let Some(rest) = line.strip_prefix("stream:") {
                stream.push(parse_event_fields(rest, line_no)?);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!(
                    "config line {line_no}: expected `key = value`, got `{line}`"
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let l = line_no;
            match key {
                "seed" => c.seed = parse_value(key, value, l)?,
                "line_frequency" => c.line_frequency = parse_value(key, value, l)?,
                "sample_rate" => c.sample_rate = parse_value(key, value, l)?,
                "noise_sigma" => c.noise_sigma = parse_value(key, value, l)?,
                "energization" => c.energization = parse_bool(key, value, l)?,
                "random_point_on_wave" => c.random_point_on_wave = parse_bool(key, value, l)?,
                "ct_ratio_factor" => c.ct_ratio_factor = parse_value(key, value, l)?,
                "pt_ratio_factor" => c.pt_ratio_factor = parse_value(key, value, l)?,
                "gps_shift" => c.gps_shift = parse_value(key, value, l)?,
                "train_duration" => c.train_duration = parse_value(key, value, l)?,
                "stream_duration" => c.stream_duration = parse_value(key, value, l)?,
                "dat_format" => {
                    c.dat_format = match value.to_ascii_lowercase().as_str() {
                        "ascii" => DataFormat::Ascii,
                        "binary" => DataFormat::Binary16,
                        _ => {
                            return Err(CliError::Validation(format!(
                                "config line {l}: dat_format is `ascii` or `binary`"
                            )))
                        }
                    }
                }
                "test_fraction" => c.test_fraction = parse_value(key, value, l)?,
                "models" => {
                    c.models = parse_list(value);
                    c.models_explicit = true;
                }
                "tune" => c.tune = parse_list(value),
                "folds" => c.folds = parse_value(key, value, l)?,
                "class_weights" => c.class_weights = value.to_string(),
                "averaging" => c.averaging = parse_averaging(value)?,
                "tau" => c.tau = parse_value(key, value, l)?,
                "n_cyc" => c.n_cyc = Some(parse_value(key, value, l)?),
                "event_margin" => c.event_margin = Some(parse_value(key, value, l)?),
                "n_trees" => c.n_trees = Some(parse_value(key, value, l)?),
                "boosting_rounds" => c.boosting_rounds = Some(parse_value(key, value, l)?),
                "knn_k" => c.knn_k = Some(parse_value(key, value, l)?),
                "mlp_epochs" => c.mlp_epochs = Some(parse_value(key, value, l)?),
                "mlp_learning_rate" => c.mlp_learning_rate = Some(parse_value(key, value, l)?),
                "mlp_batch_size" => c.mlp_batch_size = Some(parse_value(key, value, l)?),
                other => {
                    return Err(CliError::Validation(format!(
                        "config line {l}: unknown key `{other}`"
                    )))
                }
            }
        }
        if !train.is_empty() {
            c.train_events = Some(train);
        }
        if !stream.is_empty() {
            c.stream_events = Some(stream);
        }
        Ok(c)
    }

    pub fn grid(&self) -> GridConfig {
        GridConfig {
            line_frequency: self.line_frequency,
            sample_rate: self.sample_rate,
            noise_sigma: self.noise_sigma,
            energization: if self.energization {
                GridConfig::default().energization
            } else {
                None
            },
            random_point_on_wave: self.random_point_on_wave,
            seed: self.seed,
            ..GridConfig::default()
        }
    }

    pub fn attacks(&self) -> AttackParams {
        AttackParams {
            ct_ratio_factor: self.ct_ratio_factor,
            pt_ratio_factor: self.pt_ratio_factor,
            gps_shift: self.gps_shift,
        }
    }

    pub fn train_schedule(&self) -> Result<EventSchedule, CliError> {
        Ok(match &self.train_events {
            Some(ev) => EventSchedule::new(ev.clone(), self.train_duration)?,
            None => EventSchedule::training_benchmark().with_duration(self.train_duration)?,
        })
    }

    pub fn stream_schedule(&self) -> Result<EventSchedule, CliError> {
        Ok(match &self.stream_events {
            Some(ev) => EventSchedule::new(ev.clone(), self.stream_duration)?,
            None => EventSchedule::streaming_benchmark().with_duration(self.stream_duration)?,
        })
    }

    pub fn class_weighting(&self) -> Result<ClassWeighting, CliError> {
        match self.class_weights.as_str() {
            "balanced" => Ok(ClassWeighting::Balanced),
            "none" => Ok(ClassWeighting::None),
            custom => {
                let w: Result<Vec<f64>, _> =
                    custom.split(',').map(|v| v.trim().parse::<f64>()).collect();
                w.map(ClassWeighting::Custom).map_err(|_| {
                    CliError::Validation(format!(
                        "class_weights is `balanced`, `none` or a comma-separated list, got `{custom}`"
                    ))
                })
            }
        }
    }

    /// Preset spec with the config's overrides applied.
    pub fn model_spec(&self, name: &str) -> Result<ModelSpec, CliError> {
        let mut spec = ModelSpec::preset(name, self.seed)?;
        spec.class_weighting = self.class_weighting()?;
        match &mut spec.params {
            ModelParams::RandomForest(p) | ModelParams::ExtraTrees(p) => {
                if let Some(n) = self.n_trees {
                    p.n_trees = n;
                }
            }
            ModelParams::Adaboost(p) => {
                if let Some(n) = self.boosting_rounds {
                    p.n_rounds = n;
                }
            }
            ModelParams::GradientBoosting(p) => {
                if let Some(n) = self.boosting_rounds {
                    p.n_rounds = n;
                }
            }
            ModelParams::Knn(p) => {
                if let Some(k) = self.knn_k {
                    p.k = k;
                }
            }
            ModelParams::Mlp(c) => {
                if let Some(e) = self.mlp_epochs {
                    c.epochs = e;
                }
                if let Some(lr) = self.mlp_learning_rate {
                    c.learning_rate = lr;
                }
                if let Some(b) = self.mlp_batch_size {
                    c.batch_size = b;
                }
            }
            ModelParams::DecisionTree(_)
            | ModelParams::GaussianNb(_)
            | ModelParams::LogisticRegression(_) => {}
        }
        spec.params.validate()?;
        Ok(spec)
    }

    pub fn stream_config(
        &self,
        record_rate: f64,
        record_line_frequency: f64,
    ) -> Result<StreamConfig, CliError> {
        let cfg = match self.n_cyc {
            Some(n) => StreamConfig::new(n, self.tau)?,
            None => StreamConfig::from_rates(record_rate, record_line_frequency, self.tau)?,
        };
        Ok(cfg)
    }

    /// Checks everything that does not need input files.
    pub fn validate(&self) -> Result<(), CliError> {
        self.grid().validate()?;
        self.attacks().validate(self.line_frequency)?;
        self.train_schedule()?;
        self.stream_schedule()?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CliError::Validation(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.folds < 2 {
            return Err(CliError::Validation("folds must be >= 2".into()));
        }
        if self.models.is_empty() {
            return Err(CliError::Validation("no models selected".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.models {
            if !seen.insert(m) {
                return Err(CliError::Validation(format!("model `{m}` listed twice")));
            }
            self.model_spec(m)?;
        }
        for t in &self.tune {
            if !self.models.contains(t) {
                return Err(CliError::Validation(format!(
                    "--tune {t}: model is not selected"
                )));
            }
        }
        if let Some(n) = self.n_cyc {
            StreamConfig::new(n, self.tau)?;
        } else {
            StreamConfig::new(2, self.tau)?;
        }
        Ok(())
    }
}

pub fn parse_averaging(value: &str) -> Result<Averaging, CliError> {
    match value {
        "weighted" => Ok(Averaging::Weighted),
        "macro" => Ok(Averaging::Macro),
        other => Err(CliError::Validation(format!(
            "averaging is `weighted` or `macro`, got `{other}`"
        ))),
    }
}

/// Candidate specs searched when a model is tuned. The untuned preset is
/// always the first grid point.
pub fn tuning_grid(base: &ModelSpec) -> Vec<ModelSpec> {
    let variant = |params: ModelParams| ModelSpec {
        params,
        ..base.clone()
    };
    let mut grid = vec![base.clone()];
    match &base.params {
        ModelParams::DecisionTree(p) => {
            for depth in [Some(8), Some(16)] {
                grid.push(variant(ModelParams::DecisionTree(TreeParams {
                    max_depth: depth,
                    ..p.clone()
                })));
            }
        }
        ModelParams::RandomForest(p) | ModelParams::ExtraTrees(p) => {
            let wrap = |q: ForestParams| match &base.params {
                ModelParams::RandomForest(_) => ModelParams::RandomForest(q),
                _ => ModelParams::ExtraTrees(q),
            };
            for leaf in [2, 5] {
                let mut q = p.clone();
                q.tree.min_samples_leaf = leaf;
                grid.push(variant(wrap(q)));
            }
        }
        ModelParams::Adaboost(p) => {
            for lr in [0.5, 1.0] {
                let mut q = p.clone();
                q.learning_rate = lr;
                grid.push(variant(ModelParams::Adaboost(q)));
            }
        }
        ModelParams::GradientBoosting(p) => {
            for depth in [2, 5] {
                let mut q = p.clone();
                q.max_depth = depth;
                grid.push(variant(ModelParams::GradientBoosting(q)));
            }
        }
        ModelParams::Knn(p) => {
            for k in [1, 3, 9] {
                if k != p.k {
                    grid.push(variant(ModelParams::Knn(
                        gridsentry::classifiers::KnnParams { k },
                    )));
                }
            }
        }
        ModelParams::GaussianNb(p) => {
            for vs in [1e-6, 1e-3] {
                let mut q = p.clone();
                q.var_smoothing = vs;
                grid.push(variant(ModelParams::GaussianNb(q)));
            }
        }
        ModelParams::LogisticRegression(p) => {
            for l2 in [1e-3, 1e-2] {
                let mut q = p.clone();
                q.l2 = l2;
                grid.push(variant(ModelParams::LogisticRegression(q)));
            }
        }
        ModelParams::Mlp(c) => {
            for lr in [3e-3, 1e-2] {
                let mut q = c.clone();
                q.learning_rate = lr;
                grid.push(variant(ModelParams::Mlp(q)));
            }
        }
    }
    grid
}
