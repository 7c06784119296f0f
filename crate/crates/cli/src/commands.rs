//! Pipeline commands. Each one validates its inputs, computes everything,
//! and only then writes outputs and refreshes the manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gridsentry::classifiers::artifact::ModelArtifact;
use gridsentry::classifiers::grid_search::{grid_search, GridSearchResult};
use gridsentry::classifiers::{
    evaluate_offline, fit_dataset, ClassWeighting, ModelSpec, PRESET_NAMES,
};
use gridsentry::comtrade::{
    read_labels_file, read_record_files, write_record_files, RecordPaths, WaveformRecord,
};
use gridsentry::dataset::{clean, stratified_split, LabeledDataset, Scaler};
use gridsentry::event_sim::synthesize;
use gridsentry::metrics::{
    gap_report, per_event_scores, score_stream, write_confidence_trace, EventScore, ModelPhases,
    OfflineMetrics, StreamMetrics, METRIC_DEFINITIONS,
};
use gridsentry::stream::{run_stream, LatencyStats};
use serde::{Deserialize, Serialize};

use crate::config::{tuning_grid, RunConfig};
use crate::error::CliError;
use crate::manifest::{
    hash_outputs, load_manifest, record_timing, sha256_hex, write_json_file, RunManifest,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Json,
}

/// Resolved inputs shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub config_path: Option<PathBuf>,
    pub config_bytes: Option<Vec<u8>>,
    pub out: PathBuf,
    pub force: bool,
    pub format: TableFormat,
}

/// Command-line values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub models: Option<Vec<String>>,
    pub tune: Option<Vec<String>>,
    pub tau: Option<f64>,
    pub n_cyc: Option<usize>,
    pub duration: Option<f64>,
}

impl Context {
    pub fn load(
        config_path: Option<&Path>,
        out: &Path,
        overrides: &Overrides,
        force: bool,
        format: TableFormat,
    ) -> Result<Self, CliError> {
        let (mut config, bytes) = match config_path {
            Some(p) => {
                let bytes = fs::read(p).map_err(|e| CliError::io(p.display().to_string(), e))?;
                let text = String::from_utf8(bytes.clone()).map_err(|_| {
                    CliError::Validation(format!("{}: config is not UTF-8", p.display()))
                })?;
                (RunConfig::parse(&text)?, Some(bytes))
            }
            None => (RunConfig::default(), None),
        };
        if let Some(s) = overrides.seed {
            config.seed = s;
        }
        if let Some(m) = &overrides.models {
            config.models = m.clone();
            config.models_explicit = true;
        }
        if let Some(t) = &overrides.tune {
            config.tune = t.clone();
        }
        if let Some(t) = overrides.tau {
            config.tau = t;
        }
        if let Some(n) = overrides.n_cyc {
            config.n_cyc = Some(n);
        }
        if let Some(d) = overrides.duration {
            config.train_duration = d;
        }
        config.validate()?;
        Ok(Self {
            config,
            config_path: config_path.map(Path::to_path_buf),
            config_bytes: bytes,
            out: out.to_path_buf(),
            force,
            format,
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn refuse_existing(&self, paths: &[PathBuf]) -> Result<(), CliError> {
        if self.force {
            return Ok(());
        }
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(CliError::Validation(format!(
                "{} exists; pass --force to overwrite",
                p.display()
            )));
        }
        Ok(())
    }

    fn ensure_dir(&self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.path(rel);
        fs::create_dir_all(&p).map_err(|e| CliError::io(p.display().to_string(), e))?;
        Ok(p)
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(path, bytes).map_err(|e| CliError::io(path.display().to_string(), e))
    }

    /// Rewrites the manifest with the current output hashes.
    fn update_manifest(&self, command: &str) -> Result<(), CliError> {
        let mut commands = load_manifest(&self.out)
            .map(|m| m.commands)
            .unwrap_or_default();
        if commands.last().map(String::as_str) != Some(command) {
            commands.push(command.to_string());
        }
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_file: self
                .config_path
                .as_ref()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned()),
            config_sha256: self.config_bytes.as_deref().map(sha256_hex),
            config: serde_json::to_value(&self.config)?,
            seed: self.config.seed,
            models: self.config.models.clone(),
            commands,
            files: hash_outputs(&self.out)?,
            unhashed: vec![crate::manifest::TIMINGS_FILE.to_string()],
        };
        write_json_file(&self.path(crate::manifest::MANIFEST_FILE), &manifest)
    }
}

const DATA_DIR: &str = "data";
const MODELS_DIR: &str = "models";
const REPORTS_DIR: &str = "reports";
const STREAMS_DIR: &str = "streams";

fn train_paths(ctx: &Context) -> RecordPaths {
    RecordPaths::from_stem(&ctx.path(DATA_DIR), "train")
}

fn stream_paths(ctx: &Context) -> RecordPaths {
    RecordPaths::from_stem(&ctx.path(DATA_DIR), "stream")
}

fn all_paths(p: &RecordPaths) -> [PathBuf; 3] {
    [p.cfg.clone(), p.dat.clone(), p.labels.clone()]
}

/// Writes the training and streaming records with label sidecars.
pub fn generate(ctx: &Context) -> Result<(), CliError> {
    let t0 = Instant::now();
    let c = &ctx.config;
    let (train_p, stream_p) = (train_paths(ctx), stream_paths(ctx));
    let targets: Vec<PathBuf> = all_paths(&train_p)
        .into_iter()
        .chain(all_paths(&stream_p))
        .collect();
    ctx.refuse_existing(&targets)?;

    let train_sched = c.train_schedule()?;
    let stream_sched = c.stream_schedule()?;
    let grid = c.grid();
    let stream_grid = gridsentry::event_sim::GridConfig {
        seed: gridsentry::event_sim::streaming_seed(grid.seed),
        ..grid.clone()
    };
    let (train_rec, train_labels) = synthesize(&grid, &train_sched, &c.attacks())?;
    let (stream_rec, stream_labels) = synthesize(&stream_grid, &stream_sched, &c.attacks())?;

    ctx.ensure_dir(DATA_DIR)?;
    write_record_files(&train_p, &train_rec, c.dat_format, Some(&train_labels))?;
    write_record_files(&stream_p, &stream_rec, c.dat_format, Some(&stream_labels))?;
    log::info!(
        "generated {} training and {} streaming samples in {}",
        train_labels.len(),
        stream_labels.len(),
        ctx.path(DATA_DIR).display()
    );
    record_timing(
        &ctx.out,
        "generate",
        serde_json::json!({ "wall_s": t0.elapsed().as_secs_f64() }),
    )?;
    ctx.update_manifest("generate")
}

fn load_labeled(paths: &RecordPaths) -> Result<(WaveformRecord, Vec<u32>), CliError> {
    for p in [&paths.cfg, &paths.dat, &paths.labels] {
        if !p.exists() {
            return Err(CliError::io(
                p.display().to_string(),
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "missing; run `generate` first",
                ),
            ));
        }
    }
    let record = read_record_files(paths)?;
    let labels = read_labels_file(&paths.labels)?;
    if labels.len() != record.sampling.total_samples {
        return Err(CliError::Contract(format!(
            "{} labels for {} samples in {}",
            labels.len(),
            record.sampling.total_samples,
            paths.labels.display()
        )));
    }
    Ok((record, labels))
}

/// One row of the offline table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineRow {
    pub model: String,
    pub display_name: String,
    pub spec: ModelSpec,
    pub tuned: bool,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: OfflineMetrics,
}

fn standardized(ds: &LabeledDataset, scaler: &Scaler) -> Result<LabeledDataset, CliError> {
    let mut out = ds.clone();
    out.features = scaler.transform(ds.features.view())?;
    Ok(out)
}

fn cv_table_csv(res: &GridSearchResult) -> Result<Vec<u8>, CliError> {
    let mut out = String::from("grid_index,params,fold_accuracies,mean_accuracy,selected\n");
    for (i, row) in res.table.iter().enumerate() {
        let params = serde_json::to_string(&row.spec.params)?.replace('"', "\"\"");
        let folds: Vec<String> = row
            .fold_accuracies
            .iter()
            .map(|a| format!("{a:.6}"))
            .collect();
        out.push_str(&format!(
            "{i},\"{params}\",{},{:.6},{}\n",
            folds.join(";"),
            row.mean_accuracy,
            i == res.best_index
        ));
    }
    Ok(out.into_bytes())
}

/// Fits every selected model and writes artifacts plus the offline table.
pub fn train(ctx: &Context) -> Result<(), CliError> {
    let t0 = Instant::now();
    let c = &ctx.config;
    let models_dir = ctx.path(MODELS_DIR);
    let artifact_paths: Vec<PathBuf> = c
        .models
        .iter()
        .map(|m| models_dir.join(format!("{m}.json")))
        .collect();
    ctx.refuse_existing(&artifact_paths)?;
    let specs: Vec<ModelSpec> = c
        .models
        .iter()
        .map(|m| c.model_spec(m))
        .collect::<Result<_, _>>()?;

    let (record, labels) = load_labeled(&train_paths(ctx))?;
    let ds = clean(&record, &labels)?;
    let split = stratified_split(&ds, c.test_fraction, c.seed)?;
    let scaler = Scaler::fit(split.train.features.view());
    let train = standardized(&split.train, &scaler)?;
    let test = standardized(&split.test, &scaler)?;
    let k = train.n_classes();

    let mut rows = Vec::new();
    let mut artifacts = Vec::new();
    let mut cv_tables = Vec::new();
    let mut fit_seconds = serde_json::Map::new();
    for spec in specs {
        let t = Instant::now();
        let tuned = c.tune.contains(&spec.name);
        if !spec.params.supports_weights() && spec.class_weighting != ClassWeighting::None {
            log::warn!(
                "{}: class weights are ignored by this model kind",
                spec.name
            );
        }
        let (spec, model) = if tuned {
            let grid = tuning_grid(&spec);
            let (res, model) = grid_search(
                &grid,
                train.features.view(),
                &train.labels,
                k,
                c.folds,
                c.seed,
            )?;
            log::info!(
                "{}: grid point {} of {} selected",
                spec.name,
                res.best_index,
                grid.len()
            );
            cv_tables.push((spec.name.clone(), cv_table_csv(&res)?));
            (res.best, model)
        } else {
            let model = fit_dataset(&spec, &train)?;
            (spec, model)
        };
        fit_seconds.insert(
            spec.name.clone(),
            serde_json::json!(t.elapsed().as_secs_f64()),
        );
        let metrics = evaluate_offline(&model, &test, c.averaging)?;
        log::info!("{}: offline accuracy {:.4}", spec.name, metrics.accuracy);
        rows.push(OfflineRow {
            model: spec.name.clone(),
            display_name: spec.display_name(),
            spec: spec.clone(),
            tuned,
            n_train: train.len(),
            n_test: test.len(),
            metrics,
        });
        artifacts.push(ModelArtifact::new(
            spec,
            train.encoder.clone(),
            train.feature_names.clone(),
            scaler.clone(),
            model,
        ));
    }

    ctx.ensure_dir(MODELS_DIR)?;
    let reports = ctx.ensure_dir(REPORTS_DIR)?;
    for (artifact, path) in artifacts.iter().zip(&artifact_paths) {
        artifact.save(path)?;
    }
    for (name, table) in &cv_tables {
        ctx.write(&models_dir.join(format!("{name}.cv.csv")), table)?;
    }
    write_json_file(&reports.join("offline.json"), &rows)?;
    if ctx.format == TableFormat::Csv {
        let mut out =
            String::from("model,display_name,tuned,accuracy,precision,recall,f1,averaging\n");
        for r in &rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{}\n",
                r.model,
                r.display_name,
                r.tuned,
                r.metrics.accuracy,
                r.metrics.precision,
                r.metrics.recall,
                r.metrics.f1,
                serde_json::to_value(r.metrics.averaging)?
                    .as_str()
                    .unwrap_or_default()
            ));
        }
        ctx.write(&reports.join("offline.csv"), out.as_bytes())?;
    }
    record_timing(
        &ctx.out,
        "train",
        serde_json::json!({ "wall_s": t0.elapsed().as_secs_f64(), "fit_s": fit_seconds }),
    )?;
    ctx.update_manifest("train")
}

/// Streaming results of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRow {
    pub model: String,
    pub display_name: String,
    pub tau: f64,
    pub n_cyc: usize,
    pub n_half: usize,
    pub lag_seconds: f64,
    pub decisions: usize,
    pub with_warmup: StreamMetrics,
    pub without_warmup: StreamMetrics,
    pub event_margin: usize,
    pub per_event: Vec<EventScore>,
    pub definitions: String,
}

/// Artifacts to stream: the explicit list, or every preset artifact present.
fn stream_models(ctx: &Context) -> Result<Vec<String>, CliError> {
    let dir = ctx.path(MODELS_DIR);
    if ctx.config.models_explicit {
        return Ok(ctx.config.models.clone());
    }
    let found: Vec<String> = PRESET_NAMES
        .iter()
        .filter(|m| dir.join(format!("{m}.json")).exists())
        .map(|m| m.to_string())
        .collect();
    if found.is_empty() {
        return Err(CliError::io(
            dir.display().to_string(),
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "no model artifacts; run `train` first",
            ),
        ));
    }
    Ok(found)
}

/// Runs each artifact over the streaming record.
pub fn stream(ctx: &Context) -> Result<(), CliError> {
    let t0 = Instant::now();
    let c = &ctx.config;
    let models = stream_models(ctx)?;
    let sdir = ctx.path(STREAMS_DIR);
    let targets: Vec<PathBuf> = models
        .iter()
        .flat_map(|m| {
            ["trace.csv", "confidence.csv", "meta.json", "metrics.json"]
                .map(|s| sdir.join(format!("{m}.{s}")))
        })
        .collect();
    ctx.refuse_existing(&targets)?;

    let (record, labels) = load_labeled(&stream_paths(ctx))?;
    let cfg = c.stream_config(record.sampling.sample_rate, record.sampling.line_frequency)?;
    let names = record.channel_names();
    let margin = c.event_margin.unwrap_or(cfg.n_cyc);

    let mut outputs = Vec::new();
    let mut latency = serde_json::Map::new();
    for m in &models {
        let path = ctx.path(MODELS_DIR).join(format!("{m}.json"));
        if !path.exists() {
            return Err(CliError::io(
                path.display().to_string(),
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "model artifact missing; run `train` first",
                ),
            ));
        }
        let artifact = ModelArtifact::load(&path)?;
        if artifact.feature_names != names {
            return Err(CliError::Contract(format!(
                "{m}: artifact features {:?} do not match record channels {:?}",
                artifact.feature_names, names
            )));
        }
        let trace = run_stream(
            &artifact.model,
            Some(&artifact.scaler),
            record.data.view(),
            cfg,
            artifact.encoder.classes(),
            record.sampling.sample_rate,
            record.sampling.start_timestamp,
        )?;
        let row = StreamRow {
            model: m.clone(),
            display_name: artifact.spec.display_name(),
            tau: cfg.tau,
            n_cyc: cfg.n_cyc,
            n_half: cfg.n_half(),
            lag_seconds: trace.lag_seconds(),
            decisions: trace.len(),
            with_warmup: score_stream(&trace, &labels, true)?,
            without_warmup: score_stream(&trace, &labels, false)?,
            event_margin: margin,
            per_event: per_event_scores(&trace, &labels, margin),
            definitions: METRIC_DEFINITIONS.to_string(),
        };
        log::info!(
            "{m}: coverage {:.1}%, overall accuracy {:.4}",
            row.with_warmup.coverage,
            row.with_warmup.overall_accuracy
        );
        let lat: LatencyStats = trace.latency;
        latency.insert(m.clone(), serde_json::to_value(lat)?);
        let mut trace_csv = Vec::new();
        trace.write_csv(&mut trace_csv)?;
        let mut conf_csv = Vec::new();
        write_confidence_trace(&trace, &mut conf_csv)?;
        outputs.push((m.clone(), trace_csv, conf_csv, trace.metadata(m), row));
    }

    ctx.ensure_dir(STREAMS_DIR)?;
    for (m, trace_csv, conf_csv, meta, row) in &outputs {
        ctx.write(&sdir.join(format!("{m}.trace.csv")), trace_csv)?;
        ctx.write(&sdir.join(format!("{m}.confidence.csv")), conf_csv)?;
        write_json_file(&sdir.join(format!("{m}.meta.json")), meta)?;
        write_json_file(&sdir.join(format!("{m}.metrics.json")), row)?;
    }
    record_timing(
        &ctx.out,
        "stream",
        serde_json::json!({ "wall_s": t0.elapsed().as_secs_f64(), "latency": latency }),
    )?;
    ctx.update_manifest("stream")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Contract(format!("{}: {e}", path.display())))
}

/// Consolidates both phases into the gap report and per-event table.
pub fn report(ctx: &Context) -> Result<(), CliError> {
    let reports = ctx.path(REPORTS_DIR);
    let targets = ["gap_report.csv", "gap_report.json", "per_event.csv"].map(|f| reports.join(f));
    ctx.refuse_existing(&targets)?;

    let offline_path = reports.join("offline.json");
    let offline: Vec<OfflineRow> = if offline_path.exists() {
        read_json(&offline_path)?
    } else {
        Vec::new()
    };
    let mut streams: Vec<StreamRow> = Vec::new();
    let sdir = ctx.path(STREAMS_DIR);
    if sdir.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(&sdir)
            .map_err(|e| CliError::io(sdir.display().to_string(), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".metrics.json"))
            .collect();
        files.sort();
        for f in files {
            streams.push(read_json(&f)?);
        }
    }
    if offline.is_empty() && streams.is_empty() {
        return Err(CliError::Contract(format!(
            "no phase outputs under {}; run `train` and `stream` first",
            ctx.out.display()
        )));
    }

    // offline order first, then stream-only models in preset order
    let rank = |m: &str| {
        PRESET_NAMES
            .iter()
            .position(|p| *p == m)
            .unwrap_or(usize::MAX)
    };
    let mut names: Vec<String> = offline.iter().map(|r| r.model.clone()).collect();
    let mut extra: Vec<String> = streams
        .iter()
        .map(|s| s.model.clone())
        .filter(|m| !names.contains(m))
        .collect();
    extra.sort_by_key(|m| (rank(m), m.clone()));
    names.extend(extra);

    let phases: Vec<ModelPhases> = names
        .iter()
        .map(|m| {
            let o = offline.iter().find(|r| &r.model == m);
            let s = streams.iter().find(|r| &r.model == m);
            ModelPhases {
                model: m.clone(),
                display_name: o
                    .map(|r| r.display_name.clone())
                    .or_else(|| s.map(|r| r.display_name.clone()))
                    .unwrap_or_else(|| m.clone()),
                offline: o.map(|r| r.metrics),
                stream: s.map(|r| r.with_warmup),
            }
        })
        .collect();
    let (tau, n_cyc) = match streams.first() {
        Some(s) => {
            if streams.iter().any(|r| r.tau != s.tau || r.n_cyc != s.n_cyc) {
                log::warn!("stream outputs disagree on tau or n_cyc; reporting the first");
            }
            (s.tau, s.n_cyc)
        }
        None => (
            ctx.config.tau,
            ctx.config
                .n_cyc
                .unwrap_or((ctx.config.sample_rate / ctx.config.line_frequency).round() as usize),
        ),
    };
    let gap = gap_report(&phases, tau, n_cyc, true);

    let mut csv_bytes = Vec::new();
    gap.write_csv(&mut csv_bytes)?;
    let mut json_bytes = Vec::new();
    gap.write_json(&mut json_bytes)?;
    json_bytes.push(b'\n');
    let mut per_event = String::from(
        "model,class_id,start_s,end_s,samples,classified,correct,accuracy,detection_rate\n",
    );
    for s in &streams {
        for e in &s.per_event {
            per_event.push_str(&format!(
                "{},{},{:.6},{:.6},{},{},{},{:.6},{:.6}\n",
                s.model,
                e.class_id,
                e.start_s,
                e.end_s,
                e.samples,
                e.classified,
                e.correct,
                e.accuracy,
                e.detection_rate
            ));
        }
    }

    fs::create_dir_all(&reports).map_err(|e| CliError::io(reports.display().to_string(), e))?;
    ctx.write(&targets[0], &csv_bytes)?;
    ctx.write(&targets[1], &json_bytes)?;
    ctx.write(&targets[2], per_event.as_bytes())?;
    for row in &gap.rows {
        if !row.flags.is_empty() {
            log::warn!("{}: {}", row.model, row.flags.join(", "));
        }
    }
    ctx.update_manifest("report")
}

/// generate, train, stream and report in sequence.
pub fn run_all(ctx: &Context) -> Result<(), CliError> {
    generate(ctx)?;
    train(ctx)?;
    stream(ctx)?;
    report(ctx)
}
