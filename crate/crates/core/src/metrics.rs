//! Offline and streaming metric suites and the report comparing them.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schedule::NORMAL_CLASS;
use crate::stream::DecisionTrace;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("nothing to score")]
    Empty,
    #[error("{truth} truth labels for {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("label {0} outside the class range")]
    LabelRange(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `counts[[truth, predicted]]`.
pub fn confusion_matrix(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
) -> Result<Array2<u64>, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y_true.len(),
            pred: y_pred.len(),
        });
    }
    let mut cm = Array2::zeros((n_classes, n_classes));
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(MetricsError::LabelRange(t.max(p)));
        }
        cm[[t, p]] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Per-class scores weighted by true-class support.
    #[default]
    Weighted,
    /// Unweighted mean over classes seen in truth or predictions.
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfflineMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub averaging: Averaging,
}

/// Per-class `(precision, recall, f1, support)`; undefined ratios are 0.
pub fn per_class_scores(cm: &Array2<u64>) -> Vec<(f64, f64, f64, u64)> {
    let k = cm.nrows();
    (0..k)
        .map(|c| {
            let tp = cm[[c, c]] as f64;
            let predicted: u64 = cm.column(c).sum();
            let support: u64 = cm.row(c).sum();
            let p = if predicted > 0 {
                tp / predicted as f64
            } else {
                0.0
            };
            let r = if support > 0 {
                tp / support as f64
            } else {
                0.0
            };
            let f = if p + r > 0.0 {
                2.0 * p * r / (p + r)
            } else {
                0.0
            };
            (p, r, f, support)
        })
        .collect()
}

pub fn metrics_from_confusion(
    cm: &Array2<u64>,
    averaging: Averaging,
) -> Result<OfflineMetrics, MetricsError> {
    let total: u64 = cm.sum();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let correct: u64 = cm.diag().sum();
    let scores = per_class_scores(cm);
    let (mut p, mut r, mut f, mut w) = (0.0, 0.0, 0.0, 0.0);
    for (c, &(pc, rc, fc, support)) in scores.iter().enumerate() {
        let weight = match averaging {
            Averaging::Weighted => support as f64,
            Averaging::Macro => {
                if support > 0 || cm.column(c).sum() > 0 {
                    1.0
                } else {
                    0.0
                }
            }
        };
        p += weight * pc;
        r += weight * rc;
        f += weight * fc;
        w += weight;
    }
    Ok(OfflineMetrics {
        accuracy: correct as f64 / total as f64,
        precision: p / w,
        recall: r / w,
        f1: f / w,
        averaging,
    })
}

pub fn offline_metrics(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
    averaging: Averaging,
) -> Result<OfflineMetrics, MetricsError> {
    metrics_from_confusion(&confusion_matrix(y_true, y_pred, n_classes)?, averaging)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamMetrics {
    /// Correct / classified decisions.
    pub overall_accuracy: f64,
    /// Correct / classified decisions whose truth is not Normal.
    pub anomaly_accuracy: f64,
    /// Classified / total decisions, in percent.
    pub coverage: f64,
    pub total: usize,
    pub classified: usize,
    pub correct: usize,
    pub anomaly_classified: usize,
    pub anomaly_correct: usize,
}

impl StreamMetrics {
    fn from_counts(
        total: usize,
        classified: usize,
        correct: usize,
        anomaly_classified: usize,
        anomaly_correct: usize,
    ) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        // zero coverage reports zero accuracies
        let (overall, anomaly) = if classified == 0 {
            (0.0, 0.0)
        } else {
            (
                ratio(correct, classified),
                ratio(anomaly_correct, anomaly_classified),
            )
        };
        Self {
            overall_accuracy: overall,
            anomaly_accuracy: anomaly,
            coverage: 100.0 * ratio(classified, total),
            total,
            classified,
            correct,
            anomaly_classified,
            anomaly_correct,
        }
    }
}

/// Scores decisions against per-sample truth (original class ids) indexed
/// by `emit_index`. With `include_warmup = false`, backfilled decisions
/// are skipped.
pub fn score_stream(
    trace: &DecisionTrace,
    truth: &[u32],
    include_warmup: bool,
) -> Result<StreamMetrics, MetricsError> {
    let (mut total, mut classified, mut correct, mut an_cls, mut an_ok) = (0, 0, 0, 0, 0);
    for d in &trace.decisions {
        if d.backfilled && !include_warmup {
            continue;
        }
        let t = *truth
            .get(d.emit_index)
            .ok_or(MetricsError::LengthMismatch {
                truth: truth.len(),
                pred: d.emit_index + 1,
            })?;
        total += 1;
        if d.is_abstain() {
            continue;
        }
        classified += 1;
        let ok = d.class_id == t as i32;
        correct += usize::from(ok);
        if t != NORMAL_CLASS {
            an_cls += 1;
            an_ok += usize::from(ok);
        }
    }
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(StreamMetrics::from_counts(
        total, classified, correct, an_cls, an_ok,
    ))
}

/// Maximal run of one non-Normal label: samples `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRun {
    pub class_id: u32,
    pub start: usize,
    pub end: usize,
}

pub fn event_runs(truth: &[u32]) -> Vec<LabelRun> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < truth.len() {
        let c = truth[i];
        let start = i;
        while i < truth.len() && truth[i] == c {
            i += 1;
        }
        if c != NORMAL_CLASS {
            runs.push(LabelRun {
                class_id: c,
                start,
                end: i,
            });
        }
    }
    runs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventScore {
    pub class_id: u32,
    pub start_index: usize,
    pub end_index: usize,
    pub start_s: f64,
    pub end_s: f64,
    /// Samples scored: the run minus `margin` at each end.
    pub samples: usize,
    pub classified: usize,
    pub correct: usize,
    /// Correct / classified within the interval.
    pub accuracy: f64,
    /// Correct / all scored samples; abstentions count as misses.
    pub detection_rate: f64,
}

/// Per-event breakdown over each labeled run, trimming `margin` samples
/// from both ends so only the interior is scored.
pub fn per_event_scores(trace: &DecisionTrace, truth: &[u32], margin: usize) -> Vec<EventScore> {
    event_runs(truth)
        .into_iter()
        .map(|run| {
            let lo = (run.start + margin).min(run.end);
            let hi = run.end.saturating_sub(margin).max(lo);
            let (mut classified, mut correct) = (0, 0);
            for d in trace
                .decisions
                .iter()
                .filter(|d| (lo..hi).contains(&d.emit_index))
            {
                if !d.is_abstain() {
                    classified += 1;
                    correct += usize::from(d.class_id == run.class_id as i32);
                }
            }
            let samples = hi - lo;
            EventScore {
                class_id: run.class_id,
                start_index: run.start,
                end_index: run.end,
                start_s: trace.time_of(run.start),
                end_s: trace.time_of(run.end),
                samples,
                classified,
                correct,
                accuracy: if classified == 0 {
                    0.0
                } else {
                    correct as f64 / classified as f64
                },
                detection_rate: if samples == 0 {
                    0.0
                } else {
                    correct as f64 / samples as f64
                },
            }
        })
        .collect()
}

/// Time series `time_s,confidence,class_id` for external plotting.
pub fn write_confidence_trace<W: Write>(
    trace: &DecisionTrace,
    writer: W,
) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time_s", "confidence", "class_id"])?;
    for d in &trace.decisions {
        w.write_record([
            format!("{:.9}", trace.time_of(d.emit_index)),
            format!("{:.12}", d.confidence),
            d.class_id.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const FLAG_HIGH_ACC_LOW_COVERAGE: &str = "high-accuracy/low-coverage";
pub const FLAG_STREAM_MISSING: &str = "stream-missing";
pub const FLAG_OFFLINE_MISSING: &str = "offline-missing";

/// Offline accuracy at or above this with coverage below
/// [`LOW_COVERAGE_PCT`] is flagged.
pub const HIGH_ACCURACY: f64 = 0.95;
pub const LOW_COVERAGE_PCT: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub model: String,
    pub display_name: String,
    pub offline: Option<OfflineMetrics>,
    pub stream: Option<StreamMetrics>,
    /// Streaming overall accuracy minus offline accuracy.
    pub accuracy_delta: Option<f64>,
    /// Streaming anomaly accuracy minus offline accuracy.
    pub anomaly_delta: Option<f64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub tau: f64,
    pub n_cyc: usize,
    pub include_warmup: bool,
    pub definitions: String,
    pub rows: Vec<GapRow>,
}

/// Input for one model: either phase may be missing.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPhases {
    pub model: String,
    pub display_name: String,
    pub offline: Option<OfflineMetrics>,
    pub stream: Option<StreamMetrics>,
}

pub const METRIC_DEFINITIONS: &str =
    "overall accuracy = correct / classified decisions over all labels; \
anomaly accuracy = correct / classified decisions whose truth is not Normal; \
coverage = classified / total decisions in percent; zero coverage reports zero accuracies";

pub fn gap_report(
    models: &[ModelPhases],
    tau: f64,
    n_cyc: usize,
    include_warmup: bool,
) -> GapReport {
    let rows = models
        .iter()
        .map(|m| {
            let mut flags = Vec::new();
            match (&m.offline, &m.stream) {
                (Some(o), Some(s))
                    if o.accuracy >= HIGH_ACCURACY && s.coverage < LOW_COVERAGE_PCT =>
                {
                    flags.push(FLAG_HIGH_ACC_LOW_COVERAGE.to_string())
                }
                (Some(_), None) => flags.push(FLAG_STREAM_MISSING.to_string()),
                (None, Some(_)) => flags.push(FLAG_OFFLINE_MISSING.to_string()),
                (None, None) => {
                    flags.push(FLAG_OFFLINE_MISSING.to_string());
                    flags.push(FLAG_STREAM_MISSING.to_string());
                }
                _ => {}
            }
            let both = m.offline.zip(m.stream);
            GapRow {
                model: m.model.clone(),
                display_name: m.display_name.clone(),
                offline: m.offline,
                stream: m.stream,
                accuracy_delta: both.map(|(o, s)| s.overall_accuracy - o.accuracy),
                anomaly_delta: both.map(|(o, s)| s.anomaly_accuracy - o.accuracy),
                flags,
            }
        })
        .collect();
    GapReport {
        tau,
        n_cyc,
        include_warmup,
        definitions: METRIC_DEFINITIONS.to_string(),
        rows,
    }
}

impl GapReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "model",
            "display_name",
            "accuracy",
            "precision",
            "recall",
            "f1",
            "overall_acc",
            "anomaly_acc",
            "coverage_pct",
            "accuracy_delta",
            "anomaly_delta",
            "flags",
            "tau",
            "n_cyc",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.display_name.clone(),
                opt(r.offline.map(|o| o.accuracy)),
                opt(r.offline.map(|o| o.precision)),
                opt(r.offline.map(|o| o.recall)),
                opt(r.offline.map(|o| o.f1)),
                opt(r.stream.map(|s| s.overall_accuracy)),
                opt(r.stream.map(|s| s.anomaly_accuracy)),
                opt(r.stream.map(|s| s.coverage)),
                opt(r.accuracy_delta),
                opt(r.anomaly_delta),
                r.flags.join(";"),
                self.tau.to_string(),
                self.n_cyc.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), MetricsError> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{Decision, LatencyStats, StreamConfig, ABSTAIN};

    fn trace(classes: &[i32]) -> DecisionTrace {
        DecisionTrace {
            config: StreamConfig::default(),
            sample_rate: 4800.0,
            start_time: 0.0,
            decisions: classes
                .iter()
                .enumerate()
                .map(|(i, &c)| Decision {
                    emit_index: i,
                    class_id: c,
                    confidence: if c == ABSTAIN { 0.3 } else { 0.9 },
                    backfilled: false,
                })
                .collect(),
            latency: LatencyStats::default(),
        }
    }

    #[test]
    fn hand_case_ten_decisions() {
        // truth: 6 normal, 4 anomaly (class 3)
        let truth = [0, 0, 0, 0, 0, 0, 3, 3, 3, 3];
        // normal: 3 correct, 1 wrong, 2 abstain; anomaly: 3 correct, 1 wrong
        let pred = [0, 0, 0, 5, ABSTAIN, ABSTAIN, 3, 3, 3, 0];
        let m = score_stream(&trace(&pred), &truth, true).unwrap();
        assert_eq!((m.classified, m.correct), (8, 6));
        assert_eq!(m.overall_accuracy, 0.75);
        assert_eq!(m.anomaly_accuracy, 0.75);
        assert_eq!(m.coverage, 80.0);
    }

    #[test]
    fn all_abstain_is_zero() {
        let m = score_stream(&trace(&[ABSTAIN; 5]), &[0, 1, 1, 0, 0], true).unwrap();
        assert_eq!(
            (m.overall_accuracy, m.anomaly_accuracy, m.coverage),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn weighted_f1_hand_case() {
        // 3 classes, 12 samples
        let t = [0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2];
        let p = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 0];
        let m = offline_metrics(&t, &p, 3, Averaging::Weighted).unwrap();
        // class 0: p 4/5 r 4/5; class 1: p 3/4 r 3/4; class 2: p 2/3 r 2/3
        let f = (5.0 * 0.8 + 4.0 * 0.75 + 3.0 * (2.0 / 3.0)) / 12.0;
        assert!((m.f1 - f).abs() < 1e-12);
        assert!((m.accuracy - 9.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn single_error_is_one_off_diagonal() {
        let cm = confusion_matrix(&[0, 1, 2], &[0, 2, 2], 3).unwrap();
        let off: u64 = cm
            .indexed_iter()
            .filter(|((i, j), _)| i != j)
            .map(|(_, v)| *v)
            .sum();
        assert_eq!(off, 1);
        assert_eq!(cm[[1, 2]], 1);
    }

    #[test]
    fn gap_flags() {
        let off = OfflineMetrics {
            accuracy: 0.99,
            precision: 0.99,
            recall: 0.99,
            f1: 0.99,
            averaging: Averaging::Weighted,
        };
        let s = StreamMetrics::from_counts(100, 10, 10, 5, 5);
        let r = gap_report(
            &[
                ModelPhases {
                    model: "et".into(),
                    display_name: "ET".into(),
                    offline: Some(off),
                    stream: Some(s),
                },
                ModelPhases {
                    model: "rf".into(),
                    display_name: "RF".into(),
                    offline: Some(off),
                    stream: None,
                },
            ],
            0.6,
            80,
            true,
        );
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.rows[0].flags, vec![FLAG_HIGH_ACC_LOW_COVERAGE]);
        assert_eq!(r.rows[1].flags, vec![FLAG_STREAM_MISSING]);
    }

    #[test]
    fn event_runs_skip_normal() {
        let runs = event_runs(&[0, 1, 1, 0, 0, 4, 4, 4]);
        assert_eq!(
            runs,
            vec![
                LabelRun {
                    class_id: 1,
                    start: 1,
                    end: 3
                },
                LabelRun {
                    class_id: 4,
                    start: 5,
                    end: 8
                }
            ]
        );
    }
}
