//! Real-time decision layer: one-cycle moving average of class
//! probabilities, max-probability confidence, abstention below `tau`,
//! and emission delayed by half a cycle.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{argmax, ClassifierError, ProbabilisticClassifier};
use crate::dataset::Scaler;

/// Class id emitted when confidence is below the threshold.
pub const ABSTAIN: i32 = -1;

/// Tolerance on simplex sums for inputs and smoothed vectors.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("invalid stream config: {0}")]
    Config(String),
    #[error("sample {index}: {msg}")]
    Contract { index: usize, msg: String },
    #[error("stream of {len} samples is shorter than one window of {n_cyc}")]
    Degenerate { len: usize, n_cyc: usize },
    #[error("expected {expected} values per sample, got {found}")]
    Width { expected: usize, found: usize },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    /// Samples per fundamental cycle; the smoothing window length.
    pub n_cyc: usize,
    pub tau: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            n_cyc: 80,
            tau: 0.6,
        }
    }
}

impl StreamConfig {
    pub fn new(n_cyc: usize, tau: f64) -> Result<Self, StreamError> {
        let c = Self { n_cyc, tau };
        c.validate()?;
        Ok(c)
    }

    /// `n_cyc = round(sample_rate / line_frequency)`; the ratio must be integral.
    pub fn from_rates(
        sample_rate: f64,
        line_frequency: f64,
        tau: f64,
    ) -> Result<Self, StreamError> {
        let ratio = sample_rate / line_frequency;
        let n = ratio.round();
        if !(n.is_finite() && (ratio - n).abs() < 1e-9) {
            return Err(StreamError::Config(format!(
                "sample rate {sample_rate} is not a whole multiple of {line_frequency} Hz"
            )));
        }
        Self::new(n as usize, tau)
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        if self.n_cyc < 2 {
            return Err(StreamError::Config(format!(
                "n_cyc must be >= 2, got {}",
                self.n_cyc
            )));
        }
        // 0 is accepted: it turns abstention off
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(StreamError::Config(format!(
                "tau must lie in [0, 1], got {}",
                self.tau
            )));
        }
        Ok(())
    }

    /// Look-ahead in samples: `floor(n_cyc / 2)`.
    pub fn n_half(&self) -> usize {
        self.n_cyc / 2
    }

    /// Window samples before the emitted index.
    pub fn back(&self) -> usize {
        self.n_cyc - 1 - self.n_half()
    }

    /// Window samples after the emitted index.
    pub fn forward(&self) -> usize {
        self.n_half()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub emit_index: usize,
    /// Encoded class index, or [`ABSTAIN`].
    pub class_id: i32,
    pub confidence: f64,
    /// Computed at flush with edge padding rather than from a full window.
    pub backfilled: bool,
}

impl Decision {
    pub fn is_abstain(&self) -> bool {
        self.class_id == ABSTAIN
    }
}

/// Threshold rule on a smoothed vector: classify iff confidence >= tau.
pub fn decide(q: &[f64], tau: f64) -> (i32, f64) {
    let k = argmax(q);
    let c = q[k];
    if c >= tau {
        (k as i32, c)
    } else {
        (ABSTAIN, c)
    }
}

fn check_simplex(p: &[f64], index: usize, what: &str) -> Result<(), StreamError> {
    let mut sum = 0.0;
    for &v in p {
        if !(v.is_finite() && v >= 0.0) {
            return Err(StreamError::Contract {
                index,
                msg: format!("{what} has entry {v}"),
            });
        }
        sum += v;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(StreamError::Contract {
            index,
            msg: format!("{what} sums to {sum}"),
        });
    }
    Ok(())
}

/// Single-stream ring-buffer engine. Push one probability vector per sample.
#[derive(Debug, Clone)]
pub struct StreamEngine {
    config: StreamConfig,
    k: usize,
    ring: Vec<f64>,
    /// Slot of the oldest buffered vector.
    start: usize,
    len: usize,
    pushed: usize,
    /// First `n_cyc - 1` inputs, kept for the head backfill.
    head: Vec<f64>,
    head_flushed: bool,
    q: Vec<f64>,
}

impl StreamEngine {
    pub fn new(config: StreamConfig, n_classes: usize) -> Result<Self, StreamError> {
        config.validate()?;
        if n_classes == 0 {
            return Err(StreamError::Config("need at least one class".into()));
        }
        Ok(Self {
            config,
            k: n_classes,
            ring: vec![0.0; config.n_cyc * n_classes],
            start: 0,
            len: 0,
            pushed: 0,
            head: Vec::with_capacity((config.n_cyc - 1) * n_classes),
            head_flushed: false,
            q: vec![0.0; n_classes],
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    pub fn pushed(&self) -> usize {
        self.pushed
    }

    /// Smoothed vector behind the most recent decision.
    pub fn smoothed(&self) -> &[f64] {
        &self.q
    }

    /// Buffers `p` and, once the window is full, emits the decision for
    /// sample `pushed - 1 - n_half`.
    pub fn push(&mut self, p: &[f64]) -> Result<Option<Decision>, StreamError> {
        let n = self.config.n_cyc;
        let k = self.k;
        if p.len() != k {
            return Err(StreamError::Width {
                expected: k,
                found: p.len(),
            });
        }
        let index = self.pushed;
        check_simplex(p, index, "probability vector")?;
        if self.head.len() < (n - 1) * k {
            self.head.extend_from_slice(p);
        }
        let slot = (self.start + self.len) % n;
        self.ring[slot * k..(slot + 1) * k].copy_from_slice(p);
        self.len += 1;
        self.pushed += 1;
        if self.len < n {
            return Ok(None);
        }
        // oldest to newest, the same order the offline smoother sums in
        self.q.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let s = (self.start + i) % n;
            for (q, v) in self.q.iter_mut().zip(&self.ring[s * k..(s + 1) * k]) {
                *q += v;
            }
        }
        let denom = n as f64;
        self.q.iter_mut().for_each(|v| *v /= denom);
        let emit_index = index - self.config.n_half();
        check_simplex(&self.q, emit_index, "smoothed vector")?;
        let (class_id, confidence) = decide(&self.q, self.config.tau);
        self.start = (self.start + 1) % n;
        self.len -= 1;
        Ok(Some(Decision {
            emit_index,
            class_id,
            confidence,
            backfilled: false,
        }))
    }

    /// Decisions for the indices before the first full window, using
    /// nearest-edge padding. Needs at least `n_cyc - 1` pushes; returns an
    /// empty list on later calls.
    pub fn flush_head(&mut self) -> Result<Vec<Decision>, StreamError> {
        let n = self.config.n_cyc;
        if self.head_flushed {
            return Ok(Vec::new());
        }
        if self.pushed < n - 1 {
            return Err(StreamError::Degenerate {
                len: self.pushed,
                n_cyc: n,
            });
        }
        self.head_flushed = true;
        let k = self.k;
        let available = self.head.len() / k;
        let (back, fwd) = (self.config.back() as isize, self.config.forward() as isize);
        let mut out = Vec::with_capacity(back as usize);
        for e in 0..back {
            self.q.iter_mut().for_each(|v| *v = 0.0);
            for j in e - back..=e + fwd {
                let src = j.clamp(0, available as isize - 1) as usize;
                for (q, v) in self.q.iter_mut().zip(&self.head[src * k..(src + 1) * k]) {
                    *q += v;
                }
            }
            out.push(self.finish_backfill(e as usize)?);
        }
        Ok(out)
    }

    /// Remaining head and tail decisions once the stream has ended.
    /// The tail covers the last `n_half` indices, which never get a full window.
    pub fn finish(mut self) -> Result<Vec<Decision>, StreamError> {
        let n = self.config.n_cyc;
        if self.pushed < n {
            return Err(StreamError::Degenerate {
                len: self.pushed,
                n_cyc: n,
            });
        }
        let mut out = self.flush_head()?;
        let k = self.k;
        let total = self.pushed as isize;
        // the ring holds inputs total - len .. total - 1
        let first = total - self.len as isize;
        let (back, fwd) = (self.config.back() as isize, self.config.forward() as isize);
        for e in total - fwd..total {
            self.q.iter_mut().for_each(|v| *v = 0.0);
            for j in e - back..=e + fwd {
                let src = j.clamp(0, total - 1);
                let slot = (self.start + (src - first) as usize) % n;
                for (q, v) in self.q.iter_mut().zip(&self.ring[slot * k..(slot + 1) * k]) {
                    *q += v;
                }
            }
            out.push(self.finish_backfill(e as usize)?);
        }
        Ok(out)
    }

    fn finish_backfill(&mut self, emit_index: usize) -> Result<Decision, StreamError> {
        let denom = self.config.n_cyc as f64;
        self.q.iter_mut().for_each(|v| *v /= denom);
        check_simplex(&self.q, emit_index, "smoothed vector")?;
        let (class_id, confidence) = decide(&self.q, self.config.tau);
        Ok(Decision {
            emit_index,
            class_id,
            confidence,
            backfilled: true,
        })
    }
}

/// Window mean over `[i - back, i + forward]` with indices clamped to
/// `[0, N - 1]`, summed in ascending index order.
pub fn edge_padded_offline_smooth(p: ArrayView2<f64>, n_cyc: usize) -> Array2<f64> {
    let (rows, k) = p.dim();
    let cfg = StreamConfig { n_cyc, tau: 0.0 };
    let (back, fwd) = (cfg.back() as isize, cfg.forward() as isize);
    let mut out = Array2::zeros((rows, k));
    let last = rows as isize - 1;
    let denom = n_cyc as f64;
    for (i, mut o) in out.outer_iter_mut().enumerate() {
        let i = i as isize;
        for j in i - back..=i + fwd {
            let src = j.clamp(0, last) as usize;
            o += &p.row(src);
        }
        o.mapv_inplace(|v| v / denom);
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub samples: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
}

impl LatencyStats {
    pub fn from_nanos(mut nanos: Vec<u64>) -> Self {
        if nanos.is_empty() {
            return Self::default();
        }
        nanos.sort_unstable();
        let n = nanos.len();
        let pct = |p: f64| nanos[((p * (n - 1) as f64).round() as usize).min(n - 1)] as f64 / 1e3;
        Self {
            samples: n,
            mean_us: nanos.iter().map(|&v| v as f64).sum::<f64>() / n as f64 / 1e3,
            p50_us: pct(0.5),
            p95_us: pct(0.95),
            p99_us: pct(0.99),
            max_us: nanos[n - 1] as f64 / 1e3,
        }
    }
}

/// All decisions of one stream, ordered by `emit_index`, with class ids
/// decoded to the original label space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub config: StreamConfig,
    pub sample_rate: f64,
    pub start_time: f64,
    pub decisions: Vec<Decision>,
    pub latency: LatencyStats,
}

/// Run metadata written next to a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub model: String,
    pub tau: f64,
    pub n_cyc: usize,
    pub n_half: usize,
    pub lag_seconds: f64,
    pub decisions: usize,
    pub emitted: usize,
    pub abstained: usize,
    pub backfilled: usize,
}

impl DecisionTrace {
    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn emitted(&self) -> usize {
        self.decisions.iter().filter(|d| !d.is_abstain()).count()
    }

    pub fn abstained(&self) -> usize {
        self.decisions.iter().filter(|d| d.is_abstain()).count()
    }

    pub fn time_of(&self, emit_index: usize) -> f64 {
        self.start_time + emit_index as f64 / self.sample_rate
    }

    /// Look-ahead delay of every non-backfilled decision.
    pub fn lag_seconds(&self) -> f64 {
        self.config.n_half() as f64 / self.sample_rate
    }

    pub fn metadata(&self, model: &str) -> TraceMetadata {
        TraceMetadata {
            model: model.to_string(),
            tau: self.config.tau,
            n_cyc: self.config.n_cyc,
            n_half: self.config.n_half(),
            lag_seconds: self.lag_seconds(),
            decisions: self.len(),
            emitted: self.emitted(),
            abstained: self.abstained(),
            backfilled: self.decisions.iter().filter(|d| d.backfilled).count(),
        }
    }

    /// CSV with header `emit_index,time_s,class_id,confidence`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), StreamError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["emit_index", "time_s", "class_id", "confidence"])?;
        for d in &self.decisions {
            w.write_record([
                d.emit_index.to_string(),
                format!("{:.9}", self.time_of(d.emit_index)),
                d.class_id.to_string(),
                format!("{:.12}", d.confidence),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores every sample of `raw`, feeds the engine and returns one decision
/// per input index. `class_ids[k]` maps encoded class `k` to its label.
/// Per-sample latency covers scaling, inference, smoothing and thresholding.
pub fn run_stream(
    model: &dyn ProbabilisticClassifier,
    scaler: Option<&Scaler>,
    raw: ArrayView2<f64>,
    config: StreamConfig,
    class_ids: &[u32],
    sample_rate: f64,
    start_time: f64,
) -> Result<DecisionTrace, StreamError> {
    config.validate()?;
    let n = raw.nrows();
    if n < config.n_cyc {
        return Err(StreamError::Degenerate {
            len: n,
            n_cyc: config.n_cyc,
        });
    }
    model.check_width(raw.ncols())?;
    if let Some(s) = scaler {
        if s.width() != raw.ncols() {
            return Err(StreamError::Width {
                expected: s.width(),
                found: raw.ncols(),
            });
        }
    }
    let k = model.n_classes();
    if class_ids.len() != k {
        return Err(StreamError::Config(format!(
            "{} class ids for {k} classes",
            class_ids.len()
        )));
    }
    let mut engine = StreamEngine::new(config, k)?;
    let mut row = vec![0.0; raw.ncols()];
    let mut scaled = vec![0.0; raw.ncols()];
    let mut p = vec![0.0; k];
    let mut nanos = Vec::with_capacity(n);
    let mut decisions = Vec::with_capacity(n);
    for sample in raw.outer_iter() {
        row.iter_mut().zip(sample).for_each(|(r, v)| *r = *v);
        let t0 = Instant::now();
        let input = match scaler {
            Some(s) => {
                s.transform_row(&row, &mut scaled);
                &scaled
            }
            None => &row,
        };
        model.predict_proba_row(input, &mut p);
        let d = engine.push(&p)?;
        nanos.push(t0.elapsed().as_nanos() as u64);
        decisions.extend(d);
    }
    let mut backfill = engine.finish()?;
    let split = backfill.partition_point(|d| d.emit_index < config.back());
    let tail = backfill.split_off(split);
    let mut all = backfill;
    all.extend(decisions);
    all.extend(tail);
    for d in &mut all {
        if d.class_id != ABSTAIN {
            d.class_id = class_ids[d.class_id as usize] as i32;
        }
    }
    debug_assert!(all.iter().enumerate().all(|(i, d)| d.emit_index == i));
    Ok(DecisionTrace {
        config,
        sample_rate,
        start_time,
        decisions: all,
        latency: LatencyStats::from_nanos(nanos),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(k: usize, c: usize) -> Vec<f64> {
        let mut v = vec![0.0; k];
        v[c] = 1.0;
        v
    }

    #[test]
    fn benchmark_geometry() {
        let c = StreamConfig::from_rates(4800.0, 60.0, 0.6).unwrap();
        assert_eq!(
            (c.n_cyc, c.n_half(), c.back(), c.forward()),
            (80, 40, 39, 40)
        );
        assert!(StreamConfig::from_rates(4810.0, 60.0, 0.6).is_err());
    }

    #[test]
    fn config_bounds() {
        assert!(StreamConfig::new(1, 0.6).is_err());
        assert!(StreamConfig::new(80, 1.01).is_err());
        assert!(StreamConfig::new(80, 0.0).is_ok());
        assert!(StreamConfig::new(80, 1.0).is_ok());
    }

    #[test]
    fn constant_one_hot_classifies() {
        let mut e = StreamEngine::new(StreamConfig::default(), 3).unwrap();
        let mut last = None;
        for _ in 0..100 {
            last = e.push(&one_hot(3, 0)).unwrap().or(last);
        }
        let d = last.unwrap();
        assert_eq!((d.class_id, d.confidence), (0, 1.0));
    }

    #[test]
    fn uniform_abstains() {
        let mut e = StreamEngine::new(StreamConfig::default(), 18).unwrap();
        let u = vec![1.0 / 18.0; 18];
        let out: Vec<_> = (0..80).filter_map(|_| e.push(&u).unwrap()).collect();
        assert_eq!(out.len(), 1);
        assert!(out[0].is_abstain());
    }

    #[test]
    fn step_needs_48_of_80() {
        let mut e = StreamEngine::new(StreamConfig::default(), 2).unwrap();
        let mut first_b = None;
        let mut mid = None;
        for i in 0usize..400 {
            let p = if i < 200 {
                one_hot(2, 0)
            } else {
                one_hot(2, 1)
            };
            if let Some(d) = e.push(&p).unwrap() {
                let b_in_window = (i + 1).saturating_sub(200).min(80);
                if b_in_window == 40 {
                    mid = Some(d);
                }
                if d.class_id == 1 && first_b.is_none() {
                    first_b = Some(b_in_window);
                }
            }
        }
        let mid = mid.unwrap();
        assert_eq!(mid.confidence, 0.5);
        assert!(mid.is_abstain());
        assert_eq!(first_b, Some(48));
    }

    #[test]
    fn rejects_non_simplex() {
        let mut e = StreamEngine::new(StreamConfig::default(), 2).unwrap();
        assert!(matches!(
            e.push(&[0.7, 0.7]),
            Err(StreamError::Contract { .. })
        ));
        assert!(matches!(
            e.push(&[1.2, -0.2]),
            Err(StreamError::Contract { .. })
        ));
        assert!(matches!(e.push(&[1.0]), Err(StreamError::Width { .. })));
    }

    #[test]
    fn single_row_smooth_is_identity() {
        let p = ndarray::array![[0.2, 0.8]];
        let q = edge_padded_offline_smooth(p.view(), 80);
        assert!(q.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn too_short_stream_is_degenerate() {
        let mut e = StreamEngine::new(StreamConfig::new(4, 0.5).unwrap(), 2).unwrap();
        for _ in 0..3 {
            e.push(&[0.5, 0.5]).unwrap();
        }
        assert!(matches!(e.finish(), Err(StreamError::Degenerate { .. })));
    }
}
