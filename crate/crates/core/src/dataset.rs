//! Turning labeled records into model-ready matrices: missing-row removal,
//! label encoding, stratified train/test split and per-feature standardization.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comtrade::WaveformRecord;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{labels} labels for {rows} samples")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("no rows left after removing missing values")]
    Empty,
    #[error("class {class_id} has {count} sample(s); stratification needs at least {needed}")]
    Stratification {
        class_id: u32,
        count: usize,
        needed: usize,
    },
    #[error("test fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("label {0} is unknown to the encoder")]
    UnknownLabel(u32),
    #[error("feature width {found}, expected {expected}")]
    Width { expected: usize, found: usize },
    #[error("csv export: {0}")]
    Csv(#[from] csv::Error),
}

/// Bijection between original class ids and contiguous indices `0..K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEncoder {
    classes: Vec<u32>,
}

impl LabelEncoder {
    pub fn fit(labels: &[u32]) -> Self {
        let mut classes = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        Self { classes }
    }

    pub fn from_classes(mut classes: Vec<u32>) -> Self {
        classes.sort_unstable();
        classes.dedup();
        Self { classes }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn encode(&self, class_id: u32) -> Option<usize> {
        self.classes.binary_search(&class_id).ok()
    }

    pub fn decode(&self, index: usize) -> Option<u32> {
        self.classes.get(index).copied()
    }

    pub fn encode_all(&self, labels: &[u32]) -> Result<Vec<usize>, DatasetError> {
        labels
            .iter()
            .map(|&l| self.encode(l).ok_or(DatasetError::UnknownLabel(l)))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    /// Encoded labels in `0..encoder.len()`.
    pub labels: Vec<usize>,
    pub encoder: LabelEncoder,
    pub feature_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        encoder: LabelEncoder,
        feature_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        if features.nrows() != labels.len() {
            return Err(DatasetError::LengthMismatch {
                rows: features.nrows(),
                labels: labels.len(),
            });
        }
        if features.ncols() != feature_names.len() {
            return Err(DatasetError::Width {
                expected: feature_names.len(),
                found: features.ncols(),
            });
        }
        Ok(Self {
            features,
            labels,
            encoder,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.encoder.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            encoder: self.encoder.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Writes `feature names..., label` rows; labels are original class ids.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.feature_names.clone();
        header.push("label".into());
        w.write_record(&header)?;
        for (row, &label) in self.features.outer_iter().zip(&self.labels) {
            let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            fields.push(self.encoder.decode(label).unwrap_or_default().to_string());
            w.write_record(&fields)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn finite_rows(data: ArrayView2<f64>) -> Vec<usize> {
    data.outer_iter()
        .enumerate()
        .filter(|(_, row)| row.iter().all(|v| v.is_finite()))
        .map(|(i, _)| i)
        .collect()
}

/// Drops rows with any non-finite value and label-encodes the rest.
///
/// Only channel samples become features; sample times are never included.
pub fn clean(record: &WaveformRecord, labels: &[u32]) -> Result<LabeledDataset, DatasetError> {
    let keep = kept_rows(record, labels)?;
    let kept_labels: Vec<u32> = keep.iter().map(|&i| labels[i]).collect();
    let encoder = LabelEncoder::fit(&kept_labels);
    build(record, &keep, &kept_labels, encoder)
}

/// Like [`clean`] but encodes with an existing encoder (e.g. the training one).
pub fn clean_with_encoder(
    record: &WaveformRecord,
    labels: &[u32],
    encoder: &LabelEncoder,
) -> Result<LabeledDataset, DatasetError> {
    let keep = kept_rows(record, labels)?;
    let kept_labels: Vec<u32> = keep.iter().map(|&i| labels[i]).collect();
    build(record, &keep, &kept_labels, encoder.clone())
}

fn kept_rows(record: &WaveformRecord, labels: &[u32]) -> Result<Vec<usize>, DatasetError> {
    if labels.len() != record.data.nrows() {
        return Err(DatasetError::LengthMismatch {
            rows: record.data.nrows(),
            labels: labels.len(),
        });
    }
    let keep = finite_rows(record.data.view());
    let dropped = record.data.nrows() - keep.len();
    if dropped > 0 {
        log::warn!("removed {dropped} row(s) with missing values");
    }
    if keep.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(keep)
}

fn build(
    record: &WaveformRecord,
    keep: &[usize],
    kept_labels: &[u32],
    encoder: LabelEncoder,
) -> Result<LabeledDataset, DatasetError> {
    let features = if keep.len() == record.data.nrows() {
        record.data.clone()
    } else {
        record.data.select(Axis(0), keep)
    };
    let labels = encoder.encode_all(kept_labels)?;
    LabeledDataset::new(features, labels, encoder, record.channel_names())
}

#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Per-class test counts by largest-remainder rounding of
/// `fraction * count`, totalling `round(fraction * N)`. Remainder ties go to
/// the lower class index.
pub fn stratified_test_counts(counts: &[usize], fraction: f64) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    let target = (fraction * n as f64).round() as usize;
    let mut alloc: Vec<usize> = counts
        .iter()
        .map(|&c| (fraction * c as f64).floor() as usize)
        .collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..counts.len())
        .filter(|&k| alloc[k] < counts[k])
        .collect();
    order.sort_by(|&a, &b| {
        let ra = fraction * counts[a] as f64 - alloc[a] as f64;
        let rb = fraction * counts[b] as f64 - alloc[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(target.saturating_sub(assigned)) {
        alloc[k] += 1;
    }
    alloc
}

/// Stratified train/test partition. Deterministic given `seed`; both index
/// lists are returned in ascending (temporal) order.
pub fn stratified_split(
    ds: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitDataset, DatasetError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::BadFraction(test_fraction));
    }
    let counts = ds.class_counts();
    for (k, &c) in counts.iter().enumerate() {
        if c > 0 && c < 2 {
            return Err(DatasetError::Stratification {
                class_id: ds.encoder.decode(k).unwrap_or(k as u32),
                count: c,
                needed: 2,
            });
        }
    }
    let test_counts = stratified_test_counts(&counts, test_fraction);
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_idx = Vec::new();
    let mut train_idx = Vec::new();
    for (class, mut idx) in by_class {
        idx.shuffle(&mut rng);
        let t = test_counts[class];
        test_idx.extend_from_slice(&idx[..t]);
        train_idx.extend_from_slice(&idx[t..]);
    }
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok(SplitDataset {
        train: ds.subset(&train_idx),
        test: ds.subset(&test_idx),
        train_indices: train_idx,
        test_indices: test_idx,
        seed,
    })
}

/// Per-feature standardization fitted on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Population standard deviation; zero-variance columns are stored as 1.
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(features: ArrayView2<f64>) -> Self {
        let n = features.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(features.ncols());
        let mut std = Vec::with_capacity(features.ncols());
        for (j, col) in features.axis_iter(Axis(1)).enumerate() {
            let mu = col.sum() / n;
            let var = col.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
            let sigma = var.sqrt();
            if sigma > 0.0 && sigma.is_finite() {
                std.push(sigma);
            } else {
                log::warn!("feature {j} has zero variance; scaling it by 1");
                std.push(1.0);
            }
            mean.push(mu);
        }
        Self { mean, std }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, features: ArrayView2<f64>) -> Result<Array2<f64>, DatasetError> {
        self.check(features.ncols())?;
        let mut out = features.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|x| (x - m) / s);
        }
        Ok(out)
    }

    pub fn transform_row(&self, row: &[f64], out: &mut [f64]) {
        for (j, (x, o)) in row.iter().zip(out.iter_mut()).enumerate() {
            *o = (x - self.mean[j]) / self.std[j];
        }
    }

    pub fn inverse_transform(&self, scaled: ArrayView2<f64>) -> Result<Array2<f64>, DatasetError> {
        self.check(scaled.ncols())?;
        let mut out = scaled.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|z| z * s + m);
        }
        Ok(out)
    }

    fn check(&self, width: usize) -> Result<(), DatasetError> {
        if width != self.width() {
            return Err(DatasetError::Width {
                expected: self.width(),
                found: width,
            });
        }
        Ok(())
    }
}

/// Inverse-frequency ("balanced") class weights: `N / (K * n_k)`.
/// Classes absent from `labels` get weight 0.
pub fn balanced_class_weights(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count().max(1) as f64;
    let n = labels.len() as f64;
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                n / (present * c as f64)
            }
        })
        .collect()
}

/// Per-sample weights from per-class weights.
pub fn sample_weights(labels: &[usize], class_weights: &[f64]) -> Array1<f64> {
    labels.iter().map(|&l| class_weights[l]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comtrade::{ChannelSpec, SamplingSpec};
    use ndarray::array;

    fn record(data: Array2<f64>) -> WaveformRecord {
        let channels = (0..data.ncols())
            .map(|i| ChannelSpec::new(i + 1, format!("C{i}"), "A", "V"))
            .collect();
        WaveformRecord {
            station: String::new(),
            device: String::new(),
            revision: 1999,
            channels,
            sampling: SamplingSpec {
                line_frequency: 60.0,
                sample_rate: 4800.0,
                total_samples: data.nrows(),
                start_timestamp: 0.0,
            },
            data,
        }
    }

    fn toy(labels: Vec<u32>) -> LabeledDataset {
        let n = labels.len();
        let data = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        clean(&record(data), &labels).unwrap()
    }

    #[test]
    fn clean_keeps_complete_rows() {
        let ds = toy(vec![0, 1, 1, 0]);
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.features.ncols(), 2);
    }

    #[test]
    fn clean_drops_nan_rows_with_labels() {
        let mut data = Array2::from_shape_fn((5, 4), |(i, j)| (i + j) as f64);
        data[[2, 3]] = f64::NAN;
        let ds = clean(&record(data), &[0, 1, 5, 1, 0]).unwrap();
        assert_eq!(ds.len(), 4);
        // class 5 vanished together with its row
        assert_eq!(ds.encoder.classes(), &[0, 1]);
        assert_eq!(ds.features[[2, 0]], 3.0);
    }

    #[test]
    fn clean_all_missing_is_error() {
        let data = Array2::from_elem((2, 2), f64::NAN);
        assert!(matches!(
            clean(&record(data), &[0, 1]),
            Err(DatasetError::Empty)
        ));
        let data = Array2::zeros((2, 2));
        assert!(matches!(
            clean(&record(data), &[0]),
            Err(DatasetError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn encoder_round_trip() {
        let enc = LabelEncoder::fit(&[17, 0, 4, 4, 9]);
        assert_eq!(enc.classes(), &[0, 4, 9, 17]);
        for &c in enc.classes() {
            assert_eq!(enc.decode(enc.encode(c).unwrap()), Some(c));
        }
        assert_eq!(enc.encode(5), None);
    }

    #[test]
    fn balanced_split_exact() {
        let labels: Vec<u32> = (0..100).map(|i| (i % 2) as u32).collect();
        let split = stratified_split(&toy(labels), 0.2, 3).unwrap();
        assert_eq!(split.test.class_counts(), vec![10, 10]);
        assert_eq!(split.train.class_counts(), vec![40, 40]);
    }

    #[test]
    fn split_is_deterministic_partition() {
        let labels: Vec<u32> = (0..97).map(|i| (i % 3) as u32).collect();
        let ds = toy(labels);
        let a = stratified_split(&ds, 0.2, 42).unwrap();
        let b = stratified_split(&ds, 0.2, 42).unwrap();
        assert_eq!(a.test_indices, b.test_indices);
        let mut all: Vec<usize> = a
            .train_indices
            .iter()
            .chain(&a.test_indices)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..97).collect::<Vec<_>>());
        let c = stratified_split(&ds, 0.2, 43).unwrap();
        assert_ne!(a.test_indices, c.test_indices);
    }

    #[test]
    fn singleton_class_rejected() {
        let ds = toy(vec![0, 0, 0, 1]);
        assert!(matches!(
            stratified_split(&ds, 0.2, 0),
            Err(DatasetError::Stratification { class_id: 1, .. })
        ));
    }

    #[test]
    fn largest_remainder_ties_by_class() {
        // 0.2 * 5 = 1 exactly, 0.2 * 3 = 0.6, 0.2 * 3 = 0.6 -> total round(2.2) = 2
        assert_eq!(stratified_test_counts(&[5, 3, 3], 0.2), vec![1, 1, 0]);
        assert_eq!(stratified_test_counts(&[50, 50], 0.2), vec![10, 10]);
    }

    #[test]
    fn scaler_symmetric_pair() {
        let x = array![[1.0], [3.0]];
        let s = Scaler::fit(x.view());
        assert_eq!(s.mean, vec![2.0]);
        assert_eq!(s.std, vec![1.0]);
        assert_eq!(s.transform(x.view()).unwrap(), array![[-1.0], [1.0]]);
        assert_eq!(s.transform(array![[2.0]].view()).unwrap(), array![[0.0]]);
    }

    #[test]
    fn scaler_constant_column_clamped() {
        let x = array![[5.0, 1.0], [5.0, 2.0]];
        let s = Scaler::fit(x.view());
        assert_eq!(s.std[0], 1.0);
        let t = s.transform(x.view()).unwrap();
        assert!(t.column(0).iter().all(|&v| v == 0.0));
        assert!(s.transform(array![[1.0]].view()).is_err());
    }

    #[test]
    fn balanced_weights() {
        let w = balanced_class_weights(&[0, 0, 0, 1], 3);
        assert_eq!(w, vec![4.0 / 6.0, 2.0, 0.0]);
    }

    #[test]
    fn csv_export_header() {
        let ds = toy(vec![3, 7]);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "C0,C1,label");
        assert_eq!(text.lines().nth(2).unwrap(), "2,3,7");
    }
}
