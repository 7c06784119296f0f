//! Exhaustive grid search scored by stratified k-fold accuracy.

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fit, spec_sample_weights, ClassifierError, Model, ModelSpec, ProbabilisticClassifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub spec: ModelSpec,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: ModelSpec,
    pub best_index: usize,
    pub table: Vec<CvRow>,
}

/// Fold id per sample. Every class is dealt round-robin over a seeded
/// shuffle, so each fold holds `floor` or `ceil` of `n_k / folds`.
pub fn stratified_folds(
    y: &[usize],
    n_classes: usize,
    folds: usize,
    seed: u64,
) -> Result<Vec<usize>, ClassifierError> {
    if folds < 2 {
        return Err(ClassifierError::hyper("folds must be >= 2"));
    }
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &l) in y.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; y.len()];
    for (class, idx) in by_class.iter_mut().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < folds {
            return Err(ClassifierError::Stratification(format!(
                "class index {class} has {} sample(s), fewer than {folds} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (pos, &i) in idx.iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    Ok(assignment)
}

/// Mean fold accuracy of one spec.
pub fn cross_validate(
    spec: &ModelSpec,
    x: ArrayView2<f64>,
    y: &[usize],
    n_classes: usize,
    fold_of: &[usize],
    folds: usize,
) -> Result<Vec<f64>, ClassifierError> {
    (0..folds)
        .map(|f| {
            let train: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] == f).collect();
            let xt = x.select(Axis(0), &train);
            let yt: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let w = spec_sample_weights(spec, &yt, n_classes)?;
            let model = fit(spec, xt.view(), &yt, n_classes, Some(&w))?;
            let pred = model.predict(x.select(Axis(0), &test).view())?;
            let correct = test.iter().zip(&pred).filter(|(&i, &p)| y[i] == p).count();
            Ok(correct as f64 / test.len() as f64)
        })
        .collect()
}

/// Scores every grid point, keeps the highest mean accuracy (first on ties)
/// and refits it on all of `x`.
pub fn grid_search(
    grid: &[ModelSpec],
    x: ArrayView2<f64>,
    y: &[usize],
    n_classes: usize,
    folds: usize,
    seed: u64,
) -> Result<(GridSearchResult, Model), ClassifierError> {
    if grid.is_empty() {
        return Err(ClassifierError::hyper("empty grid"));
    }
    let fold_of = stratified_folds(y, n_classes, folds, seed)?;
    let mut table = Vec::with_capacity(grid.len());
    for spec in grid {
        let fold_accuracies = cross_validate(spec, x, y, n_classes, &fold_of, folds)?;
        let mean_accuracy = fold_accuracies.iter().sum::<f64>() / folds as f64;
        log::info!("cv {}: mean accuracy {mean_accuracy:.4}", spec.name);
        table.push(CvRow {
            spec: spec.clone(),
            fold_accuracies,
            mean_accuracy,
        });
    }
    let mut best_index = 0;
    for (i, row) in table.iter().enumerate() {
        if row.mean_accuracy > table[best_index].mean_accuracy {
            best_index = i;
        }
    }
    let best = grid[best_index].clone();
    let w = spec_sample_weights(&best, y, n_classes)?;
    let model = fit(&best, x, y, n_classes, Some(&w))?;
    Ok((
        GridSearchResult {
            best,
            best_index,
            table,
        },
        model,
    ))
}
