//! Cross-validated hyperparameter grid search.
//!
//! Each fold and (learning rate, depth) pair is fitted once with the largest
//! iteration count and no early stopping; the staged risks of that fit give
//! the held-out risk of every smaller iteration count.

use anyhow::{ensure, Result};
use fgboost::{fit, BoostParams, GeodesicSpace};
use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub learning_rates: Vec<f64>,
    pub iterations: Vec<usize>,
    pub depths: Vec<usize>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            learning_rates: vec![0.01, 0.03, 0.05, 0.1],
            iterations: vec![50, 70, 90, 100],
            depths: vec![2, 3, 4, 5],
            folds: 5,
            seed: 0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            !self.learning_rates.is_empty()
                && !self.iterations.is_empty()
                && !self.depths.is_empty(),
            "grid axes must be non-empty"
        );
        ensure!(
            self.learning_rates.iter().all(|&v| v > 0.0 && v <= 1.0),
            "grid learning rates must lie in (0, 1]"
        );
        ensure!(
            self.iterations.iter().all(|&v| v > 0) && self.depths.iter().all(|&v| v > 0),
            "grid iteration counts and depths must be positive"
        );
        ensure!(self.folds >= 2, "cross-validation needs at least 2 folds");
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldRisk {
    pub learning_rate: f64,
    pub iterations: usize,
    pub depth: usize,
    pub fold: usize,
    pub risk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub learning_rate: f64,
    pub iterations: usize,
    pub depth: usize,
    pub mean_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub folds: Vec<FoldRisk>,
    pub points: Vec<GridPoint>,
    pub selected: GridPoint,
}

/// Fold label of every sample.
pub fn fold_labels(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = rank % folds;
    }
    labels
}

/// Mean risk per grid point, in (learning rate, iterations, depth) order of
/// first appearance in `folds`.
pub fn average(folds: &[FoldRisk]) -> Vec<GridPoint> {
    let mut points: Vec<(GridPoint, usize)> = Vec::new();
    for f in folds {
        let slot = points.iter_mut().find(|(p, _)| {
            p.learning_rate == f.learning_rate && p.iterations == f.iterations && p.depth == f.depth
        });
        match slot {
            Some((p, count)) => {
                p.mean_risk += f.risk;
                *count += 1;
            }
            None => points.push((
                GridPoint {
                    learning_rate: f.learning_rate,
                    iterations: f.iterations,
                    depth: f.depth,
                    mean_risk: f.risk,
                },
                1,
            )),
        }
    }
    points
        .into_iter()
        .map(|(mut p, count)| {
            p.mean_risk /= count as f64;
            p
        })
        .collect()
}

/// Lowest mean risk; ties go to fewer iterations, then shallower trees,
/// then the smaller learning rate.
pub fn select(points: &[GridPoint]) -> Option<GridPoint> {
    points.iter().copied().min_by(|a, b| {
        a.mean_risk
            .total_cmp(&b.mean_risk)
            .then(a.iterations.cmp(&b.iterations))
            .then(a.depth.cmp(&b.depth))
            .then(a.learning_rate.total_cmp(&b.learning_rate))
    })
}

fn subset(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((idx.len(), x.ncols()), |(i, j)| x[[idx[i], j]])
}

pub fn grid_search<S: GeodesicSpace>(
    space: &S,
    x: ArrayView2<f64>,
    y: &[S::Point],
    base: &BoostParams,
    grid: &GridConfig,
) -> Result<GridResult> {
    grid.validate()?;
    let n = y.len();
    ensure!(
        n >= grid.folds,
        "{n} samples cannot fill {} folds",
        grid.folds
    );
    let labels = fold_labels(n, grid.folds, grid.seed);
    let max_iter = *grid.iterations.iter().max().expect("validated");
    let jobs: Vec<(usize, f64, usize)> = (0..grid.folds)
        .flat_map(|f| {
            grid.learning_rates
                .iter()
                .flat_map(move |&lr| grid.depths.iter().map(move |&d| (f, lr, d)))
        })
        .collect();
    let per_job = jobs
        .par_iter()
        .map(|&(fold, lr, depth)| -> Result<Vec<FoldRisk>> {
            let train: Vec<usize> = (0..n).filter(|&i| labels[i] != fold).collect();
            let held: Vec<usize> = (0..n).filter(|&i| labels[i] == fold).collect();
            let mut params = *base;
            params.learning_rate = lr;
            params.n_iterations = max_iter;
            params.tree.max_depth = depth;
            params.validation_fraction = 0.0;
            params.early_stop_patience = 0;
            let y_train: Vec<S::Point> = train.iter().map(|&i| y[i].clone()).collect();
            let y_held: Vec<S::Point> = held.iter().map(|&i| y[i].clone()).collect();
            let model = fit(space, subset(x, &train).view(), &y_train, &params)?;
            let staged = model.staged_risk(subset(x, &held).view(), &y_held)?;
            Ok(grid
                .iterations
                .iter()
                .map(|&it| FoldRisk {
                    learning_rate: lr,
                    iterations: it,
                    depth,
                    fold,
                    risk: staged[it.min(staged.len() - 1)],
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut folds: Vec<FoldRisk> = per_job.into_iter().flatten().collect();
    folds.sort_by(|a, b| {
        a.learning_rate
            .total_cmp(&b.learning_rate)
            .then(a.iterations.cmp(&b.iterations))
            .then(a.depth.cmp(&b.depth))
            .then(a.fold.cmp(&b.fold))
    });
    let points = average(&folds);
    let selected = select(&points).expect("grid is non-empty");
    Ok(GridResult {
        folds,
        points,
        selected,
    })
}
