//! The boosting loop, prediction and early stopping.
//!
//! Predictions are kept as points rather than as stacks of geodesics: given
//! the reference point `Y₀`, the accumulated geodesic after `k` rounds is
//! determined by its endpoint, so each round just moves every current
//! prediction along the shrunken leaf geodesic it is routed to.

use log::{debug, warn};
use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::geodesic::{frechet_mean_refs, geo_scale, GeodesicPair, GeodesicSpace};
use crate::tree::{fit_tree, GeoTree, TreeNode, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub learning_rate: f64,
    pub n_iterations: usize,
    pub tree: TreeParams,
    /// Share of the samples held out for early stopping.
    pub validation_fraction: f64,
    /// Rounds without validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    /// Seed of the validation split.
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            n_iterations: 100,
            tree: TreeParams::default(),
            validation_fraction: 0.1,
            early_stop_patience: 10,
            seed: 0,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(GeoError::Config(format!(
                "learning rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if self.n_iterations == 0 {
            return Err(GeoError::Config("n_iterations must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(GeoError::Config(format!(
                "validation fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        self.tree.validate()
    }
}

/// Empirical risks after each round; entry 0 is the constant `Y₀` model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RiskTrace {
    pub train: Vec<f64>,
    /// Empty when no validation set was held out.
    #[serde(default)]
    pub validation: Vec<f64>,
    /// Number of trees kept in the ensemble.
    pub best_iteration: usize,
    #[serde(default)]
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct Ensemble<S: GeodesicSpace> {
    space: S,
    y0: S::Point,
    learning_rate: f64,
    trees: Vec<GeoTree<S::Point>>,
    n_features: usize,
    trace: RiskTrace,
}

impl<S: GeodesicSpace> Ensemble<S> {
    /// Assembles an ensemble from stored parts, checking their consistency.
    pub fn from_parts(
        space: S,
        y0: S::Point,
        learning_rate: f64,
        trees: Vec<GeoTree<S::Point>>,
        n_features: usize,
        trace: RiskTrace,
    ) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(GeoError::InvalidArgument(format!(
                "learning rate {learning_rate} outside (0, 1]"
            )));
        }
        if let Some(t) = trees.iter().find(|t| t.n_features() != n_features) {
            return Err(GeoError::DimensionMismatch {
                expected: n_features,
                found: t.n_features(),
            });
        }
        Ok(Self {
            space,
            y0,
            learning_rate,
            trees,
            n_features,
            trace,
        })
    }

    /// Ensemble that always predicts `y0`.
    pub fn constant(space: S, y0: S::Point, n_features: usize) -> Self {
        Self {
            space,
            y0,
            learning_rate: BoostParams::default().learning_rate,
            trees: Vec::new(),
            n_features,
            trace: RiskTrace::default(),
        }
    }

    pub fn space(&self) -> &S {
        &self.space
    }

    pub fn y0(&self) -> &S::Point {
        &self.y0
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn trees(&self) -> &[GeoTree<S::Point>] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trace(&self) -> &RiskTrace {
        &self.trace
    }

    /// Prediction before the final projection, after the first `n_trees` trees.
    pub fn predict_raw(&self, x: &[f64], n_trees: usize) -> Result<S::Point> {
        self.check_row(x)?;
        let mut p = self.y0.clone();
        for tree in self.trees.iter().take(n_trees) {
            let plan = step_plan(&self.space, tree.predict(x)?, self.learning_rate)?;
            p = self.space.apply(&plan, &p)?;
        }
        Ok(p)
    }

    pub fn predict(&self, x: &[f64]) -> Result<S::Point> {
        let p = self.predict_raw(x, self.trees.len())?;
        Ok(self.space.finalize(p))
    }

    pub fn predict_many(&self, x: ArrayView2<f64>) -> Result<Vec<S::Point>> {
        (0..x.nrows())
            .into_par_iter()
            .map(|i| self.predict(&row(x, i)))
            .collect()
    }

    /// `(1/n) Σ d²(Y_i, predict(X_i))`.
    pub fn empirical_risk(&self, x: ArrayView2<f64>, y: &[S::Point]) -> Result<f64> {
        if x.nrows() != y.len() {
            return Err(GeoError::DimensionMismatch {
                expected: y.len(),
                found: x.nrows(),
            });
        }
        let preds = self.predict_many(x)?;
        mean_sq_dist(&self.space, &preds, y)
    }

    /// Risk after each number of trees `0..=len`, sharing the prediction path.
    pub fn staged_risk(&self, x: ArrayView2<f64>, y: &[S::Point]) -> Result<Vec<f64>> {
        if x.nrows() != y.len() {
            return Err(GeoError::DimensionMismatch {
                expected: y.len(),
                found: x.nrows(),
            });
        }
        let rows: Vec<Vec<f64>> = (0..x.nrows()).map(|i| row(x, i)).collect();
        for r in &rows {
            self.check_row(r)?;
        }
        let mut preds = vec![self.y0.clone(); rows.len()];
        let mut risks = vec![finalized_risk(&self.space, &preds, y)?];
        for tree in &self.trees {
            let plans = leaf_plans(&self.space, tree, self.learning_rate)?;
            preds = advance(&self.space, tree, &plans, &rows, preds)?;
            risks.push(finalized_risk(&self.space, &preds, y)?);
        }
        Ok(risks)
    }

    fn check_row(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(GeoError::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// Fits an ensemble to predictors `x` (one row per sample) and responses `y`.
pub fn fit<S: GeodesicSpace>(
    space: &S,
    x: ArrayView2<f64>,
    y: &[S::Point],
    params: &BoostParams,
) -> Result<Ensemble<S>> {
    params.validate()?;
    let n = y.len();
    if n == 0 {
        return Err(GeoError::InvalidArgument(
            "cannot fit to an empty dataset".into(),
        ));
    }
    if x.nrows() != n {
        return Err(GeoError::DimensionMismatch {
            expected: n,
            found: x.nrows(),
        });
    }
    for (i, p) in y.iter().enumerate() {
        space.validate(p).map_err(|e| e.at_row(i))?;
    }
    if let Some(((i, j), v)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(GeoError::InvalidArgument(format!(
            "non-finite predictor {v} at row {i}, column {j}"
        )));
    }

    let (train, valid) = split_indices(n, params.validation_fraction, params.seed);
    let rows_of = |idx: &[usize]| -> Vec<Vec<f64>> { idx.iter().map(|&i| row(x, i)).collect() };
    let x_train = rows_of(&train);
    let x_valid = rows_of(&valid);
    let y_train: Vec<&S::Point> = train.iter().map(|&i| &y[i]).collect();
    let y_valid: Vec<S::Point> = valid.iter().map(|&i| y[i].clone()).collect();
    let y_train_owned: Vec<S::Point> = y_train.iter().map(|p| (*p).clone()).collect();

    let y0 = frechet_mean_refs(space, &y_train, None)?;
    let mut ensemble = Ensemble::constant(space.clone(), y0.clone(), x.ncols());
    ensemble.learning_rate = params.learning_rate;

    let mut preds = vec![y0.clone(); train.len()];
    let mut preds_valid = vec![y0; valid.len()];
    let mut trace = RiskTrace {
        train: vec![finalized_risk(space, &preds, &y_train_owned)?],
        validation: Vec::new(),
        best_iteration: 0,
        stopped_early: false,
    };
    if !valid.is_empty() {
        trace
            .validation
            .push(finalized_risk(space, &preds_valid, &y_valid)?);
    }

    let min_leaf = params.tree.min_samples_leaf;
    if train.len() < 2 * min_leaf {
        warn!(
            "{} training samples cannot fill two leaves of {min_leaf}; fitting a constant model",
            train.len()
        );
        ensemble.trace = trace;
        return Ok(ensemble);
    }

    let x_train_mat =
        ndarray::Array2::from_shape_fn((train.len(), x.ncols()), |(i, j)| x_train[i][j]);
    let mut best_valid = trace.validation.first().copied();
    let mut best_iteration = 0;
    let patience = params.early_stop_patience;
    for k in 1..=params.n_iterations {
        let round = |e: GeoError| GeoError::Round {
            iteration: k,
            source: Box::new(e),
        };
        let residuals: Vec<GeodesicPair<S::Point>> = preds
            .iter()
            .zip(&y_train)
            .map(|(p, y)| GeodesicPair::new(p.clone(), (*y).clone()))
            .collect();
        let tree = fit_tree(
            space,
            x_train_mat.view(),
            &residuals,
            &params.tree,
            params.learning_rate,
        )
        .map_err(round)?;
        let plans = leaf_plans(space, &tree, params.learning_rate).map_err(round)?;
        preds = advance(space, &tree, &plans, &x_train, preds).map_err(round)?;
        trace
            .train
            .push(finalized_risk(space, &preds, &y_train_owned)?);
        ensemble.trees.push(tree);

        if let Some(best) = best_valid {
            preds_valid = advance(
                space,
                ensemble.trees.last().expect("just pushed"),
                &plans,
                &x_valid,
                preds_valid,
            )
            .map_err(round)?;
            let risk = finalized_risk(space, &preds_valid, &y_valid)?;
            trace.validation.push(risk);
            if risk < best - 1e-12 {
                best_valid = Some(risk);
                best_iteration = k;
            } else if patience > 0 && k - best_iteration >= patience {
                debug!("early stop at round {k}; best round {best_iteration}");
                trace.stopped_early = true;
                break;
            }
        }
        debug!(
            "round {k}: train risk {:.6e}",
            trace.train.last().expect("recorded")
        );
    }
    if best_valid.is_some() && patience > 0 {
        ensemble.trees.truncate(best_iteration);
    }
    trace.best_iteration = ensemble.trees.len();
    ensemble.trace = trace;
    Ok(ensemble)
}

/// `(1/n) Σ d²(a_i, b_i)`.
pub fn mean_sq_dist<S: GeodesicSpace>(space: &S, a: &[S::Point], b: &[S::Point]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(GeoError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(GeoError::InvalidArgument("risk of an empty sample".into()));
    }
    let mut total = 0.0;
    for (p, q) in a.iter().zip(b) {
        total += space.dist_sq(p, q)?;
    }
    Ok(total / a.len() as f64)
}

fn finalized_risk<S: GeodesicSpace>(space: &S, preds: &[S::Point], y: &[S::Point]) -> Result<f64> {
    let finalized: Vec<S::Point> = preds.iter().map(|p| space.finalize(p.clone())).collect();
    mean_sq_dist(space, &finalized, y)
}

fn step_plan<S: GeodesicSpace>(
    space: &S,
    leaf: &GeodesicPair<S::Point>,
    learning_rate: f64,
) -> Result<S::Plan> {
    let step = geo_scale(space, leaf, learning_rate)?;
    space.plan(&step.start, &step.end)
}

/// Transport plans for each leaf, indexed by node.
fn leaf_plans<S: GeodesicSpace>(
    space: &S,
    tree: &GeoTree<S::Point>,
    learning_rate: f64,
) -> Result<Vec<Option<S::Plan>>> {
    tree.nodes()
        .iter()
        .map(|node| match node {
            TreeNode::Leaf { geodesic, .. } => step_plan(space, geodesic, learning_rate).map(Some),
            TreeNode::Split { .. } => Ok(None),
        })
        .collect()
}

fn advance<S: GeodesicSpace>(
    space: &S,
    tree: &GeoTree<S::Point>,
    plans: &[Option<S::Plan>],
    rows: &[Vec<f64>],
    preds: Vec<S::Point>,
) -> Result<Vec<S::Point>> {
    rows.par_iter()
        .zip(preds.into_par_iter())
        .map(|(x, p)| {
            let leaf = tree.leaf_index(x)?;
            let plan = plans[leaf].as_ref().expect("leaf has a plan");
            space.apply(plan, &p)
        })
        .collect()
}

fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_valid = (fraction * n as f64).round() as usize;
    if n_valid == 0 || n_valid >= n {
        return ((0..n).collect(), Vec::new());
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut valid = idx[..n_valid].to_vec();
    let mut train = idx[n_valid..].to_vec();
    valid.sort_unstable();
    train.sort_unstable();
    (train, valid)
}

pub(crate) fn row(x: ArrayView2<f64>, i: usize) -> Vec<f64> {
    x.row(i).to_vec()
}
