//! Metric-valued Shapley attributions.
//!
//! The contribution of feature `j` is the Shapley-weighted average of
//! `d(f_{S ∪ {j}}(x), f_S(x))` over coalitions `S`. Because the distance
//! replaces a signed difference, every attribution is non-negative and the
//! attributions do not sum to the prediction gap.
//!
//! `f_S(x)` is obtained without retraining: for each background row `b` the
//! model is evaluated at the hybrid that takes features in `S` from `x` and
//! the rest from `b`, and the predictions are aggregated by their Fréchet
//! mean.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boost::{row, Ensemble};
use crate::error::{GeoError, Result};
use crate::geodesic::{frechet_mean, GeodesicSpace};

/// Largest feature count accepted by exact enumeration.
pub const MAX_EXACT_FEATURES: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ShapMode {
    /// All `2^p` coalitions.
    Exact,
    /// Uniformly random feature orderings.
    Sampled { permutations: usize },
}

impl Default for ShapMode {
    fn default() -> Self {
        ShapMode::Sampled { permutations: 2048 }
    }
}

#[derive(Debug, Clone)]
pub struct ShapConfig {
    pub background: Array2<f64>,
    pub mode: ShapMode,
    pub seed: u64,
}

/// Up to `max_rows` rows of `x`, drawn uniformly without replacement and
/// kept in their original order.
pub fn default_background(x: ArrayView2<f64>, max_rows: usize, seed: u64) -> Array2<f64> {
    let n = x.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    if n > max_rows {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(max_rows);
        idx.sort_unstable();
    }
    Array2::from_shape_fn((idx.len(), x.ncols()), |(i, j)| x[[idx[i], j]])
}

/// `f_S(x)` for the coalition given as a membership mask.
pub fn restricted_predict<S: GeodesicSpace>(
    model: &Ensemble<S>,
    x: &[f64],
    subset: &[bool],
    background: ArrayView2<f64>,
) -> Result<S::Point> {
    if subset.len() != x.len() {
        return Err(GeoError::DimensionMismatch {
            expected: x.len(),
            found: subset.len(),
        });
    }
    Restricted::new(model, x, background)?.eval(|j| subset[j])
}

struct Restricted<'a, S: GeodesicSpace> {
    model: &'a Ensemble<S>,
    x: &'a [f64],
    background: Vec<Vec<f64>>,
}

impl<'a, S: GeodesicSpace> Restricted<'a, S> {
    fn new(model: &'a Ensemble<S>, x: &'a [f64], background: ArrayView2<f64>) -> Result<Self> {
        if x.len() != model.n_features() {
            return Err(GeoError::DimensionMismatch {
                expected: model.n_features(),
                found: x.len(),
            });
        }
        if background.nrows() == 0 {
            return Err(GeoError::Config("SHAP background is empty".into()));
        }
        if background.ncols() != x.len() {
            return Err(GeoError::DimensionMismatch {
                expected: x.len(),
                found: background.ncols(),
            });
        }
        Ok(Self {
            model,
            x,
            background: (0..background.nrows())
                .map(|i| row(background, i))
                .collect(),
        })
    }

    fn eval(&self, in_subset: impl Fn(usize) -> bool) -> Result<S::Point> {
        let preds = self
            .background
            .iter()
            .map(|b| {
                let hybrid: Vec<f64> = (0..self.x.len())
                    .map(|j| if in_subset(j) { self.x[j] } else { b[j] })
                    .collect();
                self.model.predict(&hybrid)
            })
            .collect::<Result<Vec<_>>>()?;
        frechet_mean(self.model.space(), &preds, None)
    }

    fn eval_mask(&self, mask: u64) -> Result<S::Point> {
        self.eval(|j| mask >> j & 1 == 1)
    }
}

/// Attributions `φ_1..φ_p` for one row.
pub fn shap_values<S: GeodesicSpace>(
    model: &Ensemble<S>,
    x: &[f64],
    config: &ShapConfig,
) -> Result<Vec<f64>> {
    let r = Restricted::new(model, x, config.background.view())?;
    let p = x.len();
    let space = model.space();
    match config.mode {
        ShapMode::Exact => {
            if p > MAX_EXACT_FEATURES {
                return Err(GeoError::Config(format!(
                    "exact SHAP enumerates 2^p coalitions and accepts at most {MAX_EXACT_FEATURES} features, got {p}"
                )));
            }
            let values = (0..1u64 << p)
                .into_par_iter()
                .map(|mask| r.eval_mask(mask))
                .collect::<Result<Vec<_>>>()?;
            let fact: Vec<f64> = (0..=p)
                .scan(1.0, |acc, k| {
                    if k > 0 {
                        *acc *= k as f64;
                    }
                    Some(*acc)
                })
                .collect();
            let mut phi = vec![0.0; p];
            for (j, out) in phi.iter_mut().enumerate() {
                let bit = 1u64 << j;
                for mask in (0..1u64 << p).filter(|m| m & bit == 0) {
                    let s = mask.count_ones() as usize;
                    let w = fact[s] * fact[p - s - 1] / fact[p];
                    let d = space.dist(&values[(mask | bit) as usize], &values[mask as usize])?;
                    *out += w * d;
                }
            }
            Ok(phi)
        }
        ShapMode::Sampled { permutations } => {
            if permutations == 0 {
                return Err(GeoError::Config(
                    "permutation count must be positive".into(),
                ));
            }
            if p > 64 {
                return Err(GeoError::Config(format!(
                    "sampled SHAP supports at most 64 features, got {p}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut cache: HashMap<u64, S::Point> = HashMap::new();
            let mut lookup = |mask: u64| -> Result<S::Point> {
                if let Some(v) = cache.get(&mask) {
                    return Ok(v.clone());
                }
                let v = r.eval_mask(mask)?;
                cache.insert(mask, v.clone());
                Ok(v)
            };
            let mut phi = vec![0.0; p];
            let mut order: Vec<usize> = (0..p).collect();
            for _ in 0..permutations {
                order.shuffle(&mut rng);
                let mut mask = 0u64;
                let mut prev = lookup(mask)?;
                for &j in &order {
                    mask |= 1 << j;
                    let next = lookup(mask)?;
                    phi[j] += space.dist(&next, &prev)?;
                    prev = next;
                }
            }
            for v in &mut phi {
                *v /= permutations as f64;
            }
            Ok(phi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: usize,
    pub mean_phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapResult {
    /// One row of attributions per explained sample.
    pub phi: Vec<Vec<f64>>,
    /// Features by decreasing mean attribution.
    pub ranking: Vec<FeatureImportance>,
}

pub fn shap_summary<S: GeodesicSpace>(
    model: &Ensemble<S>,
    x: ArrayView2<f64>,
    config: &ShapConfig,
) -> Result<ShapResult> {
    let phi = (0..x.nrows())
        .map(|i| shap_values(model, &row(x, i), config))
        .collect::<Result<Vec<_>>>()?;
    Ok(ShapResult {
        ranking: rank_features(&phi, x.ncols()),
        phi,
    })
}

/// Column means of `phi` sorted in decreasing order; ties keep feature order.
pub fn rank_features(phi: &[Vec<f64>], p: usize) -> Vec<FeatureImportance> {
    let n = phi.len().max(1) as f64;
    let mut ranking: Vec<FeatureImportance> = (0..p)
        .map(|j| FeatureImportance {
            feature: j,
            mean_phi: phi.iter().map(|r| r[j]).sum::<f64>() / n,
        })
        .collect();
    ranking.sort_by(|a, b| b.mean_phi.total_cmp(&a.mean_phi));
    ranking
}
