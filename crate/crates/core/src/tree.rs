//! Regression trees over Euclidean predictors whose leaves hold geodesics.
//!
//! Splits are found by exhaustive search over every feature and every
//! midpoint between consecutive distinct feature values. Each child's
//! representative geodesic is the decoupled Fréchet mean of the residual
//! geodesics it receives.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::geodesic::{
    geo_scale, geodesic_frechet_mean_refs, mean_with_hint, GeodesicPair, GeodesicSpace,
};

/// Left and right child means of a candidate split.
type ChildMeans<P> = (GeodesicPair<P>, GeodesicPair<P>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitCriterion {
    /// `Σ d²(Y_i, T_{γ_j}(Ŷ_i))`: error of the updated predictions.
    #[default]
    UpdatedPredictionMse,
    /// `Σ d_G²(γ_{Ŷ_i, Y_i}, γ_j)`: fit of the residual geodesics themselves.
    ResidualDgMse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub split_criterion: SplitCriterion,
    /// Score candidate splits with the child geodesic shrunk by the learning rate.
    pub shrinkage_in_split: bool,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 3,
            min_samples_leaf: 10,
            split_criterion: SplitCriterion::default(),
            shrinkage_in_split: false,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(GeoError::Config("max_depth must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(GeoError::Config(
                "min_samples_leaf must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode<P> {
    /// Samples with `x[feature] <= threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf {
        geodesic: GeodesicPair<P>,
        count: usize,
    },
}

/// Nodes are stored in preorder with explicit child indices; the root is
/// node 0 and children always follow their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoTree<P> {
    nodes: Vec<TreeNode<P>>,
    n_features: usize,
}

impl<P> GeoTree<P> {
    /// Rebuilds a tree from a node array, checking that it forms a proper
    /// binary tree rooted at node 0.
    pub fn from_nodes(nodes: Vec<TreeNode<P>>, n_features: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(GeoError::InvalidArgument("tree has no nodes".into()));
        }
        let mut referenced = vec![false; nodes.len()];
        referenced[0] = true;
        for (i, node) in nodes.iter().enumerate() {
            if let TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } = node
            {
                if *feature >= n_features || !threshold.is_finite() {
                    return Err(GeoError::InvalidArgument(format!(
                        "node {i} splits on invalid feature {feature} or threshold {threshold}"
                    )));
                }
                for &c in [left, right] {
                    if c <= i || c >= nodes.len() || referenced[c] {
                        return Err(GeoError::InvalidArgument(format!(
                            "node {i} has invalid child {c}"
                        )));
                    }
                    referenced[c] = true;
                }
            }
        }
        if let Some(orphan) = referenced.iter().position(|r| !r) {
            return Err(GeoError::InvalidArgument(format!(
                "node {orphan} is unreachable"
            )));
        }
        Ok(Self { nodes, n_features })
    }

    pub fn nodes(&self) -> &[TreeNode<P>] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Index of the leaf node that `x` is routed to.
    pub fn leaf_index(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.n_features {
            return Err(GeoError::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        if x.iter().any(|v| v.is_nan()) {
            return Err(GeoError::InvalidArgument("NaN predictor value".into()));
        }
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { .. } => return Ok(i),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<&GeodesicPair<P>> {
        let i = self.leaf_index(x)?;
        match &self.nodes[i] {
            TreeNode::Leaf { geodesic, .. } => Ok(geodesic),
            TreeNode::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go<P>(nodes: &[TreeNode<P>], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Loss reduction relative to keeping the node as a single leaf.
    pub gain: f64,
}

/// Fits a tree to residual geodesics `γ_{Ŷ_i, Y_i}` (starts are the current
/// predictions, ends the observed responses). `learning_rate` only matters
/// when `params.shrinkage_in_split` is set.
pub fn fit_tree<S: GeodesicSpace>(
    space: &S,
    x: ArrayView2<f64>,
    residuals: &[GeodesicPair<S::Point>],
    params: &TreeParams,
    learning_rate: f64,
) -> Result<GeoTree<S::Point>> {
    params.validate()?;
    if residuals.is_empty() {
        return Err(GeoError::InvalidArgument(
            "cannot fit a tree to no samples".into(),
        ));
    }
    if x.nrows() != residuals.len() {
        return Err(GeoError::DimensionMismatch {
            expected: residuals.len(),
            found: x.nrows(),
        });
    }
    let mut builder = Builder {
        scorer: Scorer {
            space,
            x,
            residuals,
            params,
            learning_rate,
        },
        nodes: Vec::new(),
    };
    builder.grow((0..residuals.len()).collect(), 0)?;
    let nodes = builder
        .nodes
        .into_iter()
        .map(|n| n.expect("every slot filled"))
        .collect();
    Ok(GeoTree {
        nodes,
        n_features: x.ncols(),
    })
}

/// Best split of the samples in `indices`, or `None` when no admissible
/// candidate reduces the loss.
pub fn best_split<S: GeodesicSpace>(
    space: &S,
    x: ArrayView2<f64>,
    residuals: &[GeodesicPair<S::Point>],
    indices: &[usize],
    params: &TreeParams,
    learning_rate: f64,
) -> Result<Option<SplitCandidate>> {
    params.validate()?;
    Scorer {
        space,
        x,
        residuals,
        params,
        learning_rate,
    }
    .best_split(indices)
}

/// Training loss of a single leaf holding `indices` under `params.split_criterion`.
pub fn node_loss<S: GeodesicSpace>(
    space: &S,
    residuals: &[GeodesicPair<S::Point>],
    indices: &[usize],
    geodesic: &GeodesicPair<S::Point>,
    params: &TreeParams,
    learning_rate: f64,
) -> Result<f64> {
    criterion_loss(
        space,
        residuals,
        geodesic,
        indices.iter().copied(),
        params,
        learning_rate,
    )
}

fn criterion_loss<S: GeodesicSpace>(
    space: &S,
    residuals: &[GeodesicPair<S::Point>],
    geodesic: &GeodesicPair<S::Point>,
    members: impl Iterator<Item = usize>,
    params: &TreeParams,
    learning_rate: f64,
) -> Result<f64> {
    match params.split_criterion {
        SplitCriterion::UpdatedPredictionMse => {
            let plan = if params.shrinkage_in_split {
                let step = geo_scale(space, geodesic, learning_rate)?;
                space.plan(&step.start, &step.end)?
            } else {
                space.plan(&geodesic.start, &geodesic.end)?
            };
            let mut total = 0.0;
            for i in members {
                let r = &residuals[i];
                total += space.transport_dist_sq(&plan, &r.start, &r.end)?;
            }
            Ok(total)
        }
        SplitCriterion::ResidualDgMse => {
            let mut total = 0.0;
            for i in members {
                let r = &residuals[i];
                total += space.dist_sq(&r.start, &geodesic.start)?
                    + space.dist_sq(&r.end, &geodesic.end)?;
            }
            Ok(total)
        }
    }
}

struct Builder<'a, S: GeodesicSpace> {
    scorer: Scorer<'a, S>,
    nodes: Vec<Option<TreeNode<S::Point>>>,
}

impl<S: GeodesicSpace> Builder<'_, S> {
    fn grow(&mut self, indices: Vec<usize>, depth: usize) -> Result<usize> {
        let slot = self.nodes.len();
        self.nodes.push(None);
        let split = if depth < self.scorer.params.max_depth {
            self.scorer.best_split(&indices)?
        } else {
            None
        };
        let node = match split {
            Some(SplitCandidate {
                feature,
                threshold,
                gain,
            }) => {
                let (l, r): (Vec<usize>, Vec<usize>) = indices
                    .iter()
                    .partition(|&&i| self.scorer.x[[i, feature]] <= threshold);
                let left = self.grow(l, depth + 1)?;
                let right = self.grow(r, depth + 1)?;
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    gain,
                }
            }
            None => {
                let refs: Vec<_> = indices.iter().map(|&i| &self.scorer.residuals[i]).collect();
                TreeNode::Leaf {
                    geodesic: geodesic_frechet_mean_refs(self.scorer.space, &refs)?,
                    count: indices.len(),
                }
            }
        };
        self.nodes[slot] = Some(node);
        Ok(slot)
    }
}

struct Scorer<'a, S: GeodesicSpace> {
    space: &'a S,
    x: ArrayView2<'a, f64>,
    residuals: &'a [GeodesicPair<S::Point>],
    params: &'a TreeParams,
    learning_rate: f64,
}

/// Gains closer than this count as equal, so rounding in the loss sums cannot
/// change which of two equivalent splits is chosen. The earlier candidate in
/// feature then threshold order wins.
fn tie_tolerance(parent_loss: f64) -> f64 {
    1e-12 * parent_loss.max(1.0)
}

impl<S: GeodesicSpace> Scorer<'_, S> {
    fn best_split(&self, indices: &[usize]) -> Result<Option<SplitCandidate>> {
        let min_leaf = self.params.min_samples_leaf;
        if indices.len() < 2 * min_leaf {
            return Ok(None);
        }
        let parent = self.mean_geodesic(indices.iter().copied(), None)?;
        let parent_loss = self.loss(&parent, indices.iter().copied())?;
        let per_feature = (0..self.x.ncols())
            .into_par_iter()
            .map(|f| self.scan_feature(indices, f, parent_loss))
            .collect::<Result<Vec<_>>>()?;
        let mut best: Option<SplitCandidate> = None;
        for cand in per_feature.into_iter().flatten() {
            if best.is_none_or(|b| cand.gain > b.gain + tie_tolerance(parent_loss)) {
                best = Some(cand);
            }
        }
        Ok(best.filter(|b| b.gain > tie_tolerance(parent_loss)))
    }

    fn scan_feature(
        &self,
        indices: &[usize],
        feature: usize,
        parent_loss: f64,
    ) -> Result<Option<SplitCandidate>> {
        let n = indices.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut order = indices.to_vec();
        order.sort_by(|&a, &b| self.x[[a, feature]].total_cmp(&self.x[[b, feature]]));
        let vals: Vec<f64> = order.iter().map(|&i| self.x[[i, feature]]).collect();
        let cuts: Vec<usize> = (min_leaf..=n - min_leaf)
            .filter(|&k| vals[k - 1] < vals[k])
            .collect();
        if cuts.is_empty() {
            return Ok(None);
        }

        let sums = if self.space.has_linear_mean() {
            Some(PrefixSums::new(self.space, self.residuals, &order))
        } else {
            None
        };
        let mut hints: Option<ChildMeans<S::Point>> = None;
        let mut best: Option<SplitCandidate> = None;
        for &k in &cuts {
            let (left, right) = match &sums {
                Some(s) => (s.left(self.space, k), s.right(self.space, k)),
                None => {
                    let (hl, hr) = match &hints {
                        Some((l, r)) => (Some(l), Some(r)),
                        None => (None, None),
                    };
                    (
                        self.mean_geodesic(order[..k].iter().copied(), hl)?,
                        self.mean_geodesic(order[k..].iter().copied(), hr)?,
                    )
                }
            };
            let loss = self.loss(&left, order[..k].iter().copied())?
                + self.loss(&right, order[k..].iter().copied())?;
            let gain = parent_loss - loss;
            if best.is_none_or(|b| gain > b.gain + tie_tolerance(parent_loss)) {
                let mut threshold = 0.5 * (vals[k - 1] + vals[k]);
                if threshold >= vals[k] {
                    threshold = vals[k - 1];
                }
                best = Some(SplitCandidate {
                    feature,
                    threshold,
                    gain,
                });
            }
            if sums.is_none() {
                hints = Some((left, right));
            }
        }
        Ok(best)
    }

    fn mean_geodesic(
        &self,
        members: impl Iterator<Item = usize> + Clone,
        hint: Option<&GeodesicPair<S::Point>>,
    ) -> Result<GeodesicPair<S::Point>> {
        let starts: Vec<&S::Point> = members.clone().map(|i| &self.residuals[i].start).collect();
        let ends: Vec<&S::Point> = members.map(|i| &self.residuals[i].end).collect();
        let w = vec![1.0 / starts.len() as f64; starts.len()];
        Ok(GeodesicPair {
            start: mean_with_hint(self.space, &starts, &w, hint.map(|h| &h.start))?,
            end: mean_with_hint(self.space, &ends, &w, hint.map(|h| &h.end))?,
        })
    }

    fn loss(
        &self,
        geodesic: &GeodesicPair<S::Point>,
        members: impl Iterator<Item = usize>,
    ) -> Result<f64> {
        criterion_loss(
            self.space,
            self.residuals,
            geodesic,
            members,
            self.params,
            self.learning_rate,
        )
    }
}

/// Running coordinate sums of starts and ends along a sorted order, from the
/// left and independently from the right, for spaces whose Fréchet mean is
/// the coordinate average.
struct PrefixSums {
    dim: usize,
    n: usize,
    /// Row `k` holds the sums over the first `k` samples.
    left: [Vec<f64>; 2],
    /// Row `k` holds the sums over samples `k..n`.
    right: [Vec<f64>; 2],
}

impl PrefixSums {
    fn new<S: GeodesicSpace>(
        space: &S,
        residuals: &[GeodesicPair<S::Point>],
        order: &[usize],
    ) -> Self {
        let dim = space.point_len();
        let n = order.len();
        let accumulate = |pick: fn(&GeodesicPair<S::Point>) -> &S::Point, rev: bool| {
            let mut acc = vec![0.0; (n + 1) * dim];
            for step in 0..n {
                let (src_row, dst_row, sample) = if rev {
                    (n - step, n - step - 1, order[n - step - 1])
                } else {
                    (step, step + 1, order[step])
                };
                let c = space.coords(pick(&residuals[sample]));
                for d in 0..dim {
                    acc[dst_row * dim + d] = acc[src_row * dim + d] + c[d];
                }
            }
            acc
        };
        Self {
            dim,
            n,
            left: [
                accumulate(|g| &g.start, false),
                accumulate(|g| &g.end, false),
            ],
            right: [accumulate(|g| &g.start, true), accumulate(|g| &g.end, true)],
        }
    }

    fn average<S: GeodesicSpace>(space: &S, sums: &[f64], count: usize) -> S::Point {
        let c = count as f64;
        space.from_coords(sums.iter().map(|s| s / c).collect())
    }

    fn left<S: GeodesicSpace>(&self, space: &S, k: usize) -> GeodesicPair<S::Point> {
        let row = k * self.dim..(k + 1) * self.dim;
        GeodesicPair {
            start: Self::average(space, &self.left[0][row.clone()], k),
            end: Self::average(space, &self.left[1][row], k),
        }
    }

    fn right<S: GeodesicSpace>(&self, space: &S, k: usize) -> GeodesicPair<S::Point> {
        let row = k * self.dim..(k + 1) * self.dim;
        GeodesicPair {
            start: Self::average(space, &self.right[0][row.clone()], self.n - k),
            end: Self::average(space, &self.right[1][row], self.n - k),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{EuclideanSpace, EuclideanVector};
    use ndarray::Array2;

    fn scalar_residuals(start: f64, ys: &[f64]) -> Vec<GeodesicPair<EuclideanVector>> {
        ys.iter()
            .map(|&y| GeodesicPair::new(EuclideanVector(vec![start]), EuclideanVector(vec![y])))
            .collect()
    }

    #[test]
    fn four_samples_split_in_the_middle_gap() {
        let space = EuclideanSpace::new(1);
        let x = Array2::from_shape_vec((4, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let res = scalar_residuals(5.0, &[0.0, 0.0, 10.0, 10.0]);
        let params = TreeParams {
            min_samples_leaf: 1,
            ..TreeParams::default()
        };
        let split = best_split(&space, x.view(), &res, &[0, 1, 2, 3], &params, 0.05)
            .unwrap()
            .unwrap();
        assert_eq!(split.feature, 0);
        assert_eq!(split.threshold, 2.5);
        assert_eq!(split.gain, 100.0);
    }

    #[test]
    fn constant_responses_do_not_split() {
        let space = EuclideanSpace::new(1);
        let x = Array2::from_shape_fn((30, 2), |(i, j)| (i * (j + 1)) as f64);
        let res = scalar_residuals(1.0, &[0.1; 30]);
        let idx: Vec<usize> = (0..30).collect();
        let split = best_split(&space, x.view(), &res, &idx, &TreeParams::default(), 0.05).unwrap();
        assert!(split.is_none());
        let tree = fit_tree(&space, x.view(), &res, &TreeParams::default(), 0.05).unwrap();
        assert_eq!(tree.n_leaves(), 1);
    }

    #[test]
    fn small_nodes_become_a_single_mean_leaf() {
        let space = EuclideanSpace::new(1);
        let x = Array2::from_shape_fn((19, 1), |(i, _)| i as f64);
        let ys: Vec<f64> = (0..19).map(|i| (i % 2) as f64).collect();
        let res = scalar_residuals(0.0, &ys);
        let tree = fit_tree(&space, x.view(), &res, &TreeParams::default(), 0.05).unwrap();
        assert_eq!(tree.nodes().len(), 1);
        let expected = crate::geodesic::geodesic_frechet_mean(&space, &res).unwrap();
        assert_eq!(tree.predict(&[3.0]).unwrap(), &expected);
    }

    #[test]
    fn malformed_node_arrays_are_rejected() {
        let leaf = || TreeNode::Leaf {
            geodesic: GeodesicPair::identity(0.0),
            count: 1,
        };
        let split = |left, right| TreeNode::Split {
            feature: 0,
            threshold: 0.0,
            left,
            right,
            gain: 1.0,
        };
        assert!(GeoTree::from_nodes(vec![split(1, 2), leaf(), leaf()], 1).is_ok());
        assert!(GeoTree::from_nodes(vec![split(1, 1), leaf(), leaf()], 1).is_err());
        assert!(GeoTree::from_nodes(vec![split(0, 2), leaf(), leaf()], 1).is_err());
        assert!(GeoTree::from_nodes(vec![leaf(), leaf()], 1).is_err());
        assert!(GeoTree::from_nodes(vec![split(1, 2), leaf(), leaf()], 0).is_err());
    }
}
