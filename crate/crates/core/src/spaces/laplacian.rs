//! Graph Laplacians of weighted undirected networks under the Frobenius metric.

use serde::{Deserialize, Serialize};

use super::{sq_diff_sum, weighted_average, SpaceConfig, SpaceId};
use crate::error::{check_dim, GeoError, Result};
use crate::geodesic::GeodesicSpace;

/// Row-major `l × l` Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian(pub Vec<f64>);

impl GraphLaplacian {
    /// Builds the Laplacian of a network from its edge weights, given in
    /// row-major upper-triangular order `(0,1), (0,2), …, (l-2,l-1)`.
    pub fn from_edge_weights(nodes: usize, weights: &[f64]) -> Result<Self> {
        check_dim(nodes * (nodes - 1) / 2, weights.len())?;
        let mut entries = vec![0.0; nodes * nodes];
        let mut k = 0;
        for u in 0..nodes {
            for v in u + 1..nodes {
                entries[u * nodes + v] = -weights[k];
                entries[v * nodes + u] = -weights[k];
                k += 1;
            }
        }
        rebuild_diagonal(nodes, &mut entries);
        Ok(Self(entries))
    }

    pub fn nodes(&self) -> usize {
        (self.0.len() as f64).sqrt().round() as usize
    }

    pub fn entry(&self, u: usize, v: usize) -> f64 {
        self.0[u * self.nodes() + v]
    }

    /// Edge weights in row-major upper-triangular order.
    pub fn edge_weights(&self) -> Vec<f64> {
        let l = self.nodes();
        let mut out = Vec::with_capacity(l * (l - 1) / 2);
        for u in 0..l {
            for v in u + 1..l {
                out.push(-self.0[u * l + v]);
            }
        }
        out
    }
}

fn rebuild_diagonal(l: usize, entries: &mut [f64]) {
    for u in 0..l {
        let row = &entries[u * l..(u + 1) * l];
        let off: f64 = row
            .iter()
            .enumerate()
            .filter(|&(v, _)| v != u)
            .map(|(_, x)| *x)
            .sum();
        entries[u * l + u] = -off;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacianSpace {
    pub nodes: usize,
    /// Optional bound `W`: off-diagonal entries must lie in `[-W, 0]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_bound: Option<f64>,
}

impl LaplacianSpace {
    pub fn new(nodes: usize) -> Self {
        Self {
            nodes,
            weight_bound: None,
        }
    }

    pub fn with_weight_bound(mut self, w: f64) -> Self {
        self.weight_bound = Some(w);
        self
    }

    pub fn point(&self, entries: Vec<f64>) -> Result<GraphLaplacian> {
        self.decode(&entries)
    }

    /// Projects a symmetric matrix back into the feasible set: off-diagonals
    /// clipped to `[-W, 0]` (or `(-inf, 0]`), diagonal set to minus the row's
    /// off-diagonal sum.
    pub fn project(&self, entries: &mut [f64]) {
        let l = self.nodes;
        let lo = self.weight_bound.map_or(f64::NEG_INFINITY, |w| -w);
        for u in 0..l {
            for v in 0..l {
                if u != v {
                    let x = &mut entries[u * l + v];
                    *x = x.clamp(lo, 0.0);
                }
            }
        }
        rebuild_diagonal(l, entries);
    }
}

pub struct LaplacianShift {
    start: GraphLaplacian,
    end: GraphLaplacian,
    delta: Vec<f64>,
}

impl GeodesicSpace for LaplacianSpace {
    type Point = GraphLaplacian;
    type Plan = LaplacianShift;

    fn id(&self) -> SpaceId {
        SpaceId::Laplacian
    }

    fn config(&self) -> SpaceConfig {
        SpaceConfig::Laplacian(*self)
    }

    fn point_len(&self) -> usize {
        self.nodes * self.nodes
    }

    fn coords<'a>(&self, p: &'a GraphLaplacian) -> &'a [f64] {
        &p.0
    }

    fn from_coords(&self, coords: Vec<f64>) -> GraphLaplacian {
        GraphLaplacian(coords)
    }

    fn validate(&self, p: &GraphLaplacian) -> Result<()> {
        let l = self.nodes;
        check_dim(l * l, p.0.len())?;
        let scale = p.0.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for u in 0..l {
            let mut row_sum = 0.0;
            for v in 0..l {
                let x = p.0[u * l + v];
                if !x.is_finite() {
                    return Err(GeoError::invalid("non-finite entry"));
                }
                if x != p.0[v * l + u] {
                    return Err(GeoError::invalid(format!("not symmetric at ({u}, {v})")));
                }
                if u != v {
                    if x > 0.0 {
                        return Err(GeoError::invalid(format!(
                            "positive off-diagonal entry at ({u}, {v})"
                        )));
                    }
                    if let Some(w) = self.weight_bound {
                        if x < -w {
                            return Err(GeoError::invalid(format!(
                                "edge weight {} at ({u}, {v}) exceeds bound {w}",
                                -x
                            )));
                        }
                    }
                }
                row_sum += x;
            }
            if row_sum.abs() > 1e-12 * scale * l as f64 {
                return Err(GeoError::invalid(format!("row {u} sums to {row_sum}")));
            }
        }
        Ok(())
    }

    fn dist(&self, a: &GraphLaplacian, b: &GraphLaplacian) -> Result<f64> {
        self.dist_sq(a, b).map(f64::sqrt)
    }

    fn dist_sq(&self, a: &GraphLaplacian, b: &GraphLaplacian) -> Result<f64> {
        check_dim(a.0.len(), b.0.len())?;
        Ok(sq_diff_sum(&a.0, &b.0))
    }

    fn interpolate(
        &self,
        a: &GraphLaplacian,
        b: &GraphLaplacian,
        t: f64,
    ) -> Result<GraphLaplacian> {
        check_dim(a.0.len(), b.0.len())?;
        if t == 0.0 {
            return Ok(a.clone());
        }
        if t == 1.0 {
            return Ok(b.clone());
        }
        Ok(GraphLaplacian(
            a.0.iter().zip(&b.0).map(|(x, y)| x + t * (y - x)).collect(),
        ))
    }

    fn plan(&self, start: &GraphLaplacian, end: &GraphLaplacian) -> Result<LaplacianShift> {
        check_dim(self.point_len(), start.0.len())?;
        check_dim(self.point_len(), end.0.len())?;
        Ok(LaplacianShift {
            start: start.clone(),
            end: end.clone(),
            delta: end.0.iter().zip(&start.0).map(|(b, a)| b - a).collect(),
        })
    }

    fn apply(&self, plan: &LaplacianShift, omega: &GraphLaplacian) -> Result<GraphLaplacian> {
        check_dim(self.point_len(), omega.0.len())?;
        if *omega == plan.start {
            return Ok(plan.end.clone());
        }
        let mut out: Vec<f64> = omega
            .0
            .iter()
            .zip(&plan.delta)
            .map(|(w, d)| w + d)
            .collect();
        self.project(&mut out);
        Ok(GraphLaplacian(out))
    }

    fn transport_dist_sq(
        &self,
        plan: &LaplacianShift,
        omega: &GraphLaplacian,
        target: &GraphLaplacian,
    ) -> Result<f64> {
        let l = self.nodes;
        check_dim(l * l, omega.0.len())?;
        check_dim(l * l, target.0.len())?;
        if *omega == plan.start {
            return self.dist_sq(target, &plan.end);
        }
        let lo = self.weight_bound.map_or(f64::NEG_INFINITY, |w| -w);
        let mut total = 0.0;
        for u in 0..l {
            let mut off = 0.0;
            for v in (0..l).filter(|&v| v != u) {
                let k = u * l + v;
                let x = (omega.0[k] + plan.delta[k]).clamp(lo, 0.0);
                off += x;
                total += (target.0[k] - x) * (target.0[k] - x);
            }
            let k = u * l + u;
            total += (target.0[k] + off) * (target.0[k] + off);
        }
        Ok(total)
    }

    fn mean(
        &self,
        points: &[&GraphLaplacian],
        weights: &[f64],
        _hint: Option<&GraphLaplacian>,
    ) -> Result<GraphLaplacian> {
        let rows: Vec<&[f64]> = points.iter().map(|p| p.0.as_slice()).collect();
        for r in &rows {
            check_dim(self.point_len(), r.len())?;
        }
        Ok(GraphLaplacian(weighted_average(&rows, weights)))
    }

    fn has_linear_mean(&self) -> bool {
        true
    }
}
