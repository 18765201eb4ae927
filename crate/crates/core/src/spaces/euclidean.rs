use serde::{Deserialize, Serialize};

use super::{sq_diff_sum, weighted_average, SpaceConfig, SpaceId};
use crate::error::{check_dim, GeoError, Result};
use crate::geodesic::GeodesicSpace;

#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanVector(pub Vec<f64>);

/// `R^d` with straight-line geodesics and translation as transport.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EuclideanSpace {
    pub dim: usize,
}

impl EuclideanSpace {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn point(&self, v: Vec<f64>) -> Result<EuclideanVector> {
        self.decode(&v)
    }
}

pub struct Translation {
    start: EuclideanVector,
    end: EuclideanVector,
    delta: Vec<f64>,
}

impl GeodesicSpace for EuclideanSpace {
    type Point = EuclideanVector;
    type Plan = Translation;

    fn id(&self) -> SpaceId {
        SpaceId::Euclidean
    }

    fn config(&self) -> SpaceConfig {
        SpaceConfig::Euclidean(*self)
    }

    fn point_len(&self) -> usize {
        self.dim
    }

    fn coords<'a>(&self, p: &'a EuclideanVector) -> &'a [f64] {
        &p.0
    }

    fn from_coords(&self, coords: Vec<f64>) -> EuclideanVector {
        EuclideanVector(coords)
    }

    fn validate(&self, p: &EuclideanVector) -> Result<()> {
        check_dim(self.dim, p.0.len())?;
        if p.0.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(GeoError::invalid("non-finite coordinate"))
        }
    }

    fn dist(&self, a: &EuclideanVector, b: &EuclideanVector) -> Result<f64> {
        self.dist_sq(a, b).map(f64::sqrt)
    }

    fn dist_sq(&self, a: &EuclideanVector, b: &EuclideanVector) -> Result<f64> {
        check_dim(a.0.len(), b.0.len())?;
        Ok(sq_diff_sum(&a.0, &b.0))
    }

    fn interpolate(
        &self,
        a: &EuclideanVector,
        b: &EuclideanVector,
        t: f64,
    ) -> Result<EuclideanVector> {
        check_dim(a.0.len(), b.0.len())?;
        if t == 0.0 {
            return Ok(a.clone());
        }
        if t == 1.0 {
            return Ok(b.clone());
        }
        Ok(EuclideanVector(
            a.0.iter().zip(&b.0).map(|(x, y)| x + t * (y - x)).collect(),
        ))
    }

    fn plan(&self, start: &EuclideanVector, end: &EuclideanVector) -> Result<Translation> {
        check_dim(start.0.len(), end.0.len())?;
        Ok(Translation {
            start: start.clone(),
            end: end.clone(),
            delta: end.0.iter().zip(&start.0).map(|(b, a)| b - a).collect(),
        })
    }

    fn apply(&self, plan: &Translation, omega: &EuclideanVector) -> Result<EuclideanVector> {
        check_dim(plan.delta.len(), omega.0.len())?;
        if *omega == plan.start {
            return Ok(plan.end.clone());
        }
        Ok(EuclideanVector(
            omega
                .0
                .iter()
                .zip(&plan.delta)
                .map(|(w, d)| w + d)
                .collect(),
        ))
    }

    fn transport_dist_sq(
        &self,
        plan: &Translation,
        omega: &EuclideanVector,
        target: &EuclideanVector,
    ) -> Result<f64> {
        check_dim(plan.delta.len(), omega.0.len())?;
        check_dim(plan.delta.len(), target.0.len())?;
        if *omega == plan.start {
            return self.dist_sq(target, &plan.end);
        }
        Ok(omega
            .0
            .iter()
            .zip(&plan.delta)
            .zip(&target.0)
            .map(|((w, d), t)| {
                let diff = t - (w + d);
                diff * diff
            })
            .sum())
    }

    fn mean(
        &self,
        points: &[&EuclideanVector],
        weights: &[f64],
        _hint: Option<&EuclideanVector>,
    ) -> Result<EuclideanVector> {
        let rows: Vec<&[f64]> = points.iter().map(|p| p.0.as_slice()).collect();
        for r in &rows {
            check_dim(self.dim, r.len())?;
        }
        Ok(EuclideanVector(weighted_average(&rows, weights)))
    }

    fn has_linear_mean(&self) -> bool {
        true
    }
}
