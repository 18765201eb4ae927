//! Space-agnostic geodesic algebra.
//!
//! A geodesic in a unique geodesic space is identified by its endpoints, so
//! [`GeodesicPair`] stores only `(start, end)`. Intermediate points are always
//! recomputed through [`GeodesicSpace::interpolate`]. The free functions in
//! this module implement reversal, restriction (`ν ⊙ γ`), addition through a
//! transport map, the endpoint metric `d_G`, and the decoupled Fréchet mean of
//! a set of geodesics.

use std::fmt;

use crate::error::{GeoError, Result};
use crate::spaces::{SpaceConfig, SpaceId};

/// Contract every output-space backend fulfils.
///
/// Points are stored as flat coordinate vectors (quantile grid, row-major
/// matrix, unit vector, plain vector); `coords` exposes that storage so that
/// generic code can serialize points and, for spaces whose Fréchet mean is a
/// coordinate-wise average, accumulate running sums.
pub trait GeodesicSpace: Clone + fmt::Debug + Send + Sync + 'static {
    type Point: Clone + PartialEq + fmt::Debug + Send + Sync;
    /// Precomputed state for repeatedly transporting along one geodesic.
    type Plan: Send + Sync;

    fn id(&self) -> SpaceId;

    /// Serializable description of this backend.
    fn config(&self) -> SpaceConfig;

    /// Length of the coordinate encoding of a point.
    fn point_len(&self) -> usize;

    fn coords<'a>(&self, p: &'a Self::Point) -> &'a [f64];

    /// Wraps raw coordinates without validation. Callers guarantee the length.
    #[allow(clippy::wrong_self_convention)]
    fn from_coords(&self, coords: Vec<f64>) -> Self::Point;

    fn validate(&self, p: &Self::Point) -> Result<()>;

    /// Builds a validated point from an encoded row.
    fn decode(&self, row: &[f64]) -> Result<Self::Point> {
        if row.len() != self.point_len() {
            return Err(GeoError::DimensionMismatch {
                expected: self.point_len(),
                found: row.len(),
            });
        }
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(GeoError::invalid(format!("non-finite coordinate {bad}")));
        }
        let p = self.from_coords(row.to_vec());
        self.validate(&p)?;
        Ok(p)
    }

    fn dist(&self, a: &Self::Point, b: &Self::Point) -> Result<f64>;

    fn dist_sq(&self, a: &Self::Point, b: &Self::Point) -> Result<f64> {
        self.dist(a, b).map(|d| d * d)
    }

    /// Point at parameter `t` on the geodesic from `a` to `b`. Must return
    /// `a` and `b` unchanged at `t = 0` and `t = 1`.
    fn interpolate(&self, a: &Self::Point, b: &Self::Point, t: f64) -> Result<Self::Point>;

    fn plan(&self, start: &Self::Point, end: &Self::Point) -> Result<Self::Plan>;

    fn apply(&self, plan: &Self::Plan, omega: &Self::Point) -> Result<Self::Point>;

    /// Geodesic transport map `T_{γ(start, end)}(omega)`.
    fn transport(
        &self,
        start: &Self::Point,
        end: &Self::Point,
        omega: &Self::Point,
    ) -> Result<Self::Point> {
        let plan = self.plan(start, end)?;
        self.apply(&plan, omega)
    }

    /// `d²(target, apply(plan, omega))`. Backends override this to skip
    /// materializing the transported point.
    fn transport_dist_sq(
        &self,
        plan: &Self::Plan,
        omega: &Self::Point,
        target: &Self::Point,
    ) -> Result<f64> {
        let z = self.apply(plan, omega)?;
        self.dist_sq(target, &z)
    }

    /// Weighted Fréchet mean. `weights` are nonnegative and sum to one;
    /// `hint` is an optional starting point for iterative backends.
    fn mean(
        &self,
        points: &[&Self::Point],
        weights: &[f64],
        hint: Option<&Self::Point>,
    ) -> Result<Self::Point>;

    /// True when the Fréchet mean is the coordinate-wise weighted average
    /// of [`coords`](Self::coords).
    fn has_linear_mean(&self) -> bool {
        false
    }

    /// Projection applied to final predictions only.
    fn finalize(&self, p: Self::Point) -> Self::Point {
        p
    }
}

/// Geodesic `γ_{start,end}` represented by its endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicPair<P> {
    pub start: P,
    pub end: P,
}

impl<P: Clone> GeodesicPair<P> {
    pub fn new(start: P, end: P) -> Self {
        Self { start, end }
    }

    /// `id_p`, the constant geodesic at `p`.
    pub fn identity(p: P) -> Self {
        Self {
            start: p.clone(),
            end: p,
        }
    }
}

/// `⊖γ`: the same geodesic traversed backwards.
pub fn geo_reverse<P: Clone>(g: &GeodesicPair<P>) -> GeodesicPair<P> {
    GeodesicPair {
        start: g.end.clone(),
        end: g.start.clone(),
    }
}

/// `d_G(g1, g2) = sqrt(d²(start₁, start₂) + d²(end₁, end₂))`.
pub fn geo_dist<S: GeodesicSpace>(
    space: &S,
    g1: &GeodesicPair<S::Point>,
    g2: &GeodesicPair<S::Point>,
) -> Result<f64> {
    Ok(geo_dist_sq(space, g1, g2)?.sqrt())
}

pub fn geo_dist_sq<S: GeodesicSpace>(
    space: &S,
    g1: &GeodesicPair<S::Point>,
    g2: &GeodesicPair<S::Point>,
) -> Result<f64> {
    Ok(space.dist_sq(&g1.start, &g2.start)? + space.dist_sq(&g1.end, &g2.end)?)
}

/// `ν ⊙ γ`: restriction of the geodesic to `[0, ν]`.
pub fn geo_scale<S: GeodesicSpace>(
    space: &S,
    g: &GeodesicPair<S::Point>,
    nu: f64,
) -> Result<GeodesicPair<S::Point>> {
    if !(0.0..=1.0).contains(&nu) {
        return Err(GeoError::InvalidArgument(format!(
            "geodesic scale factor {nu} outside [0, 1]"
        )));
    }
    let end = space.interpolate(&g.start, &g.end, nu)?;
    Ok(GeodesicPair {
        start: g.start.clone(),
        end,
    })
}

/// `g1 ⊕ g2`: extends `g1` by replaying `g2` from `g1.end`.
pub fn geo_add<S: GeodesicSpace>(
    space: &S,
    g1: &GeodesicPair<S::Point>,
    g2: &GeodesicPair<S::Point>,
) -> Result<GeodesicPair<S::Point>> {
    let end = if g1.end == g2.start {
        g2.end.clone()
    } else {
        space.transport(&g2.start, &g2.end, &g1.end)?
    };
    Ok(GeodesicPair {
        start: g1.start.clone(),
        end,
    })
}

/// Weighted Fréchet mean of `points`; uniform weights when `weights` is `None`.
pub fn frechet_mean<S: GeodesicSpace>(
    space: &S,
    points: &[S::Point],
    weights: Option<&[f64]>,
) -> Result<S::Point> {
    let refs: Vec<&S::Point> = points.iter().collect();
    frechet_mean_refs(space, &refs, weights)
}

pub fn frechet_mean_refs<S: GeodesicSpace>(
    space: &S,
    points: &[&S::Point],
    weights: Option<&[f64]>,
) -> Result<S::Point> {
    let weights = resolve_weights(points.len(), weights)?;
    mean_with_hint(space, points, &weights, None)
}

pub(crate) fn mean_with_hint<S: GeodesicSpace>(
    space: &S,
    points: &[&S::Point],
    weights: &[f64],
    hint: Option<&S::Point>,
) -> Result<S::Point> {
    let first = points
        .first()
        .ok_or_else(|| GeoError::InvalidArgument("Fréchet mean of an empty set".into()))?;
    // Exact for repeated points; averaging in floating point is not.
    if points.iter().all(|p| *p == *first) {
        return Ok((*first).clone());
    }
    space.mean(points, weights, hint)
}

pub(crate) fn resolve_weights(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(GeoError::InvalidArgument(
            "Fréchet mean of an empty set".into(),
        ));
    }
    match weights {
        None => Ok(vec![1.0 / n as f64; n]),
        Some(w) => {
            if w.len() != n {
                return Err(GeoError::DimensionMismatch {
                    expected: n,
                    found: w.len(),
                });
            }
            if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(GeoError::InvalidArgument(
                    "weights must be finite and nonnegative".into(),
                ));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(GeoError::InvalidArgument(format!(
                    "weights sum to {total}, expected 1"
                )));
            }
            Ok(w.to_vec())
        }
    }
}

/// Minimizer of `Σ d_G²(g_i, γ)`, which decouples into separate Fréchet means
/// of the starting points and of the ending points.
pub fn geodesic_frechet_mean<S: GeodesicSpace>(
    space: &S,
    geodesics: &[GeodesicPair<S::Point>],
) -> Result<GeodesicPair<S::Point>> {
    let refs: Vec<&GeodesicPair<S::Point>> = geodesics.iter().collect();
    geodesic_frechet_mean_refs(space, &refs)
}

pub(crate) fn geodesic_frechet_mean_refs<S: GeodesicSpace>(
    space: &S,
    geodesics: &[&GeodesicPair<S::Point>],
) -> Result<GeodesicPair<S::Point>> {
    let weights = resolve_weights(geodesics.len(), None)?;
    let starts: Vec<&S::Point> = geodesics.iter().map(|g| &g.start).collect();
    let ends: Vec<&S::Point> = geodesics.iter().map(|g| &g.end).collect();
    Ok(GeodesicPair {
        start: mean_with_hint(space, &starts, &weights, None)?,
        end: mean_with_hint(space, &ends, &weights, None)?,
    })
}
