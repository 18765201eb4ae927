//! Concrete output spaces.

mod euclidean;
mod laplacian;
pub mod pava;
mod sphere;
mod wasserstein;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::GeoError;

pub use euclidean::{EuclideanSpace, EuclideanVector};
pub use laplacian::{GraphLaplacian, LaplacianSpace};
pub use sphere::{SpherePoint, SphereSpace};
pub use wasserstein::{quantile_grid, QuantileDistribution, WassersteinSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceId {
    Wasserstein,
    Laplacian,
    Sphere,
    Euclidean,
}

impl SpaceId {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpaceId::Wasserstein => "wasserstein",
            SpaceId::Laplacian => "laplacian",
            SpaceId::Sphere => "sphere",
            SpaceId::Euclidean => "euclidean",
        }
    }
}

impl fmt::Display for SpaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpaceId {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wasserstein" => Ok(SpaceId::Wasserstein),
            "laplacian" => Ok(SpaceId::Laplacian),
            "sphere" => Ok(SpaceId::Sphere),
            "euclidean" => Ok(SpaceId::Euclidean),
            other => Err(GeoError::Config(format!("unknown space '{other}'"))),
        }
    }
}

/// A fully parameterized backend, as stored in model files and manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "lowercase")]
pub enum SpaceConfig {
    Wasserstein(WassersteinSpace),
    Laplacian(LaplacianSpace),
    Sphere(SphereSpace),
    Euclidean(EuclideanSpace),
}

impl SpaceConfig {
    pub fn id(&self) -> SpaceId {
        match self {
            SpaceConfig::Wasserstein(_) => SpaceId::Wasserstein,
            SpaceConfig::Laplacian(_) => SpaceId::Laplacian,
            SpaceConfig::Sphere(_) => SpaceId::Sphere,
            SpaceConfig::Euclidean(_) => SpaceId::Euclidean,
        }
    }

    pub fn point_len(&self) -> usize {
        use crate::geodesic::GeodesicSpace;
        match self {
            SpaceConfig::Wasserstein(s) => s.point_len(),
            SpaceConfig::Laplacian(s) => s.point_len(),
            SpaceConfig::Sphere(s) => s.point_len(),
            SpaceConfig::Euclidean(s) => s.point_len(),
        }
    }
}

/// Runs `$body` with `$s` bound to the concrete backend inside a [`SpaceConfig`].
#[macro_export]
macro_rules! with_space {
    ($cfg:expr, $s:ident => $body:expr) => {
        match $cfg {
            $crate::spaces::SpaceConfig::Wasserstein($s) => $body,
            $crate::spaces::SpaceConfig::Laplacian($s) => $body,
            $crate::spaces::SpaceConfig::Sphere($s) => $body,
            $crate::spaces::SpaceConfig::Euclidean($s) => $body,
        }
    };
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_diff_sum(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Coordinate-wise weighted average.
pub(crate) fn weighted_average(points: &[&[f64]], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; points[0].len()];
    for (p, &w) in points.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(p.iter()) {
            *o += w * v;
        }
    }
    out
}
