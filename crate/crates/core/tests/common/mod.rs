#![allow(dead_code)]

use fgboost::spaces::{
    EuclideanSpace, EuclideanVector, GraphLaplacian, LaplacianSpace, QuantileDistribution,
    SpherePoint, SphereSpace, WassersteinSpace,
};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

/// Quantiles of N(mean, sd²) on the grid of `space`, without truncation.
pub fn gaussian(space: &WassersteinSpace, mean: f64, sd: f64) -> QuantileDistribution {
    let z = Normal::standard();
    QuantileDistribution(
        space
            .grid()
            .iter()
            .map(|&p| mean + sd * z.inverse_cdf(p))
            .collect(),
    )
}

pub fn constant(space: &WassersteinSpace, c: f64) -> QuantileDistribution {
    QuantileDistribution(vec![c; space.grid_size])
}

/// Sorted uniform draws on [-3, 3] plus a random location shift.
pub fn random_distribution<R: Rng>(space: &WassersteinSpace, rng: &mut R) -> QuantileDistribution {
    let shift: f64 = rng.random_range(-1.0..1.0);
    let mut v: Vec<f64> = (0..space.grid_size)
        .map(|_| shift + rng.random_range(-3.0..3.0))
        .collect();
    v.sort_by(f64::total_cmp);
    QuantileDistribution(v)
}

pub fn random_laplacian<R: Rng>(space: &LaplacianSpace, rng: &mut R) -> GraphLaplacian {
    let l = space.nodes;
    let w: Vec<f64> = (0..l * (l - 1) / 2)
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    GraphLaplacian::from_edge_weights(l, &w).unwrap()
}

pub fn random_sphere<R: Rng>(space: &SphereSpace, rng: &mut R) -> SpherePoint {
    loop {
        let v: Vec<f64> = (0..space.dim)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                if space.positive_orthant {
                    z.abs()
                } else {
                    z
                }
            })
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return SpherePoint(v.into_iter().map(|x| x / n).collect());
        }
    }
}

pub fn random_vector<R: Rng>(space: &EuclideanSpace, rng: &mut R) -> EuclideanVector {
    EuclideanVector(
        (0..space.dim)
            .map(|_| rng.random_range(-5.0..5.0))
            .collect(),
    )
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
