//! Generative models for distribution, network and compositional responses,
//! with the true regression function for prediction-error evaluation.
//!
//! Every run draws from its own ChaCha8 stream: master seed `s`, stream `r`
//! for run `r`. Results are therefore independent of scheduling.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::boost::mean_sq_dist;
use crate::error::{GeoError, Result};
use crate::geodesic::GeodesicSpace;
use crate::spaces::{
    GraphLaplacian, LaplacianSpace, QuantileDistribution, SpaceConfig, SpherePoint, SphereSpace,
    WassersteinSpace,
};

/// Support of the truncated Gaussian responses.
pub const TRUNCATION: [f64; 2] = [-2.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Distribution,
    Network,
    Compositional,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::Distribution,
        Scenario::Network,
        Scenario::Compositional,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Distribution => "distribution",
            Scenario::Network => "network",
            Scenario::Compositional => "compositional",
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Scenario::Compositional => 10,
            _ => 9,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "distribution" => Ok(Scenario::Distribution),
            "network" => Ok(Scenario::Network),
            "compositional" => Ok(Scenario::Compositional),
            other => Err(GeoError::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub seed: u64,
    /// Observations drawn per distributional response.
    pub samples_per_output: usize,
    pub grid_size: usize,
    /// Network size.
    pub nodes: usize,
    /// Edge weight bound of the Laplacian space.
    pub weight_bound: f64,
    /// Half-width of the tangent perturbations in the compositional scenario.
    pub noise_radius: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::Distribution,
            n: 100,
            seed: 0,
            samples_per_output: 100,
            grid_size: 100,
            nodes: 10,
            weight_bound: 1.0,
            noise_radius: 0.1,
        }
    }
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, n: usize, seed: u64) -> Self {
        Self {
            scenario,
            n,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(GeoError::Config(format!("{what} must be positive")));
        if self.n == 0 {
            return bad("n");
        }
        if self.samples_per_output == 0 {
            return bad("samples_per_output");
        }
        if self.grid_size == 0 {
            return bad("grid_size");
        }
        if self.nodes < 2 {
            return Err(GeoError::Config("networks need at least 2 nodes".into()));
        }
        if !(self.weight_bound > 0.0) {
            return bad("weight_bound");
        }
        if !(self.noise_radius > 0.0) {
            return bad("noise_radius");
        }
        Ok(())
    }

    pub fn space(&self) -> SpaceConfig {
        match self.scenario {
            Scenario::Distribution => SpaceConfig::Wasserstein(self.wasserstein()),
            Scenario::Network => SpaceConfig::Laplacian(self.laplacian()),
            Scenario::Compositional => SpaceConfig::Sphere(SphereSpace::compositional(3)),
        }
    }

    pub fn wasserstein(&self) -> WassersteinSpace {
        WassersteinSpace::new(self.grid_size).with_support(TRUNCATION[0], TRUNCATION[1])
    }

    pub fn laplacian(&self) -> LaplacianSpace {
        LaplacianSpace::new(self.nodes).with_weight_bound(self.weight_bound)
    }
}

/// Predictors, noisy responses and the true regression function at each row.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData<P> {
    pub x: Array2<f64>,
    pub y: Vec<P>,
    pub truth: Vec<P>,
}

/// Stream `run` of the generator family identified by `master_seed`.
pub fn run_rng(master_seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run);
    rng
}

fn bernoulli<R: Rng>(rng: &mut R, q: f64) -> f64 {
    if rng.random_bool(q) {
        1.0
    } else {
        0.0
    }
}

fn gamma<R: Rng>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    Gamma::new(shape, scale)
        .expect("positive gamma parameters")
        .sample(rng)
}

/// Draws one predictor vector of the given scenario.
pub fn draw_predictors<R: Rng>(scenario: Scenario, rng: &mut R) -> Vec<f64> {
    match scenario {
        Scenario::Distribution => {
            let mut x = vec![
                rng.random_range(0.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-2.0..2.0),
            ];
            for _ in 0..3 {
                x.push(rng.sample(StandardNormal));
            }
            x.extend([
                bernoulli(rng, 0.1),
                bernoulli(rng, 0.2),
                bernoulli(rng, 0.5),
            ]);
            x
        }
        Scenario::Network | Scenario::Compositional => {
            let mut x = vec![
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(1.0..2.0),
                gamma(rng, 3.0, 1.0),
                gamma(rng, 4.0, 1.0),
                gamma(rng, 5.0, 1.0),
                bernoulli(rng, 0.2),
                bernoulli(rng, 0.3),
                bernoulli(rng, 0.5),
            ];
            if scenario == Scenario::Compositional {
                x.push(bernoulli(rng, 0.1));
            }
            x
        }
    }
}

/// Quantile function of `N(mean, sd²)` truncated to `[lo, hi]`.
///
/// Evaluated through the upper tail when the interval lies above the mean so
/// that far-tail truncations keep their precision.
pub fn truncated_normal_quantile(p: f64, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let z = Normal::standard();
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let q = if a > 0.0 {
        let (sa, sb) = (z.sf(a), z.sf(b));
        -z.inverse_cdf(sa - p * (sa - sb))
    } else {
        let (fa, fb) = (z.cdf(a), z.cdf(b));
        z.inverse_cdf(fa + p * (fb - fa))
    };
    (mean + sd * q).clamp(lo, hi)
}

/// Conditional means `(E[η|X], E[σ|X])` of the distribution scenario.
pub fn distribution_params(x: &[f64]) -> (f64, f64) {
    let mu = (PI * x[0]).sin() - (PI * x[3]).cos() * x[6];
    let theta = 1.0 + 2.0 * (PI * x[1] / 2.0).cos() + x[4] * x[4] * x[7];
    (mu, theta)
}

pub fn truncated_gaussian_grid(
    space: &WassersteinSpace,
    mean: f64,
    sd: f64,
) -> QuantileDistribution {
    QuantileDistribution(
        space
            .grid()
            .into_iter()
            .map(|p| truncated_normal_quantile(p, mean, sd, TRUNCATION[0], TRUNCATION[1]))
            .collect(),
    )
}

pub fn distribution_truth(space: &WassersteinSpace, x: &[f64]) -> QuantileDistribution {
    let (mu, theta) = distribution_params(x);
    truncated_gaussian_grid(space, mu, theta)
}

/// One draw of the distribution scenario, including the latent `(η, σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionDraw {
    pub x: Vec<f64>,
    pub eta: f64,
    pub sigma: f64,
    pub y: QuantileDistribution,
}

pub fn draw_distribution<R: Rng>(spec: &ScenarioSpec, rng: &mut R) -> Result<DistributionDraw> {
    let space = spec.wasserstein();
    let x = draw_predictors(Scenario::Distribution, rng);
    let (mu, theta) = distribution_params(&x);
    let eta = mu + 0.5 * rng.sample::<f64, _>(StandardNormal);
    let sigma = gamma(rng, theta * theta, 1.0 / theta);
    let obs: Vec<f64> = (0..spec.samples_per_output)
        .map(|_| {
            let u: f64 = rng.random();
            truncated_normal_quantile(u, eta, sigma, TRUNCATION[0], TRUNCATION[1])
        })
        .collect();
    let y = space.quantile_from_sample(&obs)?;
    Ok(DistributionDraw { x, eta, sigma, y })
}

/// Beta shape parameters `(α, β)` of the network scenario.
pub fn network_params(x: &[f64]) -> (f64, f64) {
    let s1 = (PI * x[0]).sin();
    let c2 = (PI * x[1]).cos();
    let alpha = 2.0 * x[6] * s1 * s1 + (1.0 - x[6]) * c2 * c2;
    let beta = x[3] * x[3] * x[7] + x[4] * x[4] * (1.0 - x[7]);
    (alpha, beta)
}

pub fn network_truth(nodes: usize, x: &[f64]) -> GraphLaplacian {
    let (a, b) = network_params(x);
    let w = a / (a + b);
    GraphLaplacian::from_edge_weights(nodes, &vec![w; nodes * (nodes - 1) / 2])
        .expect("edge count matches")
}

fn draw_network<R: Rng>(spec: &ScenarioSpec, rng: &mut R) -> Result<(Vec<f64>, GraphLaplacian)> {
    let (x, alpha, beta) = loop {
        let x = draw_predictors(Scenario::Network, rng);
        let (a, b) = network_params(&x);
        if a > 1e-8 && b > 1e-8 {
            break (x, a, b);
        }
    };
    let dist = Beta::new(alpha, beta).expect("positive beta parameters");
    let n_edges = spec.nodes * (spec.nodes - 1) / 2;
    let weights: Vec<f64> = (0..n_edges).map(|_| dist.sample(rng)).collect();
    Ok((x, GraphLaplacian::from_edge_weights(spec.nodes, &weights)?))
}

/// The angle `φ` of the compositional regression function, in `[π/8, 3π/8]`.
pub fn compositional_angle(x: &[f64]) -> f64 {
    let s1 = (PI * x[0]).sin();
    let c2 = (PI * x[1]).cos();
    let a = 3.0 * x[9] * s1 * s1 + 3.0 * (1.0 - x[9]) * c2 * c2;
    let b = -x[6] * x[3].sqrt() + (1.0 - x[6]) * x[4].sqrt();
    let denom = a.abs() + b.abs();
    let f = if denom > 0.0 { b / denom } else { 0.0 };
    PI * (f + 2.0) / 8.0
}

pub fn compositional_truth(x: &[f64]) -> SpherePoint {
    let phi = compositional_angle(x);
    let (s, c) = phi.sin_cos();
    let r3 = 3f64.sqrt();
    if x[7] == 0.0 {
        SpherePoint(vec![c, r3 * s / 2.0, s / 2.0])
    } else {
        SpherePoint(vec![c, s / 2.0, r3 * s / 2.0])
    }
}

/// Orthonormal basis of the tangent plane at the regression function.
pub fn compositional_tangent_basis(x: &[f64]) -> [[f64; 3]; 2] {
    let phi = compositional_angle(x);
    let (s, c) = phi.sin_cos();
    let r3 = 3f64.sqrt();
    if x[7] == 0.0 {
        [[s, -r3 * c / 2.0, -c / 2.0], [0.0, 0.5, -r3 / 2.0]]
    } else {
        [[s, -c / 2.0, -r3 * c / 2.0], [0.0, r3 / 2.0, -0.5]]
    }
}

/// `Exp_m(z1·e1 + z2·e2)` in the tangent basis at `m = compositional_truth(x)`.
pub fn compositional_response(x: &[f64], z1: f64, z2: f64) -> SpherePoint {
    let m = compositional_truth(x);
    let [e1, e2] = compositional_tangent_basis(x);
    let u: Vec<f64> = (0..3).map(|k| z1 * e1[k] + z2 * e2[k]).collect();
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return m;
    }
    let (s, c) = norm.sin_cos();
    SpherePoint((0..3).map(|k| c * m.0[k] + s * u[k] / norm).collect())
}

fn draw_compositional<R: Rng>(spec: &ScenarioSpec, rng: &mut R) -> (Vec<f64>, SpherePoint) {
    let x = draw_predictors(Scenario::Compositional, rng);
    let r = spec.noise_radius;
    let z1 = rng.random_range(-r..r);
    let z2 = rng.random_range(-r..r);
    let y = compositional_response(&x, z1, z2);
    (x, y)
}

fn assemble<P>(rows: Vec<Vec<f64>>, y: Vec<P>, truth: Vec<P>) -> GeneratedData<P> {
    let p = rows.first().map_or(0, Vec::len);
    let x = Array2::from_shape_fn((rows.len(), p), |(i, j)| rows[i][j]);
    GeneratedData { x, y, truth }
}

/// `n` samples of the distribution scenario drawn from `rng`.
pub fn sample_distribution<R: Rng>(
    spec: &ScenarioSpec,
    n: usize,
    rng: &mut R,
) -> Result<GeneratedData<QuantileDistribution>> {
    let space = spec.wasserstein();
    let (mut rows, mut y, mut truth) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let d = draw_distribution(spec, rng)?;
        truth.push(distribution_truth(&space, &d.x));
        rows.push(d.x);
        y.push(d.y);
    }
    Ok(assemble(rows, y, truth))
}

pub fn sample_network<R: Rng>(
    spec: &ScenarioSpec,
    n: usize,
    rng: &mut R,
) -> Result<GeneratedData<GraphLaplacian>> {
    let (mut rows, mut y, mut truth) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let (x, lap) = draw_network(spec, rng)?;
        truth.push(network_truth(spec.nodes, &x));
        rows.push(x);
        y.push(lap);
    }
    Ok(assemble(rows, y, truth))
}

pub fn sample_compositional<R: Rng>(
    spec: &ScenarioSpec,
    n: usize,
    rng: &mut R,
) -> Result<GeneratedData<SpherePoint>> {
    let (mut rows, mut y, mut truth) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let (x, sp) = draw_compositional(spec, rng);
        truth.push(compositional_truth(&x));
        rows.push(x);
        y.push(sp);
    }
    Ok(assemble(rows, y, truth))
}

pub fn gen_distribution(spec: &ScenarioSpec) -> Result<GeneratedData<QuantileDistribution>> {
    spec.validate()?;
    sample_distribution(spec, spec.n, &mut run_rng(spec.seed, 0))
}

pub fn gen_network(spec: &ScenarioSpec) -> Result<GeneratedData<GraphLaplacian>> {
    spec.validate()?;
    sample_network(spec, spec.n, &mut run_rng(spec.seed, 0))
}

pub fn gen_compositional(spec: &ScenarioSpec) -> Result<GeneratedData<SpherePoint>> {
    spec.validate()?;
    sample_compositional(spec, spec.n, &mut run_rng(spec.seed, 0))
}

/// Mean squared distance between predictions and true regression values.
pub fn mspe<S: GeodesicSpace>(
    space: &S,
    predictions: &[S::Point],
    truth: &[S::Point],
) -> Result<f64> {
    mean_sq_dist(space, predictions, truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
}

/// Average and spread of per-run MSPEs.
pub fn amspe(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(GeoError::InvalidArgument("no runs to average".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(Summary { mean, sd })
}
