//! Monte Carlo prediction-error benchmark over the simulation scenarios.

use std::time::Instant;

use anyhow::Result;
use fgboost::boost::mean_sq_dist;
use fgboost::sim::{
    amspe, run_rng, sample_compositional, sample_distribution, sample_network, GeneratedData,
    Scenario, ScenarioSpec,
};
use fgboost::{fit, frechet_mean, BoostParams, GeodesicSpace};
use log::{info, warn};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub scenarios: Vec<Scenario>,
    /// Sample sizes per run, validation share included.
    pub sizes: Vec<usize>,
    pub runs: usize,
    pub test_size: usize,
    pub master_seed: u64,
    /// Scenario knobs; `scenario`, `n` and `seed` are set per run.
    pub spec: ScenarioSpec,
    pub boost: BoostParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            scenarios: Scenario::ALL.to_vec(),
            sizes: vec![100, 500],
            runs: 20,
            test_size: 100,
            master_seed: 2024,
            spec: ScenarioSpec::default(),
            boost: BoostParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub n: usize,
    pub run: usize,
    /// `None` when the run failed.
    pub mspe: Option<f64>,
    /// MSPE of the constant Fréchet mean of the training responses.
    pub baseline_mspe: Option<f64>,
    pub trees: usize,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scenario: Scenario,
    pub n: usize,
    pub runs_ok: usize,
    pub runs_failed: usize,
    pub amspe: f64,
    pub sd: f64,
    pub baseline_amspe: f64,
    pub baseline_sd: f64,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub format_version: u32,
    pub config: BenchConfig,
    pub cells: Vec<CellSummary>,
    pub runs: Vec<RunRecord>,
    /// False if any run failed.
    pub complete: bool,
    pub total_seconds: f64,
}

impl BenchReport {
    pub fn cell(&self, scenario: Scenario, n: usize) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.n == n)
    }
}

struct Outcome {
    mspe: f64,
    baseline: f64,
    trees: usize,
}

fn evaluate<S: GeodesicSpace>(
    space: &S,
    train: &GeneratedData<S::Point>,
    test: &GeneratedData<S::Point>,
    params: &BoostParams,
) -> Result<Outcome> {
    let model = fit(space, train.x.view(), &train.y, params)?;
    let preds = model.predict_many(test.x.view())?;
    let mean = space.finalize(frechet_mean(space, &train.y, None)?);
    let constant = vec![mean; test.truth.len()];
    Ok(Outcome {
        mspe: mean_sq_dist(space, &preds, &test.truth)?,
        baseline: mean_sq_dist(space, &constant, &test.truth)?,
        trees: model.trees().len(),
    })
}

/// Draws run `run` of a cell and fits it. Run `r` uses stream `r` of the
/// master seed for every scenario and size, so cells share their seeds.
pub fn run_once(
    config: &BenchConfig,
    scenario: Scenario,
    n: usize,
    run: usize,
) -> Result<(f64, f64, usize)> {
    let spec = ScenarioSpec {
        scenario,
        n,
        seed: config.master_seed,
        ..config.spec
    };
    spec.validate()?;
    let mut rng = run_rng(config.master_seed, run as u64);
    let mut params = config.boost;
    params.seed = rng.next_u64();
    let t = config.test_size;
    let out = match scenario {
        Scenario::Distribution => {
            let space = spec.wasserstein();
            let train = sample_distribution(&spec, n, &mut rng)?;
            let test = sample_distribution(&spec, t, &mut rng)?;
            evaluate(&space, &train, &test, &params)?
        }
        Scenario::Network => {
            let space = spec.laplacian();
            let train = sample_network(&spec, n, &mut rng)?;
            let test = sample_network(&spec, t, &mut rng)?;
            evaluate(&space, &train, &test, &params)?
        }
        Scenario::Compositional => {
            let space = fgboost::spaces::SphereSpace::compositional(3);
            let train = sample_compositional(&spec, n, &mut rng)?;
            let test = sample_compositional(&spec, t, &mut rng)?;
            evaluate(&space, &train, &test, &params)?
        }
    };
    Ok((out.mspe, out.baseline, out.trees))
}

pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    config.boost.validate()?;
    anyhow::ensure!(config.runs > 0, "bench needs at least one run");
    anyhow::ensure!(config.test_size > 0, "bench needs a test set");
    let start = Instant::now();
    let jobs: Vec<(Scenario, usize, usize)> = config
        .scenarios
        .iter()
        .flat_map(|&s| {
            config
                .sizes
                .iter()
                .flat_map(move |&n| (0..config.runs).map(move |r| (s, n, r)))
        })
        .collect();
    let runs: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(scenario, n, run)| {
            let t0 = Instant::now();
            let result = run_once(config, scenario, n, run);
            let seconds = t0.elapsed().as_secs_f64();
            match result {
                Ok((mspe, baseline, trees)) => {
                    info!("{scenario} n={n} run {run}: mspe {mspe:.5} ({seconds:.1}s)");
                    RunRecord {
                        scenario,
                        n,
                        run,
                        mspe: Some(mspe),
                        baseline_mspe: Some(baseline),
                        trees,
                        seconds,
                        error: None,
                    }
                }
                Err(e) => {
                    warn!("{scenario} n={n} run {run} failed: {e:#}");
                    RunRecord {
                        scenario,
                        n,
                        run,
                        mspe: None,
                        baseline_mspe: None,
                        trees: 0,
                        seconds,
                        error: Some(format!("{e:#}")),
                    }
                }
            }
        })
        .collect();

    let mut cells = Vec::new();
    for &scenario in &config.scenarios {
        for &n in &config.sizes {
            let cell: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.scenario == scenario && r.n == n)
                .collect();
            let ok: Vec<&RunRecord> = cell.iter().copied().filter(|r| r.mspe.is_some()).collect();
            let failed = cell.len() - ok.len();
            if failed > 0 {
                warn!("{scenario} n={n}: {failed} failed runs excluded");
            }
            let (amspe_v, base_v) = if ok.is_empty() {
                (None, None)
            } else {
                let m: Vec<f64> = ok.iter().filter_map(|r| r.mspe).collect();
                let b: Vec<f64> = ok.iter().filter_map(|r| r.baseline_mspe).collect();
                (Some(amspe(&m)?), Some(amspe(&b)?))
            };
            cells.push(CellSummary {
                scenario,
                n,
                runs_ok: ok.len(),
                runs_failed: failed,
                amspe: amspe_v.map_or(f64::NAN, |s| s.mean),
                sd: amspe_v.map_or(f64::NAN, |s| s.sd),
                baseline_amspe: base_v.map_or(f64::NAN, |s| s.mean),
                baseline_sd: base_v.map_or(f64::NAN, |s| s.sd),
                mean_seconds: cell.iter().map(|r| r.seconds).sum::<f64>()
                    / cell.len().max(1) as f64,
            });
        }
    }
    Ok(BenchReport {
        format_version: REPORT_VERSION,
        config: config.clone(),
        complete: runs.iter().all(|r| r.mspe.is_some()),
        cells,
        runs,
        total_seconds: start.elapsed().as_secs_f64(),
    })
}
