//! Subcommand implementations. Each returns a summary and writes its files
//! into the configured output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fgboost::shap::{default_background, shap_summary, ShapConfig, ShapMode, ShapResult};
use fgboost::sim::{gen_compositional, gen_distribution, gen_network, Scenario, ScenarioSpec};
use fgboost::spaces::{SpaceConfig, SpaceId, SphereSpace};
use fgboost::{fit, with_space, BoostParams, GeodesicSpace, ModelFile, RiskTrace};
use log::info;
use serde::{Deserialize, Serialize};

use crate::bench::{run_bench, BenchConfig, BenchReport};
use crate::config::RunConfig;
use crate::grid::{grid_search, GridResult};
use crate::io::{
    column_names, decode_points, decode_simplex, encode_points, ensure_rows, read_table,
    write_table, Table,
};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub spec: ScenarioSpec,
    pub space: SpaceConfig,
    pub files: Vec<String>,
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn write_dataset<S: GeodesicSpace>(
    dir: &Path,
    space: &S,
    x: ndarray::ArrayView2<f64>,
    y: &[S::Point],
    truth: &[S::Point],
) -> Result<()> {
    let q = space.point_len();
    write_table(
        &dir.join("X.csv"),
        &column_names("x", x.ncols()),
        x.rows().into_iter().map(|r| r.to_vec()),
    )?;
    write_table(
        &dir.join("Y.csv"),
        &column_names("y", q),
        encode_points(space, y),
    )?;
    write_table(
        &dir.join("truth.csv"),
        &column_names("y", q),
        encode_points(space, truth),
    )?;
    Ok(())
}

/// Writes `X.csv`, `Y.csv`, `truth.csv` and `manifest.json`.
pub fn simulate(cfg: &RunConfig, spec: &ScenarioSpec) -> Result<Manifest> {
    spec.validate()?;
    let dir = prepare_out(cfg)?;
    match spec.scenario {
        Scenario::Distribution => {
            let d = gen_distribution(spec)?;
            write_dataset(&dir, &spec.wasserstein(), d.x.view(), &d.y, &d.truth)?;
        }
        Scenario::Network => {
            let d = gen_network(spec)?;
            write_dataset(&dir, &spec.laplacian(), d.x.view(), &d.y, &d.truth)?;
        }
        Scenario::Compositional => {
            let d = gen_compositional(spec)?;
            write_dataset(
                &dir,
                &SphereSpace::compositional(3),
                d.x.view(),
                &d.y,
                &d.truth,
            )?;
        }
    }
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        spec: *spec,
        space: spec.space(),
        files: ["X.csv", "Y.csv", "truth.csv"].map(String::from).to_vec(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    info!("wrote {} samples to {}", spec.n, dir.display());
    Ok(manifest)
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.format_version != MANIFEST_VERSION {
        bail!(
            "unsupported manifest version {} (expected {MANIFEST_VERSION})",
            m.format_version
        );
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model_path: PathBuf,
    pub n_samples: usize,
    pub n_trees: usize,
    pub train_risk: f64,
    pub validation_risk: Option<f64>,
    pub params: BoostParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridResult>,
}

fn load_xy(cfg: &RunConfig, x_path: &Path, y_path: &Path) -> Result<(Table, Table)> {
    let x = read_table(x_path, cfg.header)?;
    let y = read_table(y_path, cfg.header)?;
    ensure_rows(x.rows.len(), y.rows.len())?;
    Ok((x, y))
}

fn require_space(cfg: &RunConfig) -> Result<SpaceId> {
    cfg.space
        .context("no response space given; pass --space or set `space` in the config")
}

/// Response rows in the encoding of `space`, converting simplex proportions
/// when requested.
fn response_rows(cfg: &RunConfig, space: &SpaceConfig, y: Table) -> Result<Vec<Vec<f64>>> {
    if !cfg.space_options.simplex {
        return Ok(y.rows);
    }
    let SpaceConfig::Sphere(s) = space else {
        bail!("simplex responses need the sphere space");
    };
    Ok(decode_simplex(s, &y.rows)?
        .into_iter()
        .map(|p| p.0)
        .collect())
}

pub fn fit_command(
    cfg: &RunConfig,
    x_path: &Path,
    y_path: &Path,
    use_grid: bool,
) -> Result<FitSummary> {
    let id = require_space(cfg)?;
    let (x, y) = load_xy(cfg, x_path, y_path)?;
    let width = y.ncols().context("response file is empty")?;
    let space = cfg.space_for(id, width)?;
    let rows = response_rows(cfg, &space, y)?;
    let x = x.to_array();
    let dir = prepare_out(cfg)?;
    with_space!(space, s => fit_in(cfg, &s, x.view(), &rows, use_grid, &dir))
}

fn fit_in<S: GeodesicSpace>(
    cfg: &RunConfig,
    space: &S,
    x: ndarray::ArrayView2<f64>,
    rows: &[Vec<f64>],
    use_grid: bool,
    dir: &Path,
) -> Result<FitSummary> {
    let y = decode_points(space, rows)?;
    let mut params = cfg.boost;
    let grid = if use_grid {
        let result = grid_search(space, x, &y, &params, &cfg.grid)?;
        write_table_rows(
            &dir.join("grid_folds.csv"),
            "learning_rate,iterations,depth,fold,risk",
            result.folds.iter().map(|f| {
                format!(
                    "{},{},{},{},{}",
                    f.learning_rate, f.iterations, f.depth, f.fold, f.risk
                )
            }),
        )?;
        write_json(&dir.join("grid.json"), &result)?;
        let s = result.selected;
        info!(
            "grid selected learning rate {}, {} iterations, depth {} (cv risk {:.6e})",
            s.learning_rate, s.iterations, s.depth, s.mean_risk
        );
        params.learning_rate = s.learning_rate;
        params.n_iterations = s.iterations;
        params.tree.max_depth = s.depth;
        Some(result)
    } else {
        None
    };
    let model = fit(space, x, &y, &params)?;
    let trace: &RiskTrace = model.trace();
    let best = trace.best_iteration;
    let train_risk = trace.train.get(best).copied().unwrap_or(f64::NAN);
    let validation_risk = trace.validation.get(best).copied();
    let model_path = dir.join("model.json");
    ModelFile::from_ensemble(&model, Some(params)).save(&model_path)?;
    Ok(FitSummary {
        model_path,
        n_samples: y.len(),
        n_trees: model.trees().len(),
        train_risk,
        validation_risk,
        params,
        grid,
    })
}

fn write_table_rows(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes `Y_pred.csv` and returns its path.
pub fn predict_command(cfg: &RunConfig, model_path: &Path, x_path: &Path) -> Result<PathBuf> {
    let file = ModelFile::load(model_path)
        .with_context(|| format!("loading model {}", model_path.display()))?;
    check_requested_space(cfg, &file)?;
    let x = read_table(x_path, cfg.header)?;
    let dir = prepare_out(cfg)?;
    let out = dir.join("Y_pred.csv");
    with_space!(file.space.clone(), s => {
        let q = s.point_len();
        let model = file.into_ensemble(s)?;
        let x = feature_matrix(&x, model.n_features())?;
        let preds = model.predict_many(x.view())?;
        write_table(&out, &column_names("y", q), encode_points(model.space(), &preds))?;
    });
    Ok(out)
}

fn check_requested_space(cfg: &RunConfig, file: &ModelFile) -> Result<()> {
    if let Some(id) = cfg.space {
        if id != file.space.id() {
            bail!(
                "model was fitted in the {} space, not {id}",
                file.space.id()
            );
        }
    }
    Ok(())
}

fn feature_matrix(x: &Table, p: usize) -> Result<ndarray::Array2<f64>> {
    match x.ncols() {
        Some(c) if c != p => bail!("model expects {p} features, predictor file has {c}"),
        _ if x.rows.is_empty() => Ok(ndarray::Array2::zeros((0, p))),
        _ => Ok(x.to_array()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_samples: usize,
    pub risk: f64,
}

/// Mean squared distance between model predictions and the given responses.
pub fn eval_command(
    cfg: &RunConfig,
    model_path: &Path,
    x_path: &Path,
    y_path: &Path,
) -> Result<EvalSummary> {
    let file = ModelFile::load(model_path)
        .with_context(|| format!("loading model {}", model_path.display()))?;
    check_requested_space(cfg, &file)?;
    let (x, y) = load_xy(cfg, x_path, y_path)?;
    let rows = response_rows(cfg, &file.space, y)?;
    with_space!(file.space.clone(), s => {
        let model = file.into_ensemble(s)?;
        let x = feature_matrix(&x, model.n_features())?;
        let y = decode_points(model.space(), &rows)?;
        Ok(EvalSummary {
            n_samples: y.len(),
            risk: model.empirical_risk(x.view(), &y)?,
        })
    })
}

/// Writes `phi.csv` and `ranking.json`.
pub fn shap_command(
    cfg: &RunConfig,
    model_path: &Path,
    x_path: &Path,
    background: Option<&Path>,
) -> Result<ShapResult> {
    let file = ModelFile::load(model_path)
        .with_context(|| format!("loading model {}", model_path.display()))?;
    check_requested_space(cfg, &file)?;
    let x = read_table(x_path, cfg.header)?;
    let settings = &cfg.shap;
    let dir = prepare_out(cfg)?;
    let result = with_space!(file.space.clone(), s => {
        let model = file.into_ensemble(s)?;
        let p = model.n_features();
        let x = feature_matrix(&x, p)?;
        let background = match background {
            Some(path) => feature_matrix(&read_table(path, cfg.header)?, p)?,
            None => default_background(x.view(), settings.background_rows, settings.seed),
        };
        let config = ShapConfig {
            background,
            mode: if settings.exact {
                ShapMode::Exact
            } else {
                ShapMode::Sampled {
                    permutations: settings.permutations,
                }
            },
            seed: settings.seed,
        };
        shap_summary(&model, x.view(), &config)?
    });
    let p = result.ranking.len();
    let names = x.header.clone().unwrap_or_else(|| column_names("x", p));
    write_table(&dir.join("phi.csv"), &names, &result.phi)?;
    write_json(&dir.join("ranking.json"), &result.ranking)?;
    Ok(result)
}

/// Writes `bench_runs.csv`, `bench_summary.csv` and `bench_report.json`.
pub fn bench_command(cfg: &RunConfig, bench: &BenchConfig) -> Result<BenchReport> {
    let report = run_bench(bench)?;
    let dir = prepare_out(cfg)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    write_table_rows(
        &dir.join("bench_runs.csv"),
        "scenario,n,run,mspe,baseline_mspe,trees,seconds,error",
        report.runs.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{}",
                r.scenario,
                r.n,
                r.run,
                opt(r.mspe),
                opt(r.baseline_mspe),
                r.trees,
                r.seconds,
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            )
        }),
    )?;
    write_table_rows(
        &dir.join("bench_summary.csv"),
        "scenario,n,runs_ok,runs_failed,amspe,sd,baseline_amspe,baseline_sd,mean_seconds",
        report.cells.iter().map(|c| {
            format!(
                "{},{},{},{},{},{},{},{},{}",
                c.scenario,
                c.n,
                c.runs_ok,
                c.runs_failed,
                c.amspe,
                c.sd,
                c.baseline_amspe,
                c.baseline_sd,
                c.mean_seconds
            )
        }),
    )?;
    write_json(&dir.join("bench_report.json"), &report)?;
    Ok(report)
}
