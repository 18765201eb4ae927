use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fgboost::sim::Scenario;
use fgboost::spaces::SpaceId;
use fgboost_cli::commands;
use fgboost_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "fgboost",
    version,
    about = "Gradient boosting for metric-space responses"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Response space: wasserstein, laplacian, sphere or euclidean.
    #[arg(long, global = true)]
    space: Option<SpaceId>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Input CSV files have no header row.
    #[arg(long, global = true)]
    no_header: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated dataset.
    Simulate {
        #[arg(long)]
        scenario: Option<Scenario>,
        #[arg(long)]
        n: Option<usize>,
        /// Regenerate the dataset described by a manifest.
        #[arg(long, conflicts_with_all = ["scenario", "n"])]
        manifest: Option<PathBuf>,
    },
    /// Fit a model and write model.json.
    Fit {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        /// Select learning rate, iterations and depth by cross-validation.
        #[arg(long)]
        grid: bool,
        /// Sphere responses are simplex proportions.
        #[arg(long)]
        simplex: bool,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        min_leaf: Option<usize>,
    },
    /// Predict responses for new predictors.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        x: PathBuf,
    },
    /// Empirical risk of a model on a labelled dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        simplex: bool,
    },
    /// Monte Carlo prediction-error benchmark.
    Bench {
        #[arg(long = "scenario")]
        scenarios: Vec<Scenario>,
        /// Sample sizes (repeatable).
        #[arg(long = "n")]
        sizes: Vec<usize>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Metric Shapley attributions.
    Shap {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        x: PathBuf,
        /// Background rows (default: a subsample of the explained rows).
        #[arg(long)]
        background: Option<PathBuf>,
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        permutations: Option<usize>,
    },
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load_or_default(common.config.as_deref())?;
    if common.space.is_some() {
        cfg.space = common.space;
    }
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    if common.out.is_some() {
        cfg.out.clone_from(&common.out);
    }
    if common.no_header {
        cfg.header = false;
    }
    if let Some(seed) = cfg.seed {
        cfg.boost.seed = seed;
        cfg.grid.seed = seed;
        cfg.shap.seed = seed;
        cfg.scenario.seed = seed;
        cfg.bench.master_seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve(&cli.common)?;
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Simulate {
            scenario,
            n,
            manifest,
        } => {
            let mut spec = match manifest {
                Some(path) => commands::load_manifest(&path)?.spec,
                None => cfg.scenario,
            };
            if let Some(s) = scenario {
                spec.scenario = s;
            }
            if let Some(n) = n {
                spec.n = n;
            }
            let m = commands::simulate(&cfg, &spec)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
        }
        Command::Fit {
            x,
            y,
            grid,
            simplex,
            learning_rate,
            iterations,
            depth,
            min_leaf,
        } => {
            cfg.space_options.simplex |= simplex;
            if let Some(v) = learning_rate {
                cfg.boost.learning_rate = v;
            }
            if let Some(v) = iterations {
                cfg.boost.n_iterations = v;
            }
            if let Some(v) = depth {
                cfg.boost.tree.max_depth = v;
            }
            if let Some(v) = min_leaf {
                cfg.boost.tree.min_samples_leaf = v;
            }
            let s = commands::fit_command(&cfg, &x, &y, grid)?;
            if let Some(g) = &s.grid {
                println!(
                    "selected: learning_rate={} iterations={} depth={} (cv risk {:.6e})",
                    g.selected.learning_rate,
                    g.selected.iterations,
                    g.selected.depth,
                    g.selected.mean_risk
                );
            }
            println!("trees: {}", s.n_trees);
            println!("train risk: {:.6e}", s.train_risk);
            match s.validation_risk {
                Some(v) => println!("validation risk: {v:.6e}"),
                None => println!("validation risk: n/a"),
            }
            println!("model: {}", s.model_path.display());
        }
        Command::Predict { model, x } => {
            let out = commands::predict_command(&cfg, &model, &x)?;
            println!("{}", out.display());
        }
        Command::Eval {
            model,
            x,
            y,
            simplex,
        } => {
            cfg.space_options.simplex |= simplex;
            let s = commands::eval_command(&cfg, &model, &x, &y)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Bench {
            scenarios,
            sizes,
            runs,
        } => {
            let mut bench = cfg.bench.clone();
            if !scenarios.is_empty() {
                bench.scenarios = scenarios;
            }
            if !sizes.is_empty() {
                bench.sizes = sizes;
            }
            if let Some(r) = runs {
                bench.runs = r;
            }
            let report = commands::bench_command(&cfg, &bench)?;
            println!("scenario,n,runs,amspe,sd,baseline_amspe");
            for c in &report.cells {
                println!(
                    "{},{},{},{:.6},{:.6},{:.6}",
                    c.scenario, c.n, c.runs_ok, c.amspe, c.sd, c.baseline_amspe
                );
            }
            if !report.complete {
                eprintln!("warning: some runs failed; see bench_runs.csv");
            }
        }
        Command::Shap {
            model,
            x,
            background,
            exact,
            permutations,
        } => {
            cfg.shap.exact |= exact;
            if let Some(p) = permutations {
                cfg.shap.permutations = p;
            }
            let r = commands::shap_command(&cfg, &model, &x, background.as_deref())?;
            for f in &r.ranking {
                println!("x{}: {:.6e}", f.feature + 1, f.mean_phi);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
