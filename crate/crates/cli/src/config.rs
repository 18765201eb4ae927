//! Run configuration loaded from TOML or JSON; command-line flags override it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fgboost::sim::ScenarioSpec;
use fgboost::spaces::{
    EuclideanSpace, LaplacianSpace, SpaceConfig, SpaceId, SphereSpace, WassersteinSpace,
};
use fgboost::{BoostParams, NumericSettings};
use serde::{Deserialize, Serialize};

use crate::bench::BenchConfig;
use crate::grid::GridConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub space: Option<SpaceId>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    /// Whether input CSV files start with a header row.
    pub header: bool,
    pub space_options: SpaceOptions,
    pub boost: BoostParams,
    pub shap: ShapSettings,
    pub scenario: ScenarioSpec,
    pub grid: GridConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            space: None,
            seed: None,
            threads: None,
            out: None,
            header: true,
            space_options: SpaceOptions::default(),
            boost: BoostParams::default(),
            shap: ShapSettings::default(),
            scenario: ScenarioSpec::default(),
            grid: GridConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

/// Backend parameters not implied by the response file's width.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpaceOptions {
    /// Support bounds of distributional responses.
    pub support: Option<[f64; 2]>,
    /// Edge weight bound of Laplacian responses.
    pub weight_bound: Option<f64>,
    /// Restrict sphere predictions to the positive orthant.
    pub positive_orthant: bool,
    /// Sphere responses are given as simplex proportions.
    pub simplex: bool,
    pub numeric: Option<NumericSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapSettings {
    pub exact: bool,
    pub permutations: usize,
    pub background_rows: usize,
    pub seed: u64,
}

impl Default for ShapSettings {
    fn default() -> Self {
        Self {
            exact: false,
            permutations: 2048,
            background_rows: 100,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Parses `path` as JSON if its extension is `.json`, TOML otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(anyhow::Error::from)
        } else {
            toml::from_str(&text).map_err(anyhow::Error::from)
        };
        parsed.with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// Backend for responses with `width` encoded coordinates.
    pub fn space_for(&self, id: SpaceId, width: usize) -> Result<SpaceConfig> {
        if width == 0 {
            bail!("response file has no columns");
        }
        let o = &self.space_options;
        Ok(match id {
            SpaceId::Wasserstein => {
                let mut s = WassersteinSpace::new(width);
                if let Some([lo, hi]) = o.support {
                    if !(lo < hi) {
                        bail!("support bounds [{lo}, {hi}] are empty");
                    }
                    s = s.with_support(lo, hi);
                }
                SpaceConfig::Wasserstein(s)
            }
            SpaceId::Laplacian => {
                let l = (width as f64).sqrt().round() as usize;
                if l * l != width || l < 2 {
                    bail!("{width} columns is not the square of a node count of at least 2");
                }
                let mut s = LaplacianSpace::new(l);
                if let Some(w) = o.weight_bound {
                    if !(w > 0.0) {
                        bail!("weight bound must be positive");
                    }
                    s = s.with_weight_bound(w);
                }
                SpaceConfig::Laplacian(s)
            }
            SpaceId::Sphere => {
                if width < 2 {
                    bail!("sphere points need at least 2 coordinates");
                }
                let mut s = if o.positive_orthant || o.simplex {
                    SphereSpace::compositional(width)
                } else {
                    SphereSpace::new(width)
                };
                if let Some(n) = o.numeric {
                    s = s.with_numeric(n);
                }
                SpaceConfig::Sphere(s)
            }
            SpaceId::Euclidean => SpaceConfig::Euclidean(EuclideanSpace::new(width)),
        })
    }
}
