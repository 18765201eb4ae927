//! Versioned JSON model files.
//!
//! Points are stored in their flat coordinate encoding. Floats are written
//! in shortest round-trip form, so a saved and reloaded model predicts
//! bit-identically.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boost::{BoostParams, Ensemble, RiskTrace};
use crate::error::{GeoError, Result};
use crate::geodesic::{GeodesicPair, GeodesicSpace};
use crate::spaces::SpaceConfig;
use crate::tree::{GeoTree, TreeNode};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub space: SpaceConfig,
    pub n_features: usize,
    pub learning_rate: f64,
    pub y0: Vec<f64>,
    pub trees: Vec<Vec<NodeRecord>>,
    #[serde(default)]
    pub trace: RiskTrace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<BoostParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeRecord {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf {
        start: Vec<f64>,
        end: Vec<f64>,
        count: usize,
    },
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

impl ModelFile {
    pub fn from_ensemble<S: GeodesicSpace>(
        ensemble: &Ensemble<S>,
        params: Option<BoostParams>,
    ) -> Self {
        let space = ensemble.space();
        let trees = ensemble
            .trees()
            .iter()
            .map(|t| {
                t.nodes()
                    .iter()
                    .map(|node| match node {
                        TreeNode::Split {
                            feature,
                            threshold,
                            left,
                            right,
                            gain,
                        } => NodeRecord::Split {
                            feature: *feature,
                            threshold: *threshold,
                            left: *left,
                            right: *right,
                            gain: *gain,
                        },
                        TreeNode::Leaf { geodesic, count } => NodeRecord::Leaf {
                            start: space.coords(&geodesic.start).to_vec(),
                            end: space.coords(&geodesic.end).to_vec(),
                            count: *count,
                        },
                    })
                    .collect()
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            space: space.config(),
            n_features: ensemble.n_features(),
            learning_rate: ensemble.learning_rate(),
            y0: space.coords(ensemble.y0()).to_vec(),
            trees,
            trace: ensemble.trace().clone(),
            params,
        }
    }

    /// Rebuilds the ensemble for `space`, which must match the stored space.
    pub fn into_ensemble<S: GeodesicSpace>(self, space: S) -> Result<Ensemble<S>> {
        if space.config() != self.space {
            return Err(GeoError::SpaceMismatch {
                model: describe(&self.space),
                requested: describe(&space.config()),
            });
        }
        let point = |coords: Vec<f64>| -> Result<S::Point> {
            if coords.len() != space.point_len() {
                return Err(GeoError::DimensionMismatch {
                    expected: space.point_len(),
                    found: coords.len(),
                });
            }
            if coords.iter().any(|v| !v.is_finite()) {
                return Err(GeoError::invalid("non-finite coordinate in model file"));
            }
            Ok(space.from_coords(coords))
        };
        let y0 = point(self.y0)?;
        let mut trees = Vec::with_capacity(self.trees.len());
        for records in self.trees {
            let nodes = records
                .into_iter()
                .map(|r| match r {
                    NodeRecord::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        gain,
                    } => Ok(TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        gain,
                    }),
                    NodeRecord::Leaf { start, end, count } => Ok(TreeNode::Leaf {
                        geodesic: GeodesicPair::new(point(start)?, point(end)?),
                        count,
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            trees.push(GeoTree::from_nodes(nodes, self.n_features)?);
        }
        Ensemble::from_parts(
            space,
            y0,
            self.learning_rate,
            trees,
            self.n_features,
            self.trace,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.format_version != FORMAT_VERSION {
            return Err(GeoError::VersionMismatch {
                expected: FORMAT_VERSION,
                found: probe.format_version,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

fn describe(cfg: &SpaceConfig) -> String {
    serde_json::to_string(cfg).unwrap_or_else(|_| cfg.id().to_string())
}
