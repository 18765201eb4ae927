//! Gradient boosting for responses that live in geodesic metric spaces.
//!
//! Each boosting round fits a regression tree to geodesic pseudo-residuals
//! (the geodesics from current predictions to observed responses) and moves
//! every prediction along its leaf's representative geodesic with the
//! space's transport map. Supported response spaces are one-dimensional
//! distributions under the Wasserstein metric, graph Laplacians under the
//! Frobenius metric, the unit sphere (compositional data) and plain vectors.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boost;
pub mod error;
pub mod geodesic;
pub mod model;
pub mod settings;
pub mod shap;
pub mod sim;
pub mod spaces;
pub mod tree;

pub use boost::{fit, BoostParams, Ensemble, RiskTrace};
pub use error::{GeoError, Result};
pub use geodesic::{
    frechet_mean, frechet_mean_refs, geo_add, geo_dist, geo_dist_sq, geo_reverse, geo_scale,
    geodesic_frechet_mean, GeodesicPair, GeodesicSpace,
};
pub use model::{ModelFile, FORMAT_VERSION};
pub use settings::NumericSettings;
pub use spaces::{SpaceConfig, SpaceId};
pub use tree::{fit_tree, GeoTree, SplitCriterion, TreeParams};
