use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by the space backends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericSettings {
    /// Slack allowed when checking metric and transport identities.
    pub metric_tol: f64,
    /// Step-norm threshold for iterative Fréchet means.
    pub mean_tol: f64,
    pub max_iter: usize,
}

impl Default for NumericSettings {
    fn default() -> Self {
        Self {
            metric_tol: 1e-9,
            mean_tol: 1e-10,
            max_iter: 100,
        }
    }
}
