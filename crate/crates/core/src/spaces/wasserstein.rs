//! One-dimensional distributions under the 2-Wasserstein metric.
//!
//! A distribution is stored as its quantile function sampled on the midpoint
//! grid `p_k = (2k - 1) / (2m)`. On this representation the metric is the
//! root mean squared quantile difference, McCann's interpolant is pointwise
//! linear interpolation and the Fréchet mean is the pointwise average.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use super::{pava, sq_diff_sum, weighted_average, SpaceConfig, SpaceId};
use crate::error::{check_dim, GeoError, Result};
use crate::geodesic::GeodesicSpace;

/// Quantile values on the midpoint grid, non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileDistribution(pub Vec<f64>);

impl QuantileDistribution {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Midpoint probability grid of size `m`.
pub fn quantile_grid(m: usize) -> Vec<f64> {
    (1..=m)
        .map(|k| (2 * k - 1) as f64 / (2 * m) as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WassersteinSpace {
    pub grid_size: usize,
    /// Optional support `[lo, hi]` every quantile must lie in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<[f64; 2]>,
}

impl Default for WassersteinSpace {
    fn default() -> Self {
        Self::new(100)
    }
}

impl WassersteinSpace {
    pub fn new(grid_size: usize) -> Self {
        Self {
            grid_size,
            support: None,
        }
    }

    pub fn with_support(mut self, lo: f64, hi: f64) -> Self {
        self.support = Some([lo, hi]);
        self
    }

    pub fn grid(&self) -> Vec<f64> {
        quantile_grid(self.grid_size)
    }

    pub fn point(&self, values: Vec<f64>) -> Result<QuantileDistribution> {
        self.decode(&values)
    }

    /// Empirical quantile function of `obs` on the grid.
    ///
    /// Uses the piecewise-linear rule with knots at `(j - 1/2) / n` for the
    /// j-th order statistic (Hyndman-Fan type 5), constant beyond the first
    /// and last knot. With `n == m` the grid values are the order statistics.
    pub fn quantile_from_sample(&self, obs: &[f64]) -> Result<QuantileDistribution> {
        if obs.is_empty() {
            return Err(GeoError::InvalidArgument("empty sample".into()));
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::InvalidArgument("non-finite observation".into()));
        }
        let mut sorted = obs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let values = self
            .grid()
            .into_iter()
            .map(|p| {
                let h = n as f64 * p + 0.5;
                let j = h.floor();
                if j < 1.0 {
                    sorted[0]
                } else if j >= n as f64 {
                    sorted[n - 1]
                } else {
                    let lo = sorted[j as usize - 1];
                    let hi = sorted[j as usize];
                    lo + (h - j) * (hi - lo)
                }
            })
            .collect();
        let mut q = QuantileDistribution(values);
        self.clamp_to_support(&mut q.0);
        Ok(q)
    }

    fn transport_into(&self, plan: &QuantileMap, omega: &QuantileDistribution, out: &mut Vec<f64>) {
        plan.eval_sorted(&omega.0, out);
        self.clamp_to_support(out);
        pava::monotonize(out);
    }

    /// Clamps and, if rounding broke monotonicity, pools the transported
    /// values in `out`, returning their squared distance to `target`.
    fn finish_dist_sq(&self, out: &mut [f64], target: &QuantileDistribution) -> f64 {
        self.clamp_to_support(out);
        // The map is monotone, so pooling is only needed after rounding.
        let mut monotone = true;
        let mut total = 0.0;
        let mut prev = f64::NEG_INFINITY;
        for (&v, &t) in out.iter().zip(&target.0) {
            monotone &= prev <= v;
            prev = v;
            total += (v - t) * (v - t);
        }
        if !monotone {
            pava::monotonize(out);
            total = sq_diff_sum(&target.0, out);
        }
        total / self.grid_size as f64
    }

    fn clamp_to_support(&self, values: &mut [f64]) {
        if let Some([lo, hi]) = self.support {
            for v in values {
                *v = v.clamp(lo, hi);
            }
        }
    }
}

thread_local! {
    static SCRATCH: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

/// Precomputed map `x ↦ Q_β(F_α(x))`, piecewise linear through the knots
/// `(α_k, β_k)` and extended affinely beyond the range of `α`.
pub struct QuantileMap {
    start: QuantileDistribution,
    end: QuantileDistribution,
    /// Value taken exactly at `α_k`; differs from `β_k` only inside runs of
    /// tied `α` values, where `F_α` takes the middle of the flat interval.
    at_knot: Vec<f64>,
    /// Slope of each segment between consecutive distinct knots.
    slope: Vec<f64>,
    slope_lo: f64,
    slope_hi: f64,
    trivial: bool,
}

impl QuantileMap {
    fn new(start: &QuantileDistribution, end: &QuantileDistribution) -> Self {
        let a = &start.0;
        let b = &end.0;
        let m = a.len();
        let mut at_knot = vec![0.0; m];
        let mut s = 0;
        while s < m {
            let mut e = s;
            while e + 1 < m && a[e + 1] == a[s] {
                e += 1;
            }
            let mid = s + e;
            let v = if mid % 2 == 0 {
                b[mid / 2]
            } else {
                0.5 * (b[mid / 2] + b[mid / 2 + 1])
            };
            at_knot[s..=e].fill(v);
            s = e + 1;
        }
        let segment_slope = |j: usize| (b[j + 1] - b[j]) / (a[j + 1] - a[j]);
        let slope = (0..m)
            .map(|j| {
                if j + 1 < m && a[j] < a[j + 1] {
                    segment_slope(j)
                } else {
                    0.0
                }
            })
            .collect();
        let slope_lo = (0..m.saturating_sub(1))
            .find(|&j| a[j] < a[j + 1])
            .map_or(1.0, segment_slope);
        let slope_hi = (0..m.saturating_sub(1))
            .rev()
            .find(|&j| a[j] < a[j + 1])
            .map_or(1.0, segment_slope);
        Self {
            start: start.clone(),
            end: end.clone(),
            at_knot,
            slope,
            slope_lo,
            slope_hi,
            trivial: start == end,
        }
    }

    /// Evaluates the map on a non-decreasing sequence, writing into `out`.
    fn eval_sorted(&self, xs: &[f64], out: &mut Vec<f64>) {
        let a = &self.start.0;
        let b = &self.end.0;
        let m = a.len();
        let n = xs.len();
        out.clear();
        out.resize(n, 0.0);
        let (a_first, a_last) = (a[0], a[m - 1]);
        let mut lo = 0;
        while lo < n && xs[lo] < a_first {
            out[lo] = b[0] + (xs[lo] - a_first) * self.slope_lo;
            lo += 1;
        }
        let mut hi = n;
        while hi > lo && xs[hi - 1] > a_last {
            hi -= 1;
            out[hi] = b[m - 1] + (xs[hi] - a_last) * self.slope_hi;
        }
        let mut j = 0;
        for (o, &x) in out[lo..hi].iter_mut().zip(&xs[lo..hi]) {
            // Largest j with a[j] <= x; xs is sorted so j only moves forward.
            while j + 1 < m && a[j + 1] <= x {
                j += 1;
            }
            *o = if a[j] == x {
                self.at_knot[j]
            } else {
                b[j] + (x - a[j]) * self.slope[j]
            };
        }
    }
}

impl GeodesicSpace for WassersteinSpace {
    type Point = QuantileDistribution;
    type Plan = QuantileMap;

    fn id(&self) -> SpaceId {
        SpaceId::Wasserstein
    }

    fn config(&self) -> SpaceConfig {
        SpaceConfig::Wasserstein(*self)
    }

    fn point_len(&self) -> usize {
        self.grid_size
    }

    fn coords<'a>(&self, p: &'a QuantileDistribution) -> &'a [f64] {
        &p.0
    }

    fn from_coords(&self, coords: Vec<f64>) -> QuantileDistribution {
        QuantileDistribution(coords)
    }

    fn validate(&self, p: &QuantileDistribution) -> Result<()> {
        check_dim(self.grid_size, p.0.len())?;
        if p.0.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::invalid("non-finite quantile"));
        }
        if let Some(k) = p.0.windows(2).position(|w| w[0] > w[1]) {
            return Err(GeoError::invalid(format!(
                "quantiles decrease between positions {k} and {}",
                k + 1
            )));
        }
        if let Some([lo, hi]) = self.support {
            if p.0[0] < lo || p.0[p.0.len() - 1] > hi {
                return Err(GeoError::invalid(format!(
                    "quantiles leave the support [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    fn dist(&self, a: &QuantileDistribution, b: &QuantileDistribution) -> Result<f64> {
        self.dist_sq(a, b).map(f64::sqrt)
    }

    fn dist_sq(&self, a: &QuantileDistribution, b: &QuantileDistribution) -> Result<f64> {
        check_dim(a.0.len(), b.0.len())?;
        Ok(sq_diff_sum(&a.0, &b.0) / a.0.len() as f64)
    }

    fn interpolate(
        &self,
        a: &QuantileDistribution,
        b: &QuantileDistribution,
        t: f64,
    ) -> Result<QuantileDistribution> {
        check_dim(a.0.len(), b.0.len())?;
        if t == 0.0 {
            return Ok(a.clone());
        }
        if t == 1.0 {
            return Ok(b.clone());
        }
        Ok(QuantileDistribution(
            a.0.iter()
                .zip(&b.0)
                .map(|(x, y)| (1.0 - t) * x + t * y)
                .collect(),
        ))
    }

    fn plan(
        &self,
        start: &QuantileDistribution,
        end: &QuantileDistribution,
    ) -> Result<QuantileMap> {
        check_dim(self.grid_size, start.0.len())?;
        check_dim(self.grid_size, end.0.len())?;
        Ok(QuantileMap::new(start, end))
    }

    fn apply(
        &self,
        plan: &QuantileMap,
        omega: &QuantileDistribution,
    ) -> Result<QuantileDistribution> {
        check_dim(self.grid_size, omega.0.len())?;
        if *omega == plan.start {
            return Ok(plan.end.clone());
        }
        if plan.trivial {
            return Ok(omega.clone());
        }
        let mut out = Vec::with_capacity(omega.0.len());
        self.transport_into(plan, omega, &mut out);
        Ok(QuantileDistribution(out))
    }

    fn transport_dist_sq(
        &self,
        plan: &QuantileMap,
        omega: &QuantileDistribution,
        target: &QuantileDistribution,
    ) -> Result<f64> {
        check_dim(self.grid_size, omega.0.len())?;
        check_dim(self.grid_size, target.0.len())?;
        if *omega == plan.start {
            return self.dist_sq(target, &plan.end);
        }
        if plan.trivial {
            return self.dist_sq(target, omega);
        }
        Ok(SCRATCH.with(|buf| {
            let mut out = buf.borrow_mut();
            plan.eval_sorted(&omega.0, &mut out);
            self.finish_dist_sq(&mut out, target)
        }))
    }

    fn mean(
        &self,
        points: &[&QuantileDistribution],
        weights: &[f64],
        _hint: Option<&QuantileDistribution>,
    ) -> Result<QuantileDistribution> {
        let rows: Vec<&[f64]> = points.iter().map(|p| p.0.as_slice()).collect();
        for r in &rows {
            check_dim(self.grid_size, r.len())?;
        }
        Ok(QuantileDistribution(weighted_average(&rows, weights)))
    }

    fn has_linear_mean(&self) -> bool {
        true
    }
}
