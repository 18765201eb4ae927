//! Unit sphere `S^{d-1}` with the great-circle metric; compositional data
//! live on its positive orthant after the square-root transformation.

use serde::{Deserialize, Serialize};

use super::{dot, SpaceConfig, SpaceId};
use crate::error::{check_dim, GeoError, Result};
use crate::geodesic::GeodesicSpace;
use crate::settings::NumericSettings;

const NORM_TOL: f64 = 1e-12;
const SMALL_ANGLE: f64 = 1e-12;
/// Sufficient-decrease constant of the Karcher line search.
const ARMIJO: f64 = 1e-4;
const LINE_SEARCH_HALVINGS: usize = 40;
/// Gradient norm accepted when rounding stops the objective from decreasing.
const STALL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint(pub Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereSpace {
    pub dim: usize,
    #[serde(default)]
    pub positive_orthant: bool,
    /// Points with `z1 · z2 <= -1 + antipodal_tol` have no unique geodesic.
    #[serde(default = "default_antipodal_tol")]
    pub antipodal_tol: f64,
    #[serde(default)]
    pub numeric: NumericSettings,
}

fn default_antipodal_tol() -> f64 {
    1e-9
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn axpy(a: f64, x: &[f64], b: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| a * xi + b * yi).collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    for x in &mut v {
        *x /= n;
    }
    v
}

/// Great-circle angle between unit vectors. Computed as
/// `2·atan2(|a − b|, |a + b|)`, which equals `arccos(a · b)` but keeps full
/// precision for nearly equal or nearly antipodal points.
fn angle(a: &[f64], b: &[f64]) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

impl SphereSpace {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            positive_orthant: false,
            antipodal_tol: default_antipodal_tol(),
            numeric: NumericSettings::default(),
        }
    }

    /// The orthant of `S^{d-1}` holding square-root transformed compositions.
    pub fn compositional(dim: usize) -> Self {
        Self {
            positive_orthant: true,
            ..Self::new(dim)
        }
    }

    pub fn with_numeric(mut self, numeric: NumericSettings) -> Self {
        self.numeric = numeric;
        self
    }

    pub fn point(&self, coords: Vec<f64>) -> Result<SpherePoint> {
        let coords = if self.positive_orthant {
            coords
                .into_iter()
                .map(|x| {
                    if (-NORM_TOL..0.0).contains(&x) {
                        0.0
                    } else {
                        x
                    }
                })
                .collect()
        } else {
            coords
        };
        self.decode(&coords)
    }

    /// Maps simplex proportions to the sphere via `y ↦ sqrt(y)`.
    pub fn from_simplex(&self, proportions: &[f64]) -> Result<SpherePoint> {
        check_dim(self.dim, proportions.len())?;
        if proportions.iter().any(|&y| !(y >= 0.0) || !y.is_finite()) {
            return Err(GeoError::invalid(
                "proportions must be finite and nonnegative",
            ));
        }
        let total: f64 = proportions.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(GeoError::invalid(format!("proportions sum to {total}")));
        }
        let z = normalized(proportions.iter().map(|y| y.sqrt()).collect());
        self.point(z)
    }

    /// Riemannian exponential map at `x`.
    pub fn exp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let n = norm(v);
        if n < SMALL_ANGLE {
            return x.to_vec();
        }
        normalized(axpy(n.cos(), x, n.sin() / n, v))
    }

    /// Riemannian logarithm at `x`; fails for antipodal points.
    pub fn log(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_not_antipodal(x, y)?;
        let theta = angle(x, y);
        let c = dot(x, y);
        let u = axpy(1.0, y, -c, x);
        let un = norm(&u);
        if theta < SMALL_ANGLE || un == 0.0 {
            return Ok(vec![0.0; x.len()]);
        }
        Ok(u.into_iter().map(|ui| ui * theta / un).collect())
    }

    /// `acc += w · Log_x(y)` without allocating.
    fn add_log(&self, x: &[f64], y: &[f64], w: f64, acc: &mut [f64]) -> Result<()> {
        let c = dot(x, y);
        if c <= -1.0 + self.antipodal_tol {
            return self.check_not_antipodal(x, y);
        }
        let un = x
            .iter()
            .zip(y)
            .map(|(xi, yi)| (yi - c * xi) * (yi - c * xi))
            .sum::<f64>()
            .sqrt();
        // |y − (x·y)x| = sin θ, so this is the angle without a second pass.
        let theta = un.atan2(c);
        if theta < SMALL_ANGLE || un == 0.0 {
            return Ok(());
        }
        let f = w * theta / un;
        for ((a, xi), yi) in acc.iter_mut().zip(x).zip(y) {
            *a += f * (yi - c * xi);
        }
        Ok(())
    }

    /// Karcher mean on `S^{D-1}` with stack-allocated vectors.
    ///
    /// Each iteration tries the Newton step on the tangent space and falls
    /// back to the gradient step `Σ w_i Log_x(y_i)` when the Newton direction
    /// is unusable. Both are shortened by backtracking until the objective
    /// `½ Σ w_i d²(x, y_i)` decreases, which keeps the iteration from cycling
    /// on spread-out data where the objective is far from quadratic.
    fn karcher_fixed<const D: usize>(
        &self,
        points: &[&SpherePoint],
        weights: &[f64],
        start: &[f64],
    ) -> Result<SpherePoint> {
        let mut x = [0.0; D];
        x.copy_from_slice(start);
        let mut cur = self.karcher_state::<D>(points, weights, &x)?;
        let total_weight: f64 = weights.iter().map(|w| w.abs()).sum();
        for _ in 0..self.numeric.max_iter {
            let step = norm(&cur.grad);
            if step < self.numeric.mean_tol {
                return Ok(SpherePoint(x.to_vec()));
            }
            let newton = newton_step(cur.radial, &cur.outer, &x, &cur.grad);
            // An unshifted Newton step estimates the distance to the minimizer;
            // it resolves convergence where a large Hessian near the cut
            // locus magnifies rounding in the gradient.
            if let Some((v, 0.0)) = newton {
                if norm(&v) < self.numeric.mean_tol {
                    return Ok(SpherePoint(x.to_vec()));
                }
            }
            let newton = newton.map(|(v, _)| v);
            let mut moved = false;
            for dir in newton.into_iter().chain([cur.grad]) {
                let slope = dot(&dir, &cur.grad);
                let mut t = 1.0;
                for _ in 0..LINE_SEARCH_HALVINGS {
                    let trial_dir = dir.map(|d| t * d);
                    let trial = exp_fixed(&x, &trial_dir);
                    if trial == x {
                        break;
                    }
                    let next = self.karcher_state::<D>(points, weights, &trial)?;
                    // Rounding in each angle perturbs the objective by about
                    // ε·Σ w θ ≤ ε·sqrt(2 f Σ w).
                    let f = cur.objective.abs();
                    let slack = 8.0 * f64::EPSILON * (f + (2.0 * f * total_weight).sqrt());
                    if next.objective <= cur.objective - ARMIJO * t * slope + slack {
                        x = trial;
                        cur = next;
                        moved = true;
                        break;
                    }
                    t *= 0.5;
                }
                if moved {
                    break;
                }
            }
            if !moved {
                // No direction lowers the objective beyond rounding: x is a
                // minimizer to working precision.
                if step < STALL_TOL {
                    return Ok(SpherePoint(x.to_vec()));
                }
                return Err(GeoError::Convergence {
                    iterations: self.numeric.max_iter,
                    last_step: step,
                });
            }
        }
        let step = norm(&cur.grad);
        if step < self.numeric.mean_tol {
            return Ok(SpherePoint(x.to_vec()));
        }
        Err(GeoError::Convergence {
            iterations: self.numeric.max_iter,
            last_step: step,
        })
    }

    /// Objective, negative gradient and Hessian pieces of the Karcher
    /// objective at `x`.
    fn karcher_state<const D: usize>(
        &self,
        points: &[&SpherePoint],
        weights: &[f64],
        x: &[f64; D],
    ) -> Result<KarcherState<D>> {
        let mut st = KarcherState {
            objective: 0.0,
            grad: [0.0; D],
            radial: 0.0,
            outer: [[0.0; D]; D],
        };
        for (p, &w) in points.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let y: &[f64; D] = p.0.as_slice().try_into().expect("dimension checked");
            let c = dot(x, y);
            if c <= -1.0 + self.antipodal_tol {
                return Err(self.check_not_antipodal(x, y).unwrap_err());
            }
            let mut u = [0.0; D];
            for k in 0..D {
                u[k] = y[k] - c * x[k];
            }
            let un = norm(&u);
            let theta = un.atan2(c);
            st.objective += 0.5 * w * theta * theta;
            if theta < SMALL_ANGLE || un == 0.0 {
                st.radial += w;
                continue;
            }
            let f = w * theta / un;
            for (g, uk) in st.grad.iter_mut().zip(&u) {
                *g += f * uk;
            }
            // Hessian: 1 along the geodesic, θ·cot θ across it.
            let t_cot = theta * c / un;
            st.radial += w * t_cot;
            let g = w * (1.0 - t_cot) / (un * un);
            for r in 0..D {
                for k in 0..D {
                    st.outer[r][k] += g * u[r] * u[k];
                }
            }
        }
        Ok(st)
    }

    fn check_not_antipodal(&self, a: &[f64], b: &[f64]) -> Result<()> {
        if dot(a, b) <= -1.0 + self.antipodal_tol {
            Err(GeoError::Geometry(
                "antipodal points have no unique geodesic".into(),
            ))
        } else {
            Ok(())
        }
    }
}

struct KarcherState<const D: usize> {
    objective: f64,
    /// `Σ w_i Log_x(y_i)`, the negative Riemannian gradient.
    grad: [f64; D],
    radial: f64,
    outer: [[f64; D]; D],
}

pub struct SphereRotation {
    start: SpherePoint,
    end: SpherePoint,
    theta: f64,
    cos_theta: f64,
    sin_theta: f64,
    /// `β − (α·β)α`, the initial direction of the geodesic.
    direction: Vec<f64>,
}

/// Writes the transported point into `out`; `false` means `omega` is unchanged.
fn rotate_into(plan: &SphereRotation, w: &[f64], out: &mut [f64]) -> bool {
    if plan.theta < SMALL_ANGLE {
        return false;
    }
    let proj = dot(w, &plan.direction);
    let vn = plan
        .direction
        .iter()
        .zip(w)
        .map(|(d, wi)| (d - proj * wi) * (d - proj * wi))
        .sum::<f64>()
        .sqrt();
    if vn < SMALL_ANGLE {
        return false;
    }
    let (c, s) = (plan.cos_theta, plan.sin_theta / vn);
    for ((o, d), wi) in out.iter_mut().zip(&plan.direction).zip(w) {
        *o = c * wi + s * (d - proj * wi);
    }
    let n = norm(out);
    for o in out.iter_mut() {
        *o /= n;
    }
    true
}

fn exp_fixed<const D: usize>(x: &[f64; D], v: &[f64; D]) -> [f64; D] {
    let n = norm(v);
    if n < SMALL_ANGLE {
        return *x;
    }
    let (c, s) = (n.cos(), n.sin() / n);
    let mut out = [0.0; D];
    for k in 0..D {
        out[k] = c * x[k] + s * v[k];
    }
    let len = norm(&out);
    out.map(|o| o / len)
}

/// Solves `(H + μ(I − xxᵀ)) v = g` on the tangent space at `x` for
/// `H = radial·(I − xxᵀ) + outer`, with unit weight on the normal direction.
/// The shift `μ ≥ 0` is the smallest tried value that makes the system
/// positive definite, so `v` is a descent direction even where the objective
/// is not convex; it is returned with `v`. `None` if no shift works or the
/// result is not finite.
fn newton_step<const D: usize>(
    radial: f64,
    outer: &[[f64; D]; D],
    x: &[f64; D],
    g: &[f64; D],
) -> Option<([f64; D], f64)> {
    let mut h = [[0.0; D]; D];
    let mut scale = 0.0f64;
    for r in 0..D {
        for c in 0..D {
            let eye = if r == c { 1.0 } else { 0.0 };
            h[r][c] = radial * (eye - x[r] * x[c]) + outer[r][c] + x[r] * x[c];
            scale = scale.max(h[r][c].abs());
        }
    }
    let mut shift = 0.0;
    while shift <= 1e6 * scale.max(1.0) {
        let mut shifted = h;
        for r in 0..D {
            for c in 0..D {
                let eye = if r == c { 1.0 } else { 0.0 };
                shifted[r][c] += shift * (eye - x[r] * x[c]);
            }
        }
        if let Some(v) = cholesky_solve(&shifted, g) {
            let along = dot(x, &v);
            let v = std::array::from_fn(|k| v[k] - along * x[k]);
            return (v.iter().all(|e: &f64| e.is_finite()) && dot(&v, g) > 0.0)
                .then_some((v, shift));
        }
        shift = if shift == 0.0 {
            1e-8 * scale.max(1.0)
        } else {
            shift * 10.0
        };
    }
    None
}

/// Solves `a v = b` for symmetric `a`; `None` unless `a` is numerically
/// positive definite.
fn cholesky_solve<const D: usize>(a: &[[f64; D]; D], b: &[f64; D]) -> Option<[f64; D]> {
    let mut l = [[0.0; D]; D];
    let diag_scale = (0..D).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    for i in 0..D {
        for j in 0..=i {
            let mut sum = a[i][j];
            for (a, b) in l[i][..j].iter().zip(&l[j][..j]) {
                sum -= a * b;
            }
            if i == j {
                if !(sum > 1e-12 * diag_scale) {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = [0.0; D];
    for i in 0..D {
        let tail: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - tail) / l[i][i];
    }
    let mut v = [0.0; D];
    for i in (0..D).rev() {
        let tail: f64 = (i + 1..D).map(|k| l[k][i] * v[k]).sum();
        v[i] = (y[i] - tail) / l[i][i];
    }
    Some(v)
}

impl GeodesicSpace for SphereSpace {
    type Point = SpherePoint;
    type Plan = SphereRotation;

    fn id(&self) -> SpaceId {
        SpaceId::Sphere
    }

    fn config(&self) -> SpaceConfig {
        SpaceConfig::Sphere(*self)
    }

    fn point_len(&self) -> usize {
        self.dim
    }

    fn coords<'a>(&self, p: &'a SpherePoint) -> &'a [f64] {
        &p.0
    }

    fn from_coords(&self, coords: Vec<f64>) -> SpherePoint {
        SpherePoint(coords)
    }

    fn validate(&self, p: &SpherePoint) -> Result<()> {
        check_dim(self.dim, p.0.len())?;
        if p.0.iter().any(|x| !x.is_finite()) {
            return Err(GeoError::invalid("non-finite coordinate"));
        }
        let n = norm(&p.0);
        if (n - 1.0).abs() > NORM_TOL {
            return Err(GeoError::invalid(format!("norm {n} is not 1")));
        }
        if self.positive_orthant && p.0.iter().any(|&x| x < 0.0) {
            return Err(GeoError::invalid(
                "negative coordinate outside the positive orthant",
            ));
        }
        Ok(())
    }

    fn dist(&self, a: &SpherePoint, b: &SpherePoint) -> Result<f64> {
        check_dim(a.0.len(), b.0.len())?;
        Ok(angle(&a.0, &b.0))
    }

    fn interpolate(&self, a: &SpherePoint, b: &SpherePoint, t: f64) -> Result<SpherePoint> {
        check_dim(a.0.len(), b.0.len())?;
        if t == 0.0 {
            return Ok(a.clone());
        }
        if t == 1.0 {
            return Ok(b.clone());
        }
        self.check_not_antipodal(&a.0, &b.0)?;
        let theta = angle(&a.0, &b.0);
        if theta < SMALL_ANGLE {
            return Ok(a.clone());
        }
        let u = axpy(1.0, &b.0, -dot(&a.0, &b.0), &a.0);
        let un = norm(&u);
        Ok(SpherePoint(normalized(axpy(
            (t * theta).cos(),
            &a.0,
            (t * theta).sin() / un,
            &u,
        ))))
    }

    fn plan(&self, start: &SpherePoint, end: &SpherePoint) -> Result<SphereRotation> {
        check_dim(self.dim, start.0.len())?;
        check_dim(self.dim, end.0.len())?;
        self.check_not_antipodal(&start.0, &end.0)?;
        let theta = angle(&start.0, &end.0);
        Ok(SphereRotation {
            start: start.clone(),
            end: end.clone(),
            theta,
            cos_theta: theta.cos(),
            sin_theta: theta.sin(),
            direction: axpy(1.0, &end.0, -dot(&start.0, &end.0), &start.0),
        })
    }

    fn apply(&self, plan: &SphereRotation, omega: &SpherePoint) -> Result<SpherePoint> {
        check_dim(self.dim, omega.0.len())?;
        if *omega == plan.start {
            return Ok(plan.end.clone());
        }
        let mut out = vec![0.0; self.dim];
        Ok(if rotate_into(plan, &omega.0, &mut out) {
            SpherePoint(out)
        } else {
            omega.clone()
        })
    }

    fn transport_dist_sq(
        &self,
        plan: &SphereRotation,
        omega: &SpherePoint,
        target: &SpherePoint,
    ) -> Result<f64> {
        check_dim(self.dim, omega.0.len())?;
        check_dim(self.dim, target.0.len())?;
        if *omega == plan.start {
            return Ok(angle(&plan.end.0, &target.0).powi(2));
        }
        let mut stack = [0.0; 8];
        let mut heap = Vec::new();
        let out = if self.dim <= stack.len() {
            &mut stack[..self.dim]
        } else {
            heap.resize(self.dim, 0.0);
            &mut heap[..]
        };
        let moved = if rotate_into(plan, &omega.0, out) {
            &*out
        } else {
            &omega.0[..]
        };
        Ok(angle(moved, &target.0).powi(2))
    }

    /// Karcher mean: `x ← Exp_x(Σ w_i Log_x(y_i))` from the normalized
    /// extrinsic mean (or `hint`).
    fn mean(
        &self,
        points: &[&SpherePoint],
        weights: &[f64],
        hint: Option<&SpherePoint>,
    ) -> Result<SpherePoint> {
        for p in points {
            check_dim(self.dim, p.0.len())?;
        }
        let mut x = match hint {
            Some(h) => h.0.clone(),
            None => {
                let mut m = vec![0.0; self.dim];
                for (p, &w) in points.iter().zip(weights) {
                    for (mi, pi) in m.iter_mut().zip(&p.0) {
                        *mi += w * pi;
                    }
                }
                if norm(&m) < 1e-12 {
                    return Err(GeoError::Geometry(
                        "extrinsic mean vanishes; Fréchet mean is not unique".into(),
                    ));
                }
                normalized(m)
            }
        };
        match self.dim {
            2 => return self.karcher_fixed::<2>(points, weights, &x),
            3 => return self.karcher_fixed::<3>(points, weights, &x),
            4 => return self.karcher_fixed::<4>(points, weights, &x),
            _ => {}
        }
        let objective = |x: &[f64]| -> f64 {
            points
                .iter()
                .zip(weights)
                .map(|(p, &w)| {
                    let t = angle(x, &p.0);
                    0.5 * w * t * t
                })
                .sum()
        };
        let gradient = |x: &[f64]| -> Result<Vec<f64>> {
            let mut grad = vec![0.0; self.dim];
            for (p, &w) in points.iter().zip(weights) {
                if w != 0.0 {
                    self.add_log(x, &p.0, w, &mut grad)?;
                }
            }
            Ok(grad)
        };
        let total_weight: f64 = weights.iter().map(|w| w.abs()).sum();
        let mut f = objective(&x);
        let mut grad = gradient(&x)?;
        for _ in 0..self.numeric.max_iter {
            let step = norm(&grad);
            if step < self.numeric.mean_tol {
                return Ok(SpherePoint(x));
            }
            let slope = dot(&grad, &grad);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..LINE_SEARCH_HALVINGS {
                let scaled: Vec<f64> = grad.iter().map(|g| t * g).collect();
                let trial = self.exp(&x, &scaled);
                if trial == x {
                    break;
                }
                let ft = objective(&trial);
                let slack = 8.0 * f64::EPSILON * (f.abs() + (2.0 * f.abs() * total_weight).sqrt());
                if ft <= f - ARMIJO * t * slope + slack {
                    x = trial;
                    f = ft;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                if step < STALL_TOL {
                    return Ok(SpherePoint(x));
                }
                break;
            }
            grad = gradient(&x)?;
        }
        let step = norm(&grad);
        if step < self.numeric.mean_tol {
            return Ok(SpherePoint(x));
        }
        Err(GeoError::Convergence {
            iterations: self.numeric.max_iter,
            last_step: step,
        })
    }

    /// Zeroes negative coordinates and renormalizes on the positive orthant.
    fn finalize(&self, p: SpherePoint) -> SpherePoint {
        if !self.positive_orthant || p.0.iter().all(|&x| x >= 0.0) {
            return p;
        }
        let clipped: Vec<f64> = p.0.iter().map(|&x| x.max(0.0)).collect();
        if norm(&clipped) == 0.0 {
            return p;
        }
        SpherePoint(normalized(clipped))
    }
}
