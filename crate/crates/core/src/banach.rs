//! Finite-dimensional `l_p` spaces: norms, duality maps, directional
//! derivatives of the norm and the modulus of uniform convexity.
//!
//! Vectors are plain `DVector<f64>`; the [`LpSpace`] carries the exponent
//! and dimension and checks every argument against them. Scalars are real.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default tolerance for the sphere/ball predicates.
pub const DEFAULT_GEOMETRY_TOL: f64 = 1e-9;

const MODULUS_GRID: usize = 10_000;
const BISECTION_STEPS: usize = 80;
const GOLDEN_STEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BanachError {
    #[error("exponent p = {0} must lie strictly inside (1, inf); p = 1 and p = inf are neither smooth nor uniformly convex")]
    InvalidExponent(f64),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("dimension mismatch: space has dimension {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("the duality map is undefined at the zero vector")]
    ZeroVector,
    #[error("modulus argument eps = {0} must lie in (0, 2]")]
    InvalidModulusArgument(f64),
}

/// `R^d` with the `l_p` norm, `1 < p < inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpSpace {
    dim: usize,
    p: f64,
}

/// A functional on an [`LpSpace`], represented by its coordinates in the
/// dual `l_q`, `q = p / (p - 1)`. Acts on vectors by the dot product.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFunctional(pub DVector<f64>);

impl DualFunctional {
    pub fn apply(&self, x: &DVector<f64>) -> f64 {
        self.0.dot(x)
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl LpSpace {
    pub fn new(dim: usize, p: f64) -> Result<Self, BanachError> {
        if !(p.is_finite() && p > 1.0) {
            return Err(BanachError::InvalidExponent(p));
        }
        if dim == 0 {
            return Err(BanachError::ZeroDimension);
        }
        Ok(Self { dim, p })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Conjugate exponent `q = p / (p - 1)`.
    pub fn q(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    pub fn is_hilbert(&self) -> bool {
        self.p == 2.0
    }

    pub fn check_dim(&self, len: usize) -> Result<(), BanachError> {
        if len != self.dim {
            return Err(BanachError::DimensionMismatch {
                expected: self.dim,
                found: len,
            });
        }
        Ok(())
    }

    pub fn norm(&self, x: &DVector<f64>) -> Result<f64, BanachError> {
        self.check_dim(x.len())?;
        Ok(lp_norm(x.as_slice(), self.p))
    }

    pub fn dual_norm(&self, f: &DualFunctional) -> Result<f64, BanachError> {
        self.check_dim(f.0.len())?;
        Ok(lp_norm(f.0.as_slice(), self.q()))
    }

    /// The norming functional `(x)*` with `(x)*(x) = ||x||^2 = ||(x)*||^2`.
    pub fn duality_map(&self, x: &DVector<f64>) -> Result<DualFunctional, BanachError> {
        self.check_dim(x.len())?;
        duality_map_raw(x, self.p)
            .map(DualFunctional)
            .ok_or(BanachError::ZeroVector)
    }

    /// Derivative of `t -> ||x + t y||` at `t = 0`, i.e. `(x)*(y) / ||x||`.
    pub fn gateaux_derivative(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<f64, BanachError> {
        self.check_dim(y.len())?;
        let f = self.duality_map(x)?;
        Ok(f.apply(y) / lp_norm(x.as_slice(), self.p))
    }

    /// Modulus of uniform convexity
    /// `delta(eps) = inf { 1 - ||(x + y) / 2|| : ||x|| = ||y|| = 1, ||x - y|| >= eps }`.
    ///
    /// For `l_p` the infimum is attained on a two-dimensional coordinate
    /// section, so for `d >= 2` it is computed by a grid scan over pairs on the
    /// unit circle of `l_p^2` followed by golden-section refinement. When
    /// `d = 1` the unit sphere is `{-1, 1}` and the only admissible pair is
    /// antipodal, so `delta = 1` for every `eps`.
    pub fn modulus_of_convexity(&self, eps: f64) -> Result<f64, BanachError> {
        if !(eps > 0.0 && eps <= 2.0) {
            return Err(BanachError::InvalidModulusArgument(eps));
        }
        // eps = 2 forces antipodal pairs; the chord bisection cannot resolve
        // that endpoint better than sqrt(machine epsilon).
        if self.dim == 1 || eps == 2.0 {
            return Ok(1.0);
        }
        Ok(modulus_2d(self.p, eps))
    }

    /// Closed form `1 - (1 - (eps/2)^p)^(1/p)`, valid for `p >= 2`.
    pub fn modulus_closed_form(&self, eps: f64) -> Option<f64> {
        (self.p >= 2.0 && eps > 0.0 && eps <= 2.0)
            .then(|| 1.0 - (1.0 - (eps / 2.0).powf(self.p)).powf(1.0 / self.p))
    }

    pub fn on_sphere(
        &self,
        center: &DVector<f64>,
        radius: f64,
        w: &DVector<f64>,
        tol: f64,
    ) -> Result<bool, BanachError> {
        self.check_dim(center.len())?;
        self.check_dim(w.len())?;
        Ok((lp_norm((center - w).as_slice(), self.p) - radius).abs() <= tol)
    }

    pub fn in_ball(
        &self,
        center: &DVector<f64>,
        radius: f64,
        w: &DVector<f64>,
        tol: f64,
    ) -> Result<bool, BanachError> {
        self.check_dim(center.len())?;
        self.check_dim(w.len())?;
        Ok(lp_norm((center - w).as_slice(), self.p) <= radius + tol)
    }

    /// Returns `x / ||x||`, or `None` for the zero vector.
    pub fn normalize(&self, x: &DVector<f64>) -> Result<Option<DVector<f64>>, BanachError> {
        let n = self.norm(x)?;
        Ok((n > 0.0).then(|| x / n))
    }
}

/// `(sum |x_i|^p)^(1/p)`, scaled by the max modulus to avoid overflow.
pub fn lp_norm(x: &[f64], p: f64) -> f64 {
    let m = x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    if p == 2.0 {
        return m * x.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt();
    }
    m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Coordinates of `(x)*`, `f_i = ||x|| * |u_i|^(p-1) * sign(x_i)` with `u = x / ||x||`.
pub(crate) fn duality_map_raw(x: &DVector<f64>, p: f64) -> Option<DVector<f64>> {
    let n = lp_norm(x.as_slice(), p);
    if n == 0.0 {
        return None;
    }
    if p == 2.0 {
        return Some(x.clone());
    }
    Some(x.map(|v| n * (v.abs() / n).powf(p - 1.0).copysign(v)))
}

fn unit_circle_point(p: f64, theta: f64) -> [f64; 2] {
    let v = [theta.cos(), theta.sin()];
    let n = lp_norm(&v, p);
    [v[0] / n, v[1] / n]
}

fn dist2(p: f64, a: [f64; 2], b: [f64; 2]) -> f64 {
    lp_norm(&[a[0] - b[0], a[1] - b[1]], p)
}

/// `1 - ||(x + y)/2||` where `x` sits at angle `theta` and `y` is the point
/// counter-clockwise from `x` at distance `eps`. Chord length from a fixed
/// point of a symmetric strictly convex curve increases monotonically up to
/// the antipode, so the bisection is well posed.
fn modulus_gap(p: f64, eps: f64, theta: f64) -> f64 {
    let x = unit_circle_point(p, theta);
    let (mut lo, mut hi) = (0.0, std::f64::consts::PI);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if dist2(p, x, unit_circle_point(p, theta + mid)) < eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y = unit_circle_point(p, theta + hi);
    1.0 - lp_norm(&[0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1])], p)
}

fn modulus_2d(p: f64, eps: f64) -> f64 {
    // Rotation by a quarter turn is an isometry of l_p^2 preserving orientation.
    let step = FRAC_PI_2 / MODULUS_GRID as f64;
    let (best_i, best) = (0..MODULUS_GRID)
        .map(|i| (i, modulus_gap(p, eps, i as f64 * step)))
        .fold((0, f64::INFINITY), |acc, (i, g)| if g < acc.1 { (i, g) } else { acc });

    let gap = |t: f64| modulus_gap(p, eps, t);
    let refined = golden_section_min(
        gap,
        (best_i as f64 - 1.0) * step,
        (best_i as f64 + 1.0) * step,
        GOLDEN_STEPS,
    );
    best.min(refined.1).max(0.0)
}

/// Golden-section search for a minimum on `[a, b]`; returns `(argmin, min)`.
pub(crate) fn golden_section_min<F: Fn(f64) -> f64>(
    f: F,
    mut a: f64,
    mut b: f64,
    steps: usize,
) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..steps {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
