//! Minimal vectors: the least-norm `y` with `||Q^n y - x0|| <= eps`.
//!
//! Two solvers share one certification routine:
//!
//! * `p = 2`: closed form through the SVD of `A = Q^n` and a scalar secular
//!   equation for the multiplier.
//! * general `p`: a multiplier continuation. For fixed `mu > 0` the smooth
//!   convex penalty `sum |z|^p / p + mu sum |Az - x0|^p / p` is minimised by
//!   damped Newton (through its Fenchel dual when `p < 2`), and `mu` is tuned
//!   by a safeguarded Newton iteration on `log mu` until the residual norm
//!   equals `eps`. The minimiser of the penalty with active residual is the
//!   constrained minimiser.
//!
//! The returned solution always carries the residual of the constraint and
//! the alignment of `g = (Q^n)^T (Q^n y - x0)*` with `f = (y)*`, both
//! recomputed from scratch.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::banach::{duality_map_raw, lp_norm, BanachError, LpSpace};
use crate::operators::{OperatorError, OperatorMatrix};

#[derive(Debug, Error)]
pub enum MinVecError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Space(#[from] BanachError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("n = {n}: infeasible, dist(x0, range Q^n) = {distance:.6e} >= eps = {eps}")]
    InfeasibleProblem { n: usize, distance: f64, eps: f64 },
    #[error("n = {n}: no convergence after {} iterations (feasibility residual {:.3e}, kkt residual {:.3e})", best.iterations, best.feasibility_residual, best.kkt_residual)]
    MaxIterationsExceeded {
        n: usize,
        best: Box<MinimalVectorSolution>,
    },
    #[error("n = {n}: {reason}")]
    NumericalFailure { n: usize, reason: String },
}

impl MinVecError {
    /// The power `n` at which the failure happened, if any.
    pub fn failing_n(&self) -> Option<usize> {
        match self {
            Self::InfeasibleProblem { n, .. }
            | Self::MaxIterationsExceeded { n, .. }
            | Self::NumericalFailure { n, .. } => Some(*n),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    Auto,
    ClosedFormL2,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol_feas: f64,
    pub tol_kkt: f64,
    pub max_iter: usize,
    /// Floor of the Hessian regularisation `nu` for `|t|^(p-2)`.
    pub regularization: f64,
    pub warm_start: bool,
    pub path: SolverPath,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_feas: 1e-10,
            tol_kkt: 1e-8,
            max_iter: 500,
            regularization: 1e-12,
            warm_start: true,
            path: SolverPath::Auto,
        }
    }
}

pub const UNIT_NORM_TOL: f64 = 1e-10;

/// One instance of the minimal-vector problem.
#[derive(Debug, Clone)]
pub struct MinimalVectorProblem<'a> {
    q: &'a OperatorMatrix,
    x0: DVector<f64>,
    eps: f64,
    n: usize,
    space: LpSpace,
}

impl<'a> MinimalVectorProblem<'a> {
    pub fn new(
        q: &'a OperatorMatrix,
        x0: DVector<f64>,
        eps: f64,
        n: usize,
        space: LpSpace,
    ) -> Result<Self, MinVecError> {
        space.check_dim(q.dim())?;
        space.check_dim(x0.len())?;
        if n == 0 {
            return Err(MinVecError::InvalidProblem("n must be at least 1".into()));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(MinVecError::InvalidProblem(format!(
                "eps = {eps} must lie in (0, 1)"
            )));
        }
        let norm = space.norm(&x0)?;
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(MinVecError::InvalidProblem(format!(
                "x0 must be a unit vector, ||x0|| = {norm}"
            )));
        }
        Ok(Self {
            q,
            x0,
            eps,
            n,
            space,
        })
    }

    pub fn operator(&self) -> &OperatorMatrix {
        self.q
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn space(&self) -> &LpSpace {
        &self.space
    }

    fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }
}

pub mod dvec_serde {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Vec::<f64>::deserialize(d).map(DVector::from_vec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalVectorSolution {
    pub n: usize,
    pub p: f64,
    pub eps: f64,
    #[serde(with = "dvec_serde")]
    pub y: DVector<f64>,
    /// `Q^n y`.
    #[serde(with = "dvec_serde")]
    pub image: DVector<f64>,
    pub norm: f64,
    /// `||Q^n y - x0|| - eps`.
    pub feasibility_residual: f64,
    /// Best `a` in `g ~ a f`.
    pub multiplier: f64,
    /// `||g - a f||_* / ||f||_*`.
    pub kkt_residual: f64,
    /// `||g - a f||_* / ||g||_*`, the scale-free version.
    pub alignment_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub path: SolverPath,
}

impl MinimalVectorSolution {
    /// True when the solution meets the tolerances of `cfg`.
    pub fn certified(&self, cfg: &SolverConfig) -> bool {
        self.feasibility_residual.abs() <= cfg.tol_feas
            && self.kkt_residual <= cfg.tol_kkt
            && self.multiplier <= cfg.tol_kkt
    }
}

fn dual_or_zero(v: &DVector<f64>, p: f64) -> DVector<f64> {
    duality_map_raw(v, p).unwrap_or_else(|| DVector::zeros(v.len()))
}

/// Recomputes every diagnostic of a candidate `y` for `A = Q^n`.
#[allow(clippy::too_many_arguments)]
fn certify(
    a: &DMatrix<f64>,
    x0: &DVector<f64>,
    eps: f64,
    p: f64,
    n: usize,
    y: DVector<f64>,
    iterations: usize,
    path: SolverPath,
    cfg: &SolverConfig,
) -> MinimalVectorSolution {
    let q = p / (p - 1.0);
    let image = a * &y;
    let r = &image - x0;
    let f = dual_or_zero(&y, p);
    let g = a.transpose() * dual_or_zero(&r, p);
    let ff = f.dot(&f);
    let mult = if ff > 0.0 { g.dot(&f) / ff } else { 0.0 };
    let misfit = &g - &f * mult;
    let misfit_norm = lp_norm(misfit.as_slice(), q);
    let f_norm = lp_norm(f.as_slice(), q);
    let g_norm = lp_norm(g.as_slice(), q);
    let ratio = |den: f64| if den > 0.0 { misfit_norm / den } else { f64::INFINITY };
    let mut sol = MinimalVectorSolution {
        n,
        p,
        eps,
        norm: lp_norm(y.as_slice(), p),
        feasibility_residual: lp_norm(r.as_slice(), p) - eps,
        multiplier: mult,
        kkt_residual: ratio(f_norm),
        alignment_residual: ratio(g_norm),
        iterations,
        converged: false,
        path,
        y,
        image,
    };
    sol.converged = sol.certified(cfg);
    sol
}

/// Secular-equation solution of `min ||y||_2 s.t. ||Ay - b||_2 <= eps`
/// given the SVD of `A`. Returns `(y, lambda, iterations)`.
fn l2_closed_form(
    svd: &SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    b: &DVector<f64>,
    eps: f64,
    n: usize,
) -> Result<(DVector<f64>, f64, usize), MinVecError> {
    let u = svd.u.as_ref().expect("left singular vectors");
    let v_t = svd.v_t.as_ref().expect("right singular vectors");
    let s = &svd.singular_values;
    let c = u.transpose() * b;
    let dim = s.len();
    let smax = s.max();
    let negligible = dim as f64 * f64::EPSILON * smax;
    let c2 = c.map(|v| v * v);
    // Components of b outside range(A): they can never be reduced.
    let tail: f64 = (0..dim)
        .filter(|&i| s[i] <= negligible)
        .map(|i| c2[i])
        .sum::<f64>()
        + (b.norm_squared() - c2.sum()).max(0.0);
    if tail.sqrt() >= eps {
        return Err(MinVecError::InfeasibleProblem {
            n,
            distance: tail.sqrt(),
            eps,
        });
    }
    let resid2 = |lam: f64| -> (f64, f64) {
        let mut r2 = tail;
        let mut dr2 = 0.0;
        for i in 0..dim {
            if s[i] <= negligible {
                continue;
            }
            let w = 1.0 / (1.0 + lam * s[i] * s[i]);
            r2 += c2[i] * w * w;
            dr2 -= 2.0 * c2[i] * s[i] * s[i] * w * w * w;
        }
        (r2, dr2)
    };
    let b_norm = b.norm();
    if b_norm <= eps {
        return Ok((DVector::zeros(dim), 0.0, 0));
    }

    let mut lo = 0.0_f64;
    let mut hi = 1.0 / (smax * smax);
    let mut iterations = 0;
    while resid2(hi).0.sqrt() > eps {
        lo = hi;
        hi *= 2.0;
        iterations += 1;
        if !hi.is_finite() {
            return Err(MinVecError::NumericalFailure {
                n,
                reason: "secular equation bracket diverged".into(),
            });
        }
    }
    // Newton on psi(lambda) = 1/||r|| - 1/eps, increasing and concave.
    let mut lam = hi;
    for _ in 0..300 {
        iterations += 1;
        let (r2, dr2) = resid2(lam);
        let r = r2.sqrt();
        if (r - eps).abs() <= 1e-14 * eps {
            break;
        }
        if r > eps {
            lo = lam;
        } else {
            hi = lam;
        }
        let psi = 1.0 / r - 1.0 / eps;
        let dpsi = -0.5 * dr2 / (r2 * r);
        let mut next = lam - psi / dpsi;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
        }
        if (hi - lo) <= 1e-16 * hi {
            break;
        }
        lam = next;
    }
    let coef = DVector::from_fn(dim, |i, _| {
        if s[i] <= negligible {
            0.0
        } else {
            lam * s[i] / (1.0 + lam * s[i] * s[i]) * c[i]
        }
    });
    Ok((v_t.transpose() * coef, lam, iterations))
}

/// The `p = 2` closed-form path.
pub fn solve_min_vector_l2(
    problem: &MinimalVectorProblem<'_>,
    cfg: &SolverConfig,
) -> Result<MinimalVectorSolution, MinVecError> {
    let a = problem.q.power(problem.n)?;
    solve_l2_with_power(problem, &a, cfg)
}

fn solve_l2_with_power(
    problem: &MinimalVectorProblem<'_>,
    a: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<MinimalVectorSolution, MinVecError> {
    if !problem.space.is_hilbert() {
        return Err(MinVecError::InvalidProblem(
            "the closed-form path needs p = 2".into(),
        ));
    }
    let svd = SVD::new(a.clone(), true, true);
    let (y, _, iterations) = l2_closed_form(&svd, &problem.x0, problem.eps, problem.n)?;
    let sol = certify(
        a,
        &problem.x0,
        problem.eps,
        2.0,
        problem.n,
        y,
        iterations,
        SolverPath::ClosedFormL2,
        cfg,
    );
    finish(sol, problem.n)
}

fn finish(sol: MinimalVectorSolution, n: usize) -> Result<MinimalVectorSolution, MinVecError> {
    if sol.converged {
        Ok(sol)
    } else {
        Err(MinVecError::MaxIterationsExceeded {
            n,
            best: Box::new(sol),
        })
    }
}

/// Solves one problem with the path selected by `cfg.path`.
pub fn solve_min_vector(
    problem: &MinimalVectorProblem<'_>,
    cfg: &SolverConfig,
) -> Result<MinimalVectorSolution, MinVecError> {
    let a = problem.q.power(problem.n)?;
    solve_with_power(problem, &a, cfg, None)
}

fn solve_with_power(
    problem: &MinimalVectorProblem<'_>,
    a: &DMatrix<f64>,
    cfg: &SolverConfig,
    warm: Option<&DVector<f64>>,
) -> Result<MinimalVectorSolution, MinVecError> {
    let closed = match cfg.path {
        SolverPath::Auto => problem.space.is_hilbert(),
        SolverPath::ClosedFormL2 => true,
        SolverPath::Newton => false,
    };
    if closed {
        solve_l2_with_power(problem, a, cfg)
    } else {
        solve_newton(problem, a, cfg, warm)
    }
}

fn phi(v: &DVector<f64>, p: f64) -> f64 {
    v.iter().map(|t| t.abs().powf(p)).sum::<f64>() / p
}

fn dphi(v: &DVector<f64>, p: f64) -> DVector<f64> {
    v.map(|t| t.signum() * t.abs().powf(p - 1.0))
}

/// Regularised second derivative of `|t|^p / p`.
fn hphi(v: &DVector<f64>, p: f64, nu: f64) -> DVector<f64> {
    v.map(|t| (p - 1.0) * (t * t + nu).powf(0.5 * (p - 2.0)))
}

/// Solves `h x = rhs` for symmetric positive (semi)definite `h`, with Jacobi
/// scaling, Cholesky and an LU fallback.
fn spd_solve(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let d = h.diagonal().map(|v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt());
    let scaled = DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)] * d[i] * d[j]);
    let b = rhs.component_mul(&d);
    let x = match scaled.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => scaled.lu().solve(&b)?,
    };
    let out = x.component_mul(&d);
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// `<lin, x> + alpha phi_e(x) + beta phi_e(M x - offset)`: the shape shared by
/// the penalty problem and its Fenchel dual.
struct Composite<'a> {
    lin: Option<&'a DVector<f64>>,
    m: DMatrix<f64>,
    mt: DMatrix<f64>,
    offset: DVector<f64>,
    e: f64,
}

impl Composite<'_> {
    fn inner(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.m * x - &self.offset
    }

    fn value(&self, x: &DVector<f64>, inner: &DVector<f64>, alpha: f64, beta: f64) -> f64 {
        let lin = self.lin.map_or(0.0, |l| l.dot(x));
        lin + alpha * phi(x, self.e) + beta * phi(inner, self.e)
    }

    fn gradient(
        &self,
        x: &DVector<f64>,
        inner: &DVector<f64>,
        alpha: f64,
        beta: f64,
    ) -> (DVector<f64>, f64) {
        let gx = dphi(x, self.e) * alpha;
        let gi = &self.mt * dphi(inner, self.e) * beta;
        let mut scale = gx.amax() + gi.amax();
        let mut grad = gx + gi;
        if let Some(l) = self.lin {
            scale += l.amax();
            grad += l;
        }
        (grad, scale)
    }

    fn hessian(
        &self,
        x: &DVector<f64>,
        inner: &DVector<f64>,
        alpha: f64,
        beta: f64,
        nu: f64,
    ) -> DMatrix<f64> {
        let hx = hphi(x, self.e, nu) * alpha;
        let hi = hphi(inner, self.e, nu) * beta;
        let mut weighted = self.m.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= hi[i];
        }
        let mut h = &self.mt * weighted;
        for i in 0..h.nrows() {
            h[(i, i)] += hx[i];
        }
        h
    }

    /// Damped Newton with the Hessian regularisation `nu` shrinking from
    /// `nu0` to `nu_floor`. Returns the number of steps taken.
    fn minimize(&self, x: &mut DVector<f64>, alpha: f64, beta: f64, nu0: f64, nu_floor: f64) -> usize {
        const MAX_STEPS: usize = 200;
        const GRAD_TOL: f64 = 1e-14;
        let mut nu = nu0.max(nu_floor);
        let mut inner = self.inner(x);
        let mut value = self.value(x, &inner, alpha, beta);
        for step in 0..MAX_STEPS {
            let (grad, scale) = self.gradient(x, &inner, alpha, beta);
            let gnorm = grad.amax();
            if gnorm <= GRAD_TOL * scale {
                return step;
            }
            let h = self.hessian(x, &inner, alpha, beta, nu);
            let mut dir = spd_solve(&h, &(-&grad)).unwrap_or_else(|| -&grad);
            let mut slope = grad.dot(&dir);
            if slope >= 0.0 {
                dir = -&grad;
                slope = -grad.dot(&grad);
            }
            let mut alpha_ls = 1.0;
            let mut accepted = false;
            while alpha_ls >= 1e-12 {
                let trial = &*x + &dir * alpha_ls;
                let trial_inner = self.inner(&trial);
                let trial_value = self.value(&trial, &trial_inner, alpha, beta);
                let sufficient = trial_value <= value + 1e-4 * alpha_ls * slope;
                // Near the minimiser the decrease drowns in rounding; fall back
                // to the gradient norm as merit.
                let flat = -slope <= 1e-15 * value.abs().max(f64::MIN_POSITIVE)
                    && self.gradient(&trial, &trial_inner, alpha, beta).0.amax() < gnorm;
                if sufficient || flat {
                    *x = trial;
                    inner = trial_inner;
                    value = trial_value;
                    accepted = true;
                    break;
                }
                alpha_ls *= 0.5;
            }
            if !accepted {
                return step;
            }
            nu = (nu * 1e-2).max(nu_floor);
        }
        MAX_STEPS
    }

    /// `dx/dmu` at a stationary point, given `dalpha/dmu` and `dbeta/dmu`.
    #[allow(clippy::too_many_arguments)]
    fn sensitivity(
        &self,
        x: &DVector<f64>,
        alpha: f64,
        beta: f64,
        dalpha: f64,
        dbeta: f64,
        nu: f64,
    ) -> Option<DVector<f64>> {
        let inner = self.inner(x);
        let h = self.hessian(x, &inner, alpha, beta, nu);
        let rhs = dphi(x, self.e) * dalpha + &self.mt * dphi(&inner, self.e) * dbeta;
        spd_solve(&h, &(-rhs))
    }
}

/// For a fixed multiplier `mu` the penalty problem
/// `min phi_p(z) + mu phi_p(A z - x0)` is solved either directly (`p >= 2`)
/// or through its Fenchel dual
/// `min <l, x0> + mu^(1-q) phi_q(l) + phi_q(A^T l)` (`p < 2`), whose
/// exponent `q > 2` keeps Newton's method well behaved near zero
/// coordinates. The primal point is recovered as `z = -J_q(A^T l)`.
struct MultiplierPath<'a> {
    dual: bool,
    comp: Composite<'a>,
    a: &'a DMatrix<f64>,
    x0: &'a DVector<f64>,
    p: f64,
    q: f64,
    state: DVector<f64>,
}

impl<'a> MultiplierPath<'a> {
    fn new(a: &'a DMatrix<f64>, x0: &'a DVector<f64>, p: f64, z: DVector<f64>, mu: f64) -> Self {
        let q = p / (p - 1.0);
        if p >= 2.0 {
            Self {
                dual: false,
                comp: Composite {
                    lin: None,
                    m: a.clone(),
                    mt: a.transpose(),
                    offset: x0.clone(),
                    e: p,
                },
                a,
                x0,
                p,
                q,
                state: z,
            }
        } else {
            let lambda = dphi(&(a * &z - x0), p) * mu;
            Self {
                dual: true,
                comp: Composite {
                    lin: Some(x0),
                    m: a.transpose(),
                    mt: a.clone(),
                    offset: DVector::zeros(x0.len()),
                    e: q,
                },
                a,
                x0,
                p,
                q,
                state: lambda,
            }
        }
    }

    /// `(alpha, beta, dalpha/dmu, dbeta/dmu)`.
    fn weights(&self, mu: f64) -> (f64, f64, f64, f64) {
        if self.dual {
            (
                mu.powf(1.0 - self.q),
                1.0,
                (1.0 - self.q) * mu.powf(-self.q),
                0.0,
            )
        } else {
            (1.0, mu, 0.0, 1.0)
        }
    }

    fn solve(&mut self, mu: f64, nu0: f64, nu_floor: f64) -> usize {
        let (alpha, beta, _, _) = self.weights(mu);
        self.comp.minimize(&mut self.state, alpha, beta, nu0, nu_floor)
    }

    fn primal(&self) -> DVector<f64> {
        if self.dual {
            -dphi(&self.comp.inner(&self.state), self.q)
        } else {
            self.state.clone()
        }
    }

    /// `d log ||r|| / d log mu` by implicit differentiation.
    fn log_slope(&self, mu: f64, nu: f64) -> Option<f64> {
        let (alpha, beta, dalpha, dbeta) = self.weights(mu);
        let dx = self
            .comp
            .sensitivity(&self.state, alpha, beta, dalpha, dbeta, nu)?;
        let dr = if self.dual {
            dphi(&self.state, self.q) * dalpha
                + hphi(&self.state, self.q, nu).component_mul(&dx) * alpha
        } else {
            self.a * dx
        };
        let r = self.a * self.primal() - self.x0;
        let rho_p = phi(&r, self.p) * self.p;
        if rho_p <= 0.0 {
            return None;
        }
        let slope = mu * dphi(&r, self.p).dot(&dr) / rho_p;
        (slope.is_finite() && slope < 0.0).then_some(slope)
    }
}

/// `dist_p(b, range A)`: Newton over an orthonormal basis of the range,
/// started from the orthogonal projection.
fn lp_distance_to_range(a: &DMatrix<f64>, b: &DVector<f64>, p: f64, nu: f64) -> f64 {
    let dim = a.nrows();
    let svd = SVD::new(a.clone(), true, false);
    let u = svd.u.expect("left singular vectors");
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > dim as f64 * f64::EPSILON * smax)
        .count();
    if rank == 0 {
        return lp_norm(b.as_slice(), p);
    }
    let basis = u.columns(0, rank).into_owned();
    let mut w = basis.transpose() * b;
    let mut res = &basis * &w - b;
    let mut value = phi(&res, p);
    for _ in 0..200 {
        let grad = basis.transpose() * dphi(&res, p);
        if grad.amax() <= 1e-14 * dphi(&res, p).amax() {
            break;
        }
        let hr = hphi(&res, p, nu);
        let mut weighted = basis.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= hr[i];
        }
        let h = basis.transpose() * weighted;
        let dir = spd_solve(&h, &(-&grad)).unwrap_or_else(|| -&grad);
        let slope = grad.dot(&dir);
        let mut alpha = 1.0;
        let mut moved = false;
        while alpha >= 1e-12 {
            let trial = &w + &dir * alpha;
            let trial_res = &basis * &trial - b;
            let trial_value = phi(&trial_res, p);
            if trial_value <= value + 1e-4 * alpha * slope.min(0.0) {
                w = trial;
                res = trial_res;
                value = trial_value;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    lp_norm(res.as_slice(), p)
}

fn solve_newton(
    problem: &MinimalVectorProblem<'_>,
    a: &DMatrix<f64>,
    cfg: &SolverConfig,
    warm: Option<&DVector<f64>>,
) -> Result<MinimalVectorSolution, MinVecError> {
    let p = problem.space.p();
    let eps = problem.eps;
    let x0 = &problem.x0;
    let n = problem.n;
    let dim = x0.len();

    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.max();
    let singular = svd.singular_values.min() <= dim as f64 * f64::EPSILON * smax;
    if singular {
        let u = svd.u.as_ref().expect("left singular vectors");
        let rank = svd
            .singular_values
            .iter()
            .filter(|s| **s > dim as f64 * f64::EPSILON * smax)
            .count();
        let basis = u.columns(0, rank);
        let projected = basis * (basis.transpose() * x0);
        let mut distance = lp_norm((x0 - projected).as_slice(), p);
        if distance >= eps {
            distance = lp_distance_to_range(a, x0, p, cfg.regularization);
        }
        if distance >= eps {
            return Err(MinVecError::InfeasibleProblem { n, distance, eps });
        }
    }

    // Starting point: the Euclidean minimal vector for the proportional
    // radius, or the lifted previous solution when it is feasible and shorter.
    let x0_2 = x0.norm();
    let mut init = match l2_closed_form(&svd, x0, eps * x0_2, n) {
        Ok((y, _, _)) => y,
        Err(_) => svd
            .solve(x0, dim as f64 * f64::EPSILON * smax)
            .map_err(|e| MinVecError::NumericalFailure {
                n,
                reason: e.to_string(),
            })?,
    };
    if let Some(w) = warm {
        let feasible = lp_norm((a * w - x0).as_slice(), p) <= eps;
        if feasible && lp_norm(w.as_slice(), p) < lp_norm(init.as_slice(), p) {
            init = w.clone();
        }
    }
    let scale = match lp_norm(init.as_slice(), p) {
        s if s > 0.0 && s.is_finite() => s,
        _ => 1.0,
    };
    let scaled_a = a * scale;
    let z0 = init / scale;
    let r0 = &scaled_a * &z0 - x0;
    let balance = dphi(&z0, p).norm() / (scaled_a.transpose() * dphi(&r0, p)).norm();
    let mut t = if balance.is_finite() && balance > 0.0 {
        balance.ln()
    } else {
        0.0
    };
    let mut path = MultiplierPath::new(&scaled_a, x0, p, z0, t.exp());

    let target = 0.01 * cfg.tol_feas;
    let log_eps = eps.ln();
    let mut lo: Option<f64> = None; // log mu with residual above eps
    let mut hi: Option<f64> = None; // log mu with residual below eps
    let mut total_steps = 0;
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut nu0 = 1e-2;
    for _ in 0..cfg.max_iter {
        let mu = t.exp();
        total_steps += 1 + path.solve(mu, nu0, cfg.regularization);
        nu0 = cfg.regularization;
        let z = path.primal();
        let r = &scaled_a * &z - x0;
        let rho = lp_norm(r.as_slice(), p);
        let gap = rho - eps;
        if gap.abs() < best.as_ref().map_or(f64::INFINITY, |b| b.0.abs()) {
            best = Some((gap, z));
        }
        if gap.abs() <= target {
            break;
        }
        if gap > 0.0 {
            lo = Some(lo.map_or(t, |v: f64| v.max(t)));
        } else {
            hi = Some(hi.map_or(t, |v: f64| v.min(t)));
        }
        let newton = path
            .log_slope(mu, cfg.regularization)
            .map(|slope| t - (rho.ln() - log_eps) / slope);
        let next = match (lo, hi) {
            (Some(l), Some(h)) => {
                if h - l <= 1e-15 * (1.0 + l.abs().max(h.abs())) {
                    break;
                }
                match newton {
                    Some(v) if v > l && v < h => v,
                    _ => 0.5 * (l + h),
                }
            }
            (Some(_), None) => newton
                .filter(|v| *v > t)
                .unwrap_or(t + 4f64.ln())
                .min(t + 16f64.ln()),
            (None, Some(_)) => newton
                .filter(|v| *v < t)
                .unwrap_or(t - 4f64.ln())
                .max(t - 16f64.ln()),
            (None, None) => unreachable!("gap is nonzero"),
        };
        if !next.is_finite() || next.abs() >= 700.0 {
            return Err(MinVecError::NumericalFailure {
                n,
                reason: "penalty weight left the representable range".into(),
            });
        }
        t = next;
    }
    let z = best.map(|b| b.1).unwrap_or_else(|| path.primal());
    let sol = certify(
        a,
        x0,
        eps,
        p,
        n,
        z * scale,
        total_steps,
        SolverPath::Newton,
        cfg,
    );
    finish(sol, n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub n: usize,
    /// `||y_{n-1}|| / ||y_n||`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalVectorSequence {
    pub p: f64,
    pub eps: f64,
    #[serde(with = "dvec_serde")]
    pub x0: DVector<f64>,
    pub solutions: Vec<MinimalVectorSolution>,
    pub norms: Vec<f64>,
    pub ratios: Vec<RatioRow>,
    pub effective_horizon: usize,
    pub warnings: Vec<String>,
}

impl MinimalVectorSequence {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    /// Solution for power `n` (1-based).
    pub fn get(&self, n: usize) -> Option<&MinimalVectorSolution> {
        n.checked_sub(1).and_then(|i| self.solutions.get(i))
    }

    pub fn min_ratio(&self) -> Option<f64> {
        self.ratios.iter().map(|r| r.ratio).reduce(f64::min)
    }
}

/// Minimal vectors for `n = 1..=n_max`, each warm-started from the previous
/// one pulled back through `Q^{-1}` when `cfg.warm_start` is set.
pub fn min_vector_sequence(
    q: &OperatorMatrix,
    x0: &DVector<f64>,
    eps: f64,
    n_max: usize,
    space: &LpSpace,
    cfg: &SolverConfig,
) -> Result<MinimalVectorSequence, MinVecError> {
    if n_max == 0 {
        return Err(MinVecError::InvalidProblem("N must be at least 1".into()));
    }
    let base = MinimalVectorProblem::new(q, x0.clone(), eps, 1, *space)?;
    let profile = q.quasinilpotency_profile(space, n_max)?;
    let mut warnings = Vec::new();
    if n_max > profile.effective_horizon {
        warnings.push(format!(
            "N = {n_max} exceeds the effective horizon N* = {}; asymptotic diagnostics past N* are not meaningful",
            profile.effective_horizon
        ));
    }
    let lift = (cfg.warm_start && q.has_dense_range(1e-12)).then(|| q.matrix().clone().lu());
    let mut power = q.matrix().clone();
    let mut solutions: Vec<MinimalVectorSolution> = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        if n > 1 {
            power = q.matrix() * &power;
        }
        let warm = match (&lift, solutions.last()) {
            (Some(lu), Some(prev)) => lu.solve(&prev.y),
            _ => None,
        };
        let sol = solve_with_power(&base.with_n(n), &power, cfg, warm.as_ref())?;
        solutions.push(sol);
    }
    let norms: Vec<f64> = solutions.iter().map(|s| s.norm).collect();
    let ratios = (2..=n_max)
        .map(|n| RatioRow {
            n,
            ratio: norms[n - 2] / norms[n - 1],
        })
        .collect();
    Ok(MinimalVectorSequence {
        p: space.p(),
        eps,
        x0: x0.clone(),
        solutions,
        norms,
        ratios,
        effective_horizon: profile.effective_horizon,
        warnings,
    })
}
