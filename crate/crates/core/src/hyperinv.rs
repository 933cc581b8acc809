//! The hyperinvariant-subspace construction run on concrete matrices.
//!
//! Starting from a commutant element `K` with `||K x0|| >= (1 + eps)/2`, the
//! pipeline computes minimal vectors `y_n`, keeps the indices whose ratio
//! `||y_{n-1}|| / ||y_n||` is small, forms `w` from `K Q^{n-1} y_{n-1}`, and
//! builds `Y = span { T Q w : T in {Q}' }`. Along the way it tabulates the
//! decomposition `T K y_{n-1} = a y_n + r` and the pairings
//! `(Q^n y_n - x0)*(T Q K Q^{n-1} y_{n-1})`.
//!
//! In finite dimensions every operator is compact, so the witness always
//! exists, and `Y` may well be the whole space. The report states `dim Y`
//! and verifies that `Y` is invariant under the computed commutant; it does
//! not claim `Y` is proper.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::banach::{duality_map_raw, lp_norm, LpSpace};
use crate::minvec::{dvec_serde, min_vector_sequence, MinVecError, MinimalVectorSequence, SolverConfig};
use crate::operators::{
    induced_norm_upper_bound, CommutantBasis, CommutantOptions, OperatorError, OperatorMatrix,
};

#[derive(Debug, Error)]
pub enum HyperinvError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Solver(#[from] MinVecError),
    #[error("no witness: ||K x0|| = {achieved:.6} < (1 + eps)/2 = {required:.6}")]
    NoWitness { achieved: f64, required: f64 },
    #[error("operator is not in the commutant: relative residual {0:.3e}")]
    NotInCommutant(f64),
    #[error("subsequence too short: {0} indices selected, need at least 2")]
    SubsequenceTooShort(usize),
    #[error("||w|| = {norm:.6e} below the nondegeneracy bound {bound:.6e}")]
    NondegeneracyViolated { norm: f64, bound: f64 },
    #[error("w is zero")]
    ZeroW,
    #[error("Q is not injective (smallest singular value {0:.3e})")]
    NotInjective(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Relative commutator residual accepted for commutant membership.
pub const COMMUTANT_TOL: f64 = 1e-8;

fn dual(v: &DVector<f64>, p: f64) -> DVector<f64> {
    duality_map_raw(v, p).unwrap_or_else(|| DVector::zeros(v.len()))
}

fn relative_commutator(q: &OperatorMatrix, t: &DMatrix<f64>) -> f64 {
    let scale = q.frobenius_norm() * t.norm();
    if scale == 0.0 {
        0.0
    } else {
        q.commutator_residual(t) / scale
    }
}

/// `K` with `||K|| = 1` and a unit `x0` attaining `||K x0|| = 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyStarWitness {
    #[serde(with = "dvec_serde")]
    pub x0: DVector<f64>,
    #[serde(skip)]
    pub k: Option<OperatorMatrix>,
    pub eps: f64,
    /// Certified upper bound on `||K||_p` (exact for `p = 2`).
    pub norm_k_upper: f64,
    pub norm_k_x0: f64,
    pub commutator_residual: f64,
}

impl PropertyStarWitness {
    pub fn operator(&self) -> &OperatorMatrix {
        self.k.as_ref().expect("witness operator is present until serialized")
    }
}

/// A choice of `K_k` per selected index. The construction only needs a
/// constant family in finite dimensions.
pub trait CommutantFamily {
    fn at(&self, k: usize) -> &OperatorMatrix;
}

pub struct ConstantFamily(pub OperatorMatrix);

impl CommutantFamily for ConstantFamily {
    fn at(&self, _k: usize) -> &OperatorMatrix {
        &self.0
    }
}

/// Largest `||C x||_p` over the unit sphere, from power iterations
/// `x <- J_q(C^T J_p(C x))` started at the Euclidean top singular vector and
/// at every coordinate vector. Returns `(x, ||C x||)`.
fn norm_maximizer(c: &DMatrix<f64>, p: f64) -> (DVector<f64>, f64) {
    let d = c.ncols();
    let svd = c.clone().svd(false, true);
    let top = svd.singular_values.imax();
    let v_t = svd.v_t.expect("right singular vectors");
    let mut starts: Vec<DVector<f64>> = vec![v_t.row(top).transpose()];
    if p != 2.0 {
        starts.extend((0..d).map(|i| {
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            e
        }));
    }
    let q = p / (p - 1.0);
    let ct = c.transpose();
    let mut best = (starts[0].clone(), -1.0);
    for start in starts {
        let mut x = &start / lp_norm(start.as_slice(), p);
        let mut value = lp_norm((c * &x).as_slice(), p);
        if p != 2.0 {
            for _ in 0..1000 {
                let z = c * &x;
                let s = z.map(|t| t.signum() * t.abs().powf(p - 1.0));
                let t = &ct * s;
                let next = t.map(|v| v.signum() * v.abs().powf(q - 1.0));
                let n = lp_norm(next.as_slice(), p);
                if n == 0.0 {
                    break;
                }
                let next = next / n;
                let next_value = lp_norm((c * &next).as_slice(), p);
                let done = next_value <= value * (1.0 + 1e-15);
                if next_value >= value {
                    x = next;
                    value = next_value;
                }
                if done {
                    break;
                }
            }
        }
        if value > best.1 {
            best = (x, value);
        }
    }
    best
}

/// Picks `K = C / ||C||` (default `C = Q`) and a unit `x0` with
/// `||K x0|| = 1`. At `p = 2` the norm and its maximiser come from the SVD;
/// otherwise from [`norm_maximizer`], with the Riesz-Thorin bound recorded
/// as a certified upper bound on `||K||`.
pub fn choose_witness(
    q: &OperatorMatrix,
    eps: f64,
    space: &LpSpace,
    candidate: Option<&DMatrix<f64>>,
) -> Result<PropertyStarWitness, HyperinvError> {
    let c = candidate.cloned().unwrap_or_else(|| q.matrix().clone());
    if c.nrows() != q.dim() || c.ncols() != q.dim() {
        return Err(HyperinvError::InvalidInput("candidate has the wrong shape".into()));
    }
    let residual = relative_commutator(q, &c);
    if residual > COMMUTANT_TOL {
        return Err(HyperinvError::NotInCommutant(residual));
    }
    let p = space.p();
    let (x0, attained) = norm_maximizer(&c, p);
    if attained <= 0.0 {
        return Err(HyperinvError::NoWitness {
            achieved: 0.0,
            required: 0.5 * (1.0 + eps),
        });
    }
    let k = OperatorMatrix::new(&c / attained)?;
    let norm_k_x0 = lp_norm((k.matrix() * &x0).as_slice(), p);
    let required = 0.5 * (1.0 + eps);
    if norm_k_x0 < required {
        return Err(HyperinvError::NoWitness {
            achieved: norm_k_x0,
            required,
        });
    }
    Ok(PropertyStarWitness {
        norm_k_upper: induced_norm_upper_bound(k.matrix(), p),
        commutator_residual: relative_commutator(q, k.matrix()),
        x0,
        k: Some(k),
        eps,
        norm_k_x0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subsequence {
    pub theta: f64,
    /// Selected powers `n_k`, increasing.
    pub indices: Vec<usize>,
}

/// Indices `n >= 2` with `||y_{n-1}|| / ||y_n|| <= theta`; `theta` defaults to
/// the median ratio.
pub fn select_subsequence(
    seq: &MinimalVectorSequence,
    theta: Option<f64>,
) -> Result<Subsequence, HyperinvError> {
    if seq.ratios.is_empty() {
        return Err(HyperinvError::SubsequenceTooShort(0));
    }
    let theta = theta.unwrap_or_else(|| {
        let mut r: Vec<f64> = seq.ratios.iter().map(|r| r.ratio).collect();
        r.sort_by(f64::total_cmp);
        r[(r.len() - 1) / 2]
    });
    let indices: Vec<usize> = seq
        .ratios
        .iter()
        .filter(|r| r.ratio <= theta)
        .map(|r| r.n)
        .collect();
    if indices.len() < 2 {
        return Err(HyperinvError::SubsequenceTooShort(indices.len()));
    }
    Ok(Subsequence { theta, indices })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WConstruction {
    #[serde(with = "dvec_serde")]
    pub w: DVector<f64>,
    pub norm_w: f64,
    pub lower_bound: f64,
    /// `||v_{k+1} - v_k||` for consecutive selected indices.
    pub cauchy: Vec<f64>,
    pub norms_v: Vec<f64>,
}

/// `v_k = K_k Q^{n_k - 1} y_{n_k - 1}`; `w` is the last `v_k`.
pub fn compute_w(
    family: &dyn CommutantFamily,
    seq: &MinimalVectorSequence,
    sub: &Subsequence,
    space: &LpSpace,
    tol: f64,
) -> Result<WConstruction, HyperinvError> {
    let p = space.p();
    let mut vs = Vec::with_capacity(sub.indices.len());
    for (k, &n) in sub.indices.iter().enumerate() {
        let prev = seq
            .get(n - 1)
            .ok_or_else(|| HyperinvError::InvalidInput(format!("missing minimal vector {}", n - 1)))?;
        vs.push(family.at(k).matrix() * &prev.image);
    }
    let cauchy = vs
        .windows(2)
        .map(|pair| lp_norm((&pair[1] - &pair[0]).as_slice(), p))
        .collect();
    let norms_v = vs.iter().map(|v| lp_norm(v.as_slice(), p)).collect();
    let w = vs.pop().expect("at least two indices");
    let norm_w = lp_norm(w.as_slice(), p);
    let lower_bound = 0.5 * (1.0 - seq.eps);
    if norm_w == 0.0 {
        return Err(HyperinvError::ZeroW);
    }
    if norm_w < lower_bound - tol {
        return Err(HyperinvError::NondegeneracyViolated {
            norm: norm_w,
            bound: lower_bound,
        });
    }
    Ok(WConstruction {
        w,
        norm_w,
        lower_bound,
        cauchy,
        norms_v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub t_index: usize,
    pub n: usize,
    pub a: f64,
    pub r_norm: f64,
    /// `||a y_n + r - T K y_{n-1}|| / ||T K y_{n-1}||`.
    pub reconstruction_error: f64,
    /// `|(y_n)*(r)| / (||y_n|| ||r||)`.
    pub orthogonality: f64,
    /// `||T|| ||K|| ||y_{n-1}|| / ||y_n||` with certified norm bounds.
    pub bound: f64,
    pub within_bound: bool,
}

/// `T K y_{n-1} = a y_n + r` with `a = (y_n)*(T K y_{n-1}) / ||y_n||^2`.
#[allow(clippy::too_many_arguments)]
pub fn decompose_and_bound_a(
    q: &OperatorMatrix,
    seq: &MinimalVectorSequence,
    sub: &Subsequence,
    t: &DMatrix<f64>,
    t_index: usize,
    family: &dyn CommutantFamily,
    space: &LpSpace,
    tol: f64,
) -> Result<Vec<DecompositionRow>, HyperinvError> {
    let residual = relative_commutator(q, t);
    if residual > COMMUTANT_TOL {
        return Err(HyperinvError::NotInCommutant(residual));
    }
    let p = space.p();
    let norm_t = induced_norm_upper_bound(t, p);
    let mut rows = Vec::with_capacity(sub.indices.len());
    for (k, &n) in sub.indices.iter().enumerate() {
        let (Some(cur), Some(prev)) = (seq.get(n), seq.get(n - 1)) else {
            return Err(HyperinvError::InvalidInput(format!("missing minimal vector {n}")));
        };
        let kmat = family.at(k).matrix();
        let norm_k = induced_norm_upper_bound(kmat, p);
        let u = t * (kmat * &prev.y);
        let f = dual(&cur.y, p);
        let yn = cur.norm;
        let a = f.dot(&u) / (yn * yn);
        let r = &u - &cur.y * a;
        let r_norm = lp_norm(r.as_slice(), p);
        let u_norm = lp_norm(u.as_slice(), p);
        let recon = &cur.y * a + &r - &u;
        let reconstruction_error = if u_norm > 0.0 {
            lp_norm(recon.as_slice(), p) / u_norm
        } else {
            lp_norm(recon.as_slice(), p)
        };
        let orthogonality = if r_norm > 0.0 {
            f.dot(&r).abs() / (yn * r_norm)
        } else {
            0.0
        };
        let bound = norm_t * norm_k * prev.norm / yn;
        rows.push(DecompositionRow {
            t_index,
            n,
            a,
            r_norm,
            reconstruction_error,
            orthogonality,
            bound,
            within_bound: a.abs() <= bound * (1.0 + tol) + tol,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingRow {
    pub t_index: usize,
    pub n: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingSummary {
    pub t_index: usize,
    pub max_rho: f64,
    pub last_rho: f64,
    /// `last_rho / max_rho`.
    pub decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingTable {
    pub rows: Vec<PairingRow>,
    pub summaries: Vec<PairingSummary>,
    pub min_selected_ratio: f64,
    /// Whether the decay assertion applied (minimum selected ratio <= 0.1).
    pub asserted: bool,
    pub decay_threshold: f64,
    /// Basis elements whose last residual exceeded the threshold.
    pub violations: Vec<usize>,
    pub passed: bool,
}

/// Minimum selected ratio at or below which decay of the pairings is asserted.
pub const PAIRING_RATIO_GATE: f64 = 0.1;

/// `rho_{T,k} = |(Q^{n_k} y_{n_k} - x0)*(T Q K_k Q^{n_k - 1} y_{n_k - 1})|` for
/// every basis element `T`.
pub fn verify_pairing_decay(
    q: &OperatorMatrix,
    seq: &MinimalVectorSequence,
    sub: &Subsequence,
    family: &dyn CommutantFamily,
    commutant: &CommutantBasis,
    space: &LpSpace,
) -> Result<PairingTable, HyperinvError> {
    let p = space.p();
    let mut pairs = Vec::with_capacity(sub.indices.len());
    for (k, &n) in sub.indices.iter().enumerate() {
        let (Some(cur), Some(prev)) = (seq.get(n), seq.get(n - 1)) else {
            return Err(HyperinvError::InvalidInput(format!("missing minimal vector {n}")));
        };
        let functional = dual(&(&cur.image - &seq.x0), p);
        let v = q.matrix() * (family.at(k).matrix() * &prev.image);
        pairs.push((n, functional, v));
    }
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (j, t) in commutant.basis.iter().enumerate() {
        let rhos: Vec<f64> = pairs.iter().map(|(_, f, v)| f.dot(&(t * v)).abs()).collect();
        for ((n, _, _), rho) in pairs.iter().zip(&rhos) {
            rows.push(PairingRow {
                t_index: j,
                n: *n,
                rho: *rho,
            });
        }
        let max_rho = rhos.iter().copied().fold(0.0, f64::max);
        let last_rho = *rhos.last().expect("at least two indices");
        summaries.push(PairingSummary {
            t_index: j,
            max_rho,
            last_rho,
            decay: if max_rho > 0.0 { last_rho / max_rho } else { 0.0 },
        });
    }
    let min_selected_ratio = sub
        .indices
        .iter()
        .filter_map(|n| seq.ratios.iter().find(|r| r.n == *n).map(|r| r.ratio))
        .fold(f64::INFINITY, f64::min);
    let asserted = min_selected_ratio <= PAIRING_RATIO_GATE;
    let decay_threshold = 0.1;
    let violations: Vec<usize> = if asserted {
        summaries
            .iter()
            .filter(|s| s.last_rho > decay_threshold * s.max_rho)
            .map(|s| s.t_index)
            .collect()
    } else {
        Vec::new()
    };
    Ok(PairingTable {
        passed: violations.is_empty(),
        rows,
        summaries,
        min_selected_ratio,
        asserted,
        decay_threshold,
        violations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct YSubspace {
    /// Orthonormal columns (Euclidean inner product).
    #[serde(skip)]
    pub basis: DMatrix<f64>,
    pub dim: usize,
    /// Numerical rank of `span { T Q w }` before the closure pass.
    pub initial_dim: usize,
    /// Invariance residual of that initial span.
    pub initial_invariance_residual: f64,
    /// Directions added by the closure pass after the initial span.
    pub closure_added: usize,
    /// `max ||(I - P_Y) T y|| / ||T y||` over basis `T` and basis vectors `y`.
    pub invariance_residual: f64,
    /// `||P_Y f|| / ||f||` for `f = (Q^n y_n - x0)*` at each selected `n`;
    /// zero means `Y` lies in `ker f`.
    pub annihilator_angles: Vec<(usize, f64)>,
}

fn orthonormal_columns(vectors: &[DVector<f64>], rel_tol: f64) -> DMatrix<f64> {
    let d = vectors.first().map_or(0, |v| v.len());
    if vectors.is_empty() {
        return DMatrix::zeros(d, 0);
    }
    let m = DMatrix::from_columns(vectors);
    let svd = m.svd(true, false);
    let u = svd.u.expect("left singular vectors");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| smax > 0.0 && svd.singular_values[i] > rel_tol * smax)
        .collect();
    DMatrix::from_fn(d, keep.len(), |i, j| u[(i, keep[j])])
}

fn projection_residual(basis: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let mut r = v - basis * (basis.transpose() * v);
    // Second pass of classical Gram-Schmidt for numerical orthogonality.
    r -= basis * (basis.transpose() * &r);
    r
}

fn invariance_residual(basis: &DMatrix<f64>, commutant: &CommutantBasis) -> f64 {
    let mut worst = 0.0_f64;
    for t in &commutant.basis {
        for j in 0..basis.ncols() {
            let ty = t * basis.column(j);
            let norm = ty.norm();
            if norm > 0.0 {
                worst = worst.max(projection_residual(basis, &ty).norm() / norm);
            }
        }
    }
    worst
}

/// `Y = span { T Q w }` over the commutant basis, closed under the basis to
/// recover directions lost to numerical rank truncation.
pub fn build_y(
    q: &OperatorMatrix,
    w: &DVector<f64>,
    commutant: &CommutantBasis,
    functionals: &[(usize, DVector<f64>)],
    rank_tol: f64,
) -> Result<YSubspace, HyperinvError> {
    if w.iter().all(|v| *v == 0.0) {
        return Err(HyperinvError::ZeroW);
    }
    let s = q.singular_values();
    if s.min() <= 1e-12 * s.max() {
        return Err(HyperinvError::NotInjective(s.min()));
    }
    let qw = q.matrix() * w;
    let images: Vec<DVector<f64>> = commutant.basis.iter().map(|t| t * &qw).collect();
    let mut basis = orthonormal_columns(&images, rank_tol);
    let initial = basis.ncols();
    let initial_invariance_residual = invariance_residual(&basis, commutant);
    let d = qw.len();
    loop {
        let mut added = false;
        'outer: for t in &commutant.basis {
            for j in 0..basis.ncols() {
                let ty = t * basis.column(j);
                let norm = ty.norm();
                if norm == 0.0 {
                    continue;
                }
                let r = projection_residual(&basis, &ty);
                if r.norm() > rank_tol * norm && basis.ncols() < d {
                    let col = &r / r.norm();
                    let last = basis.ncols();
                    basis = basis.insert_column(last, 0.0);
                    basis.set_column(last, &col);
                    added = true;
                    break 'outer;
                }
            }
        }
        if !added {
            break;
        }
    }
    let annihilator_angles = functionals
        .iter()
        .map(|(n, f)| {
            let fn_ = f.norm();
            let inside = (basis.transpose() * f).norm();
            (*n, if fn_ > 0.0 { inside / fn_ } else { 0.0 })
        })
        .collect();
    Ok(YSubspace {
        dim: basis.ncols(),
        initial_dim: initial,
        initial_invariance_residual,
        closure_added: basis.ncols() - initial,
        invariance_residual: invariance_residual(&basis, commutant),
        basis,
        annihilator_angles,
    })
}

/// Tolerances and options of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineOptions {
    pub theta: Option<f64>,
    pub reconstruction_tol: f64,
    pub bound_tol: f64,
    pub w_tol: f64,
    pub invariance_tol: f64,
    pub rank_tol: f64,
    pub commutant: CommutantOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            theta: None,
            reconstruction_tol: 1e-12,
            bound_tol: 1e-10,
            w_tol: 1e-8,
            invariance_tol: 1e-8,
            rank_tol: 1e-10,
            commutant: CommutantOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineChecks {
    pub reconstruction_exact: bool,
    pub max_reconstruction_error: f64,
    pub a_bound_holds: bool,
    pub max_a_over_bound: f64,
    pub w_nondegenerate: bool,
    pub y_invariant: bool,
    pub pairing_passed: bool,
}

impl PipelineChecks {
    pub fn all_passed(&self) -> bool {
        self.reconstruction_exact
            && self.a_bound_holds
            && self.w_nondegenerate
            && self.y_invariant
            && self.pairing_passed
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperinvariantReport {
    pub p: f64,
    pub dim: usize,
    pub eps: f64,
    pub witness: PropertyStarWitness,
    pub subsequence: Subsequence,
    pub w: WConstruction,
    #[serde(with = "dvec_serde")]
    pub qw: DVector<f64>,
    pub commutant_dim: usize,
    pub commutant_residual: f64,
    pub decomposition: Vec<DecompositionRow>,
    pub pairing: PairingTable,
    pub y: YSubspace,
    pub checks: PipelineChecks,
    pub passed: bool,
}

/// Runs the whole construction for `Q`, computing the minimal vectors.
pub fn run_pipeline(
    q: &OperatorMatrix,
    space: &LpSpace,
    eps: f64,
    n_max: usize,
    solver: &SolverConfig,
    opts: &PipelineOptions,
) -> Result<(HyperinvariantReport, MinimalVectorSequence), HyperinvError> {
    let witness = choose_witness(q, eps, space, None)?;
    let seq = min_vector_sequence(q, &witness.x0, eps, n_max, space, solver)?;
    let report = run_pipeline_on_sequence(q, space, witness, &seq, opts)?;
    Ok((report, seq))
}

/// Runs the construction on a precomputed sequence whose `x0` is the
/// witness vector.
pub fn run_pipeline_on_sequence(
    q: &OperatorMatrix,
    space: &LpSpace,
    witness: PropertyStarWitness,
    seq: &MinimalVectorSequence,
    opts: &PipelineOptions,
) -> Result<HyperinvariantReport, HyperinvError> {
    if (&seq.x0 - &witness.x0).amax() > 1e-12 {
        return Err(HyperinvError::InvalidInput(
            "sequence was computed for a different x0".into(),
        ));
    }
    let family = ConstantFamily(witness.operator().clone());
    let sub = select_subsequence(seq, opts.theta)?;
    let w = compute_w(&family, seq, &sub, space, opts.w_tol)?;
    let commutant = q.commutant_basis(&opts.commutant)?;
    let commutant_residual = commutant.max_relative_residual(q);

    let mut decomposition = Vec::new();
    for (j, t) in commutant.basis.iter().enumerate() {
        decomposition.extend(decompose_and_bound_a(
            q,
            seq,
            &sub,
            t,
            j,
            &family,
            space,
            opts.bound_tol,
        )?);
    }
    let pairing = verify_pairing_decay(q, seq, &sub, &family, &commutant, space)?;
    let functionals: Vec<(usize, DVector<f64>)> = sub
        .indices
        .iter()
        .filter_map(|&n| seq.get(n).map(|s| (n, dual(&(&s.image - &seq.x0), space.p()))))
        .collect();
    let y = build_y(q, &w.w, &commutant, &functionals, opts.rank_tol)?;

    let max_reconstruction_error = decomposition
        .iter()
        .map(|r| r.reconstruction_error)
        .fold(0.0, f64::max);
    let max_a_over_bound = decomposition
        .iter()
        .map(|r| if r.bound > 0.0 { r.a.abs() / r.bound } else { 0.0 })
        .fold(0.0, f64::max);
    let checks = PipelineChecks {
        reconstruction_exact: max_reconstruction_error <= opts.reconstruction_tol,
        max_reconstruction_error,
        a_bound_holds: decomposition.iter().all(|r| r.within_bound),
        max_a_over_bound,
        w_nondegenerate: w.norm_w >= w.lower_bound - opts.w_tol,
        y_invariant: y.invariance_residual <= opts.invariance_tol,
        pairing_passed: pairing.passed,
    };
    Ok(HyperinvariantReport {
        p: space.p(),
        dim: q.dim(),
        eps: seq.eps,
        passed: checks.all_passed(),
        qw: q.matrix() * &w.w,
        commutant_dim: commutant.dim,
        commutant_residual,
        witness,
        subsequence: sub,
        w,
        decomposition,
        pairing,
        y,
        checks,
    })
}
