//! Dense operators on `R^d`, the operator zoo, induced-norm bounds and the
//! commutant `{Q}' = { T : QT = TQ }`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Schur, QR, SVD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::banach::LpSpace;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("operator must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("operator has non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: operator is {expected}x{expected}, vector has length {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid zoo parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown operator spec `{0}` (expected volterra:d, jordan:d, wshift:w1,w2,..., identity:d, scalar:c,d or file:path)")]
    UnknownSpec(String),
    #[error("failed to read operator file {path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error("power must be at least 1")]
    ZeroPower,
    #[error("commutant computation failed: {0}")]
    Commutant(String),
}

/// A dense `d x d` real operator.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    entries: DMatrix<f64>,
}

impl OperatorMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self, OperatorError> {
        if entries.nrows() != entries.ncols() {
            return Err(OperatorError::NotSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        if entries.nrows() == 0 {
            return Err(OperatorError::InvalidParameter("empty operator".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(OperatorError::NonFinite);
        }
        Ok(Self { entries })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            entries: DMatrix::identity(d.max(1), d.max(1)),
        }
    }

    /// `c * I_d`.
    pub fn scalar(c: f64, d: usize) -> Self {
        Self {
            entries: DMatrix::identity(d.max(1), d.max(1)) * c,
        }
    }

    /// Trapezoidal discretisation of `(Vf)(t) = int_0^t f` on a grid of width
    /// `h = 1/d`: `h` strictly below the diagonal, `h/2` on it. Invertible with
    /// spectral radius `1/(2d)`.
    pub fn volterra(d: usize) -> Self {
        let d = d.max(1);
        let h = 1.0 / d as f64;
        let entries = DMatrix::from_fn(d, d, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => h,
            std::cmp::Ordering::Equal => 0.5 * h,
            std::cmp::Ordering::Less => 0.0,
        });
        Self { entries }
    }

    /// Nilpotent Jordan block: ones on the subdiagonal.
    pub fn jordan_nilpotent(d: usize) -> Result<Self, OperatorError> {
        if d < 2 {
            return Err(OperatorError::InvalidParameter(
                "jordan block needs d >= 2".into(),
            ));
        }
        Self::weighted_shift(&vec![1.0; d - 1])
    }

    /// Weighted forward shift `e_i -> w_i e_{i+1}` on `R^{len+1}`.
    pub fn weighted_shift(weights: &[f64]) -> Result<Self, OperatorError> {
        if weights.is_empty() {
            return Err(OperatorError::InvalidParameter(
                "weighted shift needs at least one weight".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(OperatorError::InvalidParameter(
                "shift weights must be positive and finite".into(),
            ));
        }
        let d = weights.len() + 1;
        let mut entries = DMatrix::zeros(d, d);
        for (i, w) in weights.iter().enumerate() {
            entries[(i + 1, i)] = *w;
        }
        Ok(Self { entries })
    }

    /// Reads a dense row-major CSV matrix; the dimension is the row count.
    pub fn from_csv_path(path: &Path) -> Result<Self, OperatorError> {
        let file_err = |reason: String| OperatorError::File {
            path: path.to_path_buf(),
            reason,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| file_err(e.to_string()))?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| file_err(e.to_string()))?;
            let row = record
                .iter()
                .map(|field| field.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| file_err(e.to_string()))?;
            rows.push(row);
        }
        let d = rows.len();
        if d == 0 {
            return Err(file_err("empty matrix".into()));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(file_err(format!(
                "row {} has {} entries, expected {d}",
                bad + 1,
                rows[bad].len()
            )));
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn transpose(&self) -> Self {
        Self {
            entries: self.entries.transpose(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            entries: &self.entries * c,
        }
    }

    fn check_vec(&self, x: &DVector<f64>) -> Result<(), OperatorError> {
        if x.len() != self.dim() {
            return Err(OperatorError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>, OperatorError> {
        self.check_vec(x)?;
        Ok(&self.entries * x)
    }

    /// `Q^n x` by repeated application.
    pub fn apply_power(&self, n: usize, x: &DVector<f64>) -> Result<DVector<f64>, OperatorError> {
        if n == 0 {
            return Err(OperatorError::ZeroPower);
        }
        self.check_vec(x)?;
        let mut out = x.clone();
        for _ in 0..n {
            out = &self.entries * out;
        }
        Ok(out)
    }

    /// Explicit `Q^n` by binary powering.
    pub fn power(&self, n: usize) -> Result<DMatrix<f64>, OperatorError> {
        if n == 0 {
            return Err(OperatorError::ZeroPower);
        }
        let mut result: Option<DMatrix<f64>> = None;
        let mut base = self.entries.clone();
        let mut k = n;
        loop {
            if k & 1 == 1 {
                result = Some(match result {
                    None => base.clone(),
                    Some(r) => r * &base,
                });
            }
            k >>= 1;
            if k == 0 {
                break;
            }
            base = &base * &base;
        }
        Ok(result.expect("n >= 1"))
    }

    pub fn singular_values(&self) -> DVector<f64> {
        self.entries.clone().singular_values()
    }

    /// Largest singular value, `||Q||_{2->2}`.
    pub fn spectral_norm(&self) -> f64 {
        self.singular_values().max()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.norm()
    }

    /// In finite dimensions dense range means invertible; true iff the
    /// smallest singular value exceeds `rel_threshold * ||Q||_2`.
    pub fn has_dense_range(&self, rel_threshold: f64) -> bool {
        let s = self.singular_values();
        let smax = s.max();
        smax > 0.0 && s.min() > rel_threshold * smax
    }

    /// Certified upper bound on the induced norm `||Q^n||_{p->p}`: the exact
    /// largest singular value for `p = 2`, otherwise the Riesz-Thorin bound
    /// `||A||_1^(1/p) ||A||_inf^(1 - 1/p)`.
    pub fn power_norm_upper_bound(&self, n: usize, space: &LpSpace) -> Result<f64, OperatorError> {
        let a = self.power(n)?;
        Ok(induced_norm_upper_bound(&a, space.p()))
    }

    /// Spectral radius from the eigenvalues; exact diagonal read-out for
    /// triangular operators, real Schur form otherwise.
    pub fn spectral_radius(&self) -> Option<f64> {
        if is_upper_triangular(&self.entries) || is_lower_triangular(&self.entries) {
            return Some(self.entries.diagonal().amax());
        }
        Schur::try_new(self.entries.clone(), 1e-14, 10_000)
            .map(|s| s.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
    }

    /// Table of certified `||Q^n||_p` bounds and their `n`-th roots for
    /// `n = 1..=n_max`, with the effective horizon: the largest `n` up to
    /// which the roots are strictly decreasing.
    pub fn quasinilpotency_profile(
        &self,
        space: &LpSpace,
        n_max: usize,
    ) -> Result<QuasinilpotencyProfile, OperatorError> {
        let mut rows = Vec::with_capacity(n_max);
        let mut power = self.entries.clone();
        for n in 1..=n_max.max(1) {
            if n > 1 {
                power = &power * &self.entries;
            }
            let bound = induced_norm_upper_bound(&power, space.p());
            rows.push(PowerNormRow {
                n,
                bound,
                root: bound.powf(1.0 / n as f64),
            });
        }
        let mut horizon = 1;
        while horizon < rows.len() && rows[horizon].root < rows[horizon - 1].root {
            horizon += 1;
        }
        Ok(QuasinilpotencyProfile {
            p: space.p(),
            rows,
            spectral_radius: self.spectral_radius(),
            effective_horizon: horizon,
        })
    }

    /// `||QT - TQ||_F`.
    pub fn commutator_residual(&self, t: &DMatrix<f64>) -> f64 {
        (&self.entries * t - t * &self.entries).norm()
    }

    /// Basis of the commutant, the null space of `T -> QT - TQ`.
    pub fn commutant_basis(&self, opts: &CommutantOptions) -> Result<CommutantBasis, OperatorError> {
        let d = self.dim();
        let method = match opts.method {
            CommutantMethod::Auto if d <= opts.dense_limit => CommutantMethod::Dense,
            CommutantMethod::Auto => CommutantMethod::Structured,
            m => m,
        };
        let basis = match method {
            CommutantMethod::Dense => commutant_dense(&self.entries, opts.rel_threshold),
            _ => commutant_structured(&self.entries, opts.rel_threshold)?,
        };
        if basis.is_empty() {
            return Err(OperatorError::Commutant(
                "empty null space; threshold too strict".into(),
            ));
        }
        Ok(CommutantBasis {
            dim: basis.len(),
            basis,
            method,
            rel_threshold: opts.rel_threshold,
        })
    }
}

impl fmt::Display for OperatorMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.entries)
    }
}

/// `||A||_2` for `p = 2`, Riesz-Thorin interpolation of `||A||_1` and
/// `||A||_inf` otherwise.
pub fn induced_norm_upper_bound(a: &DMatrix<f64>, p: f64) -> f64 {
    if p == 2.0 {
        return a.clone().singular_values().max();
    }
    let col = a
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let row = a
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    col.powf(1.0 / p) * row.powf(1.0 - 1.0 / p)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PowerNormRow {
    pub n: usize,
    pub bound: f64,
    pub root: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QuasinilpotencyProfile {
    pub p: f64,
    pub rows: Vec<PowerNormRow>,
    pub spectral_radius: Option<f64>,
    pub effective_horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommutantMethod {
    Auto,
    /// SVD of the full `d^2 x d^2` Sylvester matrix `I (x) Q - Q^T (x) I`.
    Dense,
    /// Column sweep over a real Schur form of `Q`.
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommutantOptions {
    /// Singular values below `rel_threshold * ||I (x) Q - Q^T (x) I||` count as zero.
    pub rel_threshold: f64,
    /// Largest `d` for which `Auto` uses the dense Sylvester SVD.
    pub dense_limit: usize,
    pub method: CommutantMethod,
}

impl Default for CommutantOptions {
    fn default() -> Self {
        Self {
            rel_threshold: 1e-10,
            dense_limit: 16,
            method: CommutantMethod::Auto,
        }
    }
}

/// Frobenius-orthonormal basis of `{Q}'`.
#[derive(Debug, Clone)]
pub struct CommutantBasis {
    pub basis: Vec<DMatrix<f64>>,
    pub dim: usize,
    pub method: CommutantMethod,
    pub rel_threshold: f64,
}

impl CommutantBasis {
    /// Largest `||QT - TQ||_F / (||Q||_F ||T||_F)` over the basis.
    pub fn max_relative_residual(&self, q: &OperatorMatrix) -> f64 {
        let qn = q.frobenius_norm().max(f64::MIN_POSITIVE);
        self.basis
            .iter()
            .map(|t| q.commutator_residual(t) / (qn * t.norm().max(f64::MIN_POSITIVE)))
            .fold(0.0, f64::max)
    }

    /// Orthogonal projector residual of `t` against the span of the basis,
    /// relative to `||t||_F`. Zero iff `t` lies in the computed commutant.
    pub fn membership_residual(&self, t: &DMatrix<f64>) -> f64 {
        let norm = t.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let mut r = t.clone();
        for b in &self.basis {
            let c = b.dot(&r);
            r -= b * c;
        }
        r.norm() / norm
    }
}

fn is_upper_triangular(a: &DMatrix<f64>) -> bool {
    (0..a.ncols()).all(|j| ((j + 1)..a.nrows()).all(|i| a[(i, j)] == 0.0))
}

fn is_lower_triangular(a: &DMatrix<f64>) -> bool {
    (0..a.ncols()).all(|j| (0..j).all(|i| a[(i, j)] == 0.0))
}

fn unvec(v: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(d, d, v)
}

/// Null space of `I (x) Q - Q^T (x) I` (column-major `vec`) by full SVD.
fn commutant_dense(q: &DMatrix<f64>, rel_threshold: f64) -> Vec<DMatrix<f64>> {
    let d = q.nrows();
    let n = d * d;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..d {
        for i in 0..d {
            let row = i + d * j;
            for k in 0..d {
                m[(row, k + d * j)] += q[(i, k)];
                m[(row, i + d * k)] -= q[(k, j)];
            }
        }
    }
    let svd = SVD::new(m, false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let smax = svd.singular_values.max();
    let threshold = rel_threshold * smax;
    let mut basis: Vec<DMatrix<f64>> = (0..n)
        .filter(|&i| svd.singular_values[i] <= threshold)
        .map(|i| unvec(v_t.row(i).transpose().as_slice(), d))
        .collect();
    // All-zero Q: every singular value is 0 and all of R^{d x d} commutes.
    if smax == 0.0 {
        basis = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                unvec(&e, d)
            })
            .collect();
    }
    basis
}

/// Orthogonal similarity `Q = U S U^T` with `S` quasi upper triangular.
fn schur_like(q: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), OperatorError> {
    let d = q.nrows();
    if is_upper_triangular(q) {
        return Ok((DMatrix::identity(d, d), q.clone()));
    }
    if is_lower_triangular(q) {
        let flip = DMatrix::from_fn(d, d, |i, j| if i + j == d - 1 { 1.0 } else { 0.0 });
        let s = &flip * q * &flip;
        return Ok((flip, s));
    }
    let schur = Schur::try_new(q.clone(), 1e-15, 100_000)
        .ok_or_else(|| OperatorError::Commutant("real Schur iteration did not converge".into()))?;
    Ok(schur.unpack())
}

/// Solves `S X = X S` column block by column block. With `S` quasi upper
/// triangular the `vec` system is block lower triangular: the equations of
/// block `J` only involve columns `k < J` (already parametrised as `B theta`)
/// and the columns of `J` itself. Each step keeps an orthonormal
/// parametrisation, so the final basis is orthonormal without a separate
/// Gram-Schmidt pass.
fn commutant_structured(
    q: &DMatrix<f64>,
    rel_threshold: f64,
) -> Result<Vec<DMatrix<f64>>, OperatorError> {
    let d = q.nrows();
    let (u, s) = schur_like(q)?;
    let scale = 2.0 * q.clone().singular_values().max();
    let threshold = rel_threshold * scale;

    let mut blocks = Vec::new();
    let mut j = 0;
    while j < d {
        if j + 1 < d && s[(j + 1, j)] != 0.0 {
            blocks.push((j, 2));
            j += 2;
        } else {
            blocks.push((j, 1));
            j += 1;
        }
    }

    // Rows: stacked processed columns of X (d each); columns: free parameters.
    let mut param = DMatrix::<f64>::zeros(0, 0);
    for &(j0, b) in &blocks {
        let m = param.ncols();
        let width = m + b * d;
        let mut eq = DMatrix::<f64>::zeros(b * d, width);
        for a in 0..b {
            let c = j0 + a;
            let rows = a * d..(a + 1) * d;
            // Contribution of earlier columns: -sum_{k < j0} S[k, c] x_k.
            for k in 0..j0 {
                let coef = s[(k, c)];
                if coef != 0.0 {
                    let xk = param.rows(k * d, d);
                    let mut target = eq.view_mut((rows.start, 0), (d, m));
                    target -= xk * coef;
                }
            }
            for a2 in 0..b {
                let c2 = j0 + a2;
                let mut blk = eq.view_mut((rows.start, m + a2 * d), (d, d));
                if a2 == a {
                    blk += &s;
                }
                let coef = s[(c2, c)];
                if coef != 0.0 {
                    for i in 0..d {
                        blk[(i, i)] -= coef;
                    }
                }
            }
        }

        let null = null_space_of(eq, threshold);
        let theta = null.rows(0, m);
        let x_new = null.rows(m, b * d);
        let prev_rows = param.nrows();
        let mut next = DMatrix::<f64>::zeros(prev_rows + b * d, null.ncols());
        if m > 0 && prev_rows > 0 {
            next.rows_mut(0, prev_rows).copy_from(&(&param * theta));
        }
        next.rows_mut(prev_rows, b * d).copy_from(&x_new);
        param = next;
    }

    let ut = u.transpose();
    Ok(param
        .column_iter()
        .map(|col| {
            let x = unvec(col.as_slice(), d);
            &u * x * &ut
        })
        .collect())
}

/// Orthonormal basis (as columns) of the null space of `a`, treating
/// singular values `<= threshold` as zero.
fn null_space_of(a: DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    let n = a.ncols();
    let svd = SVD::new(a, false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > threshold)
        .count();
    if rank == 0 {
        return DMatrix::identity(n, n);
    }
    let row_space = DMatrix::from_fn(n, rank, |i, k| v_t[(k, i)]);
    // Full orthogonal factor of the row-space basis; its trailing columns
    // span the orthogonal complement.
    let qr = QR::new(row_space);
    let mut full_qt = DMatrix::<f64>::identity(n, n);
    qr.q_tr_mul(&mut full_qt);
    full_qt.rows(rank, n - rank).transpose()
}

/// Named operators reachable from configuration and the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OperatorSpec {
    Volterra(usize),
    Jordan(usize),
    WeightedShift(Vec<f64>),
    Identity(usize),
    Scalar(f64, usize),
    File(PathBuf),
}

impl OperatorSpec {
    pub fn build(&self) -> Result<OperatorMatrix, OperatorError> {
        match self {
            Self::Volterra(d) => Ok(OperatorMatrix::volterra(*d)),
            Self::Jordan(d) => OperatorMatrix::jordan_nilpotent(*d),
            Self::WeightedShift(w) => OperatorMatrix::weighted_shift(w),
            Self::Identity(d) => Ok(OperatorMatrix::identity(*d)),
            Self::Scalar(c, d) => Ok(OperatorMatrix::scalar(*c, *d)),
            Self::File(path) => OperatorMatrix::from_csv_path(path),
        }
    }
}

fn parse_dim(s: &str, spec: &str) -> Result<usize, OperatorError> {
    match s.trim().parse::<usize>() {
        Ok(d) if d >= 1 => Ok(d),
        _ => Err(OperatorError::InvalidParameter(format!(
            "`{spec}`: dimension must be a positive integer"
        ))),
    }
}

fn parse_reals(s: &str, spec: &str) -> Result<Vec<f64>, OperatorError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| OperatorError::InvalidParameter(format!("`{spec}`: expected numbers")))
}

impl FromStr for OperatorSpec {
    type Err = OperatorError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let (name, arg) = spec
            .split_once(':')
            .ok_or_else(|| OperatorError::UnknownSpec(spec.to_string()))?;
        match name.trim() {
            "volterra" => Ok(Self::Volterra(parse_dim(arg, spec)?)),
            "jordan" => Ok(Self::Jordan(parse_dim(arg, spec)?)),
            "identity" => Ok(Self::Identity(parse_dim(arg, spec)?)),
            "wshift" => Ok(Self::WeightedShift(parse_reals(arg, spec)?)),
            "scalar" => match parse_reals(arg, spec)?.as_slice() {
                [c, d] if *d >= 1.0 && d.fract() == 0.0 => Ok(Self::Scalar(*c, *d as usize)),
                _ => Err(OperatorError::InvalidParameter(format!(
                    "`{spec}`: expected scalar:c,d"
                ))),
            },
            "file" => Ok(Self::File(PathBuf::from(arg))),
            _ => Err(OperatorError::UnknownSpec(spec.to_string())),
        }
    }
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Volterra(d) => write!(f, "volterra:{d}"),
            Self::Jordan(d) => write!(f, "jordan:{d}"),
            Self::Identity(d) => write!(f, "identity:{d}"),
            Self::Scalar(c, d) => write!(f, "scalar:{c},{d}"),
            Self::WeightedShift(w) => {
                let parts: Vec<String> = w.iter().map(|x| x.to_string()).collect();
                write!(f, "wshift:{}", parts.join(","))
            }
            Self::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}
