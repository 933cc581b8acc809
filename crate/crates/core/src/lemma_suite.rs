//! Numerical checkers for the geometric lemmas behind the minimal-vector
//! method. Each checker returns a [`CheckReport`]: a verdict, the tolerance
//! it used and a table of witnesses with the measured quantities.
//!
//! Strict inequalities are judged outside a boundary band (default `1e-6`);
//! witnesses inside the band are recorded as [`WitnessStatus::Boundary`] and
//! never decide the verdict.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::banach::{duality_map_raw, lp_norm, BanachError, LpSpace};
use crate::minvec::{MinimalVectorSequence, MinimalVectorSolution};
use crate::operators::{OperatorError, OperatorMatrix};

#[derive(Debug, Error)]
pub enum LemmaError {
    #[error(transparent)]
    Space(#[from] BanachError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("eta = {0} must lie in (0, 1]")]
    InvalidEta(f64),
    #[error("invalid checker input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Passed,
    Failed,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessStatus {
    Pass,
    Fail,
    Boundary,
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub label: String,
    pub values: BTreeMap<String, f64>,
    pub status: WitnessStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub status: CheckStatus,
    pub passed: bool,
    pub tolerance: f64,
    pub boundary_band: f64,
    pub judged: usize,
    pub failures: usize,
    pub boundary: usize,
    pub summary: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub witnesses: Vec<Witness>,
    /// Passing witnesses counted but not stored.
    pub omitted_passing: usize,
}

impl CheckReport {
    pub fn first_failure(&self) -> Option<&Witness> {
        self.witnesses.iter().find(|w| w.status == WitnessStatus::Fail)
    }
}

/// Knobs shared by the sampling checkers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSettings {
    pub samples: usize,
    pub lambda_grid: usize,
    pub band: f64,
    /// Tolerance for non-strict inequalities on computed quantities.
    pub tol: f64,
    /// Tolerance for the kernel-alignment recheck.
    pub alignment_tol: f64,
    pub trials: usize,
    pub max_recorded: usize,
    pub seed: u64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self {
            samples: 10_000,
            lambda_grid: 1_000,
            band: 1e-6,
            tol: 1e-8,
            alignment_tol: 1e-6,
            trials: 100,
            max_recorded: 100,
            seed: 7,
        }
    }
}

impl CheckSettings {
    /// Independent stream per checker so reports do not depend on run order.
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

struct Builder {
    report: CheckReport,
    max_recorded: usize,
}

impl Builder {
    fn new(name: &str, tolerance: f64, band: f64, max_recorded: usize) -> Self {
        Self {
            report: CheckReport {
                name: name.to_string(),
                status: CheckStatus::Passed,
                passed: true,
                tolerance,
                boundary_band: band,
                judged: 0,
                failures: 0,
                boundary: 0,
                summary: BTreeMap::new(),
                notes: Vec::new(),
                witnesses: Vec::new(),
                omitted_passing: 0,
            },
            max_recorded,
        }
    }

    fn witness(&mut self, label: impl Into<String>, values: &[(&str, f64)], status: WitnessStatus) {
        match status {
            WitnessStatus::Pass => self.report.judged += 1,
            WitnessStatus::Fail => {
                self.report.judged += 1;
                self.report.failures += 1;
            }
            WitnessStatus::Boundary => self.report.boundary += 1,
            WitnessStatus::Info => {}
        }
        let passing = self
            .report
            .witnesses
            .iter()
            .filter(|w| w.status == WitnessStatus::Pass)
            .count();
        if status == WitnessStatus::Pass && passing >= self.max_recorded {
            self.report.omitted_passing += 1;
            return;
        }
        self.report.witnesses.push(Witness {
            label: label.into(),
            values: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            status,
        });
    }

    fn judge(&mut self, label: impl Into<String>, values: &[(&str, f64)], ok: bool) {
        let status = if ok {
            WitnessStatus::Pass
        } else {
            WitnessStatus::Fail
        };
        self.witness(label, values, status);
    }

    fn summary(&mut self, key: &str, value: f64) {
        self.report.summary.insert(key.to_string(), value);
    }

    fn note(&mut self, note: impl Into<String>) {
        self.report.notes.push(note.into());
    }

    fn finish(mut self, inconclusive: Option<String>) -> CheckReport {
        let r = &mut self.report;
        r.status = if r.failures > 0 {
            CheckStatus::Failed
        } else if let Some(reason) = inconclusive {
            r.notes.push(reason);
            CheckStatus::Inconclusive
        } else if r.judged == 0 {
            r.notes.push("no witness was judged".into());
            CheckStatus::Inconclusive
        } else {
            CheckStatus::Passed
        };
        r.passed = r.status == CheckStatus::Passed;
        self.report
    }
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn dual(v: &DVector<f64>, p: f64) -> DVector<f64> {
    duality_map_raw(v, p).unwrap_or_else(|| DVector::zeros(v.len()))
}

fn unit_x0(space: &LpSpace, x0: &DVector<f64>) -> Result<(), LemmaError> {
    let n = space.norm(x0)?;
    if (n - 1.0).abs() > 1e-10 {
        return Err(LemmaError::InvalidInput(format!("x0 must be a unit vector, ||x0|| = {n}")));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<(), LemmaError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LemmaError::InvalidInput(format!("eps = {eps} must lie in (0, 1)")));
    }
    Ok(())
}

/// Modulus of convexity: the closed form where it is exact (`p >= 2`,
/// `d >= 2`), the two-dimensional scan otherwise.
pub fn modulus(space: &LpSpace, eps: f64) -> Result<f64, LemmaError> {
    if space.dim() >= 2 {
        if let Some(v) = space.modulus_closed_form(eps) {
            return Ok(v);
        }
    }
    Ok(space.modulus_of_convexity(eps)?)
}

/// Smallest `eps` with `eps >= 1/2`, `1/eps - 1 <= 2 delta(eta/2)` and
/// `1 - eps <= eta/2`.
pub fn epsilon_for_eta(space: &LpSpace, eta: f64) -> Result<f64, LemmaError> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(LemmaError::InvalidEta(eta));
    }
    let delta = modulus(space, eta / 2.0)?;
    Ok(0.5_f64
        .max(1.0 - eta / 2.0)
        .max(1.0 / (1.0 + 2.0 * delta)))
}

/// `(x0 - w)*(x0) / ||x0 - w||^2`, condition (b).
fn condition_b(x0: &DVector<f64>, w: &DVector<f64>, p: f64) -> f64 {
    let diff = x0 - w;
    let n = lp_norm(diff.as_slice(), p);
    dual(&diff, p).dot(x0) / (n * n)
}

/// Slope-normalised margin of condition (a):
/// `min_lambda (||x0 - lambda w|| - ||x0 - w||) / (1 - lambda)` over the grid.
/// Positive iff `||x0 - lambda w|| > eps` on the whole grid; the points
/// `1 - 10^-k` resolve the approach to `lambda = 1`, where the quotient tends
/// to `-d/dlambda ||x0 - lambda w||`.
fn condition_a_margin(x0: &DVector<f64>, w: &DVector<f64>, p: f64, grid: &[f64]) -> f64 {
    let at_one = lp_norm((x0 - w).as_slice(), p);
    let mut buf = x0.clone();
    grid.iter()
        .map(|&lam| {
            buf.copy_from(x0);
            buf.axpy(-lam, w, 1.0);
            (lp_norm(buf.as_slice(), p) - at_one) / (1.0 - lam)
        })
        .fold(f64::INFINITY, f64::min)
}

fn lambda_grid(points: usize) -> Vec<f64> {
    let points = points.max(1);
    let mut grid: Vec<f64> = (0..points).map(|k| k as f64 / points as f64).collect();
    grid.extend((4..=8).map(|k| 1.0 - 10f64.powi(-k)));
    grid
}

/// Equivalence of (a) `||x0 - lambda w|| > eps` for all `lambda in [0, 1)`
/// and (b) `(x0 - w)*(x0) / ||x0 - w||^2 >= 1`, for `w` on the sphere
/// `S(x0, eps)`.
pub fn check_sublemma_2_6(
    space: &LpSpace,
    x0: &DVector<f64>,
    eps: f64,
    settings: &CheckSettings,
) -> Result<CheckReport, LemmaError> {
    unit_x0(space, x0)?;
    check_eps(eps)?;
    let p = space.p();
    let d = space.dim();
    let grid = lambda_grid(settings.lambda_grid);
    let mut b = Builder::new("sublemma_2_6", 0.0, settings.band, settings.max_recorded);
    b.summary("p", p);
    b.summary("eps", eps);

    let classify = |b: &mut Builder, label: String, w: &DVector<f64>| -> (bool, bool) {
        let margin = condition_a_margin(x0, w, p, &grid);
        let bval = condition_b(x0, w, p);
        let a_holds = margin > 0.0;
        let b_holds = bval >= 1.0;
        let values = [("margin_a", margin), ("value_b", bval), ("norm_w", lp_norm(w.as_slice(), p))];
        if margin.abs() <= settings.band || (bval - 1.0).abs() <= settings.band {
            b.witness(label, &values, WitnessStatus::Boundary);
        } else {
            b.judge(label, &values, a_holds == b_holds);
        }
        (a_holds, b_holds)
    };

    classify(&mut b, "collinear (1-eps) x0".into(), &(x0 * (1.0 - eps)));
    let mut rng = settings.rng(1);
    let (mut a_count, mut b_count) = (0usize, 0usize);
    for i in 0..settings.samples {
        // Half the directions point back towards the origin, where (a) holds.
        let g = gaussian(&mut rng, d);
        let u = if i % 2 == 0 {
            g
        } else {
            -x0 + g * log_uniform(&mut rng, 1e-3, 3.0)
        };
        let Some(u) = space.normalize(&u)? else { continue };
        let w = x0 + u * eps;
        let (a_holds, b_holds) = classify(&mut b, format!("sample {i}"), &w);
        a_count += a_holds as usize;
        b_count += b_holds as usize;
    }
    b.summary("samples", settings.samples as f64);
    b.summary("a_true", a_count as f64);
    b.summary("b_true", b_count as f64);
    let inconclusive = (a_count == 0 || a_count == settings.samples)
        .then(|| "sampling never split the two cases".to_string());
    Ok(b.finish(inconclusive))
}

/// For `x` on `S(x0, 1)` with `(x0 - x)*(x0) > 1 - 2 delta(eta')`, `||x|| < eta'`.
pub fn check_claim_9(
    space: &LpSpace,
    x0: &DVector<f64>,
    eta_prime: f64,
    settings: &CheckSettings,
) -> Result<CheckReport, LemmaError> {
    unit_x0(space, x0)?;
    if !(eta_prime > 0.0 && eta_prime <= 1.0) {
        return Err(LemmaError::InvalidEta(eta_prime));
    }
    let p = space.p();
    let delta = modulus(space, eta_prime)?;
    let threshold = 1.0 - 2.0 * delta;
    let mut b = Builder::new("claim_9", 0.0, settings.band, settings.max_recorded);
    b.summary("p", p);
    b.summary("eta_prime", eta_prime);
    b.summary("delta", delta);
    b.summary("threshold", threshold);

    let mut rng = settings.rng(2);
    let mut triggered = 0usize;
    let mut max_norm = 0.0_f64;
    for i in 0..=settings.samples {
        // x = x0 - e with e a unit vector; e close to x0 puts x near the origin.
        let e = if i == 0 {
            x0.clone()
        } else {
            let sigma = log_uniform(&mut rng, 1e-4, 10.0);
            match space.normalize(&(x0 + gaussian(&mut rng, space.dim()) * sigma))? {
                Some(e) => e,
                None => continue,
            }
        };
        let x = x0 - &e;
        let value = dual(&e, p).dot(x0);
        let norm = lp_norm(x.as_slice(), p);
        if value <= threshold - settings.band {
            continue;
        }
        let values = [("value", value), ("norm_x", norm)];
        if (value - threshold).abs() <= settings.band || (norm - eta_prime).abs() <= settings.band {
            b.witness(format!("sample {i}"), &values, WitnessStatus::Boundary);
            continue;
        }
        triggered += 1;
        max_norm = max_norm.max(norm);
        b.judge(format!("sample {i}"), &values, norm < eta_prime);
    }
    b.summary("triggered", triggered as f64);
    b.summary("max_norm_triggered", max_norm);
    let inconclusive = (triggered == 0).then(|| "no sample met the hypothesis".to_string());
    Ok(b.finish(inconclusive))
}

/// With `eps = epsilon_for_eta(eta)`, every `w` on `S(x0, eps)` satisfying
/// condition (b) of the equivalence has `||w|| <= eta`.
pub fn check_lemma_2_7(
    space: &LpSpace,
    x0: &DVector<f64>,
    eta: f64,
    settings: &CheckSettings,
) -> Result<CheckReport, LemmaError> {
    unit_x0(space, x0)?;
    let eps = epsilon_for_eta(space, eta)?;
    let p = space.p();
    let mut b = Builder::new("lemma_2_7", 0.0, settings.band, settings.max_recorded);
    b.summary("p", p);
    b.summary("eta", eta);
    b.summary("eps", eps);

    let judge = |b: &mut Builder, label: String, w: &DVector<f64>, bval: f64| {
        let norm = lp_norm(w.as_slice(), p);
        let values = [("value_b", bval), ("norm_w", norm)];
        if (norm - eta).abs() <= settings.band {
            b.witness(label, &values, WitnessStatus::Boundary);
        } else {
            b.judge(label, &values, norm <= eta);
        }
        norm
    };
    let collinear = x0 * (1.0 - eps);
    let cb = condition_b(x0, &collinear, p);
    judge(&mut b, "collinear (1-eps) x0".into(), &collinear, cb);

    let mut rng = settings.rng(3);
    let max_attempts = settings.samples.saturating_mul(100).max(1000);
    let (mut accepted, mut attempts) = (0usize, 0usize);
    let mut max_norm = 0.0_f64;
    while accepted < settings.samples && attempts < max_attempts {
        attempts += 1;
        let sigma = log_uniform(&mut rng, 1e-3, 3.0);
        let dir = -x0 + gaussian(&mut rng, space.dim()) * sigma;
        let Some(u) = space.normalize(&dir)? else { continue };
        let w = x0 + u * eps;
        let bval = condition_b(x0, &w, p);
        if bval < 1.0 + settings.band {
            if (bval - 1.0).abs() <= settings.band {
                b.witness(format!("attempt {attempts}"), &[("value_b", bval)], WitnessStatus::Boundary);
            }
            continue;
        }
        accepted += 1;
        max_norm = max_norm.max(judge(&mut b, format!("attempt {attempts}"), &w, bval));
    }
    b.summary("accepted", accepted as f64);
    b.summary("attempts", attempts as f64);
    b.summary("max_norm_accepted", max_norm);
    let inconclusive = (accepted == 0).then(|| "degenerate sample: no w passed the filter".to_string());
    if accepted > 0 && accepted < settings.samples {
        b.note(format!("only {accepted} of {} requested samples accepted", settings.samples));
    }
    Ok(b.finish(inconclusive))
}

/// `||Q^n y_n|| <= 1/3` and `(Q^n y_n - x0)*(-x0) >= 1/12` along a sequence.
pub fn check_lemma_2_3_bounds(
    seq: &MinimalVectorSequence,
    space: &LpSpace,
    settings: &CheckSettings,
) -> Result<CheckReport, LemmaError> {
    let p = space.p();
    let tol = settings.tol;
    let mut b = Builder::new("lemma_2_3", tol, 0.0, usize::MAX);
    b.summary("p", p);
    b.summary("eps", seq.eps);
    let recipe = epsilon_for_eta(space, 1.0 / 3.0)?;
    b.summary("eps_recipe", recipe);
    if seq.eps < recipe - 1e-12 {
        b.note(format!(
            "negative control: eps = {} is below the eta = 1/3 recipe {recipe}; the bounds are not guaranteed",
            seq.eps
        ));
    }
    for sol in &seq.solutions {
        let r = &sol.image - &seq.x0;
        let image_norm = lp_norm(sol.image.as_slice(), p);
        let pairing = -dual(&r, p).dot(&seq.x0);
        b.judge(
            format!("n = {}", sol.n),
            &[
                ("n", sol.n as f64),
                ("image_norm", image_norm),
                ("pairing", pairing),
            ],
            image_norm <= 1.0 / 3.0 + tol && pairing >= 1.0 / 12.0 - tol,
        );
    }
    Ok(b.finish(None))
}

/// Finite form of the ratio argument: for every `n`,
/// `min_{k <= n} ||y_k|| / ||y_{k+1}|| <= ||Q^n||^(1/n)`, with a certified
/// upper bound for the operator norm. Needs the sequence to depth `N + 1`.
pub fn check_lemma_2_4(
    seq: &MinimalVectorSequence,
    q: &OperatorMatrix,
    space: &LpSpace,
    settings: &CheckSettings,
) -> Result<CheckReport, LemmaError> {
    if seq.len() < 2 {
        return Err(LemmaError::InvalidInput("need at least two minimal vectors".into()));
    }
    let tol = settings.tol;
    let mut b = Builder::new("lemma_2_4", tol, 0.0, usize::MAX);
    let depth = seq.len() - 1;
    let profile = q.quasinilpotency_profile(space, depth)?;
    let mut running_min = f64::INFINITY;
    let mut decreasing = true;
    for n in 1..=depth {
        let ratio = seq.norms[n - 1] / seq.norms[n];
        if n > 1 && ratio >= seq.norms[n - 2] / seq.norms[n - 1] {
            decreasing = false;
        }
        running_min = running_min.min(ratio);
        let root = profile.rows[n - 1].root;
        b.judge(
            format!("n = {n}"),
            &[
                ("n", n as f64),
                ("ratio", ratio),
                ("min_ratio", running_min),
                ("norm_bound_root", root),
                ("margin", root - running_min),
            ],
            running_min <= root + tol,
        );
    }
    b.summary("depth", depth as f64);
    b.summary("effective_horizon", profile.effective_horizon as f64);
    b.summary("ratios_decreasing", if decreasing { 1.0 } else { 0.0 });
    b.note("the ratio trend is reported, not asserted");
    Ok(b.finish(None))
}

/// Two-sided test of: if `f(x) < 0` implies `g(x) >= 0` then `g = a f` with
/// `a <= 0`.
pub fn check_remark_2_8(space: &LpSpace, settings: &CheckSettings) -> Result<CheckReport, LemmaError> {
    let d = space.dim();
    let mut b = Builder::new("remark_2_8", 0.0, 0.0, settings.max_recorded);
    let mut rng = settings.rng(4);
    const PROBES: usize = 1_000;

    // Forward: g = a f with a <= 0 satisfies the hypothesis on random probes.
    let mut forward_fail = 0usize;
    for trial in 0..settings.trials {
        let f = gaussian(&mut rng, d);
        let a = match trial {
            0 => 0.0,
            1 => -2.0,
            _ => -rng.gen_range(0.0..5.0),
        };
        let g = &f * a;
        let violations = (0..PROBES)
            .filter(|_| {
                let x = gaussian(&mut rng, d);
                f.dot(&x) < 0.0 && g.dot(&x) < 0.0
            })
            .count();
        forward_fail += (violations > 0) as usize;
        b.judge(
            format!("forward {trial}"),
            &[("a", a), ("violations", violations as f64)],
            violations == 0,
        );
    }

    // Contrapositive: g is not a nonpositive multiple of f; find x with
    // f(x) < 0 and g(x) < 0.
    let mut found = 0usize;
    let mut missing = 0usize;
    for trial in 0..settings.trials {
        let f = gaussian(&mut rng, d);
        let g = if trial % 2 == 0 || d == 1 {
            &f * rng.gen_range(0.1..5.0)
        } else {
            gaussian(&mut rng, d)
        };
        let mut witness = None;
        for _ in 0..100 {
            let x = gaussian(&mut rng, d);
            if f.dot(&x) < 0.0 && g.dot(&x) < 0.0 {
                witness = Some((x, "random"));
                break;
            }
        }
        if witness.is_none() {
            witness = kernel_witness(&f, &g).map(|x| (x, "constructed"));
        }
        match witness {
            Some((x, how)) => {
                found += 1;
                b.judge(
                    format!("contrapositive {trial} ({how})"),
                    &[("f_x", f.dot(&x)), ("g_x", g.dot(&x))],
                    f.dot(&x) < 0.0 && g.dot(&x) < 0.0,
                );
            }
            None => {
                missing += 1;
                b.witness(format!("contrapositive {trial}"), &[], WitnessStatus::Info);
            }
        }
    }
    b.summary("forward_failures", forward_fail as f64);
    b.summary("witnesses_found", found as f64);
    b.summary("witnesses_missing", missing as f64);
    let inconclusive = (missing > 0).then(|| format!("witness not found in {missing} counter-cases"));
    Ok(b.finish(inconclusive))
}

/// The construction from the proof: `x_0 = -f / |f|^2` has `f(x_0) = -1`;
/// if `g(x_0) >= 0`, shift along `x in ker f \ ker g`.
fn kernel_witness(f: &DVector<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let ff = f.dot(f);
    if ff == 0.0 {
        return None;
    }
    let base = -f / ff;
    let gb = g.dot(&base);
    if gb < 0.0 {
        return Some(base);
    }
    let k = g - f * (g.dot(f) / ff);
    let gk = g.dot(&k);
    if gk <= 0.0 {
        return None;
    }
    let t = 2.0 * (gb + 1.0) / gk;
    Some(base - k * t)
}

/// Independent recheck of a solver certificate: `g = (Q^n)^T (Q^n y - x0)*`
/// must be a nonpositive multiple of `f = (y)*`. Powers are applied one
/// factor at a time rather than through the explicit matrix power.
pub fn check_kernel_alignment(
    sols: &[MinimalVectorSolution],
    q: &OperatorMatrix,
    x0: &DVector<f64>,
    space: &LpSpace,
    settings: &CheckSettings,
) -> Result<CheckReport, LemmaError> {
    let p = space.p();
    let qexp = space.q();
    let tol = settings.alignment_tol;
    let mut b = Builder::new("kernel_alignment", tol, 0.0, usize::MAX);
    let qt = q.transpose();
    for sol in sols {
        let image = q.apply_power(sol.n, &sol.y)?;
        let r = &image - x0;
        let f = space.duality_map(&sol.y)?.into_inner();
        let g = qt.apply_power(sol.n, &dual(&r, p))?;
        let a = g.dot(&f) / f.dot(&f);
        let misfit = lp_norm((&g - &f * a).as_slice(), qexp);
        let g_norm = lp_norm(g.as_slice(), qexp);
        let residual = if g_norm > 0.0 { misfit / g_norm } else { f64::INFINITY };
        b.judge(
            format!("n = {}", sol.n),
            &[("n", sol.n as f64), ("a", a), ("residual", residual)],
            residual <= tol && a <= tol,
        );
    }
    Ok(b.finish(None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minvec::{min_vector_sequence, SolverConfig};
    use approx::assert_abs_diff_eq;

    fn e1(d: usize) -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v[0] = 1.0;
        v
    }

    fn small() -> CheckSettings {
        CheckSettings {
            samples: 500,
            lambda_grid: 200,
            trials: 20,
            ..Default::default()
        }
    }

    #[test]
    fn epsilon_recipe_values() {
        let s = LpSpace::new(4, 2.0).unwrap();
        // Euclidean modulus 1 - sqrt(1 - e^2/4), so eps = 1 / (1 + 2 delta(eta/2)).
        let oracle = |eta: f64| 1.0 / (1.0 + 2.0 * (1.0 - (1.0 - eta * eta / 16.0).sqrt()));
        assert_abs_diff_eq!(epsilon_for_eta(&s, 1.0 / 3.0).unwrap(), oracle(1.0 / 3.0), epsilon = 1e-14);
        assert_abs_diff_eq!(epsilon_for_eta(&s, 1.0 / 3.0).unwrap(), 0.993_091_52, epsilon = 1e-8);
        assert_abs_diff_eq!(epsilon_for_eta(&s, 1.0).unwrap(), 0.940_284_13, epsilon = 1e-8);
        // Every constraint of the recipe holds at the returned value.
        for eta in [1.0 / 3.0, 1.0] {
            let e = epsilon_for_eta(&s, eta).unwrap();
            let delta = 1.0 - (1.0 - eta * eta / 16.0).sqrt();
            assert!(e >= 0.5 && 1.0 - e <= eta / 2.0 && 1.0 / e - 1.0 <= 2.0 * delta + 1e-15);
        }
        let mut prev = 0.0;
        for eta in [1.0, 0.5, 0.25, 0.125, 0.0625] {
            let e = epsilon_for_eta(&s, eta).unwrap();
            assert!(e >= prev && e < 1.0);
            prev = e;
        }
        assert!(epsilon_for_eta(&s, 0.0).is_err());
    }

    #[test]
    fn condition_b_closed_forms() {
        let s = LpSpace::new(3, 2.0).unwrap();
        let x0 = e1(3);
        let eps = 0.4;
        assert_abs_diff_eq!(condition_b(&x0, &(&x0 * (1.0 - eps)), 2.0), 1.0 / eps, epsilon = 1e-14);
        let mut w = x0.clone();
        w[1] = eps;
        assert_abs_diff_eq!(condition_b(&x0, &w, 2.0), 0.0, epsilon = 1e-14);
        let grid = lambda_grid(1000);
        assert!(condition_a_margin(&x0, &w, 2.0, &grid) < 0.0);
        assert!(condition_a_margin(&x0, &(&x0 * (1.0 - eps)), 2.0, &grid) > 0.0);
        let _ = s;
    }

    #[test]
    fn sampling_checks_pass() {
        for p in [1.5, 2.0, 3.0] {
            let s = LpSpace::new(3, p).unwrap();
            let x0 = e1(3);
            let r = check_sublemma_2_6(&s, &x0, 0.5, &small()).unwrap();
            assert!(r.passed, "{p}: {:?}", r.first_failure());
            let r = check_claim_9(&s, &x0, 1.0 / 3.0, &small()).unwrap();
            assert!(r.passed, "{p}: {:?} {:?}", r.first_failure(), r.notes);
            let r = check_lemma_2_7(&s, &x0, 1.0 / 3.0, &small()).unwrap();
            assert!(r.passed, "{p}: {:?} {:?}", r.first_failure(), r.notes);
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let s = LpSpace::new(3, 1.5).unwrap();
        let a = check_sublemma_2_6(&s, &e1(3), 0.3, &small()).unwrap();
        let b = check_sublemma_2_6(&s, &e1(3), 0.3, &small()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn remark_forward_and_contrapositive() {
        let s = LpSpace::new(5, 2.0).unwrap();
        let r = check_remark_2_8(&s, &small()).unwrap();
        assert!(r.passed);
        assert_eq!(r.summary["witnesses_found"], 20.0);
        let f = DVector::from_column_slice(&[1.0, 0.0]);
        let g = DVector::from_column_slice(&[0.0, 1.0]);
        let x = kernel_witness(&f, &g).unwrap();
        assert!(f.dot(&x) < 0.0 && g.dot(&x) < 0.0);
    }

    #[test]
    fn identity_sequence_meets_bounds() {
        let s = LpSpace::new(3, 2.0).unwrap();
        let q = OperatorMatrix::identity(3);
        let x0 = e1(3);
        let eps = epsilon_for_eta(&s, 1.0 / 3.0).unwrap();
        let seq = min_vector_sequence(&q, &x0, eps, 4, &s, &SolverConfig::default()).unwrap();
        let r = check_lemma_2_3_bounds(&seq, &s, &small()).unwrap();
        assert!(r.passed);
        let r = check_lemma_2_4(&seq, &q, &s, &small()).unwrap();
        assert!(r.passed);
        let r = check_kernel_alignment(&seq.solutions, &q, &x0, &s, &small()).unwrap();
        assert!(r.passed);
        assert_abs_diff_eq!(r.witnesses[0].values["a"], -eps / (1.0 - eps), epsilon = 1e-8);
    }

    #[test]
    fn scalar_operator_is_tight() {
        let s = LpSpace::new(2, 2.0).unwrap();
        let q = OperatorMatrix::scalar(0.5, 2);
        let seq = min_vector_sequence(&q, &e1(2), 0.5, 5, &s, &SolverConfig::default()).unwrap();
        for r in &seq.ratios {
            assert_abs_diff_eq!(r.ratio, 0.5, epsilon = 1e-12);
        }
        let r = check_lemma_2_4(&seq, &q, &s, &small()).unwrap();
        assert!(r.passed);
    }
}
