use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use anyhow::{bail, Result};
use minvec_core::banach::{lp_norm, LpSpace};
use minvec_core::hyperinv::{choose_witness, run_pipeline, HyperinvariantReport, PipelineOptions};
use minvec_core::lemma_suite::{
    check_claim_9, check_kernel_alignment, check_lemma_2_3_bounds, check_lemma_2_4,
    check_lemma_2_7, check_remark_2_8, check_sublemma_2_6, CheckReport, CheckStatus,
};
use minvec_core::minvec::{
    min_vector_sequence, solve_min_vector, MinimalVectorProblem, MinimalVectorSequence,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{config_error, ExperimentConfig, Resolved, X0Choice};
use crate::output::RunDir;
use crate::svg::{line_chart, Series};

/// Names accepted by `lemmas --check`, in run order.
pub const CHECKERS: [&str; 7] = [
    "sublemma_2_6",
    "claim_9",
    "lemma_2_7",
    "lemma_2_3",
    "lemma_2_4",
    "remark_2_8",
    "kernel_alignment",
];

/// Result of a command that ran to completion.
pub struct Finished {
    pub dir: PathBuf,
    pub passed: bool,
}

pub fn resolve_x0(choice: X0Choice, r: &Resolved) -> Result<DVector<f64>> {
    let d = r.space.dim();
    let p = r.space.p();
    let v = match choice {
        X0Choice::Witness => return Ok(choose_witness(&r.q, r.eps.eps, &r.space, None)?.x0),
        X0Choice::E1 => DVector::from_fn(d, |i, _| if i == 0 { 1.0 } else { 0.0 }),
        X0Choice::Uniform => DVector::from_element(d, 1.0),
    };
    let n = lp_norm(v.as_slice(), p);
    Ok(v / n)
}

#[derive(Serialize)]
struct ModulusRow {
    eps: f64,
    delta: f64,
    closed_form: Option<f64>,
}

pub fn cmd_space(cfg: &ExperimentConfig, grid: usize) -> Result<Finished> {
    let d = match cfg.space.d {
        Some(d) => d,
        None => cfg.resolve()?.space.dim(),
    };
    let space = LpSpace::new(d, cfg.space.p).map_err(|e| config_error(e.to_string()))?;
    if grid == 0 {
        bail!(config_error("modulus grid must have at least one point"));
    }
    let mut out = RunDir::create(&cfg.output_root(), "space")?;
    let rows = out.timed("modulus", || -> Result<Vec<ModulusRow>> {
        (1..=grid)
            .map(|k| {
                let eps = 2.0 * k as f64 / grid as f64;
                Ok(ModulusRow {
                    eps,
                    delta: space.modulus_of_convexity(eps)?,
                    closed_form: space.modulus_closed_form(eps),
                })
            })
            .collect()
    })?;
    out.write_csv("modulus.csv", &rows)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.checks.seed);
    let (mut pairing, mut dual_norm) = (0.0_f64, 0.0_f64);
    for _ in 0..cfg.checks.trials.max(1) {
        let x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let norm = space.norm(&x)?;
        if norm == 0.0 {
            continue;
        }
        let f = space.duality_map(&x)?;
        pairing = pairing.max((f.apply(&x) - norm * norm).abs() / (norm * norm));
        dual_norm = dual_norm.max((space.dual_norm(&f)? - norm).abs() / norm);
    }
    let passed = pairing <= 1e-10 && dual_norm <= 1e-10;
    let report = json!({
        "p": space.p(),
        "q": space.q(),
        "d": d,
        "modulus_grid": grid,
        "duality_trials": cfg.checks.trials.max(1),
        "max_pairing_residual": pairing,
        "max_dual_norm_residual": dual_norm,
        "passed": passed,
    });
    out.write_json("space.json", &report)?;
    println!("l_{} of dimension {d}: duality residuals {pairing:.2e}, {dual_norm:.2e}", space.p());
    let mut summary = BTreeMap::new();
    summary.insert("duality_passed".into(), Value::Bool(passed));
    let dir = out.finish("space", cfg, passed, summary)?;
    Ok(Finished { dir, passed })
}

pub fn cmd_solve(cfg: &ExperimentConfig) -> Result<Finished> {
    let r = cfg.resolve()?;
    let mut out = RunDir::create(&cfg.output_root(), "solve")?;
    let x0 = out.timed("witness", || resolve_x0(cfg.problem.x0, &r))?;
    let problem = MinimalVectorProblem::new(&r.q, x0, r.eps.eps, cfg.problem.n, r.space)?;
    let sol = out.timed("solve", || solve_min_vector(&problem, &cfg.solver))?;
    out.write_json("solution.json", &sol)?;
    println!(
        "n = {}: ||y|| = {:.6e}, feasibility {:.2e}, kkt {:.2e}, a = {:.3e}",
        sol.n, sol.norm, sol.feasibility_residual, sol.kkt_residual, sol.multiplier
    );
    let mut summary = BTreeMap::new();
    summary.insert("eps".into(), json!(r.eps.eps));
    summary.insert("norm".into(), json!(sol.norm));
    let dir = out.finish("solve", cfg, true, summary)?;
    Ok(Finished { dir, passed: true })
}

#[derive(Serialize)]
struct SequenceRow {
    n: usize,
    norm: f64,
    ratio: Option<f64>,
    feasibility_residual: f64,
    kkt_residual: f64,
    alignment_residual: f64,
    multiplier: f64,
    iterations: usize,
}

fn sequence_rows(seq: &MinimalVectorSequence) -> Vec<SequenceRow> {
    seq.solutions
        .iter()
        .map(|s| SequenceRow {
            n: s.n,
            norm: s.norm,
            ratio: seq.ratios.iter().find(|r| r.n == s.n).map(|r| r.ratio),
            feasibility_residual: s.feasibility_residual,
            kkt_residual: s.kkt_residual,
            alignment_residual: s.alignment_residual,
            multiplier: s.multiplier,
            iterations: s.iterations,
        })
        .collect()
}

fn ratio_chart(seq: &MinimalVectorSequence) -> String {
    let series = Series {
        name: "ratio".into(),
        points: seq.ratios.iter().map(|r| (r.n as f64, r.ratio)).collect(),
    };
    line_chart("||y_{n-1}|| / ||y_n||", "n", "ratio", &[series], false)
}

fn write_sequence(out: &mut RunDir, seq: &MinimalVectorSequence) -> Result<()> {
    out.write_json("sequence.json", seq)?;
    out.write_csv("ratios.csv", &sequence_rows(seq))?;
    out.write_text("ratios.svg", &ratio_chart(seq))
}

pub fn cmd_sequence(cfg: &ExperimentConfig) -> Result<Finished> {
    let r = cfg.resolve()?;
    let mut out = RunDir::create(&cfg.output_root(), "sequence")?;
    let x0 = out.timed("witness", || resolve_x0(cfg.problem.x0, &r))?;
    let profile = r.q.quasinilpotency_profile(&r.space, cfg.problem.n)?;
    out.write_csv("power_norms.csv", &profile.rows)?;
    let seq = out.timed("sequence", || {
        min_vector_sequence(&r.q, &x0, r.eps.eps, cfg.problem.n, &r.space, &cfg.solver)
    })?;
    write_sequence(&mut out, &seq)?;
    for w in &seq.warnings {
        eprintln!("warning: {w}");
    }
    for row in sequence_rows(&seq) {
        let ratio = row.ratio.map_or_else(|| "-".to_string(), |r| format!("{r:.6}"));
        println!("n = {:>3}  ||y|| = {:.6e}  ratio = {ratio}", row.n, row.norm);
    }
    let mut summary = BTreeMap::new();
    summary.insert("eps".into(), json!(r.eps.eps));
    summary.insert("eta".into(), json!(r.eps.eta));
    summary.insert("min_ratio".into(), json!(seq.min_ratio()));
    summary.insert("effective_horizon".into(), json!(seq.effective_horizon));
    let dir = out.finish("sequence", cfg, true, summary)?;
    Ok(Finished { dir, passed: true })
}

#[derive(Serialize)]
struct LemmaRow<'a> {
    name: &'a str,
    status: CheckStatus,
    passed: bool,
    judged: usize,
    failures: usize,
    boundary: usize,
}

#[derive(Serialize)]
struct LemmaBundle<'a> {
    p: f64,
    d: usize,
    eps: f64,
    eta: f64,
    seed: u64,
    reports: &'a [CheckReport],
}

pub fn selected_checkers(names: &[String]) -> Result<Vec<&'static str>> {
    if names.is_empty() {
        return Ok(CHECKERS.to_vec());
    }
    let mut out = Vec::new();
    for n in names {
        match CHECKERS.iter().find(|c| **c == n.as_str()) {
            Some(c) if !out.contains(c) => out.push(*c),
            Some(_) => {}
            None => bail!(config_error(format!(
                "unknown checker `{n}`; expected one of {}",
                CHECKERS.join(", ")
            ))),
        }
    }
    Ok(out)
}

pub fn cmd_lemmas(cfg: &ExperimentConfig) -> Result<Finished> {
    let r = cfg.resolve()?;
    let names = selected_checkers(&cfg.checkers)?;
    let eta = r.eps.eta.unwrap_or(1.0 / 3.0);
    let mut out = RunDir::create(&cfg.output_root(), "lemmas")?;
    let x0 = out.timed("witness", || resolve_x0(cfg.problem.x0, &r))?;
    let settings = &cfg.checks;
    let needs_sequence = names
        .iter()
        .any(|n| matches!(*n, "lemma_2_3" | "lemma_2_4" | "kernel_alignment"));
    let seq = if needs_sequence {
        Some(out.timed("sequence", || {
            min_vector_sequence(&r.q, &x0, r.eps.eps, cfg.problem.n, &r.space, &cfg.solver)
        })?)
    } else {
        None
    };
    let mut reports = Vec::new();
    for name in &names {
        let report = out.timed(name, || match *name {
            "sublemma_2_6" => check_sublemma_2_6(&r.space, &x0, r.eps.eps, settings),
            "claim_9" => check_claim_9(&r.space, &x0, eta / 2.0, settings),
            "lemma_2_7" => check_lemma_2_7(&r.space, &x0, eta, settings),
            "lemma_2_3" => check_lemma_2_3_bounds(seq.as_ref().expect("sequence"), &r.space, settings),
            "lemma_2_4" => check_lemma_2_4(seq.as_ref().expect("sequence"), &r.q, &r.space, settings),
            "remark_2_8" => check_remark_2_8(&r.space, settings),
            "kernel_alignment" => check_kernel_alignment(
                &seq.as_ref().expect("sequence").solutions,
                &r.q,
                &x0,
                &r.space,
                settings,
            ),
            _ => unreachable!("checker names are validated"),
        })?;
        println!(
            "{:<18} {:<12} judged {:>6}  failures {:>4}  boundary {:>4}",
            report.name,
            format!("{:?}", report.status).to_lowercase(),
            report.judged,
            report.failures,
            report.boundary
        );
        reports.push(report);
    }
    let rows: Vec<LemmaRow> = reports
        .iter()
        .map(|c| LemmaRow {
            name: &c.name,
            status: c.status,
            passed: c.passed,
            judged: c.judged,
            failures: c.failures,
            boundary: c.boundary,
        })
        .collect();
    out.write_csv("summary.csv", &rows)?;
    out.write_json(
        "lemmas.json",
        &LemmaBundle {
            p: r.space.p(),
            d: r.space.dim(),
            eps: r.eps.eps,
            eta,
            seed: settings.seed,
            reports: &reports,
        },
    )?;
    let passed = reports.iter().all(|c| c.passed);
    let mut summary = BTreeMap::new();
    for c in &reports {
        summary.insert(c.name.clone(), Value::Bool(c.passed));
    }
    let dir = out.finish("lemmas", cfg, passed, summary)?;
    Ok(Finished { dir, passed })
}

#[derive(Serialize)]
struct PairingSummaryRow {
    t_index: usize,
    max_rho: f64,
    last_rho: f64,
    decay: f64,
    violates: bool,
}

fn rho_chart(report: &HyperinvariantReport) -> String {
    let mut by_size: Vec<_> = report.pairing.summaries.iter().collect();
    by_size.sort_by(|a, b| b.max_rho.total_cmp(&a.max_rho));
    let series: Vec<Series> = by_size
        .iter()
        .take(6)
        .map(|s| Series {
            name: format!("T{}", s.t_index),
            points: report
                .pairing
                .rows
                .iter()
                .filter(|r| r.t_index == s.t_index)
                .map(|r| (r.n as f64, r.rho))
                .collect(),
        })
        .collect();
    line_chart("pairing residuals rho_k", "n_k", "rho", &series, true)
}

pub fn cmd_hyperinv(cfg: &ExperimentConfig, write_commutant: bool) -> Result<Finished> {
    let r = cfg.resolve()?;
    let mut out = RunDir::create(&cfg.output_root(), "hyperinv")?;
    let opts = PipelineOptions {
        theta: cfg.hyperinv.theta,
        ..PipelineOptions::default()
    };
    let (report, seq) = out.timed("pipeline", || {
        run_pipeline(&r.q, &r.space, r.eps.eps, cfg.problem.n, &cfg.solver, &opts)
    })?;
    write_sequence(&mut out, &seq)?;
    out.write_json("hyperinv.json", &report)?;
    out.write_csv("decomposition.csv", &report.decomposition)?;
    out.write_csv("pairing.csv", &report.pairing.rows)?;
    let pairing_rows: Vec<PairingSummaryRow> = report
        .pairing
        .summaries
        .iter()
        .map(|s| PairingSummaryRow {
            t_index: s.t_index,
            max_rho: s.max_rho,
            last_rho: s.last_rho,
            decay: s.decay,
            violates: report.pairing.violations.contains(&s.t_index),
        })
        .collect();
    out.write_csv("pairing_summary.csv", &pairing_rows)?;
    out.write_text("rho.svg", &rho_chart(&report))?;
    if write_commutant {
        let basis = r.q.commutant_basis(&opts.commutant)?;
        let rows: Vec<Vec<f64>> = basis
            .basis
            .iter()
            .map(|t| t.transpose().as_slice().to_vec())
            .collect();
        let mut w = csv::Writer::from_path(out.dir.join("commutant_basis.csv"))?;
        for row in &rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    let c = &report.checks;
    println!("selected n_k       {:?}", report.subsequence.indices);
    println!("reconstruction     {:.2e} ({})", c.max_reconstruction_error, ok(c.reconstruction_exact));
    println!("|a_k| / bound      {:.3} ({})", c.max_a_over_bound, ok(c.a_bound_holds));
    println!(
        "||w||              {:.6e} >= {:.6e} ({})",
        report.w.norm_w,
        report.w.lower_bound,
        ok(c.w_nondegenerate)
    );
    println!(
        "dim Y              {} (invariance residual {:.2e}, {})",
        report.y.dim,
        report.y.invariance_residual,
        ok(c.y_invariant)
    );
    println!(
        "pairing decay      {} of {} basis elements violate ({}, asserted: {})",
        report.pairing.violations.len(),
        report.pairing.summaries.len(),
        ok(c.pairing_passed),
        report.pairing.asserted
    );
    let mut summary = BTreeMap::new();
    summary.insert("eps".into(), json!(report.eps));
    summary.insert("checks".into(), serde_json::to_value(&report.checks)?);
    summary.insert("dim_y".into(), json!(report.y.dim));
    let dir = out.finish("hyperinv", cfg, report.passed, summary)?;
    Ok(Finished {
        dir,
        passed: report.passed,
    })
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

#[derive(Serialize, Clone)]
struct SweepRow {
    operator: String,
    eps: f64,
    status: String,
    exit_code: i32,
    min_ratio: Option<f64>,
    last_norm: Option<f64>,
    lemma_2_3: Option<bool>,
    lemma_2_4: Option<bool>,
    error: Option<String>,
}

struct JobOutput {
    index: usize,
    row: SweepRow,
    sequence: Option<MinimalVectorSequence>,
}

fn run_job(cfg: &ExperimentConfig, operator: &str, eps: f64) -> Result<(MinimalVectorSequence, bool, bool)> {
    let mut job = cfg.clone();
    job.problem.operator = operator.to_string();
    job.problem.eps = Some(eps);
    job.problem.eta = None;
    job.space.d = None;
    let r = job.resolve()?;
    let x0 = resolve_x0(job.problem.x0, &r)?;
    let seq = min_vector_sequence(&r.q, &x0, eps, job.problem.n, &r.space, &job.solver)?;
    let l23 = check_lemma_2_3_bounds(&seq, &r.space, &job.checks)?.passed;
    let l24 = check_lemma_2_4(&seq, &r.q, &r.space, &job.checks)?.passed;
    Ok((seq, l23, l24))
}

/// Runs `sequence` plus the sequence checks for every operator/eps pair on a
/// pool of worker threads; the calling thread is the only writer.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<(Finished, i32)> {
    let sweep = &cfg.sweep;
    if sweep.operators.is_empty() || sweep.eps.is_empty() {
        bail!(config_error("sweep needs at least one operator and one eps"));
    }
    for op in &sweep.operators {
        op.parse::<minvec_core::operators::OperatorSpec>()
            .map_err(|e| config_error(format!("sweep operator: {e}")))?;
    }
    let jobs: Vec<(String, f64)> = sweep
        .operators
        .iter()
        .flat_map(|o| sweep.eps.iter().map(move |e| (o.clone(), *e)))
        .collect();
    let workers = sweep.workers.clamp(1, jobs.len());
    let mut out = RunDir::create(&cfg.output_root(), "sweep")?;
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<JobOutput>();
    let mut results: Vec<Option<JobOutput>> = (0..jobs.len()).map(|_| None).collect();
    out.timed("jobs", || {
        std::thread::scope(|s| {
            for _ in 0..workers {
                let tx = tx.clone();
                let (jobs, next) = (&jobs, &next);
                s.spawn(move || loop {
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    let Some((op, eps)) = jobs.get(index) else {
                        break;
                    };
                    let mut row = SweepRow {
                        operator: op.clone(),
                        eps: *eps,
                        status: "ok".into(),
                        exit_code: 0,
                        min_ratio: None,
                        last_norm: None,
                        lemma_2_3: None,
                        lemma_2_4: None,
                        error: None,
                    };
                    let sequence = match run_job(cfg, op, *eps) {
                        Ok((seq, l23, l24)) => {
                            row.min_ratio = seq.min_ratio();
                            row.last_norm = seq.norms.last().copied();
                            row.lemma_2_3 = Some(l23);
                            row.lemma_2_4 = Some(l24);
                            if !(l23 && l24) {
                                row.status = "check_failed".into();
                                row.exit_code = 1;
                            }
                            Some(seq)
                        }
                        Err(e) => {
                            row.exit_code = crate::exit_code(&e);
                            row.status = "error".into();
                            row.error = Some(format!("{e:#}"));
                            None
                        }
                    };
                    if tx.send(JobOutput { index, row, sequence }).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            for result in rx {
                let i = result.index;
                results[i] = Some(result);
            }
        });
    });
    let mut rows = Vec::new();
    for (i, result) in results.into_iter().enumerate() {
        let result = result.expect("every job reports");
        if let Some(seq) = &result.sequence {
            out.write_json(&format!("job-{i:02}.json"), seq)?;
        }
        let r = &result.row;
        println!(
            "{:<20} eps = {:<8} {:<12} min ratio {}",
            r.operator,
            r.eps,
            r.status,
            r.min_ratio.map_or_else(|| "-".into(), |v| format!("{v:.6}"))
        );
        rows.push(result.row);
    }
    out.write_csv("sweep.csv", &rows)?;
    let code = rows.iter().map(|r| r.exit_code).max().unwrap_or(0);
    let passed = code == 0;
    let mut summary = BTreeMap::new();
    summary.insert("jobs".into(), json!(rows.len()));
    summary.insert("workers".into(), json!(workers));
    summary.insert("worst_exit_code".into(), json!(code));
    let dir = out.finish("sweep", cfg, passed, summary)?;
    Ok((Finished { dir, passed }, code))
}
