//! `minvec`: config-driven runner for minimal-vector experiments.
//!
//! Exit codes: 0 when every asserted check passes, 1 on a check failure,
//! 2 for configuration errors and infeasible problems, 3 when a solver does
//! not converge.

mod commands;
mod config;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use minvec_core::hyperinv::HyperinvError;
use minvec_core::lemma_suite::LemmaError;
use minvec_core::minvec::{MinVecError, SolverPath};

use config::{ConfigError, ExperimentConfig, X0Choice};

#[derive(Parser)]
#[command(name = "minvec", version, about = "Minimal vectors and invariant-subspace diagnostics on l_p spaces")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root (default: $MINVEC_OUT, then ./minvec-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Modulus of convexity table and duality-map self-test.
    Space {
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, default_value_t = 50)]
        modulus_grid: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Minimal vector for a single power n.
    Solve(ProblemArgs),
    /// Minimal vectors for n = 1..N with the ratio table.
    Sequence(ProblemArgs),
    /// Run the lemma checkers.
    Lemmas {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Checker to run; repeatable.
        #[arg(long = "check", conflicts_with = "all")]
        checks: Vec<String>,
        /// Run all seven checkers.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run the invariant-subspace pipeline.
    Hyperinv {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Ratio threshold for the subsequence (default: median ratio).
        #[arg(long)]
        theta: Option<f64>,
        /// Also write the commutant basis as CSV.
        #[arg(long)]
        write_commutant: bool,
    },
    /// Sequences and sequence checks over operator/eps grids.
    Sweep {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Operator specs separated by `;` (specs themselves may contain commas).
        #[arg(long, value_delimiter = ';')]
        operators: Vec<String>,
        /// Comma-separated eps values.
        #[arg(long = "eps-list", value_delimiter = ',')]
        eps_list: Vec<f64>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args, Default)]
struct ProblemArgs {
    /// Operator spec: volterra:d, jordan:d, wshift:w1,..,wk, identity:d, scalar:c,d, file:path.
    #[arg(long)]
    operator: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    /// Explicit radius in (0, 1).
    #[arg(long, conflicts_with = "eta")]
    eps: Option<f64>,
    /// Derive the radius from eta in (0, 1].
    #[arg(long)]
    eta: Option<f64>,
    /// Power n (solve) or depth N (sequence, lemmas, hyperinv).
    #[arg(short = 'N', long = "N", visible_alias = "n")]
    n: Option<usize>,
    #[arg(long, value_enum)]
    x0: Option<X0Choice>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol_feas: Option<f64>,
    #[arg(long)]
    tol_kkt: Option<f64>,
    #[arg(long, value_parser = parse_path)]
    solver: Option<SolverPath>,
}

fn parse_path(s: &str) -> Result<SolverPath, String> {
    match s {
        "auto" => Ok(SolverPath::Auto),
        "closed_form_l2" | "l2" => Ok(SolverPath::ClosedFormL2),
        "newton" => Ok(SolverPath::Newton),
        _ => Err(format!("unknown solver path `{s}` (auto, l2, newton)")),
    }
}

impl ProblemArgs {
    fn apply(self, cfg: &mut ExperimentConfig) {
        if let Some(op) = self.operator {
            cfg.problem.operator = op;
            cfg.space.d = None;
        }
        if let Some(p) = self.p {
            cfg.space.p = p;
        }
        if let Some(eps) = self.eps {
            cfg.problem.eps = Some(eps);
            cfg.problem.eta = None;
        }
        if let Some(eta) = self.eta {
            cfg.problem.eta = Some(eta);
            cfg.problem.eps = None;
        }
        if let Some(n) = self.n {
            cfg.problem.n = n;
        }
        if let Some(x0) = self.x0 {
            cfg.problem.x0 = x0;
        }
        if let Some(v) = self.max_iter {
            cfg.solver.max_iter = v;
        }
        if let Some(v) = self.tol_feas {
            cfg.solver.tol_feas = v;
        }
        if let Some(v) = self.tol_kkt {
            cfg.solver.tol_kkt = v;
        }
        if let Some(v) = self.solver {
            cfg.solver.path = v;
        }
    }
}

fn minvec_code(e: &MinVecError) -> i32 {
    match e {
        MinVecError::MaxIterationsExceeded { .. } | MinVecError::NumericalFailure { .. } => 3,
        _ => 2,
    }
}

/// Maps an error to the documented exit code.
pub(crate) fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<MinVecError>() {
            return minvec_code(e);
        }
        if let Some(e) = cause.downcast_ref::<HyperinvError>() {
            return match e {
                HyperinvError::Solver(inner) => minvec_code(inner),
                HyperinvError::NondegeneracyViolated { .. }
                | HyperinvError::SubsequenceTooShort(_)
                | HyperinvError::NoWitness { .. } => 1,
                _ => 2,
            };
        }
        if cause.is::<LemmaError>() {
            return 2;
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(out) = cli.out {
        cfg.output = Some(out);
    }
    let finished = match cli.command {
        Command::Space {
            p,
            d,
            modulus_grid,
            seed,
        } => {
            if let Some(p) = p {
                cfg.space.p = p;
            }
            if d.is_some() {
                cfg.space.d = d;
            }
            if let Some(seed) = seed {
                cfg.checks.seed = seed;
            }
            commands::cmd_space(&cfg, modulus_grid)?
        }
        Command::Solve(args) => {
            args.apply(&mut cfg);
            commands::cmd_solve(&cfg)?
        }
        Command::Sequence(args) => {
            args.apply(&mut cfg);
            commands::cmd_sequence(&cfg)?
        }
        Command::Lemmas {
            problem,
            checks,
            all,
            seed,
            samples,
            trials,
        } => {
            problem.apply(&mut cfg);
            if all {
                cfg.checkers.clear();
            } else if !checks.is_empty() {
                cfg.checkers = checks;
            }
            if let Some(v) = seed {
                cfg.checks.seed = v;
            }
            if let Some(v) = samples {
                cfg.checks.samples = v;
            }
            if let Some(v) = trials {
                cfg.checks.trials = v;
            }
            commands::cmd_lemmas(&cfg)?
        }
        Command::Hyperinv {
            problem,
            theta,
            write_commutant,
        } => {
            problem.apply(&mut cfg);
            if theta.is_some() {
                cfg.hyperinv.theta = theta;
            }
            commands::cmd_hyperinv(&cfg, write_commutant)?
        }
        Command::Sweep {
            problem,
            operators,
            eps_list,
            workers,
        } => {
            problem.apply(&mut cfg);
            if !operators.is_empty() {
                cfg.sweep.operators = operators;
            }
            if !eps_list.is_empty() {
                cfg.sweep.eps = eps_list;
            }
            if let Some(w) = workers {
                cfg.sweep.workers = w;
            }
            let (finished, code) = commands::cmd_sweep(&cfg)?;
            eprintln!("wrote {}", finished.dir.display());
            return Ok(code);
        }
    };
    eprintln!("wrote {}", finished.dir.display());
    Ok(if finished.passed { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
