//! Experiment configuration: a TOML file merged with command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use minvec_core::banach::LpSpace;
use minvec_core::lemma_suite::{epsilon_for_eta, CheckSettings};
use minvec_core::minvec::SolverConfig;
use minvec_core::operators::{OperatorMatrix, OperatorSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "MINVEC_OUT";

/// Rejected configuration. Exits with code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum X0Choice {
    /// Norming vector of `Q`, the vector the pipeline uses.
    Witness,
    /// First coordinate vector.
    E1,
    /// Constant vector, normalised.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaceSection {
    pub p: f64,
    /// Dimension; taken from the operator when absent.
    pub d: Option<usize>,
}

impl Default for SpaceSection {
    fn default() -> Self {
        Self { p: 2.0, d: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub operator: String,
    /// Explicit radius; excludes `eta`.
    pub eps: Option<f64>,
    /// Radius derived from the convexity recipe; default 1/3.
    pub eta: Option<f64>,
    pub n: usize,
    pub x0: X0Choice,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            operator: "volterra:64".into(),
            eps: None,
            eta: None,
            n: 10,
            x0: X0Choice::Witness,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub operators: Vec<String>,
    pub eps: Vec<f64>,
    pub workers: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            operators: vec!["volterra:16".into(), "volterra:32".into()],
            eps: vec![0.5, 0.9],
            workers: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct HyperinvSection {
    /// Ratio threshold for the subsequence; median when absent.
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Checker names for `lemmas`; empty means all.
    pub checkers: Vec<String>,
    pub output: Option<PathBuf>,
    pub space: SpaceSection,
    pub problem: ProblemSection,
    pub solver: SolverConfig,
    pub checks: CheckSettings,
    pub hyperinv: HyperinvSection,
    pub sweep: SweepSection,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(|e| config_error(format!("{e:#}")))?;
        toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn output_root(&self) -> PathBuf {
        self.output
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("minvec-out"))
    }

    /// Validates and resolves everything a run needs.
    pub fn resolve(&self) -> Result<Resolved> {
        let spec: OperatorSpec = self
            .problem
            .operator
            .parse()
            .map_err(|e| config_error(format!("operator: {e}")))?;
        let q = spec.build().map_err(|e| config_error(format!("operator: {e}")))?;
        let d = q.dim();
        if let Some(given) = self.space.d {
            if given != d {
                bail!(config_error(format!(
                    "space dimension {given} does not match operator dimension {d}"
                )));
            }
        }
        let space = LpSpace::new(d, self.space.p).map_err(|e| config_error(e.to_string()))?;
        let eps = self.eps_for(&space)?;
        if self.problem.n == 0 {
            bail!(config_error("problem.n must be at least 1"));
        }
        Ok(Resolved {
            q,
            space,
            eps,
        })
    }

    pub fn eps_for(&self, space: &LpSpace) -> Result<EpsChoice> {
        match (self.problem.eps, self.problem.eta) {
            (Some(_), Some(_)) => bail!(config_error("set either problem.eps or problem.eta, not both")),
            (Some(eps), None) => {
                if !(eps > 0.0 && eps < 1.0) {
                    bail!(config_error(format!("eps = {eps} must lie in (0, 1)")));
                }
                Ok(EpsChoice { eps, eta: None })
            }
            (None, eta) => {
                let eta = eta.unwrap_or(1.0 / 3.0);
                let eps = epsilon_for_eta(space, eta).map_err(|e| config_error(e.to_string()))?;
                Ok(EpsChoice { eps, eta: Some(eta) })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsChoice {
    pub eps: f64,
    pub eta: Option<f64>,
}

pub struct Resolved {
    pub q: OperatorMatrix,
    pub space: LpSpace,
    pub eps: EpsChoice,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<ExperimentConfig>("[problem]\nopertor = \"volterra:4\"\n");
        assert!(err.is_err());
        let err = toml::from_str::<ExperimentConfig>("[solver]\ntol = 1e-3\n");
        assert!(err.is_err());
    }

    #[test]
    fn sections_parse_and_resolve() {
        let cfg: ExperimentConfig = toml::from_str(
            "checkers = [\"remark_2_8\"]\n[space]\np = 3.0\n\
             [problem]\noperator = \"jordan:5\"\neps = 0.25\nn = 3\nx0 = \"e1\"\n\
             [checks]\nsamples = 50\nseed = 9\n",
        )
        .unwrap();
        assert_eq!(cfg.checks.samples, 50);
        assert_eq!(cfg.checks.seed, 9);
        let r = cfg.resolve().unwrap();
        assert_eq!(r.space.dim(), 5);
        assert_eq!(r.eps.eps, 0.25);
        assert_eq!(r.eps.eta, None);
    }

    #[test]
    fn eta_policy_and_conflicts() {
        let cfg = ExperimentConfig::default();
        let r = cfg.resolve().unwrap();
        assert!((r.eps.eps - 0.99309152).abs() < 1e-7);
        let mut both = ExperimentConfig::default();
        both.problem.eps = Some(0.5);
        both.problem.eta = Some(0.5);
        assert!(both.resolve().is_err());
        let mut bad_p = ExperimentConfig::default();
        bad_p.space.p = 1.0;
        let msg = bad_p.resolve().err().unwrap().to_string();
        assert!(msg.contains("smooth"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.problem.n = 11;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
