//! Experiment configuration files.
//!
//! ```toml
//! [algorithm]
//! name = "ndcg"
//! auto_alpha = true
//!
//! [problem.synthetic]
//! p = 50
//! kappa = 100.0
//!
//! [network]
//! n = 10
//! density = 0.56
//!
//! [run]
//! max_iters = 5000
//! seed = 7
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{AlgoParams, AlgorithmKind, CgVariant, GtFlavor};
use crate::analysis::Metric;
use crate::problems::Regularizer;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub name: AlgorithmKind,
    pub alpha: Option<f64>,
    #[serde(default)]
    pub auto_alpha: bool,
    #[serde(default)]
    pub beta_fixed: f64,
    #[serde(default = "default_variant")]
    pub cg_variant: CgVariant,
    #[serde(default = "default_l")]
    pub l: f64,
    #[serde(default = "default_u")]
    pub u: f64,
    #[serde(default = "default_flavor")]
    pub gt_flavor: GtFlavor,
    #[serde(default)]
    pub zero_beta: bool,
    /// Candidate stepsizes tried by `compare`; the best final error wins.
    #[serde(default)]
    pub alpha_grid: Vec<f64>,
}

fn default_variant() -> CgVariant {
    AlgoParams::default().cg_variant
}
fn default_l() -> f64 {
    AlgoParams::default().l
}
fn default_u() -> f64 {
    AlgoParams::default().u
}
fn default_flavor() -> GtFlavor {
    AlgoParams::default().gt_flavor
}

impl AlgorithmSection {
    /// Parameters with `alpha` substituted (the configured one unless given).
    pub fn params(&self, alpha: f64) -> AlgoParams {
        AlgoParams {
            alpha,
            beta_fixed: self.beta_fixed,
            cg_variant: self.cg_variant,
            l: self.l,
            u: self.u,
            gt_flavor: self.gt_flavor,
            zero_beta: self.zero_beta,
        }
    }

    pub fn label(&self) -> String {
        match self.name {
            AlgorithmKind::Sdcg => format!("sdcg-{:?}", self.cg_variant).to_lowercase(),
            AlgorithmKind::Gt => match self.gt_flavor {
                GtFlavor::Atc => "gt-atc".into(),
                GtFlavor::SemiAtc => "gt".into(),
            },
            k => k.name().into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticQuadratic {
    pub p: usize,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibsvmSpec {
    pub path: PathBuf,
    pub regularizer: Regularizer,
    pub lambda_hat: f64,
    /// Feature dimension; inferred from the file when absent.
    pub dim: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticLogistic {
    pub samples: usize,
    pub p: usize,
    pub regularizer: Regularizer,
    pub lambda_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub synthetic: Option<SyntheticQuadratic>,
    pub libsvm: Option<LibsvmSpec>,
    pub synthetic_logistic: Option<SyntheticLogistic>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    Synthetic(SyntheticQuadratic),
    Libsvm(LibsvmSpec),
    SyntheticLogistic(SyntheticLogistic),
}

impl ProblemSection {
    pub fn spec(&self) -> Result<ProblemSpec, ConfigError> {
        match (&self.synthetic, &self.libsvm, &self.synthetic_logistic) {
            (Some(s), None, None) => Ok(ProblemSpec::Synthetic(s.clone())),
            (None, Some(l), None) => Ok(ProblemSpec::Libsvm(l.clone())),
            (None, None, Some(l)) => Ok(ProblemSpec::SyntheticLogistic(l.clone())),
            _ => Err(ConfigError::Invalid(
                "problem: exactly one of synthetic, libsvm, synthetic_logistic must be given".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub n: usize,
    pub density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub max_iters: usize,
    #[serde(default)]
    pub seed: u64,
    /// Stop once the optimality error is at or below this.
    pub tol_optimality: Option<f64>,
    /// Stop once the relative error is at or below this.
    pub tol_relative: Option<f64>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    /// CSV trace destination; relative paths resolve against the output
    /// directory override when one is set.
    pub output: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub compute_z_star: bool,
    #[serde(default)]
    pub check_theory: bool,
    /// Worker threads for local gradient evaluation.
    #[serde(default = "default_threads")]
    pub threads: usize,
    /// Initial iterate replicated at every node; zero when absent.
    pub x0: Option<Vec<f64>>,
}

fn default_metrics() -> Vec<Metric> {
    Metric::DETERMINISTIC.to_vec()
}
fn default_true() -> bool {
    true
}
fn default_threads() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: AlgorithmSection,
    pub problem: ProblemSection,
    pub network: NetworkSection,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn problem_spec(&self) -> ProblemSpec {
        self.problem.spec().expect("validated at load time")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.problem.spec()?;
        let a = &self.algorithm;
        match (a.alpha, a.auto_alpha) {
            (Some(_), true) => return bad("algorithm: give either alpha or auto_alpha, not both".into()),
            (None, false) if a.alpha_grid.is_empty() => {
                return bad("algorithm: alpha is required unless auto_alpha or alpha_grid is set".into())
            }
            _ => {}
        }
        if a.auto_alpha && !matches!(a.name, AlgorithmKind::Ndcg | AlgorithmKind::Dmbfgs) {
            return bad(format!("algorithm: auto_alpha has no bound for {}", a.name));
        }
        for &alpha in a.alpha.iter().chain(&a.alpha_grid) {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return bad(format!("algorithm: stepsizes must be positive, got {alpha}"));
            }
        }
        if !(a.l > 0.0 && a.l < a.u) {
            return bad(format!("algorithm: need 0 < l < u, got l = {}, u = {}", a.l, a.u));
        }
        if let Some(s) = &self.problem.synthetic {
            if s.p == 0 || !(s.kappa >= 1.0) {
                return bad("problem.synthetic: need p >= 1 and kappa >= 1".into());
            }
        }
        if let Some(s) = &self.problem.synthetic_logistic {
            if s.p == 0 || s.samples == 0 || !(s.lambda_hat >= 0.0) {
                return bad("problem.synthetic_logistic: need p, samples >= 1 and lambda_hat >= 0".into());
            }
        }
        if self.network.n == 0 {
            return bad("network: n must be at least 1".into());
        }
        if !(self.network.density > 0.0 && self.network.density <= 1.0) {
            return bad(format!("network: density must lie in (0, 1], got {}", self.network.density));
        }
        let r = &self.run;
        if r.max_iters == 0 {
            return bad("run: max_iters must be at least 1".into());
        }
        for (name, tol) in [("tol_optimality", r.tol_optimality), ("tol_relative", r.tol_relative)] {
            if tol.is_some_and(|e| !(e > 0.0)) {
                return bad(format!("run: {name} must be positive"));
            }
        }
        if r.threads == 0 {
            return bad("run: threads must be at least 1".into());
        }
        Ok(())
    }
}

/// Parses and validates a TOML document. Errors name the offending key path.
pub fn load_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Parse {
        path: "<document>".into(),
        message: e.to_string().trim().to_string(),
    })?;
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Parse {
            path: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().message().trim().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}
