//! Synchronous-round decentralized optimizers.
//!
//! Every algorithm keeps its state in a [`NodeStates`] and advances one
//! iteration per call to [`step`]. Gradient evaluations may run on a worker
//! pool; mixing is a single matrix product, so results do not depend on the
//! number of workers.

mod bounds;
mod cg;
mod quasi_newton;
mod tracking;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::NodeBlock;
use crate::problems::Oracle;

pub use bounds::{dmbfgs_stepsize_bound, ndcg_bound_terms, ndcg_stepsize_bound, HessianEnvelope};
pub use cg::{cg_beta, ndcg_init, ndcg_step, sdcg_init, sdcg_step, CgVariant};
pub use quasi_newton::{
    dmbfgs_direction, dmbfgs_init, dmbfgs_step, dmbfgs_y_select, explicit_h, hessian_eigen, CurvaturePair,
    HessianEigen, YChoice, YSource,
};
pub use tracking::{abm_step, dgd_step, gt_step, tracking_init, GtFlavor};

/// Iterates whose norm exceeds this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Denominators at or below this are treated as zero.
pub const MACHINE_FLOOR: f64 = f64::MIN_POSITIVE;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgoError {
    #[error("iterates diverged at round {round}")]
    Diverged { round: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate step: s = 0")]
    DegenerateStep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    Dgd,
    Gt,
    Abm,
    Sdcg,
    Ndcg,
    Dmbfgs,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 6] = [
        AlgorithmKind::Dgd,
        AlgorithmKind::Gt,
        AlgorithmKind::Abm,
        AlgorithmKind::Sdcg,
        AlgorithmKind::Ndcg,
        AlgorithmKind::Dmbfgs,
    ];

    /// Mixing-matrix applications per iteration.
    pub fn rounds_per_iteration(self) -> u64 {
        match self {
            AlgorithmKind::Dgd | AlgorithmKind::Sdcg => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Dgd => "dgd",
            AlgorithmKind::Gt => "gt",
            AlgorithmKind::Abm => "abm",
            AlgorithmKind::Sdcg => "sdcg",
            AlgorithmKind::Ndcg => "ndcg",
            AlgorithmKind::Dmbfgs => "dmbfgs",
        }
    }

    /// Whether the state carries a gradient tracker `v`.
    pub fn tracks_gradient(self) -> bool {
        !matches!(self, AlgorithmKind::Dgd | AlgorithmKind::Sdcg)
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown algorithm '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgoParams {
    pub alpha: f64,
    /// Heavy-ball momentum for ABm.
    pub beta_fixed: f64,
    pub cg_variant: CgVariant,
    /// DMBFGS eigenvalue window `[l, u]`.
    pub l: f64,
    pub u: f64,
    pub gt_flavor: GtFlavor,
    /// Force every conjugate-gradient `β` to zero.
    pub zero_beta: bool,
}

impl Default for AlgoParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            beta_fixed: 0.0,
            cg_variant: CgVariant::Prp,
            l: 1e-4,
            u: 1e4,
            gt_flavor: GtFlavor::SemiAtc,
            zero_beta: false,
        }
    }
}

impl AlgoParams {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AlgoError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(AlgoError::InvalidParams(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.l > 0.0 && self.l < self.u) {
            return Err(AlgoError::InvalidParams(format!(
                "need 0 < l < u, got l = {}, u = {}",
                self.l, self.u
            )));
        }
        if !self.beta_fixed.is_finite() {
            return Err(AlgoError::InvalidParams("beta_fixed must be finite".into()));
        }
        Ok(())
    }
}

/// Per-node iterates and auxiliary vectors. Blocks that an algorithm does not
/// use stay zero.
#[derive(Clone, Debug)]
pub struct NodeStates {
    pub t: usize,
    /// Communication rounds performed so far.
    pub rounds: u64,
    pub x: NodeBlock,
    pub x_prev: NodeBlock,
    pub v: NodeBlock,
    pub v_prev: NodeBlock,
    pub g: NodeBlock,
    pub g_prev: NodeBlock,
    /// Search direction (`d̃` for NDCG).
    pub d: NodeBlock,
    /// `ṽ` for NDCG.
    pub v_tilde: NodeBlock,
    pub v_tilde_prev: NodeBlock,
    /// Latest per-node conjugate-gradient parameter.
    pub beta: Vec<f64>,
    /// Latest per-node DMBFGS curvature pair.
    pub curvature: Vec<Option<CurvaturePair>>,
}

impl NodeStates {
    pub(crate) fn blank(x0: NodeBlock, g0: NodeBlock) -> Self {
        let (n, p) = (x0.nodes(), x0.dim());
        let zeros = NodeBlock::zeros(n, p);
        Self {
            t: 0,
            rounds: 0,
            x_prev: x0.clone(),
            x: x0,
            v: zeros.clone(),
            v_prev: zeros.clone(),
            g_prev: g0.clone(),
            g: g0,
            d: zeros.clone(),
            v_tilde: zeros.clone(),
            v_tilde_prev: zeros,
            beta: vec![0.0; n],
            curvature: vec![None; n],
        }
    }

    pub fn nodes(&self) -> usize {
        self.x.nodes()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    /// `‖mean(v) − mean(g)‖ / (1 + ‖g‖)`.
    pub fn tracking_deviation(&self) -> f64 {
        let diff = self.v.mean() - self.g.mean();
        diff.norm() / (1.0 + self.g.norm())
    }

    fn check_finite(&self) -> Result<(), AlgoError> {
        let ok = self.x.is_finite()
            && self.v.is_finite()
            && self.g.is_finite()
            && self.d.is_finite()
            && self.v_tilde.is_finite()
            && self.x.norm() <= DIVERGENCE_NORM;
        if ok {
            Ok(())
        } else {
            Err(AlgoError::Diverged { round: self.t })
        }
    }
}

/// Everything a step needs besides its own state: the local oracles, the
/// mixing matrix and an optional worker pool.
#[derive(Clone, Copy)]
pub struct Network<'a> {
    pub oracle: &'a dyn Oracle,
    pub mixing: &'a DMatrix<f64>,
    pool: Option<&'a rayon::ThreadPool>,
}

impl<'a> Network<'a> {
    pub fn new(oracle: &'a dyn Oracle, mixing: &'a DMatrix<f64>) -> Self {
        assert_eq!(mixing.nrows(), oracle.nodes(), "mixing matrix size must match node count");
        Self {
            oracle,
            mixing,
            pool: None,
        }
    }

    pub fn with_pool(mut self, pool: &'a rayon::ThreadPool) -> Self {
        self.pool = Some(pool);
        self
    }

    /// Local gradients `∇f_i(x_i)` stacked per node.
    pub fn gradients(&self, x: &NodeBlock) -> NodeBlock {
        let (n, p) = (x.nodes(), x.dim());
        let mut out = NodeBlock::zeros(n, p);
        let oracle = self.oracle;
        match self.pool {
            Some(pool) if n > 1 => {
                let slots: Vec<&mut [f64]> = out_chunks(&mut out, p);
                pool.install(|| {
                    slots
                        .into_par_iter()
                        .enumerate()
                        .for_each(|(i, slot)| oracle.local_gradient_into(i, x.node(i), slot));
                });
            }
            _ => {
                for i in 0..n {
                    oracle.local_gradient_into(i, x.node(i), out.node_mut(i));
                }
            }
        }
        out
    }

    /// One communication round.
    pub fn mix(&self, x: &NodeBlock) -> NodeBlock {
        x.mixed(self.mixing)
    }
}

fn out_chunks(block: &mut NodeBlock, p: usize) -> Vec<&mut [f64]> {
    if p == 0 {
        return Vec::new();
    }
    block.as_mut_slice().chunks_mut(p).collect()
}

/// Initializes `kind` at `x0`.
pub fn init(kind: AlgorithmKind, x0: NodeBlock, net: &Network, params: &AlgoParams) -> Result<NodeStates, AlgoError> {
    params.validate()?;
    let states = match kind {
        AlgorithmKind::Dgd => {
            let g0 = net.gradients(&x0);
            NodeStates::blank(x0, g0)
        }
        AlgorithmKind::Gt | AlgorithmKind::Abm => tracking_init(x0, net),
        AlgorithmKind::Sdcg => sdcg_init(x0, net),
        AlgorithmKind::Ndcg => ndcg_init(x0, net, params.alpha),
        AlgorithmKind::Dmbfgs => dmbfgs_init(x0, net),
    };
    states.check_finite()?;
    Ok(states)
}

/// Advances `kind` by one iteration.
pub fn step(kind: AlgorithmKind, states: &mut NodeStates, net: &Network, params: &AlgoParams) -> Result<(), AlgoError> {
    match kind {
        AlgorithmKind::Dgd => dgd_step(states, net, params.alpha),
        AlgorithmKind::Gt => gt_step(states, net, params.alpha, params.gt_flavor),
        AlgorithmKind::Abm => abm_step(states, net, params.alpha, params.beta_fixed),
        AlgorithmKind::Sdcg => sdcg_step(states, net, params.alpha, params.cg_variant, params.zero_beta),
        AlgorithmKind::Ndcg => ndcg_step(states, net, params.alpha, params.zero_beta),
        AlgorithmKind::Dmbfgs => dmbfgs_step(states, net, params.alpha, params.l, params.u),
    }
    states.t += 1;
    states.rounds += kind.rounds_per_iteration();
    states.check_finite()
}
