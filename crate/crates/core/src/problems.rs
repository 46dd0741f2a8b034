//! Per-node objective oracles.
//!
//! Every problem exposes `f_i(z)` and `∇f_i(z)` for each node together with
//! smoothness constants valid for all nodes. The global objective is the
//! node average `F(z) = (1/n) Σ_i f_i(z)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::{dot, NodeBlock};
use crate::datasets::SampleSet;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("node {node}: matrix is {rows}x{cols}, expected {dim}x{dim}")]
    Shape { node: usize, rows: usize, cols: usize, dim: usize },
    #[error("node {0}: matrix is not symmetric")]
    NotSymmetric(usize),
    #[error("node {node}: matrix is not positive definite (smallest eigenvalue {lambda_min})")]
    NotPositiveDefinite { node: usize, lambda_min: f64 },
    #[error("node {0} holds no samples")]
    EmptyNode(usize),
    #[error("node {node}: label {label} is not ±1")]
    BadLabel { node: usize, label: f64 },
    #[error("feature index {index} exceeds dimension {dim}")]
    FeatureOutOfRange { index: usize, dim: usize },
    #[error("regularization weight must be positive, got {0}")]
    BadLambda(f64),
    #[error("a problem needs at least one node")]
    NoNodes,
}

/// Lipschitz gradient constant `L` and strong-convexity modulus `mu` shared by all nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    pub l: f64,
    pub mu: f64,
}

impl SmoothnessConstants {
    /// `L / mu`, defined only for strongly convex problems.
    pub fn kappa_f(&self) -> Option<f64> {
        (self.mu > 0.0).then(|| self.l / self.mu)
    }
}

/// Local objective oracle of a decentralized problem.
pub trait Oracle: Sync {
    fn nodes(&self) -> usize;

    fn dim(&self) -> usize;

    fn local_value(&self, node: usize, z: &[f64]) -> f64;

    fn local_gradient_into(&self, node: usize, z: &[f64], out: &mut [f64]);

    fn smoothness(&self) -> SmoothnessConstants;

    fn local_gradient(&self, node: usize, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.local_gradient_into(node, z, &mut out);
        out
    }

    /// `F(z) = (1/n) Σ_i f_i(z)`.
    fn global_value(&self, z: &[f64]) -> f64 {
        let n = self.nodes();
        (0..n).map(|i| self.local_value(i, z)).sum::<f64>() / n as f64
    }

    /// `∇F(z) = (1/n) Σ_i ∇f_i(z)`.
    fn global_gradient(&self, z: &[f64]) -> Vec<f64> {
        let n = self.nodes();
        let mut acc = vec![0.0; self.dim()];
        let mut buf = vec![0.0; self.dim()];
        for i in 0..n {
            self.local_gradient_into(i, z, &mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b;
            }
        }
        acc.iter_mut().for_each(|a| *a /= n as f64);
        acc
    }
}

/// Per-node gradients `∇f_i(x_i)` for a stacked iterate.
pub fn stacked_gradient(oracle: &dyn Oracle, x: &NodeBlock) -> NodeBlock {
    let mut g = NodeBlock::zeros(x.nodes(), x.dim());
    for i in 0..x.nodes() {
        oracle.local_gradient_into(i, x.node(i), g.node_mut(i));
    }
    g
}

/// `f_i(z) = ½ zᵀA_i z + b_iᵀz`.
#[derive(Clone, Debug)]
pub struct QuadraticProblem {
    a: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
    constants: SmoothnessConstants,
}

impl QuadraticProblem {
    pub fn new(a: Vec<DMatrix<f64>>, b: Vec<DVector<f64>>) -> Result<Self, ProblemError> {
        if a.is_empty() || a.len() != b.len() {
            return Err(ProblemError::NoNodes);
        }
        let dim = b[0].len();
        let mut l: f64 = 0.0;
        let mut mu = f64::INFINITY;
        for (node, (ai, bi)) in a.iter().zip(&b).enumerate() {
            if ai.nrows() != dim || ai.ncols() != dim || bi.len() != dim {
                return Err(ProblemError::Shape {
                    node,
                    rows: ai.nrows(),
                    cols: ai.ncols(),
                    dim,
                });
            }
            if (ai - ai.transpose()).amax() > 1e-10 {
                return Err(ProblemError::NotSymmetric(node));
            }
            let eig = ai.clone().symmetric_eigenvalues();
            let lo = eig.min();
            if lo <= 0.0 {
                return Err(ProblemError::NotPositiveDefinite { node, lambda_min: lo });
            }
            l = l.max(eig.max());
            mu = mu.min(lo);
        }
        Ok(Self {
            a,
            b,
            constants: SmoothnessConstants { l, mu },
        })
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.a
    }

    pub fn offsets(&self) -> &[DVector<f64>] {
        &self.b
    }
}

impl Oracle for QuadraticProblem {
    fn nodes(&self) -> usize {
        self.a.len()
    }

    fn dim(&self) -> usize {
        self.b[0].len()
    }

    fn local_value(&self, node: usize, z: &[f64]) -> f64 {
        let zv = DVector::from_column_slice(z);
        0.5 * zv.dot(&(&self.a[node] * &zv)) + self.b[node].dot(&zv)
    }

    fn local_gradient_into(&self, node: usize, z: &[f64], out: &mut [f64]) {
        let a = &self.a[node];
        let p = z.len();
        // A is symmetric, so column k doubles as row k.
        for (k, o) in out.iter_mut().enumerate() {
            let col = &a.as_slice()[k * p..(k + 1) * p];
            *o = dot(col, z) + self.b[node][k];
        }
    }

    fn smoothness(&self) -> SmoothnessConstants {
        self.constants
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    /// `(λ̂/2)‖z‖²`
    L2,
    /// `λ̂ Σ_k z_k² / (1 + z_k²)`
    Nonconvex,
}

impl Regularizer {
    fn value(self, z: &[f64]) -> f64 {
        match self {
            Regularizer::L2 => 0.5 * dot(z, z),
            Regularizer::Nonconvex => z.iter().map(|&v| v * v / (1.0 + v * v)).sum(),
        }
    }

    fn add_gradient(self, z: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            Regularizer::L2 => {
                for (o, &v) in out.iter_mut().zip(z) {
                    *o += scale * v;
                }
            }
            Regularizer::Nonconvex => {
                for (o, &v) in out.iter_mut().zip(z) {
                    let q = 1.0 + v * v;
                    *o += scale * 2.0 * v / (q * q);
                }
            }
        }
    }

    /// Supremum of the regularizer's scalar curvature.
    fn curvature_bound(self) -> f64 {
        match self {
            Regularizer::L2 => 1.0,
            Regularizer::Nonconvex => 2.0,
        }
    }
}

/// `log(1 + exp(t))` without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `1 / (1 + exp(−t))` without overflow.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Regularized binary logistic regression split over nodes.
///
/// Node `i` holds `Σ_j log(1 + exp(−b_ij a_ijᵀz)) + reg(z)/n`, so the node
/// objectives sum to the full regularized loss.
#[derive(Clone, Debug)]
pub struct LogisticProblem {
    shards: Vec<SampleSet>,
    dim: usize,
    regularizer: Regularizer,
    lambda_hat: f64,
    constants: SmoothnessConstants,
}

impl LogisticProblem {
    pub fn new(
        shards: Vec<SampleSet>,
        dim: usize,
        regularizer: Regularizer,
        lambda_hat: f64,
    ) -> Result<Self, ProblemError> {
        Self::build(shards, dim, regularizer, lambda_hat, false)
    }

    /// Like [`LogisticProblem::new`] but also accepts `λ̂ = 0` and empty shards;
    /// used to probe the data term alone.
    pub fn unregularized_allowed(
        shards: Vec<SampleSet>,
        dim: usize,
        regularizer: Regularizer,
        lambda_hat: f64,
    ) -> Result<Self, ProblemError> {
        Self::build(shards, dim, regularizer, lambda_hat, true)
    }

    fn build(
        shards: Vec<SampleSet>,
        dim: usize,
        regularizer: Regularizer,
        lambda_hat: f64,
        relaxed: bool,
    ) -> Result<Self, ProblemError> {
        if shards.is_empty() {
            return Err(ProblemError::NoNodes);
        }
        if !(lambda_hat > 0.0 || (relaxed && lambda_hat == 0.0)) {
            return Err(ProblemError::BadLambda(lambda_hat));
        }
        for (node, shard) in shards.iter().enumerate() {
            if shard.is_empty() && !relaxed {
                return Err(ProblemError::EmptyNode(node));
            }
            if let Some(&label) = shard.labels().iter().find(|&&b| b != 1.0 && b != -1.0) {
                return Err(ProblemError::BadLabel { node, label });
            }
            if let Some(index) = shard.rows().iter().flat_map(|r| r.indices.iter()).find(|&&k| k >= dim) {
                return Err(ProblemError::FeatureOutOfRange { index: index + 1, dim });
            }
        }
        let n = shards.len() as f64;
        let reg_share = lambda_hat / n;
        let data_l = shards
            .iter()
            .map(|shard| 0.25 * shard.gram(dim).symmetric_eigenvalues().max().max(0.0))
            .fold(0.0, f64::max);
        let constants = SmoothnessConstants {
            l: data_l + regularizer.curvature_bound() * reg_share,
            mu: match regularizer {
                Regularizer::L2 => reg_share,
                Regularizer::Nonconvex => 0.0,
            },
        };
        Ok(Self {
            shards,
            dim,
            regularizer,
            lambda_hat,
            constants,
        })
    }

    pub fn regularizer(&self) -> Regularizer {
        self.regularizer
    }

    pub fn lambda_hat(&self) -> f64 {
        self.lambda_hat
    }

    pub fn shards(&self) -> &[SampleSet] {
        &self.shards
    }
}

impl Oracle for LogisticProblem {
    fn nodes(&self) -> usize {
        self.shards.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn local_value(&self, node: usize, z: &[f64]) -> f64 {
        let shard = &self.shards[node];
        let data: f64 = shard
            .rows()
            .iter()
            .zip(shard.labels())
            .map(|(row, &b)| softplus(-b * row.dot(z)))
            .sum();
        data + self.lambda_hat / self.nodes() as f64 * self.regularizer.value(z)
    }

    fn local_gradient_into(&self, node: usize, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let shard = &self.shards[node];
        for (row, &b) in shard.rows().iter().zip(shard.labels()) {
            // d/dz log(1 + exp(−b aᵀz)) = −b a σ(−b aᵀz)
            let coef = -b * sigmoid(-b * row.dot(z));
            row.axpy_into(coef, out);
        }
        self.regularizer
            .add_gradient(z, self.lambda_hat / self.nodes() as f64, out);
    }

    fn smoothness(&self) -> SmoothnessConstants {
        self.constants
    }
}

/// Max over coordinates of `|fd_k − grad_k| / (1 + |grad_k|)` using central differences.
pub fn finite_difference_check(oracle: &dyn Oracle, node: usize, z: &[f64], h: f64) -> f64 {
    let grad = oracle.local_gradient(node, z);
    let mut probe = z.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..z.len() {
        probe[k] = z[k] + h;
        let up = oracle.local_value(node, &probe);
        probe[k] = z[k] - h;
        let down = oracle.local_value(node, &probe);
        probe[k] = z[k];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - grad[k]).abs() / (1.0 + grad[k].abs()));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::SparseRow;

    fn quad_2i() -> QuadraticProblem {
        QuadraticProblem::new(
            vec![DMatrix::identity(2, 2) * 2.0],
            vec![DVector::from_vec(vec![-2.0, -4.0])],
        )
        .unwrap()
    }

    fn one_sample(label: f64, row: SparseRow, dim: usize, reg: Regularizer, lambda: f64) -> LogisticProblem {
        let shard = SampleSet::new(vec![row], vec![label], dim).unwrap();
        LogisticProblem::unregularized_allowed(vec![shard], dim, reg, lambda).unwrap()
    }

    #[test]
    fn quadratic_value_and_gradient() {
        let q = quad_2i();
        assert_eq!(q.local_value(0, &[1.0, 2.0]), -5.0);
        assert_eq!(q.local_gradient(0, &[1.0, 2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn quadratic_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            QuadraticProblem::new(vec![a], vec![DVector::zeros(2)]),
            Err(ProblemError::NotPositiveDefinite { .. })
        ));
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            QuadraticProblem::new(vec![a], vec![DVector::zeros(2)]),
            Err(ProblemError::NotSymmetric(0))
        ));
    }

    #[test]
    fn quadratic_constants_diag() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 10.0]));
        let q = QuadraticProblem::new(vec![a.clone(), a], vec![DVector::zeros(2), DVector::zeros(2)]).unwrap();
        let c = q.smoothness();
        assert_eq!((c.l, c.mu), (10.0, 1.0));
        assert_eq!(c.kappa_f(), Some(10.0));
    }

    #[test]
    fn logistic_zero_feature_is_log_two() {
        let p = one_sample(1.0, SparseRow::default(), 3, Regularizer::L2, 0.0);
        assert!((p.local_value(0, &[0.3, -7.0, 2.0]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn nonconvex_regularizer_value_and_gradient() {
        let shard = SampleSet::new(vec![], vec![], 2).unwrap();
        let p = LogisticProblem::unregularized_allowed(vec![shard], 2, Regularizer::Nonconvex, 1.0).unwrap();
        assert!((p.local_value(0, &[1.0, 0.0]) - 0.5).abs() < 1e-15);
        assert!((p.local_gradient(0, &[1.0, 0.0])[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn logistic_gradient_at_origin() {
        let row = SparseRow::new(vec![0], vec![1.0]);
        let p = one_sample(1.0, row, 2, Regularizer::L2, 0.0);
        assert_eq!(p.local_gradient(0, &[0.0, 0.0]), vec![-0.5, 0.0]);
    }

    #[test]
    fn logistic_constants_regularizer_only() {
        let shards: Vec<SampleSet> = (0..10)
            .map(|_| SampleSet::new(vec![SparseRow::default()], vec![1.0], 4).unwrap())
            .collect();
        let p = LogisticProblem::new(shards, 4, Regularizer::L2, 1.0).unwrap();
        let c = p.smoothness();
        assert!((c.l - 0.1).abs() < 1e-15 && (c.mu - 0.1).abs() < 1e-15);
    }

    #[test]
    fn softplus_is_overflow_free() {
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-16);
        assert!(sigmoid(-800.0).is_finite() && sigmoid(800.0) == 1.0);
    }

    #[test]
    fn quadratic_finite_difference() {
        let q = quad_2i();
        assert!(finite_difference_check(&q, 0, &[0.3, -1.7], 1e-6) <= 1e-7);
    }
}
