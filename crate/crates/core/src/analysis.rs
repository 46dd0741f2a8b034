//! Metrics, convergence-theory quantities and communication accounting.

use std::io::Write;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::HessianEnvelope;
use crate::block::NodeBlock;
use crate::problems::{stacked_gradient, Oracle};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("xi sequence needs 0 < L·alpha <= 1/4, got {0}")]
    StepTooLarge(f64),
}

/// `‖(1/n) Σ ∇f_i(x_i)‖ + ‖x − Mx‖`.
pub fn optimality_error(x: &NodeBlock, oracle: &dyn Oracle) -> f64 {
    optimality_error_with(x, &stacked_gradient(oracle, x))
}

/// As [`optimality_error`] with the local gradients already evaluated.
pub fn optimality_error_with(x: &NodeBlock, g: &NodeBlock) -> f64 {
    g.mean().norm() + x.consensus_error()
}

/// `(1/n) Σ ‖x_i − z*‖ / (‖z*‖ + 1)`.
pub fn relative_error(x: &NodeBlock, z_star: &[f64]) -> f64 {
    let scale = z_star.iter().map(|v| v * v).sum::<f64>().sqrt() + 1.0;
    let total: f64 = (0..x.nodes())
        .map(|i| {
            x.node(i)
                .iter()
                .zip(z_star)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    total / (x.nodes() as f64 * scale)
}

/// `xᵀ(I − W)x` for symmetric doubly stochastic `W`, evaluated as
/// `½ Σ_ij W_ij ‖x_i − x_j‖²` so it stays nonnegative near consensus.
pub fn laplacian_form(x: &NodeBlock, w: &DMatrix<f64>) -> f64 {
    let n = x.nodes();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let wij = w[(i, j)];
            if wij != 0.0 {
                let dist: f64 = x.node(i).iter().zip(x.node(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                total += wij * dist;
            }
        }
    }
    total
}

/// `F(x̄) + xᵀ(I−W)x/(2αn) + ‖x − Mx‖² + ‖v − Mv‖²`.
pub fn potential(x: &NodeBlock, v: &NodeBlock, alpha: f64, oracle: &dyn Oracle, w: &DMatrix<f64>) -> f64 {
    let n = x.nodes() as f64;
    oracle.global_value(x.mean().as_slice())
        + laplacian_form(x, w) / (2.0 * alpha * n)
        + x.deviation().norm_squared()
        + v.deviation().norm_squared()
}

/// `[‖x − Mx‖², n(F(x̄) − F(z*)), ‖v − Mv‖²]`.
pub fn error_vector(x: &NodeBlock, v: &NodeBlock, oracle: &dyn Oracle, z_star: &[f64]) -> [f64; 3] {
    let n = x.nodes() as f64;
    let gap = oracle.global_value(x.mean().as_slice()) - oracle.global_value(z_star);
    [x.deviation().norm_squared(), n * gap, v.deviation().norm_squared()]
}

/// `iterations × rounds × |E| × p`.
pub fn communication_volume(iterations: u64, rounds_per_iteration: u64, edge_count: u64, dim: u64) -> u64 {
    iterations * rounds_per_iteration * edge_count * dim
}

#[derive(Clone, Debug, PartialEq)]
pub struct XiSequence {
    pub values: Vec<f64>,
    /// `c = 2 / (1 + √(1 − 4Lα))`, the limit of the sequence.
    pub limit: f64,
}

/// `ξ⁰ = 1`, `ξ⁺ = 1 + Lα ξ²`, for `t = 0..=steps`.
pub fn xi_sequence(l: f64, alpha: f64, steps: usize) -> Result<XiSequence, AnalysisError> {
    let la = l * alpha;
    if !(la > 0.0 && la <= 0.25) {
        return Err(AnalysisError::StepTooLarge(la));
    }
    let limit = 2.0 / (1.0 + (1.0 - 4.0 * la).sqrt());
    let mut values = Vec::with_capacity(steps + 1);
    let mut xi = 1.0;
    values.push(xi);
    for _ in 0..steps {
        xi = 1.0 + la * xi * xi;
        values.push(xi);
    }
    Ok(XiSequence { values, limit })
}

/// Whether one node's NDCG direction lies in the descent cone
/// `(2 − ξ)‖ṽ‖² ≤ −ṽᵀd̃ ≤ ξ‖ṽ‖²` and `(2 − ξ)‖ṽ‖ ≤ ‖d̃‖ ≤ ξ‖ṽ‖`, with
/// absolute slack `tol`.
pub fn descent_cone_holds(v_tilde: &[f64], d: &[f64], xi: f64, tol: f64) -> bool {
    let vv = crate::block::norm_sq(v_tilde);
    let vd = -crate::block::dot(v_tilde, d);
    let (vn, dn) = (vv.sqrt(), crate::block::norm_sq(d).sqrt());
    (2.0 - xi) * vv <= vd + tol && vd <= xi * vv + tol && (2.0 - xi) * vn <= dn + tol && dn <= xi * vn + tol
}

/// The 3×3 matrix bounding `u⁺ ≤ J u` for DMBFGS.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionSpec {
    pub j: Matrix3<f64>,
    pub rho: f64,
    pub alpha: f64,
    pub l: f64,
    pub mu: f64,
    pub sigma: f64,
    pub psi_low: f64,
    pub psi_high: f64,
    /// `1 / (1 − σ²)`.
    pub kappa_g: f64,
}

pub fn contraction_matrix(alpha: f64, l: f64, mu: f64, sigma: f64, psi_low: f64, psi_high: f64) -> ContractionSpec {
    let s2 = sigma * sigma;
    let gap = 1.0 - s2;
    let a2 = alpha * alpha;
    let pp2 = psi_high * psi_high;
    let half = (1.0 + s2) / 2.0;
    let j = Matrix3::new(
        half + 6.0 * s2 * pp2 * a2 * l * l / gap,
        12.0 * s2 * pp2 * a2 * l / gap,
        6.0 * s2 * pp2 * a2 / gap,
        //
        alpha * l * l * pp2 / psi_low + 1.5 * l.powi(3) * pp2 * a2,
        1.0 - (psi_low * alpha - 3.0 * a2 * l * pp2) * mu,
        alpha * pp2 / psi_low + 1.5 * l * pp2 * a2,
        //
        2.0 * l * l * s2 / gap * (8.0 + 6.0 * a2 * l * l * pp2),
        24.0 * a2 * l.powi(3) * pp2 * s2 / gap,
        12.0 * a2 * l * l * pp2 * s2 / gap + half,
    );
    ContractionSpec {
        rho: spectral_radius(&j),
        j,
        alpha,
        l,
        mu,
        sigma,
        psi_low,
        psi_high,
        kappa_g: 1.0 / gap,
    }
}

/// `1 − (1/3916)(1 − σ²)² / (κ_f² κ_H²)`.
pub fn contraction_rate_bound(l: f64, mu: f64, sigma: f64, envelope: &HessianEnvelope) -> f64 {
    let gap = 1.0 - sigma * sigma;
    let kf = l / mu;
    let kh = envelope.kappa();
    1.0 - gap * gap / (3916.0 * kf * kf * kh * kh)
}

pub fn spectral_radius(j: &Matrix3<f64>) -> f64 {
    j.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionReport {
    pub transitions: usize,
    pub satisfied: usize,
    pub fraction: f64,
    /// Geometric mean of `‖u⁺‖ / ‖u‖` over transitions with `u ≠ 0`.
    pub mean_decay: Option<f64>,
}

/// Fraction of consecutive pairs with `u⁺ ≤ J u` componentwise, up to
/// `1e-9` absolute plus `1e-9` relative slack.
pub fn check_contraction(trace: &[[f64; 3]], j: &Matrix3<f64>) -> ContractionReport {
    let mut satisfied = 0;
    let mut log_sum = 0.0;
    let mut counted = 0usize;
    for pair in trace.windows(2) {
        let u = Vector3::from(pair[0]);
        let next = Vector3::from(pair[1]);
        let bound = j * u;
        if next.iter().zip(bound.iter()).all(|(a, b)| *a <= b + 1e-9 + 1e-9 * b.abs()) {
            satisfied += 1;
        }
        let (nu, nn) = (u.norm(), next.norm());
        if nu > 0.0 && nn > 0.0 {
            log_sum += (nn / nu).ln();
            counted += 1;
        }
    }
    let transitions = trace.len().saturating_sub(1);
    ContractionReport {
        transitions,
        satisfied,
        fraction: if transitions == 0 {
            1.0
        } else {
            satisfied as f64 / transitions as f64
        },
        mean_decay: (counted > 0).then(|| (log_sum / counted as f64).exp()),
    }
}

/// Least-squares line through `(i, ln values[i])`: slope and R².
pub fn log_linear_fit(values: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(i, v)| (i as f64, v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, r2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    OptimalityError,
    RelativeError,
    ConsensusError,
    TrackingError,
    Potential,
    ObjectiveGap,
    WallS,
}

impl Metric {
    pub const DETERMINISTIC: [Metric; 6] = [
        Metric::OptimalityError,
        Metric::RelativeError,
        Metric::ConsensusError,
        Metric::TrackingError,
        Metric::Potential,
        Metric::ObjectiveGap,
    ];
}

pub const CSV_HEADER: &str =
    "iter,comm_volume,optimality_error,relative_error,consensus_error,tracking_error,potential,objective_gap,wall_s";

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricRow {
    pub iter: u64,
    pub comm_volume: u64,
    pub optimality_error: Option<f64>,
    pub relative_error: Option<f64>,
    pub consensus_error: Option<f64>,
    pub tracking_error: Option<f64>,
    pub potential: Option<f64>,
    pub objective_gap: Option<f64>,
    pub wall_s: Option<f64>,
}

impl MetricRow {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::OptimalityError => self.optimality_error,
            Metric::RelativeError => self.relative_error,
            Metric::ConsensusError => self.consensus_error,
            Metric::TrackingError => self.tracking_error,
            Metric::Potential => self.potential,
            Metric::ObjectiveGap => self.objective_gap,
            Metric::WallS => self.wall_s,
        }
    }

    fn csv_line(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.iter,
            self.comm_volume,
            cell(self.optimality_error),
            cell(self.relative_error),
            cell(self.consensus_error),
            cell(self.tracking_error),
            cell(self.potential),
            cell(self.objective_gap),
            cell(self.wall_s)
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricTrace {
    pub rows: Vec<MetricRow>,
}

impl MetricTrace {
    pub fn push(&mut self, row: MetricRow) {
        if let Some(last) = self.rows.last() {
            debug_assert!(row.iter > last.iter && row.comm_volume >= last.comm_volume);
        }
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&MetricRow> {
        self.rows.last()
    }

    pub fn series(&self, metric: Metric) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.get(metric)).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for row in &self.rows {
            writeln!(out, "{}", row.csv_line())?;
        }
        Ok(())
    }
}
