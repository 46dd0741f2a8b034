//! Theoretical stepsize bounds.

use super::AlgoError;

/// The three terms whose minimum is the NDCG stepsize bound.
pub fn ndcg_bound_terms(l: f64, sigma: f64, n: usize) -> [f64; 3] {
    let n = n as f64;
    let gap = 1.0 - sigma * sigma;
    let r5 = 5f64.sqrt();
    [
        gap * n / (32.0 * l * l),
        2.0 * (5.0 - 2.0 * r5) * gap / (4.0 * n * (5.0 * sigma * sigma * l * l + 18.0 - 8.0 * r5) + 5.0 * l),
        (2.0 * r5 - 4.0) / (5.0 * l),
    ]
}

pub fn ndcg_stepsize_bound(l: f64, sigma: f64, n: usize) -> f64 {
    ndcg_bound_terms(l, sigma, n).into_iter().fold(f64::INFINITY, f64::min)
}

/// Envelope `ψI ⪯ H ⪯ ΨI` of the DMBFGS quasi-Newton matrices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HessianEnvelope {
    pub psi_low: f64,
    pub psi_high: f64,
}

impl HessianEnvelope {
    /// `ψ = min{l, 1/(2L)}`, `Ψ = max{u, 2/μ}`.
    pub fn new(l_smooth: f64, mu: f64, l: f64, u: f64) -> Self {
        Self {
            psi_low: l.min(1.0 / (2.0 * l_smooth)),
            psi_high: u.max(2.0 / mu),
        }
    }

    pub fn kappa(&self) -> f64 {
        self.psi_high / self.psi_low
    }
}

pub fn dmbfgs_stepsize_bound(l_smooth: f64, mu: f64, sigma: f64, l: f64, u: f64) -> Result<f64, AlgoError> {
    if !(mu > 0.0 && mu <= l_smooth) {
        return Err(AlgoError::InvalidParams(format!(
            "need 0 < mu <= L, got mu = {mu}, L = {l_smooth}"
        )));
    }
    if !(0.0..1.0).contains(&sigma) {
        return Err(AlgoError::InvalidParams(format!("sigma must lie in [0, 1), got {sigma}")));
    }
    if !(l > 0.0 && l < u) {
        return Err(AlgoError::InvalidParams(format!("need 0 < l < u, got l = {l}, u = {u}")));
    }
    let env = HessianEnvelope::new(l_smooth, mu, l, u);
    let kappa_h = env.kappa();
    let kappa_f = l_smooth / mu;
    let big_psi = env.psi_high;
    Ok(if sigma > 0.0 {
        let gap = 1.0 - sigma * sigma;
        (1.0 / 3916f64).sqrt() * gap * gap / (l_smooth * big_psi * kappa_h) * (1.0 / kappa_f).sqrt()
    } else {
        1.0 / (15.0 * l_smooth * big_psi * kappa_h)
    })
}
