//! Decentralized memoryless BFGS (DMBFGS).
//!
//! Each node keeps only its latest pair `(s, y)`; the quasi-Newton matrix is
//! the BFGS update of `τI` with `τ = sᵀy/‖y‖²`, applied implicitly.

use nalgebra::DMatrix;

use super::tracking::{advance_x, track};
use super::{AlgoError, Network, NodeStates};
use crate::block::{dot, norm_sq, NodeBlock};

/// Extreme eigenvalues `λ ≤ Λ` of the update together with the scale `τ`.
/// The other `p − 2` eigenvalues equal `τ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HessianEigen {
    pub lambda: f64,
    pub tau: f64,
    pub big_lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum YSource {
    /// Tracker difference `v⁺ − v`.
    Tracker,
    /// Local gradient difference `g⁺ − g`.
    Gradient,
}

#[derive(Clone, Copy, Debug)]
pub struct YChoice<'a> {
    pub y: &'a [f64],
    pub source: YSource,
    /// Eigenvalues for the chosen `y`, when `sᵀy > 0`.
    pub eigen: Option<HessianEigen>,
}

/// The pair a node used for its latest direction.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvaturePair {
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub source: YSource,
    pub eigen: HessianEigen,
}

/// Eigenvalues of `H = τI − (syᵀ + ysᵀ)/‖y‖² + 2ssᵀ/(sᵀy)`. `None` unless
/// `sᵀy > 0` and `y ≠ 0`.
pub fn hessian_eigen(s: &[f64], y: &[f64]) -> Option<HessianEigen> {
    let sy = dot(s, y);
    let ss = norm_sq(s);
    let yy = norm_sq(y);
    if !(sy > 0.0 && yy > 0.0 && ss > 0.0) {
        return None;
    }
    let cos2 = (sy * sy / (ss * yy)).min(1.0);
    let big_lambda = ss / sy * (1.0 + (1.0 - cos2).sqrt());
    // λΛ = ‖s‖²/‖y‖²; dividing avoids the cancellation in 1 − √(1 − c²).
    let lambda = ss / yy / big_lambda;
    Some(HessianEigen {
        lambda,
        tau: sy / yy,
        big_lambda,
    })
}

/// Keeps the tracker difference when its update has eigenvalues inside
/// `[l, u]`, otherwise falls back to the local gradient difference.
pub fn dmbfgs_y_select<'a>(
    s: &[f64],
    y_check: &'a [f64],
    y_hat: &'a [f64],
    l: f64,
    u: f64,
) -> Result<YChoice<'a>, AlgoError> {
    if norm_sq(s) == 0.0 {
        return Err(AlgoError::DegenerateStep);
    }
    if let Some(eigen) = hessian_eigen(s, y_check) {
        let tol = 1e-12 * eigen.big_lambda;
        debug_assert!(eigen.lambda <= eigen.tau + tol && eigen.tau <= eigen.big_lambda + tol);
        if eigen.lambda >= l && eigen.big_lambda <= u {
            return Ok(YChoice {
                y: y_check,
                source: YSource::Tracker,
                eigen: Some(eigen),
            });
        }
    }
    Ok(YChoice {
        y: y_hat,
        source: YSource::Gradient,
        eigen: hessian_eigen(s, y_hat),
    })
}

/// `d = −Hv` without forming `H`: `d = −τv + βs + θy`.
pub fn dmbfgs_direction(v: &[f64], s: &[f64], y: &[f64]) -> Vec<f64> {
    let yy = norm_sq(y);
    let sy = dot(s, y);
    let vs = dot(v, s);
    let tau = sy / yy;
    let theta = vs / yy;
    let beta = dot(v, y) / yy - 2.0 * vs / sy;
    v.iter()
        .zip(s)
        .zip(y)
        .map(|((vi, si), yi)| -tau * vi + beta * si + theta * yi)
        .collect()
}

/// Dense `H` for testing and verification.
pub fn explicit_h(s: &[f64], y: &[f64]) -> DMatrix<f64> {
    let p = s.len();
    let yy = norm_sq(y);
    let sy = dot(s, y);
    DMatrix::from_fn(p, p, |i, j| {
        let diag = if i == j { sy / yy } else { 0.0 };
        diag - (s[i] * y[j] + y[i] * s[j]) / yy + 2.0 * s[i] * s[j] / sy
    })
}

/// `v⁰ = g⁰`, `d⁰ = −v⁰`.
pub fn dmbfgs_init(x0: NodeBlock, net: &Network) -> NodeStates {
    let g0 = net.gradients(&x0);
    let mut s = NodeStates::blank(x0, g0);
    s.v = s.g.clone();
    s.v_prev = s.v.clone();
    s.d = -&s.v;
    s
}

/// `x⁺ = W(x + αd)`, `v⁺ = W(v + g⁺ − g)`, then each node refreshes its pair
/// and direction.
pub fn dmbfgs_step(st: &mut NodeStates, net: &Network, alpha: f64, l: f64, u: f64) {
    let mut local = st.x.clone();
    local.axpy(alpha, &st.d);
    let x_new = net.mix(&local);
    let g_new = net.gradients(&x_new);
    track(st, net, &g_new);

    let (n, p) = (st.nodes(), st.dim());
    let mut d_new = NodeBlock::zeros(n, p);
    for i in 0..n {
        let s: Vec<f64> = x_new.node(i).iter().zip(st.x.node(i)).map(|(a, b)| a - b).collect();
        let y_check: Vec<f64> = st.v.node(i).iter().zip(st.v_prev.node(i)).map(|(a, b)| a - b).collect();
        let y_hat: Vec<f64> = g_new.node(i).iter().zip(st.g.node(i)).map(|(a, b)| a - b).collect();
        let v = st.v.node(i);
        let chosen = match dmbfgs_y_select(&s, &y_check, &y_hat, l, u) {
            Ok(YChoice {
                y,
                source,
                eigen: Some(eigen),
            }) => Some((y.to_vec(), source, eigen)),
            _ => None,
        };
        match chosen {
            Some((y, source, eigen)) => {
                d_new.node_mut(i).copy_from_slice(&dmbfgs_direction(v, &s, &y));
                st.curvature[i] = Some(CurvaturePair { s, y, source, eigen });
            }
            None => {
                for (d, vi) in d_new.node_mut(i).iter_mut().zip(v) {
                    *d = -vi;
                }
                st.curvature[i] = None;
            }
        }
    }
    st.d = d_new;
    advance_x(st, x_new, g_new);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn identity_pair() {
        let e = hessian_eigen(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(close(e.lambda, 1.0, 1e-15) && close(e.tau, 1.0, 1e-15) && close(e.big_lambda, 1.0, 1e-15));
        let s = [1.0, 2.0];
        assert_eq!(dmbfgs_y_select(&s, &s, &[9.0, 9.0], 0.5, 2.0).unwrap().source, YSource::Tracker);
        assert_eq!(dmbfgs_y_select(&s, &s, &[9.0, 9.0], 1.5, 2.0).unwrap().source, YSource::Gradient);
    }

    #[test]
    fn negative_curvature_falls_back() {
        let y_hat = [2.0, 0.0];
        let choice = dmbfgs_y_select(&[1.0, 0.0], &[-1.0, 0.0], &y_hat, 1e-4, 1e4).unwrap();
        assert_eq!(choice.source, YSource::Gradient);
        assert_eq!(choice.y, &y_hat);
    }

    #[test]
    fn worked_window_example() {
        let choice = dmbfgs_y_select(&[1.0, 0.0], &[1.0, 1.0], &[0.0, 0.0], 0.25, 2.0).unwrap();
        assert_eq!(choice.source, YSource::Tracker);
        let e = choice.eigen.unwrap();
        let r = 0.5f64.sqrt();
        assert!(close(e.tau, 0.5, 1e-15));
        assert!(close(e.lambda, 1.0 - r, 1e-14));
        assert!(close(e.big_lambda, 1.0 + r, 1e-14));
    }

    #[test]
    fn zero_step_is_degenerate() {
        assert_eq!(
            dmbfgs_y_select(&[0.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], 0.1, 10.0).unwrap_err(),
            AlgoError::DegenerateStep
        );
    }

    #[test]
    fn scalar_case_is_secant_ratio() {
        let e = hessian_eigen(&[2.0], &[0.5]).unwrap();
        assert!(close(e.lambda, 4.0, 1e-15) && close(e.big_lambda, 4.0, 1e-15));
        assert_eq!(dmbfgs_direction(&[1.0], &[2.0], &[0.5]), vec![-4.0]);
    }

    #[test]
    fn direction_examples() {
        assert_eq!(dmbfgs_direction(&[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]), vec![-1.0, 0.0]);
        let d = dmbfgs_direction(&[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]);
        assert!(close(d[0], 0.5, 1e-15) && close(d[1], -0.5, 1e-15));
        let h = explicit_h(&[1.0, 0.0], &[1.0, 1.0]);
        let expected = DMatrix::from_row_slice(2, 2, &[1.5, -0.5, -0.5, 0.5]);
        assert!((h - expected).amax() < 1e-15);
        let d = dmbfgs_direction(&[0.0, 0.0, 3.0], &[1.0, 0.0, 0.0], &[1.0, 1.0, 0.0]);
        assert!(close(d[2], -1.5, 1e-15) && d[0] == 0.0 && d[1] == 0.0);
    }

    fn triple(p: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-3.0..3.0f64, p),
            prop::collection::vec(-3.0..3.0f64, p),
            prop::collection::vec(-3.0..3.0f64, p),
        )
            .prop_filter("positive curvature", |(_, s, y)| {
                dot(s, y) > 1e-3 * (norm_sq(s) * norm_sq(y)).sqrt() && norm_sq(y) > 1e-6
            })
    }

    proptest! {
        #[test]
        fn direction_is_minus_h_v((v, s, y) in (1usize..7).prop_flat_map(triple)) {
            let d = dmbfgs_direction(&v, &s, &y);
            let h = explicit_h(&s, &y);
            let hv = &h * nalgebra::DVector::from_column_slice(&v);
            let scale = hv.norm().max(1e-300);
            for (a, b) in d.iter().zip(hv.iter()) {
                prop_assert!((a + b).abs() <= 1e-12 * scale.max(1.0));
            }
        }

        #[test]
        fn eigenvalues_interlace((_, s, y) in (2usize..7).prop_flat_map(triple)) {
            let e = hessian_eigen(&s, &y).unwrap();
            let tol = 1e-12 * e.big_lambda;
            prop_assert!(e.lambda <= e.tau + tol);
            prop_assert!(e.tau <= e.big_lambda + tol);
            let dense = explicit_h(&s, &y).symmetric_eigenvalues();
            let min = dense.min();
            let max = dense.max();
            prop_assert!((min - e.lambda).abs() <= 1e-10 * max);
            prop_assert!((max - e.big_lambda).abs() <= 1e-10 * max);
        }
    }
}
