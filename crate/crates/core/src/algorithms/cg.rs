//! Conjugate-gradient methods: the stochastic-free decentralized CG baseline
//! (SDCG) and NDCG with tracked gradients.

use serde::{Deserialize, Serialize};

use super::tracking::{advance_x, track};
use super::{Network, NodeStates, MACHINE_FLOOR};
use crate::block::{dot, norm_sq, NodeBlock};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CgVariant {
    Fr,
    Prp,
    Hs,
    Dy,
}

/// Classical CG parameter for one node. Zero when the denominator vanishes.
pub fn cg_beta(variant: CgVariant, g_new: &[f64], g_old: &[f64], d: &[f64]) -> f64 {
    let y: Vec<f64> = g_new.iter().zip(g_old).map(|(a, b)| a - b).collect();
    let (num, den) = match variant {
        CgVariant::Fr => (norm_sq(g_new), norm_sq(g_old)),
        CgVariant::Prp => (dot(g_new, &y), norm_sq(g_old)),
        CgVariant::Hs => (dot(g_new, &y), dot(d, &y)),
        CgVariant::Dy => (norm_sq(g_new), dot(d, &y)),
    };
    if den.abs() <= MACHINE_FLOOR {
        0.0
    } else {
        num / den
    }
}

/// `d⁰ = −g⁰`.
pub fn sdcg_init(x0: NodeBlock, net: &Network) -> NodeStates {
    let g0 = net.gradients(&x0);
    let mut s = NodeStates::blank(x0, g0);
    s.d = -&s.g;
    s
}

/// `x⁺ = Wx + αd`, `d⁺ = −g⁺ + βd`.
pub fn sdcg_step(s: &mut NodeStates, net: &Network, alpha: f64, variant: CgVariant, zero_beta: bool) {
    let mut x_new = net.mix(&s.x);
    x_new.axpy(alpha, &s.d);
    let g_new = net.gradients(&x_new);
    let mut d_new = -&g_new;
    for i in 0..s.nodes() {
        let beta = if zero_beta {
            0.0
        } else {
            cg_beta(variant, g_new.node(i), s.g.node(i), s.d.node(i))
        };
        s.beta[i] = beta;
        for (dn, d) in d_new.node_mut(i).iter_mut().zip(s.d.node(i)) {
            *dn += beta * d;
        }
    }
    s.d = d_new;
    advance_x(s, x_new, g_new);
}

/// `v⁰ = g⁰`, `ṽ⁰ = v⁰ + (x⁰ − Wx⁰)/α`, `d̃⁰ = −ṽ⁰`.
pub fn ndcg_init(x0: NodeBlock, net: &Network, alpha: f64) -> NodeStates {
    let g0 = net.gradients(&x0);
    let mut s = NodeStates::blank(x0, g0);
    s.v = s.g.clone();
    s.v_prev = s.v.clone();
    s.v_tilde = corrected_tracker(&s.v, &s.x, &net.mix(&s.x), alpha);
    s.v_tilde_prev = s.v_tilde.clone();
    s.d = -&s.v_tilde;
    s
}

fn corrected_tracker(v: &NodeBlock, x: &NodeBlock, wx: &NodeBlock, alpha: f64) -> NodeBlock {
    let mut out = v.clone();
    out.axpy(1.0 / alpha, &(x - wx));
    out
}

/// One NDCG iteration. The local move `x⁺ = x + αd̃` needs no communication;
/// the two rounds are the tracker update and the exchange of `x⁺`.
pub fn ndcg_step(s: &mut NodeStates, net: &Network, alpha: f64, zero_beta: bool) {
    let mut x_new = s.x.clone();
    x_new.axpy(alpha, &s.d);
    let g_new = net.gradients(&x_new);
    track(s, net, &g_new);
    let wx = net.mix(&x_new);
    let vt_new = corrected_tracker(&s.v, &x_new, &wx, alpha);

    let mut d_new = -&vt_new;
    for i in 0..s.nodes() {
        let den = norm_sq(s.v_tilde.node(i));
        let beta = if zero_beta || den <= MACHINE_FLOOR {
            0.0
        } else {
            let y: Vec<f64> = g_new.node(i).iter().zip(s.g.node(i)).map(|(a, b)| a - b).collect();
            dot(vt_new.node(i), &y) / den
        };
        s.beta[i] = beta;
        for (dn, d) in d_new.node_mut(i).iter_mut().zip(s.d.node(i)) {
            *dn += beta * d;
        }
    }
    s.d = d_new;
    s.v_tilde_prev = std::mem::replace(&mut s.v_tilde, vt_new);
    advance_x(s, x_new, g_new);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{init, step, AlgoParams, AlgorithmKind, GtFlavor};
    use crate::datasets::synth_quadratic;
    use crate::problems::{Oracle, QuadraticProblem};
    use crate::topology::{generate_connected_graph, metropolis_weights};
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn beta_formulas() {
        let g_old = [1.0, 0.0];
        let g_new = [1.0, 1.0];
        let d = [-1.0, 0.0];
        // y = (0, 1)
        assert_eq!(cg_beta(CgVariant::Fr, &g_new, &g_old, &d), 2.0);
        assert_eq!(cg_beta(CgVariant::Prp, &g_new, &g_old, &d), 1.0);
        // dᵀy = 0
        assert_eq!(cg_beta(CgVariant::Hs, &g_new, &g_old, &d), 0.0);
        assert_eq!(cg_beta(CgVariant::Dy, &g_new, &g_old, &d), 0.0);
        let d = [0.0, 2.0];
        assert_eq!(cg_beta(CgVariant::Hs, &g_new, &g_old, &d), 0.5);
        assert_eq!(cg_beta(CgVariant::Dy, &g_new, &g_old, &d), 1.0);
    }

    #[test]
    fn stationary_gradient_gives_zero_prp_hs() {
        let g = [0.3, -0.7];
        let d = [1.0, 1.0];
        assert_eq!(cg_beta(CgVariant::Prp, &g, &g, &d), 0.0);
        assert_eq!(cg_beta(CgVariant::Hs, &g, &g, &d), 0.0);
    }

    fn network(n: usize) -> DMatrix<f64> {
        metropolis_weights(&generate_connected_graph(n, 0.5, 21).unwrap())
            .unwrap()
            .weights()
            .clone()
    }

    #[test]
    fn ndcg_init_examples() {
        let q = synth_quadratic(4, 10.0, 5, 2).unwrap();
        let w = network(5);
        let net = Network::new(&q, &w);
        let s = ndcg_init(NodeBlock::zeros(5, 4), &net, 0.1);
        for i in 0..5 {
            let b = q.offsets()[i].as_slice();
            for (d, bi) in s.d.node(i).iter().zip(b) {
                assert_eq!(*d, -bi);
            }
        }
        let s = ndcg_init(NodeBlock::replicate(5, &[0.1, 0.2, 0.3, 0.4]), &net, 0.1);
        assert!((&s.v_tilde - &s.g).max_abs() < 1e-12);
    }

    #[test]
    fn ndcg_stationary_gradients_give_zero_beta() {
        // Zero objective: every gradient vanishes, so every β must be zero.
        let q = QuadraticProblem::new(vec![DMatrix::identity(2, 2); 3], vec![DVector::zeros(2); 3])
            .unwrap();
        let w = network(3);
        let net = Network::new(&q, &w);
        let mut s = ndcg_init(NodeBlock::zeros(3, 2), &net, 0.1);
        ndcg_step(&mut s, &net, 0.1, false);
        assert!(s.beta.iter().all(|&b| b == 0.0));
        assert!((&s.d + &s.v_tilde).max_abs() == 0.0);
    }

    #[test]
    fn ndcg_without_beta_is_semi_atc_gt() {
        let q = synth_quadratic(6, 10.0, 7, 5).unwrap();
        let w = network(7);
        let net = Network::new(&q, &w);
        let mut params = AlgoParams::with_alpha(0.05);
        params.zero_beta = true;
        params.gt_flavor = GtFlavor::SemiAtc;
        let x0 = NodeBlock::from_nodes(&(0..7).map(|i| vec![0.1 * i as f64; 6]).collect::<Vec<_>>());
        let mut a = init(AlgorithmKind::Ndcg, x0.clone(), &net, &params).unwrap();
        let mut b = init(AlgorithmKind::Gt, x0, &net, &params).unwrap();
        for _ in 0..200 {
            step(AlgorithmKind::Ndcg, &mut a, &net, &params).unwrap();
            step(AlgorithmKind::Gt, &mut b, &net, &params).unwrap();
            assert!((&a.x - &b.x).max_abs() <= 1e-12 * (1.0 + b.x.max_abs()));
        }
    }

    #[test]
    fn sdcg_without_beta_is_dgd() {
        let q = synth_quadratic(5, 10.0, 4, 6).unwrap();
        let w = network(4);
        let net = Network::new(&q, &w);
        let mut params = AlgoParams::with_alpha(0.05);
        params.zero_beta = true;
        let x0 = NodeBlock::zeros(4, 5);
        let mut a = init(AlgorithmKind::Sdcg, x0.clone(), &net, &params).unwrap();
        let mut b = init(AlgorithmKind::Dgd, x0, &net, &params).unwrap();
        for _ in 0..100 {
            step(AlgorithmKind::Sdcg, &mut a, &net, &params).unwrap();
            step(AlgorithmKind::Dgd, &mut b, &net, &params).unwrap();
            assert!((&a.x - &b.x).max_abs() <= 1e-14);
        }
    }

    #[test]
    fn tracking_identity_after_each_step() {
        let q = synth_quadratic(5, 10.0, 6, 9).unwrap();
        let w = network(6);
        let net = Network::new(&q, &w);
        let mut s = ndcg_init(NodeBlock::zeros(6, 5), &net, 0.02);
        for _ in 0..50 {
            ndcg_step(&mut s, &net, 0.02, false);
            assert!(s.tracking_deviation() <= 1e-10);
            let g_mean = q.global_gradient(s.x.mean().as_slice());
            assert!(g_mean.iter().all(|v| v.is_finite()));
        }
    }
}
