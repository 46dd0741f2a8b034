//! Decentralized gradient descent, gradient tracking and the fixed-momentum
//! heavy-ball variant.

use serde::{Deserialize, Serialize};

use super::{Network, NodeStates};
use crate::block::NodeBlock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GtFlavor {
    /// `x⁺ = W(x − αv)`
    Atc,
    /// `x⁺ = Wx − αv`
    SemiAtc,
}

/// `v⁰ = g⁰`.
pub fn tracking_init(x0: NodeBlock, net: &Network) -> NodeStates {
    let g0 = net.gradients(&x0);
    let mut s = NodeStates::blank(x0, g0);
    s.v = s.g.clone();
    s.v_prev = s.v.clone();
    s
}

/// `x⁺ = Wx − αg`.
pub fn dgd_step(s: &mut NodeStates, net: &Network, alpha: f64) {
    let mut x_new = net.mix(&s.x);
    x_new.axpy(-alpha, &s.g);
    let g_new = net.gradients(&x_new);
    advance_x(s, x_new, g_new);
}

pub fn gt_step(s: &mut NodeStates, net: &Network, alpha: f64, flavor: GtFlavor) {
    let x_new = match flavor {
        GtFlavor::SemiAtc => {
            let mut x = net.mix(&s.x);
            x.axpy(-alpha, &s.v);
            x
        }
        GtFlavor::Atc => {
            let mut x = s.x.clone();
            x.axpy(-alpha, &s.v);
            net.mix(&x)
        }
    };
    let g_new = net.gradients(&x_new);
    track(s, net, &g_new);
    advance_x(s, x_new, g_new);
}

/// `x⁺ = Wx − αv + β(x − x_prev)` with the tracker of [`gt_step`].
pub fn abm_step(s: &mut NodeStates, net: &Network, alpha: f64, beta: f64) {
    let mut x_new = net.mix(&s.x);
    x_new.axpy(-alpha, &s.v);
    x_new.axpy(beta, &(&s.x - &s.x_prev));
    let g_new = net.gradients(&x_new);
    track(s, net, &g_new);
    advance_x(s, x_new, g_new);
}

/// `v⁺ = W(v + g⁺ − g)`.
pub(crate) fn track(s: &mut NodeStates, net: &Network, g_new: &NodeBlock) {
    let mut inner = s.v.clone();
    inner.axpy(1.0, &(g_new - &s.g));
    let v_new = net.mix(&inner);
    s.v_prev = std::mem::replace(&mut s.v, v_new);
}

pub(crate) fn advance_x(s: &mut NodeStates, x_new: NodeBlock, g_new: NodeBlock) {
    s.x_prev = std::mem::replace(&mut s.x, x_new);
    s.g_prev = std::mem::replace(&mut s.g, g_new);
}
