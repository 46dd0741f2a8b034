//! Stacked per-node vectors.
//!
//! A [`NodeBlock`] holds one `p`-vector per node. Storage is a `p × n`
//! column-major matrix so that every node's vector is a contiguous slice,
//! and one communication round `x_i <- Σ_j W_ij x_j` is a single product
//! with the mixing matrix.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug, PartialEq)]
pub struct NodeBlock {
    data: DMatrix<f64>,
}

impl NodeBlock {
    pub fn zeros(nodes: usize, dim: usize) -> Self {
        Self {
            data: DMatrix::zeros(dim, nodes),
        }
    }

    /// Builds a block from one vector per node. All vectors must share a length.
    pub fn from_nodes(rows: &[Vec<f64>]) -> Self {
        let nodes = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        let mut block = Self::zeros(nodes, dim);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "node {i} has dimension {}, expected {dim}", row.len());
            block.node_mut(i).copy_from_slice(row);
        }
        block
    }

    /// Every node holds a copy of `z`.
    pub fn replicate(nodes: usize, z: &[f64]) -> Self {
        let mut block = Self::zeros(nodes, z.len());
        for i in 0..nodes {
            block.node_mut(i).copy_from_slice(z);
        }
        block
    }

    pub fn from_matrix(data: DMatrix<f64>) -> Self {
        Self { data }
    }

    pub fn nodes(&self) -> usize {
        self.data.ncols()
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let p = self.dim();
        &self.data.as_slice()[i * p..(i + 1) * p]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        let p = self.dim();
        &mut self.data.as_mut_slice()[i * p..(i + 1) * p]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.data.as_mut_slice()
    }

    /// One communication round: node `i` receives `Σ_j W_ij x_j`.
    pub fn mixed(&self, w: &DMatrix<f64>) -> NodeBlock {
        debug_assert_eq!(w.nrows(), self.nodes());
        Self {
            data: &self.data * w.transpose(),
        }
    }

    /// Average over nodes, `x̄`.
    pub fn mean(&self) -> DVector<f64> {
        let n = self.nodes();
        let mut mean = DVector::zeros(self.dim());
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(self.node(i)) {
                *m += v;
            }
        }
        mean / n as f64
    }

    /// `x − Mx`: every node's deviation from the network average.
    pub fn deviation(&self) -> NodeBlock {
        let mean = self.mean();
        let mut out = self.clone();
        for i in 0..self.nodes() {
            for (o, m) in out.node_mut(i).iter_mut().zip(mean.iter()) {
                *o -= m;
            }
        }
        out
    }

    /// `‖x − Mx‖`.
    pub fn consensus_error(&self) -> f64 {
        self.deviation().norm()
    }

    /// Euclidean norm of the stacked `np`-vector.
    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.data.norm_squared()
    }

    pub fn dot(&self, other: &NodeBlock) -> f64 {
        self.data.dot(&other.data)
    }

    /// `self += a · other`
    pub fn axpy(&mut self, a: f64, other: &NodeBlock) {
        for (x, y) in self.data.as_mut_slice().iter_mut().zip(other.data.as_slice()) {
            *x += a * y;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.amax()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Add for &NodeBlock {
    type Output = NodeBlock;
    fn add(self, rhs: &NodeBlock) -> NodeBlock {
        NodeBlock {
            data: &self.data + &rhs.data,
        }
    }
}

impl Sub for &NodeBlock {
    type Output = NodeBlock;
    fn sub(self, rhs: &NodeBlock) -> NodeBlock {
        NodeBlock {
            data: &self.data - &rhs.data,
        }
    }
}

impl Mul<f64> for &NodeBlock {
    type Output = NodeBlock;
    fn mul(self, rhs: f64) -> NodeBlock {
        NodeBlock {
            data: &self.data * rhs,
        }
    }
}

impl Neg for &NodeBlock {
    type Output = NodeBlock;
    fn neg(self) -> NodeBlock {
        NodeBlock { data: -&self.data }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_slices_are_contiguous() {
        let b = NodeBlock::from_nodes(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert_eq!(b.nodes(), 3);
        assert_eq!(b.dim(), 2);
        assert_eq!(b.node(1), &[3.0, 4.0]);
        assert_eq!(b.mean().as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn mixing_applies_rows_of_w() {
        let b = NodeBlock::from_nodes(&[vec![1.0], vec![0.0]]);
        let w = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.5, 0.5]);
        let m = b.mixed(&w);
        assert_eq!(m.node(0), &[0.75]);
        assert_eq!(m.node(1), &[0.5]);
    }

    #[test]
    fn deviation_of_antipodal_pair() {
        let b = NodeBlock::from_nodes(&[vec![1.0, 0.0], vec![-1.0, 0.0]]);
        assert!((b.consensus_error() - 2f64.sqrt()).abs() < 1e-15);
    }
}
