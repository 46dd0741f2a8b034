//! Network topologies and Metropolis mixing matrices.

use std::collections::{BTreeSet, VecDeque};
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Tolerance used for the symmetry and row-sum checks.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Margin by which `sigma` must stay below one.
pub const SIGMA_STRICT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("edge density must lie in (0, 1], got {0}")]
    InvalidDensity(f64),
    #[error("a network needs at least one node")]
    NoNodes,
    #[error("edge ({0}, {1}) is invalid for a graph on {2} nodes")]
    InvalidEdge(usize, usize, usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("graph is not connected")]
    Disconnected,
    #[error("symmetric eigensolver did not converge")]
    EigenSolver,
    #[error("edge list, line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Connected undirected graph. Edges are stored once as `(i, j)` with `i < j`,
/// 0-based; self-neighborship is implicit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::NoNodes);
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b || a >= n || b >= n {
                return Err(TopologyError::InvalidEdge(a, b, n));
            }
            let e = (a.min(b), a.max(b));
            if !set.insert(e) {
                return Err(TopologyError::DuplicateEdge(e.0, e.1));
            }
        }
        let graph = Self {
            n,
            edges: set.into_iter().collect(),
        };
        if !graph.is_connected() {
            return Err(TopologyError::Disconnected);
        }
        Ok(graph)
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        Self::new(n, edges).expect("complete graph is connected")
    }

    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i))).expect("path graph is connected")
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Realized fraction of the `n(n−1)/2` possible edges (1 for a single node).
    pub fn density(&self) -> f64 {
        let pairs = self.n * (self.n - 1) / 2;
        if pairs == 0 {
            1.0
        } else {
            self.edges.len() as f64 / pairs as f64
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Breadth-first traversal from node 0 reaches every node.
    pub fn is_connected(&self) -> bool {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// Writes `n m` followed by one 1-based `i j` pair per line.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.n, self.edges.len())?;
        for &(a, b) in &self.edges {
            writeln!(out, "{} {}", a + 1, b + 1)?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Self, TopologyError> {
        let mut lines = input.lines().enumerate();
        let parse_pair = |line_no: usize, text: &str| -> Result<(usize, usize), TopologyError> {
            let fields: Vec<&str> = text.split_whitespace().collect();
            let bad = |msg: &str| TopologyError::Format {
                line: line_no,
                msg: msg.to_string(),
            };
            if fields.len() != 2 {
                return Err(bad("expected two integers"));
            }
            let a = fields[0].parse().map_err(|_| bad("invalid integer"))?;
            let b = fields[1].parse().map_err(|_| bad("invalid integer"))?;
            Ok((a, b))
        };
        let (n, m) = match lines.next() {
            Some((_, line)) => parse_pair(1, &line?)?,
            None => {
                return Err(TopologyError::Format {
                    line: 1,
                    msg: "missing header".into(),
                })
            }
        };
        let mut edges = Vec::with_capacity(m);
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (a, b) = parse_pair(idx + 1, &line)?;
            if a == 0 || b == 0 {
                return Err(TopologyError::Format {
                    line: idx + 1,
                    msg: "node indices are 1-based".into(),
                });
            }
            edges.push((a - 1, b - 1));
        }
        if edges.len() != m {
            return Err(TopologyError::Format {
                line: 1,
                msg: format!("header declares {m} edges, found {}", edges.len()),
            });
        }
        Self::new(n, edges)
    }
}

/// Number of edges targeted for `n` nodes at `density`: the rounded
/// (half-up) fraction of all pairs, never below a spanning tree.
pub fn target_edge_count(n: usize, density: f64) -> usize {
    let pairs = n * n.saturating_sub(1) / 2;
    let wanted = (density * pairs as f64 + 0.5).floor() as usize;
    wanted.max(n.saturating_sub(1)).min(pairs)
}

/// Random connected graph: a random recursive spanning tree, then extra
/// edges drawn uniformly without replacement from the remaining pairs.
pub fn generate_connected_graph(n: usize, density: f64, seed: u64) -> Result<Graph, TopologyError> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(TopologyError::InvalidDensity(density));
    }
    if n == 0 {
        return Err(TopologyError::NoNodes);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut edges = BTreeSet::new();
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        let child = order[k];
        edges.insert((parent.min(child), parent.max(child)));
    }

    let target = target_edge_count(n, density);
    let mut rest: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|e| !edges.contains(e))
        .collect();
    rest.shuffle(&mut rng);
    let extra = target - edges.len();
    edges.extend(rest.into_iter().take(extra));

    Graph::new(n, edges)
}

/// Symmetric doubly stochastic weight matrix together with its `sigma`.
#[derive(Clone, Debug)]
pub struct MixingMatrix {
    weights: DMatrix<f64>,
    sigma: f64,
}

impl MixingMatrix {
    /// Wraps an arbitrary square matrix, computing its `sigma`. No invariant
    /// checks happen here; see [`validate_mixing_matrix`].
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self, TopologyError> {
        let sigma = spectral_gap(&weights)?;
        Ok(Self { weights, sigma })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Second-largest eigenvalue magnitude.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn size(&self) -> usize {
        self.weights.nrows()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in self.weights.row_iter() {
            let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Metropolis constant edge weights:
/// `W_ij = 1 / (max(deg i, deg j) + 1)` on edges, diagonal fills each row to one.
pub fn metropolis_weights(graph: &Graph) -> Result<MixingMatrix, TopologyError> {
    let n = graph.node_count();
    let deg = graph.degrees();
    let mut w = DMatrix::zeros(n, n);
    for &(i, j) in graph.edges() {
        let weight = 1.0 / (deg[i].max(deg[j]) + 1) as f64;
        w[(i, j)] = weight;
        w[(j, i)] = weight;
    }
    for i in 0..n {
        // Left-to-right over the row so that mirrored rows sum identically.
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::from_weights(w)
}

/// Eigenvalues of the symmetrized matrix, sorted descending.
pub fn eigenvalues_desc(w: &DMatrix<f64>) -> Result<Vec<f64>, TopologyError> {
    let sym = (w + w.transpose()) * 0.5;
    let eig = sym
        .try_symmetric_eigen(1e-15, 10_000)
        .ok_or(TopologyError::EigenSolver)?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(TopologyError::EigenSolver);
    }
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// `sigma = max{|λ₂|, |λ_n|}`; zero for a single node.
pub fn spectral_gap(w: &DMatrix<f64>) -> Result<f64, TopologyError> {
    let values = eigenvalues_desc(w)?;
    if values.len() < 2 {
        return Ok(0.0);
    }
    Ok(values[1].abs().max(values[values.len() - 1].abs()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixingReport {
    pub nonnegative: bool,
    pub symmetric: bool,
    pub rows_sum_to_one: bool,
    pub sparsity_matches: bool,
    pub sigma_below_one: bool,
    pub sigma: Option<f64>,
}

impl MixingReport {
    pub fn passed(&self) -> bool {
        self.nonnegative && self.symmetric && self.rows_sum_to_one && self.sparsity_matches && self.sigma_below_one
    }
}

/// Checks the mixing-matrix definition against the graph it should respect.
pub fn validate_mixing_matrix(w: &DMatrix<f64>, graph: &Graph) -> MixingReport {
    let n = w.nrows();
    let square = w.ncols() == n && n == graph.node_count();
    let nonnegative = w.iter().all(|&v| v >= 0.0);
    let symmetric = square && (w - w.transpose()).amax() <= STOCHASTIC_TOL;
    let rows_sum_to_one = square
        && w
            .row_iter()
            .all(|row| (row.iter().sum::<f64>() - 1.0).abs() <= STOCHASTIC_TOL);
    let sparsity_matches = square
        && (0..n).all(|i| {
            (0..n).all(|j| {
                let linked = i == j || graph.has_edge(i, j);
                (w[(i, j)] > 0.0) == linked
            })
        });
    let sigma = if square { spectral_gap(w).ok() } else { None };
    MixingReport {
        nonnegative,
        symmetric,
        rows_sum_to_one,
        sparsity_matches,
        sigma_below_one: sigma.is_some_and(|s| s <= 1.0 - SIGMA_STRICT_TOL),
        sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_matrix_eq(w: &DMatrix<f64>, expected: &[f64], tol: f64) {
        for (a, b) in w.transpose().iter().zip(expected) {
            assert!((a - b).abs() <= tol, "{w} vs {expected:?}");
        }
    }

    #[test]
    fn complete_triangle_at_full_density() {
        let g = generate_connected_graph(3, 1.0, 11).unwrap();
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn two_nodes_get_spanning_edge() {
        let g = generate_connected_graph(2, 0.1, 5).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn single_node_has_no_edges() {
        let g = generate_connected_graph(1, 0.5, 0).unwrap();
        assert_eq!(g.edge_count(), 0);
        let w = metropolis_weights(&g).unwrap();
        assert_eq!(w.weights()[(0, 0)], 1.0);
        assert_eq!(w.sigma(), 0.0);
    }

    #[test]
    fn ten_nodes_at_density_056() {
        let g = generate_connected_graph(10, 0.56, 7).unwrap();
        assert_eq!(g.edge_count(), 25);
        assert!(g.is_connected());
    }

    #[test]
    fn rejects_bad_density() {
        assert!(matches!(
            generate_connected_graph(4, 0.0, 1),
            Err(TopologyError::InvalidDensity(_))
        ));
        assert!(generate_connected_graph(4, 1.5, 1).is_err());
        assert!(generate_connected_graph(4, f64::NAN, 1).is_err());
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let a = generate_connected_graph(20, 0.3, 42).unwrap();
        let b = generate_connected_graph(20, 0.3, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn path_three_metropolis() {
        let w = metropolis_weights(&Graph::path(3)).unwrap();
        let third = 1.0 / 3.0;
        assert_matrix_eq(
            w.weights(),
            &[2.0 * third, third, 0.0, third, third, third, 0.0, third, 2.0 * third],
            1e-15,
        );
        assert!((w.sigma() - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn complete_metropolis_is_uniform_average() {
        for n in [2, 3, 7] {
            let w = metropolis_weights(&Graph::complete(n)).unwrap();
            assert!(w.weights().iter().all(|v| (v - 1.0 / n as f64).abs() < 1e-15));
            assert!(w.sigma() < 1e-12);
        }
    }

    #[test]
    fn validation_flags() {
        let g = Graph::path(3);
        let w = metropolis_weights(&g).unwrap();
        assert!(validate_mixing_matrix(w.weights(), &g).passed());

        let report = validate_mixing_matrix(&DMatrix::identity(3, 3), &g);
        assert!(!report.sparsity_matches);
        assert!(report.symmetric && report.rows_sum_to_one);

        let g2 = Graph::path(2);
        let bad = DMatrix::from_row_slice(2, 2, &[0.6, 0.5, 0.5, 0.6]);
        let report = validate_mixing_matrix(&bad, &g2);
        assert!(!report.rows_sum_to_one);
        assert!(!report.passed());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = generate_connected_graph(12, 0.4, 3).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let back = Graph::read_edge_list(buf.as_slice()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn edge_list_rejects_disconnected() {
        let text = "4 2\n1 2\n3 4\n";
        assert!(matches!(
            Graph::read_edge_list(text.as_bytes()),
            Err(TopologyError::Disconnected)
        ));
    }
}
