//! State graphs, target distributions, candidate kernels and
//! Metropolis-Hastings rate matrices.
//!
//! All constructors are pure; the returned values are immutable and safe to
//! share across threads.

use nalgebra::DMatrix;
use std::collections::VecDeque;

use crate::error::{AmcmcError, Result};

/// Hard cap on the dense state count. The largest built-in preset is the
/// 25x25 lattice (625 states).
pub const MAX_STATES: usize = 1024;

/// Finite undirected graph over states `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGraph {
    n: usize,
    /// Unordered edges stored as `(i, j)` with `i < j`, sorted, no duplicates.
    edges: Vec<(usize, usize)>,
    degrees: Vec<usize>,
}

impl StateGraph {
    /// Builds a graph and checks the structural invariants: no self-loops,
    /// no duplicate edges, every node of degree >= 1, connected.
    pub fn new(n: usize, mut edges: Vec<(usize, usize)>) -> Result<Self> {
        if n < 2 {
            return Err(AmcmcError::InvalidArgument(format!(
                "graph needs at least 2 nodes, got {n}"
            )));
        }
        if n > MAX_STATES {
            return Err(AmcmcError::InvalidArgument(format!(
                "graph with {n} nodes exceeds the dense limit of {MAX_STATES}"
            )));
        }
        for e in edges.iter_mut() {
            if e.0 == e.1 {
                return Err(AmcmcError::InvalidArgument(format!(
                    "self-loop at node {}",
                    e.0
                )));
            }
            if e.0 >= n || e.1 >= n {
                return Err(AmcmcError::InvalidArgument(format!(
                    "edge ({}, {}) out of range for n = {n}",
                    e.0, e.1
                )));
            }
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        let before = edges.len();
        edges.dedup();
        if edges.len() != before {
            return Err(AmcmcError::InvalidArgument("duplicate edge".into()));
        }

        let mut degrees = vec![0usize; n];
        for &(i, j) in &edges {
            degrees[i] += 1;
            degrees[j] += 1;
        }
        if let Some(k) = degrees.iter().position(|&d| d == 0) {
            return Err(AmcmcError::InvalidArgument(format!("isolated node {k}")));
        }

        let g = Self { n, edges, degrees };
        if !g.is_connected() {
            return Err(AmcmcError::InvalidArgument("graph is not connected".into()));
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    /// Neighbor lists, in increasing node order.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for l in adj.iter_mut() {
            l.sort_unstable();
        }
        adj
    }

    /// 0/1 adjacency matrix.
    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let adj = self.adjacency_lists();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }
}

/// Target distribution with its unnormalized weights and normalizing constant.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    unnormalized: Vec<f64>,
    normalized: Vec<f64>,
    z: f64,
}

impl TargetDistribution {
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(AmcmcError::InvalidArgument(
                "target needs at least 2 states".into(),
            ));
        }
        if weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
            return Err(AmcmcError::InvalidArgument(
                "unnormalized target weights must be finite and strictly positive".into(),
            ));
        }
        let z: f64 = weights.iter().sum();
        let normalized = weights.iter().map(|&w| w / z).collect();
        Ok(Self {
            unnormalized: weights,
            normalized,
            z,
        })
    }

    pub fn n(&self) -> usize {
        self.normalized.len()
    }

    /// Normalized probabilities `pi_i`.
    pub fn pi(&self) -> &[f64] {
        &self.normalized
    }

    pub fn unnormalized(&self) -> &[f64] {
        &self.unnormalized
    }

    /// Normalizing constant `Z` with `pi_i * Z = pi~_i`.
    pub fn z(&self) -> f64 {
        self.z
    }
}

/// Row-stochastic candidate (proposal) kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateKernel {
    q: DMatrix<f64>,
}

impl CandidateKernel {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }
}

/// Transition rate matrix: nonnegative off-diagonal, zero row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    q: DMatrix<f64>,
}

impl RateMatrix {
    /// Wraps a raw matrix, fixing the diagonal so rows sum to zero.
    pub fn from_off_diagonal(mut q: DMatrix<f64>) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n {
            return Err(AmcmcError::InvalidArgument("rate matrix must be square".into()));
        }
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                if i != j {
                    if q[(i, j)] < 0.0 {
                        return Err(AmcmcError::InvalidArgument(format!(
                            "negative off-diagonal rate at ({i}, {j})"
                        )));
                    }
                    row_sum += q[(i, j)];
                }
            }
            q[(i, i)] = -row_sum;
        }
        Ok(Self { q })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }
}

/// Symmetric edge-weight matrix `omega_ij = pi_i Q_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    omega: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn n(&self) -> usize {
        self.omega.nrows()
    }
}

/// Cycle graph on `n >= 3` nodes.
pub fn make_cycle(n: usize) -> Result<StateGraph> {
    if n < 3 {
        return Err(AmcmcError::InvalidArgument(format!(
            "cycle needs n >= 3, got {n}"
        )));
    }
    let edges = (0..n).map(|i| (i, (i + 1) % n)).collect();
    StateGraph::new(n, edges)
}

/// Two cycles joined by a path of `bridge_len` intermediate nodes.
///
/// Nodes are laid out as: first loop `0..loop_a`, bridge
/// `loop_a..loop_a + bridge_len`, second loop to the end. The bridge path
/// runs from the last node of the first loop to the first node of the second;
/// `bridge_len = 0` joins the loops by a single edge.
///
/// The 8-node configuration used by the built-in preset is
/// `make_two_loop(3, 3, 2)`: two triangles bridged by two low-mass nodes.
pub fn make_two_loop(loop_a: usize, loop_b: usize, bridge_len: usize) -> Result<StateGraph> {
    if loop_a < 3 || loop_b < 3 {
        return Err(AmcmcError::InvalidArgument(format!(
            "each loop needs >= 3 nodes, got ({loop_a}, {loop_b})"
        )));
    }
    let n = loop_a + bridge_len + loop_b;
    let mut edges = Vec::with_capacity(loop_a + loop_b + bridge_len + 1);
    for i in 0..loop_a {
        edges.push((i, (i + 1) % loop_a));
    }
    let b0 = loop_a; // first bridge node (or first node of loop B)
    let second = loop_a + bridge_len;
    for i in 0..loop_b {
        edges.push((second + i, second + (i + 1) % loop_b));
    }
    // path: (loop_a - 1) -> bridge nodes -> second
    let mut prev = loop_a - 1;
    for k in 0..bridge_len {
        edges.push((prev, b0 + k));
        prev = b0 + k;
    }
    edges.push((prev, second));
    StateGraph::new(n, edges)
}

/// Hypercube graph on `2^d` bit-string nodes; edges join Hamming-distance-1
/// pairs.
pub fn make_hypercube(d: usize) -> Result<StateGraph> {
    if d < 1 {
        return Err(AmcmcError::InvalidArgument("hypercube needs d >= 1".into()));
    }
    if d > 10 {
        return Err(AmcmcError::InvalidArgument(format!(
            "2^{d} nodes exceeds the dense limit of {MAX_STATES}"
        )));
    }
    let n = 1usize << d;
    let mut edges = Vec::with_capacity(d * n / 2);
    for i in 0..n {
        for b in 0..d {
            let j = i ^ (1 << b);
            if i < j {
                edges.push((i, j));
            }
        }
    }
    StateGraph::new(n, edges)
}

/// 4-neighbor grid graph; node `(r, c)` has index `r * cols + c`.
pub fn make_lattice(rows: usize, cols: usize) -> Result<StateGraph> {
    if rows == 0 || cols == 0 || rows * cols < 2 {
        return Err(AmcmcError::InvalidArgument(
            "lattice needs rows, cols >= 1 and at least 2 nodes".into(),
        ));
    }
    let idx = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if r + 1 < rows {
                edges.push((idx(r, c), idx(r + 1, c)));
            }
            if c + 1 < cols {
                edges.push((idx(r, c), idx(r, c + 1)));
            }
        }
    }
    StateGraph::new(rows * cols, edges)
}

/// Cell-center embedding of the lattice into `[0,1]^2`:
/// node `(r, c)` sits at `((c + 0.5) / cols, (r + 0.5) / rows)`.
pub fn lattice_coords(rows: usize, cols: usize) -> Vec<(f64, f64)> {
    let mut coords = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            coords.push(((c as f64 + 0.5) / cols as f64, (r as f64 + 0.5) / rows as f64));
        }
    }
    coords
}

/// Simple-random-walk candidate kernel: `q_ij = 1/deg(i)` on edges.
pub fn random_walk_kernel(g: &StateGraph) -> Result<CandidateKernel> {
    let n = g.n();
    let mut q = DMatrix::zeros(n, n);
    for &(i, j) in g.edges() {
        q[(i, j)] = 1.0 / g.degree(i) as f64;
        q[(j, i)] = 1.0 / g.degree(j) as f64;
    }
    Ok(CandidateKernel { q })
}

/// Metropolis-Hastings rate matrix `Q_ij = min{(pi_j / pi_i) q_ji, q_ij}`.
///
/// Depends on the target only through probability ratios, never through the
/// normalizing constant.
pub fn build_mh_rate_matrix(
    kernel: &CandidateKernel,
    target: &TargetDistribution,
) -> Result<RateMatrix> {
    let n = target.n();
    let q = kernel.matrix();
    if q.nrows() != n {
        return Err(AmcmcError::InvalidArgument(format!(
            "kernel size {} does not match target size {n}",
            q.nrows()
        )));
    }
    let pi = target.pi();
    let mut rate = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                rate[(i, j)] = ((pi[j] / pi[i]) * q[(j, i)]).min(q[(i, j)]);
            }
        }
    }
    RateMatrix::from_off_diagonal(rate)
}

/// Edge-weight matrix `omega_ij = pi_i Q_ij`; fails when detailed balance is
/// violated beyond `1e-10`.
pub fn weight_matrix(target: &TargetDistribution, rate: &RateMatrix) -> Result<WeightMatrix> {
    let n = target.n();
    let q = rate.matrix();
    if q.nrows() != n {
        return Err(AmcmcError::InvalidArgument(
            "rate matrix size does not match target".into(),
        ));
    }
    let pi = target.pi();
    let mut omega = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            omega[(i, j)] = pi[i] * q[(i, j)];
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let asym = (omega[(i, j)] - omega[(j, i)]).abs();
            if asym > 1e-10 {
                return Err(AmcmcError::DetailedBalanceViolation(format!(
                    "|pi_{i} Q_{i}{j} - pi_{j} Q_{j}{i}| = {asym:.3e}"
                )));
            }
            // symmetrize exactly
            let s = 0.5 * (omega[(i, j)] + omega[(j, i)]);
            omega[(i, j)] = s;
            omega[(j, i)] = s;
        }
    }
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if j != i {
                off += omega[(i, j)];
            }
        }
        omega[(i, i)] = -off;
    }
    Ok(WeightMatrix { omega })
}

/// Two-Gaussian mixture on the unit square, evaluated at lattice cell centers
/// and normalized over the grid:
/// `pi~(x) = exp(-s1 |x - x1|^2) + exp(-s2 |x - x2|^2)`.
pub fn gaussian_mixture_target(
    rows: usize,
    cols: usize,
    centers: [(f64, f64); 2],
    scales: [f64; 2],
) -> Result<TargetDistribution> {
    if rows * cols < 2 {
        return Err(AmcmcError::InvalidArgument("grid too small".into()));
    }
    if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(AmcmcError::InvalidArgument(
            "mixture scales must be finite and nonnegative".into(),
        ));
    }
    let weights = lattice_coords(rows, cols)
        .into_iter()
        .map(|(x, y)| {
            let d1 = (x - centers[0].0).powi(2) + (y - centers[0].1).powi(2);
            let d2 = (x - centers[1].0).powi(2) + (y - centers[1].1).powi(2);
            (-scales[0] * d1).exp() + (-scales[1] * d2).exp()
        })
        .collect();
    TargetDistribution::from_unnormalized(weights)
}
