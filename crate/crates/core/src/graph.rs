//! Edge-vector algebra shared by every solver.
//!
//! An undirected graph on `N` nodes without self-loops is stored as the
//! `N(N-1)/2` upper-triangular adjacency entries in lexicographic order
//! `(1,2), (1,3), ..., (1,N), (2,3), ..., (N-1,N)`. The degree operator,
//! Laplacian and pairwise distances are all computed directly on that layout;
//! the incidence-style matrix mapping edges to degrees is never built.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

/// Number of node pairs for an `n`-node graph.
#[inline]
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// 0-based pair index; callers guarantee `a < b < n`.
#[inline]
pub(crate) fn pair_index(a: usize, b: usize, n: usize) -> usize {
    debug_assert!(a < b && b < n);
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

/// Linear index of the node pair `(i, j)`, with 1-based node labels `1 <= i < j <= n`.
pub fn edge_index(i: usize, j: usize, n: usize) -> Result<usize> {
    if i == 0 || j > n || i >= j {
        return invalid(format!("edge ({i},{j}) is not a valid pair for N={n}"));
    }
    Ok(pair_index(i - 1, j - 1, n))
}

/// Inverse of [`edge_index`]: the 1-based node pair at linear index `k`.
pub fn edge_pair(k: usize, n: usize) -> Result<(usize, usize)> {
    if n < 2 || k >= pair_count(n) {
        return invalid(format!("index {k} out of range for N={n}"));
    }
    let mut rest = k;
    for a in 0..n - 1 {
        let row = n - a - 1;
        if rest < row {
            return Ok((a + 1, a + rest + 2));
        }
        rest -= row;
    }
    unreachable!("k < N(N-1)/2 always lands in some row")
}

/// Iterates `(a, b)` 0-based pairs in storage order.
pub(crate) fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |a| (a + 1..n).map(move |b| (a, b)))
}

fn check_pair_vector(kind: &str, n: usize, values: &[f64]) -> Result<()> {
    if n < 2 {
        return invalid(format!("{kind}: need at least 2 nodes, got {n}"));
    }
    if values.len() != pair_count(n) {
        return invalid(format!(
            "{kind}: expected {} entries for N={n}, got {}",
            pair_count(n),
            values.len()
        ));
    }
    if let Some(k) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return invalid(format!("{kind}: entry {k} = {} is not a finite non-negative value", values[k]));
    }
    Ok(())
}

/// Non-negative upper-triangular edge weights of an undirected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeVector {
    n: usize,
    weights: Vec<f64>,
}

impl EdgeVector {
    pub fn new(n: usize, weights: Vec<f64>) -> Result<Self> {
        check_pair_vector("edge vector", n, &weights)?;
        Ok(Self { n, weights })
    }

    /// Caller guarantees length and non-negativity.
    pub(crate) fn from_raw(n: usize, weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), pair_count(n));
        debug_assert!(weights.iter().all(|w| *w >= 0.0));
        Self { n, weights }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_raw(n, vec![0.0; pair_count(n)])
    }

    /// Every pair connected with weight `1/(N-1)`, so every degree equals one.
    pub fn uniform(n: usize) -> Self {
        let w = 1.0 / (n.max(2) - 1) as f64;
        Self::from_raw(n, vec![w; pair_count(n)])
    }

    /// Builds an edge vector from a symmetric, non-negative adjacency matrix (upper triangle is read).
    pub fn from_adjacency(adj: &DMatrix<f64>) -> Result<Self> {
        if !adj.is_square() {
            return invalid("adjacency matrix must be square");
        }
        let n = adj.nrows();
        Self::new(n, pairs(n).map(|(a, b)| adj[(a, b)]).collect())
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    /// Weight between 1-based nodes `i != j`.
    pub fn get(&self, i: usize, j: usize) -> Result<f64> {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        Ok(self.weights[edge_index(lo, hi, self.n)?])
    }

    /// Number of entries strictly above `threshold`.
    pub fn edge_count(&self, threshold: f64) -> usize {
        self.weights.iter().filter(|w| **w > threshold).count()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.weights)
    }

    pub fn distance(&self, other: &EdgeVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut adj = DMatrix::zeros(self.n, self.n);
        for ((a, b), w) in pairs(self.n).zip(&self.weights) {
            adj[(a, b)] = *w;
            adj[(b, a)] = *w;
        }
        adj
    }
}

/// Squared pairwise signal distances in the same layout as [`EdgeVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceVector {
    n: usize,
    dists: Vec<f64>,
}

impl DistanceVector {
    pub fn new(n: usize, dists: Vec<f64>) -> Result<Self> {
        check_pair_vector("distance vector", n, &dists)?;
        Ok(Self { n, dists })
    }

    pub(crate) fn from_raw(n: usize, dists: Vec<f64>) -> Self {
        debug_assert_eq!(dists.len(), pair_count(n));
        Self { n, dists }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_raw(n, vec![0.0; pair_count(n)])
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn dists(&self) -> &[f64] {
        &self.dists
    }

    pub fn into_dists(self) -> Vec<f64> {
        self.dists
    }

    pub fn len(&self) -> usize {
        self.dists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dists.is_empty()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.dists)
    }

    /// Multiplies every entry by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return invalid(format!("scale factor {factor} must be finite and non-negative"));
        }
        Ok(Self::from_raw(self.n, self.dists.iter().map(|d| d * factor).collect()))
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Node degrees `d_i = sum_{j != i} W_ij`, in O(N^2).
pub fn degree(w: &EdgeVector) -> Vec<f64> {
    let mut d = vec![0.0; w.n];
    for ((a, b), wk) in pairs(w.n).zip(&w.weights) {
        d[a] += wk;
        d[b] += wk;
    }
    d
}

/// Combinatorial Laplacian `diag(d) - W`.
pub fn laplacian(w: &EdgeVector) -> DMatrix<f64> {
    let mut l = -w.adjacency();
    for (i, d) in degree(w).into_iter().enumerate() {
        l[(i, i)] = d;
    }
    l
}

/// Dirichlet energy `x^T L x = 1/2 sum_{i != j} W_ij (x_i - x_j)^2`.
pub fn total_variation(x: &[f64], w: &EdgeVector) -> Result<f64> {
    if x.len() != w.n {
        return invalid(format!("signal has {} entries, graph has {} nodes", x.len(), w.n));
    }
    Ok(pairs(w.n)
        .zip(&w.weights)
        .map(|((a, b), wk)| wk * (x[a] - x[b]).powi(2))
        .sum())
}

/// Squared differences `(x_i - x_j)^2` of a single graph signal.
pub fn distance_vector(x: &[f64]) -> Result<DistanceVector> {
    if x.len() < 2 {
        return invalid(format!("signal needs at least 2 nodes, got {}", x.len()));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return invalid(format!("signal entry {i} is not finite"));
    }
    let n = x.len();
    Ok(DistanceVector::from_raw(n, pairs(n).map(|(a, b)| (x[a] - x[b]).powi(2)).collect()))
}

/// Squared Euclidean distances between the rows of an `N x T` signal matrix.
pub fn distance_vector_batch(x: &DMatrix<f64>) -> Result<DistanceVector> {
    let (n, t) = x.shape();
    if t == 0 {
        return invalid("signal matrix has no samples");
    }
    if n < 2 {
        return invalid(format!("signal matrix needs at least 2 rows, got {n}"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return invalid("signal matrix contains non-finite entries");
    }
    let dists = pairs(n)
        .map(|(a, b)| (0..t).map(|s| (x[(a, s)] - x[(b, s)]).powi(2)).sum())
        .collect();
    Ok(DistanceVector::from_raw(n, dists))
}

/// A graph estimate tagged with the sample index that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSnapshot {
    pub t: u64,
    pub edges: EdgeVector,
    pub degrees: Vec<f64>,
}

impl GraphSnapshot {
    pub fn new(t: u64, edges: EdgeVector) -> Self {
        let degrees = degree(&edges);
        Self { t, edges, degrees }
    }

    pub fn n_nodes(&self) -> usize {
        self.edges.n
    }
}

#[derive(Serialize, Deserialize)]
struct SnapshotJson {
    t: u64,
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl Serialize for GraphSnapshot {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.edges.n;
        let edges = pairs(n)
            .zip(&self.edges.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|((a, b), w)| (a + 1, b + 1, *w))
            .collect();
        SnapshotJson { t: self.t, n, edges }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GraphSnapshot {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = SnapshotJson::deserialize(d)?;
        snapshot_from_json(raw).map_err(D::Error::custom)
    }
}

fn snapshot_from_json(raw: SnapshotJson) -> Result<GraphSnapshot> {
    if raw.n < 2 {
        return Err(Error::Input(format!("snapshot needs n >= 2, got {}", raw.n)));
    }
    let mut weights = vec![0.0; pair_count(raw.n)];
    let mut seen = vec![false; weights.len()];
    for (i, j, w) in raw.edges {
        let k = edge_index(i, j, raw.n)?;
        if seen[k] {
            return Err(Error::Input(format!("duplicate edge ({i},{j})")));
        }
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::Input(format!("edge ({i},{j}) has invalid weight {w}")));
        }
        seen[k] = true;
        weights[k] = w;
    }
    Ok(GraphSnapshot::new(raw.t, EdgeVector::from_raw(raw.n, weights)))
}
