//! Communication graphs and gossip mixing matrices.
//!
//! A gossip matrix `W` must be symmetric, doubly stochastic, supported on the
//! communication graph, and have a simple eigenvalue 1 with every other
//! eigenvalue strictly inside (-1, 1). Under those properties the powers of
//! `W` contract toward the uniform-averaging projector `P = 11ᵀ/m` at rate
//! `psi = max(|ψ₂|, |ψ_m|)`, the second-largest eigenvalue magnitude;
//! `1 - psi` is the spectral gap. [`contraction_check`] verifies the
//! contraction numerically through an independent matrix-power route.
//!
//! Weights use the Metropolis-Hastings rule, which satisfies all of the
//! above on any connected graph: `w_ij = 1 / (1 + max(deg_i, deg_j))` on
//! edges, with the diagonal absorbing the remainder.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;

use crate::seed;

/// Dense eigendecomposition is cheap at simulator scale; refuse beyond this.
pub const MAX_NODES: usize = 1024;

/// Resample budget for the random topology before giving up on connectivity.
const RANDOM_RETRY_BUDGET: usize = 100;

/// Eigenvalues with magnitude below this are treated as exact zeros, so the
/// complete graph reports psi = 0 rather than eigensolver noise.
const EIGEN_ZERO_TOL: f64 = 1e-13;

/// Numerical margin used when deciding eigenvalue simplicity and spectrum
/// strictness in [`validate_mixing`].
const EIGEN_ONE_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum TopologyError {
    /// Fewer than two nodes.
    TooFewNodes { m: usize },
    /// Beyond the dense-eigendecomposition scale limit.
    TooManyNodes { m: usize, max: usize },
    /// Random topology requires 1 <= k < m.
    BadNeighborBudget { k: usize, m: usize },
    /// Random topology stayed disconnected for the whole retry budget.
    DisconnectedAfterRetries { retries: usize },
    /// Weight derivation requires a connected graph.
    DisconnectedGraph,
    /// `‖Wᵗ - P‖` exceeded `psiᵗ` beyond tolerance; a construction bug.
    ContractionExceeded { t: usize, norm: f64, bound: f64 },
}

impl fmt::Display for TopologyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooFewNodes { m } => write!(f, "need at least 2 nodes, got {m}"),
            Self::TooManyNodes { m, max } => write!(f, "{m} nodes exceeds limit {max}"),
            Self::BadNeighborBudget { k, m } => {
                write!(f, "neighbor budget k={k} must satisfy 1 <= k < m={m}")
            }
            Self::DisconnectedAfterRetries { retries } => {
                write!(f, "random graph stayed disconnected after {retries} draws")
            }
            Self::DisconnectedGraph => write!(f, "graph is disconnected"),
            Self::ContractionExceeded { t, norm, bound } => {
                write!(f, "‖W^{t} - P‖ = {norm} exceeds psi^{t} bound {bound}")
            }
        }
    }
}

impl std::error::Error for TopologyError {}

/// First violated mixing-matrix invariant, with the offending indices.
#[derive(Debug, Clone, PartialEq)]
pub enum MixingViolation {
    NonFinite { i: usize, j: usize },
    EntryOutOfRange { i: usize, j: usize, value: f64 },
    Asymmetric { i: usize, j: usize },
    RowSumOff { i: usize, sum: f64 },
    EigenvalueOneNotSimple { count: usize },
    EigenvalueAtMinusOne { lambda_min: f64 },
    PsiOutOfRange { psi: f64 },
    PsiMismatch { stored: f64, computed: f64 },
}

impl fmt::Display for MixingViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonFinite { i, j } => write!(f, "non-finite entry at ({i},{j})"),
            Self::EntryOutOfRange { i, j, value } => {
                write!(f, "entry {value} at ({i},{j}) outside [0,1]")
            }
            Self::Asymmetric { i, j } => write!(f, "asymmetric at ({i},{j})"),
            Self::RowSumOff { i, sum } => write!(f, "row {i} sums to {sum}, expected 1"),
            Self::EigenvalueOneNotSimple { count } => {
                write!(f, "eigenvalue 1 has multiplicity {count}, expected simple")
            }
            Self::EigenvalueAtMinusOne { lambda_min } => {
                write!(f, "smallest eigenvalue {lambda_min} not strictly above -1")
            }
            Self::PsiOutOfRange { psi } => write!(f, "psi = {psi} not in [0,1)"),
            Self::PsiMismatch { stored, computed } => {
                write!(f, "stored psi {stored} disagrees with computed {computed}")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

/// Named topology families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    /// Cycle over all nodes.
    Ring,
    /// 2-D lattice with 4-neighborhoods and no wraparound; `m` is factored
    /// as `r x c` with `|r - c|` minimal.
    Grid,
    /// Node `i` linked to `(i + 2^j) mod m` for every `j` with `2^j < m`.
    Exponential,
    /// Complete graph.
    Full,
    /// Each node draws `k` distinct partners; the union is symmetrized and
    /// resampled until connected.
    Random { k: usize },
}

impl TopologyKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ring => "ring",
            Self::Grid => "grid",
            Self::Exponential => "exponential",
            Self::Full => "full",
            Self::Random { .. } => "random",
        }
    }
}

/// Undirected simple graph over nodes `0..m`, stored as normalized pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    m: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    fn empty(m: usize) -> Self {
        Self { m, edges: BTreeSet::new() }
    }

    fn insert_edge(&mut self, a: usize, b: usize) {
        assert!(a < self.m && b < self.m, "edge node out of range");
        if a == b {
            return; // no self-loops
        }
        self.edges.insert((a.min(b), a.max(b)));
    }

    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a != b && self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.m];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_connected(&self) -> bool {
        if self.m == 0 {
            return false;
        }
        let mut adj = vec![Vec::new(); self.m];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.m];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == self.m
    }
}

/// Construct a connected graph of the named family.
///
/// `seed` only matters for [`TopologyKind::Random`]; the deterministic
/// families ignore it.
pub fn build_graph(kind: TopologyKind, m: usize, seed: u64) -> Result<Graph, TopologyError> {
    if m < 2 {
        return Err(TopologyError::TooFewNodes { m });
    }
    if m > MAX_NODES {
        return Err(TopologyError::TooManyNodes { m, max: MAX_NODES });
    }
    let mut g = Graph::empty(m);
    match kind {
        TopologyKind::Ring => {
            for i in 0..m {
                g.insert_edge(i, (i + 1) % m);
            }
        }
        TopologyKind::Grid => {
            let (rows, cols) = grid_shape(m);
            for r in 0..rows {
                for c in 0..cols {
                    let v = r * cols + c;
                    if c + 1 < cols {
                        g.insert_edge(v, v + 1);
                    }
                    if r + 1 < rows {
                        g.insert_edge(v, v + cols);
                    }
                }
            }
        }
        TopologyKind::Exponential => {
            for i in 0..m {
                let mut off = 1usize;
                while off < m {
                    g.insert_edge(i, (i + off) % m);
                    off <<= 1;
                }
            }
        }
        TopologyKind::Full => {
            for a in 0..m {
                for b in (a + 1)..m {
                    g.insert_edge(a, b);
                }
            }
        }
        TopologyKind::Random { k } => {
            if k == 0 || k >= m {
                return Err(TopologyError::BadNeighborBudget { k, m });
            }
            let mut rng = seed::stream(seed::mix(&[seed, 0x7261_6e64]));
            for _ in 0..RANDOM_RETRY_BUDGET {
                let mut draw = Graph::empty(m);
                for i in 0..m {
                    // Partial Fisher-Yates over the other m-1 nodes.
                    let mut pool: Vec<usize> = (0..m).filter(|&j| j != i).collect();
                    for t in 0..k {
                        let j = rng.random_range(t..pool.len());
                        pool.swap(t, j);
                        draw.insert_edge(i, pool[t]);
                    }
                }
                if draw.is_connected() {
                    return Ok(draw);
                }
            }
            return Err(TopologyError::DisconnectedAfterRetries {
                retries: RANDOM_RETRY_BUDGET,
            });
        }
    }
    debug_assert!(g.is_connected());
    Ok(g)
}

/// Factor `m` as `rows x cols` with `rows <= cols` and `|rows - cols|` minimal.
fn grid_shape(m: usize) -> (usize, usize) {
    let mut r = (m as f64).sqrt() as usize;
    while r > 1 && m % r != 0 {
        r -= 1;
    }
    (r.max(1), m / r.max(1))
}

/// A fresh random graph per round: deterministic in `(base_seed, round)`,
/// independent draws across rounds.
pub fn time_varying_random(
    base_seed: u64,
    round: usize,
    m: usize,
    k: usize,
) -> Result<Graph, TopologyError> {
    let derived = seed::mix(&[base_seed, 0x746f_706f, round as u64]);
    build_graph(TopologyKind::Random { k }, m, derived)
}

// ---------------------------------------------------------------------------
// MixingMatrix
// ---------------------------------------------------------------------------

/// Symmetric doubly-stochastic gossip weights with cached spectral metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    m: usize,
    w: DMatrix<f64>,
    psi: f64,
}

impl MixingMatrix {
    /// Wrap an arbitrary square matrix, computing psi from its spectrum.
    /// Performs no validation; run [`validate_mixing`] on untrusted input.
    pub fn from_raw(w: DMatrix<f64>) -> Self {
        assert_eq!(w.nrows(), w.ncols(), "mixing matrix must be square");
        let psi = psi_of(&w);
        Self { m: w.nrows(), w, psi }
    }

    pub fn node_count(&self) -> usize {
        self.m
    }

    /// Second-largest eigenvalue magnitude; `1 - psi` is the spectral gap.
    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// True iff the sparsity pattern matches `g` exactly: positive weight on
    /// every edge, zero on every off-diagonal non-edge.
    pub fn pattern_matches(&self, g: &Graph) -> bool {
        if g.node_count() != self.m {
            return false;
        }
        for i in 0..self.m {
            for j in (i + 1)..self.m {
                let on_edge = g.has_edge(i, j);
                let w = self.w[(i, j)];
                if on_edge && w <= 0.0 {
                    return false;
                }
                if !on_edge && w != 0.0 {
                    return false;
                }
            }
        }
        true
    }
}

/// Metropolis-Hastings weights for a connected graph:
/// `w_ij = 1/(1 + max(deg_i, deg_j))` on edges, diagonal absorbs the rest.
pub fn metropolis_weights(g: &Graph) -> Result<MixingMatrix, TopologyError> {
    if !g.is_connected() {
        return Err(TopologyError::DisconnectedGraph);
    }
    let m = g.node_count();
    if m > MAX_NODES {
        return Err(TopologyError::TooManyNodes { m, max: MAX_NODES });
    }
    let deg = g.degrees();
    let mut w = DMatrix::<f64>::zeros(m, m);
    for (a, b) in g.edges() {
        let weight = 1.0 / (1.0 + deg[a].max(deg[b]) as f64);
        w[(a, b)] = weight;
        w[(b, a)] = weight;
    }
    for i in 0..m {
        let off_sum: f64 = (0..m).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off_sum;
    }
    Ok(MixingMatrix::from_raw(w))
}

/// Eigenvalues of a symmetric matrix, descending.
fn symmetric_eigenvalues(w: &DMatrix<f64>) -> Vec<f64> {
    let eig = nalgebra::linalg::SymmetricEigen::new(w.clone());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    vals
}

/// psi = max |eigenvalue| after removing the one eigenvalue closest to 1.
fn psi_of(w: &DMatrix<f64>) -> f64 {
    let vals = symmetric_eigenvalues(w);
    if vals.len() < 2 {
        return 0.0;
    }
    let perron = vals
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            (**a - 1.0).abs().partial_cmp(&(**b - 1.0).abs()).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    let psi = vals
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != perron)
        .map(|(_, v)| v.abs())
        .fold(0.0f64, f64::max);
    if psi < EIGEN_ZERO_TOL {
        0.0
    } else {
        psi
    }
}

/// Recompute psi from the matrix by full symmetric eigendecomposition.
pub fn spectral_gap(w: &MixingMatrix) -> f64 {
    psi_of(w.matrix())
}

/// Check the mixing-matrix invariants, reporting the first violation:
/// entries in [0,1], exact symmetry, unit row sums (1e-12), a simple
/// eigenvalue 1 with the rest strictly inside (-1,1), and a consistent
/// cached psi. Never panics on bad input.
pub fn validate_mixing(w: &MixingMatrix) -> Result<(), MixingViolation> {
    let m = w.node_count();
    let mat = w.matrix();
    for i in 0..m {
        for j in 0..m {
            let v = mat[(i, j)];
            if !v.is_finite() {
                return Err(MixingViolation::NonFinite { i, j });
            }
            if !(-1e-15..=1.0 + 1e-15).contains(&v) {
                return Err(MixingViolation::EntryOutOfRange { i, j, value: v });
            }
        }
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if mat[(i, j)] != mat[(j, i)] {
                return Err(MixingViolation::Asymmetric { i, j });
            }
        }
    }
    for i in 0..m {
        let sum: f64 = (0..m).map(|j| mat[(i, j)]).sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(MixingViolation::RowSumOff { i, sum });
        }
    }
    let vals = symmetric_eigenvalues(mat);
    let near_one = vals.iter().filter(|v| **v > 1.0 - EIGEN_ONE_TOL).count();
    if near_one != 1 {
        return Err(MixingViolation::EigenvalueOneNotSimple { count: near_one });
    }
    let lambda_min = *vals.last().unwrap();
    if lambda_min <= -1.0 + EIGEN_ONE_TOL {
        return Err(MixingViolation::EigenvalueAtMinusOne { lambda_min });
    }
    let computed = psi_of(mat);
    if !(0.0..1.0).contains(&computed) {
        return Err(MixingViolation::PsiOutOfRange { psi: computed });
    }
    if (w.psi() - computed).abs() > 1e-12 {
        return Err(MixingViolation::PsiMismatch { stored: w.psi(), computed });
    }
    Ok(())
}

/// For t = 1..=t_max, compute `‖Wᵗ - P‖_op` by explicit matrix powers and a
/// fresh eigendecomposition of each difference, and check the contraction
/// bound `‖Wᵗ - P‖_op <= psiᵗ + 1e-10`. The power route is independent of
/// the psi computation, so agreement is evidence rather than tautology.
pub fn contraction_check(w: &MixingMatrix, t_max: usize) -> Result<Vec<f64>, TopologyError> {
    assert!(t_max >= 1, "t_max must be at least 1");
    let m = w.node_count();
    let p = DMatrix::<f64>::from_element(m, m, 1.0 / m as f64);
    let mut power = w.matrix().clone();
    let mut norms = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        if t > 1 {
            power = &power * w.matrix();
        }
        let diff = &power - &p;
        // Symmetric difference: operator norm is the largest |eigenvalue|.
        let norm = symmetric_eigenvalues(&diff)
            .iter()
            .map(|v| v.abs())
            .fold(0.0f64, f64::max);
        let bound = w.psi().powi(t as i32) + 1e-10;
        if norm > bound {
            return Err(TopologyError::ContractionExceeded { t, norm, bound });
        }
        norms.push(norm);
    }
    Ok(norms)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_graph_edge_count() {
        let g = build_graph(TopologyKind::Full, 4, 0).unwrap();
        assert_eq!(g.edge_count(), 6);
    }

    #[test]
    fn ring_four_edges() {
        let g = build_graph(TopologyKind::Ring, 4, 0).unwrap();
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, vec![(0, 1), (0, 3), (1, 2), (2, 3)]);
    }

    #[test]
    fn exponential_neighbors_of_node_zero() {
        // Offsets 2^j < 8 are 1, 2, 4.
        let g = build_graph(TopologyKind::Exponential, 8, 0).unwrap();
        assert_eq!(g.neighbors(0), vec![1, 2, 4, 6, 7]);
        assert!(g.has_edge(0, 1) && g.has_edge(0, 2) && g.has_edge(0, 4));
    }

    #[test]
    fn grid_shape_prefers_square() {
        assert_eq!(grid_shape(16), (4, 4));
        assert_eq!(grid_shape(12), (3, 4));
        assert_eq!(grid_shape(9), (3, 3));
        assert_eq!(grid_shape(7), (1, 7)); // prime: degenerates to a path
    }

    #[test]
    fn too_few_nodes_rejected() {
        assert!(matches!(
            build_graph(TopologyKind::Ring, 1, 0),
            Err(TopologyError::TooFewNodes { m: 1 })
        ));
    }

    #[test]
    fn random_budget_bounds() {
        assert!(matches!(
            build_graph(TopologyKind::Random { k: 0 }, 8, 1),
            Err(TopologyError::BadNeighborBudget { .. })
        ));
        assert!(matches!(
            build_graph(TopologyKind::Random { k: 8 }, 8, 1),
            Err(TopologyError::BadNeighborBudget { .. })
        ));
    }

    #[test]
    fn random_k_m_minus_one_is_complete() {
        let g = build_graph(TopologyKind::Random { k: 5 }, 6, 123).unwrap();
        assert_eq!(g.edge_count(), 15);
    }

    #[test]
    fn metropolis_full_graph_is_uniform() {
        let g = build_graph(TopologyKind::Full, 4, 0).unwrap();
        let w = metropolis_weights(&g).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(w.weight(i, j), 0.25);
            }
        }
        assert_eq!(w.psi(), 0.0);
    }

    #[test]
    fn metropolis_ring4_psi_matches_circulant_oracle() {
        // Circulant eigenvalues (1 + 2 cos(2*pi*j/4)) / 3 give psi = 1/3.
        let g = build_graph(TopologyKind::Ring, 4, 0).unwrap();
        let w = metropolis_weights(&g).unwrap();
        assert!((w.weight(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((w.weight(0, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((w.psi() - 1.0 / 3.0).abs() < 1e-12);
        assert!((spectral_gap(&w) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn metropolis_output_validates_and_matches_pattern() {
        for kind in [
            TopologyKind::Ring,
            TopologyKind::Grid,
            TopologyKind::Exponential,
            TopologyKind::Full,
            TopologyKind::Random { k: 3 },
        ] {
            let g = build_graph(kind, 12, 7).unwrap();
            let w = metropolis_weights(&g).unwrap();
            validate_mixing(&w).unwrap();
            assert!(w.pattern_matches(&g), "pattern mismatch for {}", kind.name());
        }
    }

    #[test]
    fn metropolis_rejects_disconnected() {
        let mut g = Graph::empty(4);
        g.insert_edge(0, 1);
        g.insert_edge(2, 3);
        assert!(matches!(
            metropolis_weights(&g),
            Err(TopologyError::DisconnectedGraph)
        ));
    }

    #[test]
    fn validate_flags_identity_matrix() {
        let w = MixingMatrix::from_raw(DMatrix::identity(4, 4));
        assert!(matches!(
            validate_mixing(&w),
            Err(MixingViolation::EigenvalueOneNotSimple { count: 4 })
        ));
    }

    #[test]
    fn validate_accepts_uniform() {
        let w = MixingMatrix::from_raw(DMatrix::from_element(5, 5, 0.2));
        validate_mixing(&w).unwrap();
    }

    #[test]
    fn validate_flags_asymmetry() {
        let g = build_graph(TopologyKind::Ring, 4, 0).unwrap();
        let mut raw = metropolis_weights(&g).unwrap().matrix().clone();
        raw[(0, 1)] += 1e-6;
        let w = MixingMatrix::from_raw(raw);
        assert!(matches!(
            validate_mixing(&w),
            Err(MixingViolation::Asymmetric { i: 0, j: 1 })
        ));
    }

    #[test]
    fn contraction_full_graph_is_flat_zero() {
        let g = build_graph(TopologyKind::Full, 6, 0).unwrap();
        let w = metropolis_weights(&g).unwrap();
        let norms = contraction_check(&w, 5).unwrap();
        for n in norms {
            assert!(n < 1e-12);
        }
    }

    #[test]
    fn contraction_ring4_matches_power_oracle() {
        let g = build_graph(TopologyKind::Ring, 4, 0).unwrap();
        let w = metropolis_weights(&g).unwrap();
        let norms = contraction_check(&w, 3).unwrap();
        // For symmetric W, ‖W - P‖ equals psi; higher powers contract as psi^t.
        assert!((norms[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!(norms[2] <= (1.0f64 / 3.0).powi(3) + 1e-10);
    }

    #[test]
    fn contraction_bound_all_kinds_and_sizes() {
        for kind in [
            TopologyKind::Ring,
            TopologyKind::Grid,
            TopologyKind::Exponential,
            TopologyKind::Full,
            TopologyKind::Random { k: 2 },
        ] {
            for m in [4usize, 9, 16, 25] {
                let g = build_graph(kind, m, 11).unwrap();
                let w = metropolis_weights(&g).unwrap();
                contraction_check(&w, 20).unwrap_or_else(|e| {
                    panic!("contraction failed for {} m={m}: {e}", kind.name())
                });
            }
        }
    }

    #[test]
    fn spectral_ordering_at_m16() {
        let psi_of_kind = |kind| {
            let g = build_graph(kind, 16, 0).unwrap();
            metropolis_weights(&g).unwrap().psi()
        };
        let ring = psi_of_kind(TopologyKind::Ring);
        let grid = psi_of_kind(TopologyKind::Grid);
        let expo = psi_of_kind(TopologyKind::Exponential);
        let full = psi_of_kind(TopologyKind::Full);
        assert!(ring > grid && grid > expo && expo > full);
        assert_eq!(full, 0.0);
    }

    #[test]
    fn time_varying_is_deterministic_and_round_sensitive() {
        let a = time_varying_random(9, 3, 100, 10).unwrap();
        let b = time_varying_random(9, 3, 100, 10).unwrap();
        assert_eq!(a, b);
        let c = time_varying_random(9, 4, 100, 10).unwrap();
        let ea: Vec<_> = a.edges().collect();
        let ec: Vec<_> = c.edges().collect();
        assert_ne!(ea, ec);
    }

    #[test]
    fn mean_preservation_under_mixing() {
        // Doubly stochastic: column means of W*Z equal column means of Z.
        let g = build_graph(TopologyKind::Ring, 8, 0).unwrap();
        let w = metropolis_weights(&g).unwrap();
        let mut rng = crate::seed::stream(5);
        let z = DMatrix::<f64>::from_fn(8, 3, |_, _| rng.random::<f64>() - 0.5);
        let wz = w.matrix() * &z;
        for col in 0..3 {
            let before: f64 = z.column(col).iter().sum::<f64>() / 8.0;
            let after: f64 = wz.column(col).iter().sum::<f64>() / 8.0;
            assert!((before - after).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenvector_of_one_is_all_ones() {
        let g = build_graph(TopologyKind::Grid, 9, 0).unwrap();
        let w = metropolis_weights(&g).unwrap();
        let ones = nalgebra::DVector::from_element(9, 1.0);
        let prod = w.matrix() * &ones;
        for v in prod.iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }
}
