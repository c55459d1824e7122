//! Coupling graph and its Laplacian spectral factorization.
//!
//! For a connected undirected graph the Laplacian factors as
//! `L = V·D·Vᵀ` where the columns of `V` are orthonormal eigenvectors for
//! the `N−1` positive eigenvalues, all orthogonal to `1_N`. The projection
//! onto the disagreement subspace is `S = I − 1·1ᵀ/N = V·Vᵀ`, and
//! `‖S·x‖ = ‖Vᵀx‖` for every `x`.
//!
//! Agent indices are 0-based here; configuration files use 1-based indices
//! and convert at the boundary.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::seeds::{self, Purpose};

/// Relative threshold below which a Laplacian eigenvalue counts as zero.
pub const ZERO_EIGEN_REL_TOL: f64 = 1e-8;

/// Static, undirected, connected graph without self-edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

/// How to construct a [`Graph`].
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Edges { n: usize, edges: Vec<(usize, usize)> },
    Ring { n: usize },
    Path { n: usize },
    Complete { n: usize },
    RandomConnected { n: usize, p: f64, seed: u64 },
}

impl GraphSpec {
    pub fn n_agents(&self) -> usize {
        match self {
            GraphSpec::Edges { n, .. }
            | GraphSpec::Ring { n }
            | GraphSpec::Path { n }
            | GraphSpec::Complete { n }
            | GraphSpec::RandomConnected { n, .. } => *n,
        }
    }
}

impl Graph {
    /// Builds a graph from 0-based unordered pairs; duplicates collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let graph = Self::unchecked(n, edges)?;
        if !graph.is_connected() {
            return Err(Error::DisconnectedGraph);
        }
        Ok(graph)
    }

    fn unchecked(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n", format!("need at least 2 agents, got {n}")));
        }
        let mut set = BTreeSet::new();
        for &(p, q) in edges {
            if p == q || p >= n || q >= n {
                return Err(Error::InvalidEdge(p, q, n));
            }
            set.insert((p.min(q), p.max(q)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(p, q) in &edges {
            neighbors[p].push(q);
            neighbors[q].push(p);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self { n, edges, neighbors })
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    /// Sorted `(p, q)` pairs with `p < q`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, p: usize) -> &[usize] {
        &self.neighbors[p]
    }

    pub fn degree(&self, p: usize) -> usize {
        self.neighbors[p].len()
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(p, q) in &self.edges {
            a[(p, q)] = 1.0;
            a[(q, p)] = 1.0;
        }
        a
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = -self.adjacency();
        for p in 0..self.n {
            l[(p, p)] = self.degree(p) as f64;
        }
        l
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut i = 0;
            while i < comp.len() {
                for &q in &self.neighbors[comp[i]] {
                    if !seen[q] {
                        seen[q] = true;
                        comp.push(q);
                    }
                }
                i += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

const RANDOM_RETRIES: usize = 16;

pub fn build_graph(spec: &GraphSpec) -> Result<Graph> {
    match spec {
        GraphSpec::Edges { n, edges } => Graph::from_edges(*n, edges),
        GraphSpec::Path { n } => {
            let edges: Vec<_> = (1..*n).map(|p| (p - 1, p)).collect();
            Graph::from_edges(*n, &edges)
        }
        GraphSpec::Ring { n } => {
            let mut edges: Vec<_> = (1..*n).map(|p| (p - 1, p)).collect();
            if *n > 2 {
                edges.push((n - 1, 0));
            }
            Graph::from_edges(*n, &edges)
        }
        GraphSpec::Complete { n } => {
            let edges: Vec<_> = (0..*n)
                .flat_map(|p| (p + 1..*n).map(move |q| (p, q)))
                .collect();
            Graph::from_edges(*n, &edges)
        }
        GraphSpec::RandomConnected { n, p, seed } => random_connected(*n, *p, *seed),
    }
}

/// Erdős–Rényi draws; after a bounded number of disconnected draws the last
/// one is stitched together along a random spanning tree over its components.
fn random_connected(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param("p", format!("edge probability {p} not in [0, 1]")));
    }
    let mut rng = seeds::stream(seed, Purpose::Graph, n as u64);
    let mut candidate = None;
    for _ in 0..RANDOM_RETRIES {
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((a, b));
                }
            }
        }
        let g = Graph::unchecked(n, &edges)?;
        if g.is_connected() {
            return Ok(g);
        }
        candidate = Some(g);
    }
    let g = candidate.expect("at least one draw");
    let comps = g.components();
    let mut edges = g.edges.clone();
    for k in 1..comps.len() {
        let prev = &comps[rng.random_range(0..k)];
        let a = prev[rng.random_range(0..prev.len())];
        let b = comps[k][rng.random_range(0..comps[k].len())];
        edges.push((a, b));
    }
    Graph::from_edges(n, &edges)
}

/// Laplacian factorization `L = V·D·Vᵀ` and the disagreement projection.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub laplacian: DMatrix<f64>,
    /// N×(N−1), orthonormal columns orthogonal to `1_N`.
    pub v: DMatrix<f64>,
    /// Positive eigenvalues in ascending order.
    pub d: DVector<f64>,
    /// `I − 1·1ᵀ/N`.
    pub s: DMatrix<f64>,
    pub fiedler: f64,
    edges: Vec<(usize, usize)>,
}

impl SpectralData {
    pub fn n_agents(&self) -> usize {
        self.laplacian.nrows()
    }

    pub fn d_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.d)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn lambda_max(&self) -> f64 {
        self.d[self.d.len() - 1]
    }
}

pub fn spectral_basis(g: &Graph) -> Result<SpectralData> {
    let n = g.n_agents();
    let laplacian = g.laplacian();
    let eig = laplacian.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let lmax = eig.eigenvalues[order[n - 1]].abs().max(f64::MIN_POSITIVE);
    let zeros = order
        .iter()
        .filter(|&&k| eig.eigenvalues[k] <= ZERO_EIGEN_REL_TOL * lmax)
        .count();
    if zeros != 1 {
        return Err(Error::DisconnectedGraph);
    }

    let mut v = DMatrix::zeros(n, n - 1);
    let mut d = DVector::zeros(n - 1);
    for (col, &k) in order[1..].iter().enumerate() {
        let mut vec = eig.eigenvectors.column(k).into_owned();
        if let Some(first) = vec.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                vec.neg_mut();
            }
        }
        v.set_column(col, &vec);
        d[col] = eig.eigenvalues[k];
    }

    let s = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    Ok(SpectralData {
        laplacian,
        v,
        fiedler: d[0],
        d,
        s,
        edges: g.edges().to_vec(),
    })
}

/// Disagreement coordinates of a vector of software times.
#[derive(Debug, Clone, PartialEq)]
pub struct Disagreement {
    pub eta: DVector<f64>,
    pub eta_norm: f64,
    /// Largest edge-wise gap `max |ϑ_p − ϑ_q|` over `(p, q) ∈ E`.
    pub uniform_norm: f64,
}

pub fn disagreement(sd: &SpectralData, theta: &[f64]) -> Result<Disagreement> {
    let n = sd.n_agents();
    if theta.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: theta.len() });
    }
    let eta = sd.v.tr_mul(&DVector::from_column_slice(theta));
    Ok(Disagreement {
        eta_norm: eta.norm(),
        eta,
        uniform_norm: edge_uniform_norm(sd.edges(), theta),
    })
}

pub fn edge_uniform_norm(edges: &[(usize, usize)], theta: &[f64]) -> f64 {
    edges
        .iter()
        .map(|&(p, q)| (theta[p] - theta[q]).abs())
        .fold(0.0, f64::max)
}
