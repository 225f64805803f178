//! Communication graphs and their Laplacian spectra.
//!
//! Graphs are undirected, connected and positively weighted; all three
//! properties are checked when the graph is built. The Laplacian is
//! `L = D - W` and its second-smallest / largest eigenvalues bound the
//! quadratic form on the mean-zero subspace:
//! `lambda_min_pos * |z|^2 <= z' L z <= lambda_max * |z|^2` for `1' z = 0`.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("invalid graph parameter: {0}")]
    Parameter(String),
    #[error("graph is not connected ({reached} of {n} agents reachable from agent 0)")]
    Disconnected { reached: usize, n: usize },
    #[error("edge-list line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("symmetric eigensolver did not converge")]
    Eigensolver,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Graph family accepted by [`Graph::build`].
#[derive(Debug, Clone, PartialEq)]
pub enum GraphKind {
    Ring,
    Torus { rows: usize, cols: usize },
    Complete,
    EdgeList(Vec<(usize, usize, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    /// Canonical edges `(i, j, w)` with `i < j`, sorted.
    edges: Vec<(usize, usize, f64)>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBounds {
    /// Smallest positive Laplacian eigenvalue (algebraic connectivity).
    pub lambda_min_pos: f64,
    /// Largest Laplacian eigenvalue.
    pub lambda_max: f64,
}

impl Graph {
    pub fn build(kind: &GraphKind, n: usize) -> Result<Self, TopologyError> {
        if n < 2 {
            return Err(TopologyError::Parameter(format!("need n >= 2 agents, got {n}")));
        }
        let edges: Vec<(usize, usize, f64)> = match kind {
            GraphKind::Ring => (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect(),
            GraphKind::Complete => (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |j| (i, j, 1.0)))
                .collect(),
            GraphKind::Torus { rows, cols } => {
                let (rows, cols) = (*rows, *cols);
                if rows < 2 || cols < 2 || rows * cols != n {
                    return Err(TopologyError::Parameter(format!(
                        "torus needs rows, cols >= 2 with rows*cols = n; got {rows}x{cols} for n = {n}"
                    )));
                }
                let id = |r: usize, c: usize| r * cols + c;
                let mut e = Vec::with_capacity(2 * n);
                for r in 0..rows {
                    for c in 0..cols {
                        e.push((id(r, c), id(r, (c + 1) % cols), 1.0));
                        e.push((id(r, c), id((r + 1) % rows, c), 1.0));
                    }
                }
                e
            }
            GraphKind::EdgeList(list) => list.clone(),
        };
        Self::from_edges(n, edges)
    }

    /// Builds a graph from weighted edges. Duplicate edges (in either
    /// orientation) collapse to one; the first weight seen wins.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::Parameter("graph needs at least one agent".into()));
        }
        let mut canon: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return Err(TopologyError::Parameter(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if i == j {
                return Err(TopologyError::Parameter(format!("self-loop at agent {i}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(TopologyError::Parameter(format!("edge ({i}, {j}) has non-positive weight {w}")));
            }
            canon.entry((i.min(j), i.max(j))).or_insert(w);
        }
        let edges: Vec<(usize, usize, f64)> = canon.into_iter().map(|((i, j), w)| (i, j, w)).collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j, w) in &edges {
            neighbors[i].push((j, w));
            neighbors[j].push((i, w));
        }
        for nb in &mut neighbors {
            nb.sort_by_key(|&(j, _)| j);
        }
        let g = Self { n, edges, neighbors };
        let reached = g.reachable_from_zero();
        if reached != n {
            return Err(TopologyError::Disconnected { reached, n });
        }
        Ok(g)
    }

    /// Parses the `i j [w]` edge-list format (0-indexed, `#` comments).
    /// When `n` is `None` the agent count is one past the largest index.
    pub fn parse_edge_list(text: &str, n: Option<usize>) -> Result<Self, TopologyError> {
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| TopologyError::Parse { line: lineno + 1, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 && fields.len() != 3 {
                return Err(parse_err(format!("expected `i j [w]`, got {} fields", fields.len())));
            }
            let i: usize = fields[0].parse().map_err(|e| parse_err(format!("bad index {:?}: {e}", fields[0])))?;
            let j: usize = fields[1].parse().map_err(|e| parse_err(format!("bad index {:?}: {e}", fields[1])))?;
            let w: f64 = match fields.get(2) {
                Some(s) => s.parse().map_err(|e| parse_err(format!("bad weight {s:?}: {e}")))?,
                None => 1.0,
            };
            edges.push((i, j, w));
        }
        let n = match n {
            Some(n) => n,
            None => edges.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0),
        };
        Self::from_edges(n, edges)
    }

    pub fn load_edge_list(path: &Path, n: Option<usize>) -> Result<Self, TopologyError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_edge_list(&text, n)
    }

    fn reachable_from_zero(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &(j, _) in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Dense Laplacian `D - W`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for &(i, j, w) in &self.edges {
            l[(i, j)] -= w;
            l[(j, i)] -= w;
            l[(i, i)] += w;
            l[(j, j)] += w;
        }
        l
    }

    /// All Laplacian eigenvalues in ascending order.
    pub fn laplacian_eigenvalues(&self) -> Result<Vec<f64>, TopologyError> {
        let eig = SymmetricEigen::try_new(self.laplacian(), 1e-14, 10_000).ok_or(TopologyError::Eigensolver)?;
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        Ok(vals)
    }

    pub fn spectral_bounds(&self) -> Result<SpectralBounds, TopologyError> {
        if self.n < 2 {
            return Err(TopologyError::Parameter("a single agent has no positive Laplacian eigenvalue".into()));
        }
        let vals = self.laplacian_eigenvalues()?;
        Ok(SpectralBounds { lambda_min_pos: vals[1], lambda_max: vals[self.n - 1] })
    }
}

impl std::fmt::Display for GraphKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GraphKind::Ring => write!(f, "ring"),
            GraphKind::Complete => write!(f, "complete"),
            GraphKind::Torus { rows, cols } => write!(f, "torus({rows}x{cols})"),
            GraphKind::EdgeList(e) => write!(f, "edge_list({} edges)", e.len()),
        }
    }
}
