//! Undirected, unweighted graphs in compressed-row form, plus the weighted
//! propagation operators GNN layers use.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::par;

/// Symmetric adjacency in CSR form. Column indices are strictly increasing
/// within each row and no self-loops are stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            n,
            offsets: vec![0; n + 1],
            neighbors: Vec::new(),
        }
    }

    /// Builds a graph from an edge list. Each pair is stored in both
    /// directions; duplicates and self-loops are dropped.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Dimension(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut row in adj {
            row.sort_unstable();
            row.dedup();
            neighbors.extend_from_slice(&row);
            offsets.push(neighbors.len());
        }
        Ok(Graph {
            n,
            offsets,
            neighbors,
        })
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Number of unique undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|v| self.degree(v)).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Unique undirected edges as `(u, v)` with `u < v`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// Relabels nodes so old node `v` becomes `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        check_permutation(perm, self.n)?;
        Graph::from_edges(self.n, self.edges().map(|(u, v)| (perm[u], perm[v])))
    }

    /// Nodes within `hops` of any seed, including the seeds.
    pub fn k_hop(&self, seeds: &[usize], hops: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut frontier: Vec<usize> = Vec::new();
        for &s in seeds {
            if !seen[s] {
                seen[s] = true;
                frontier.push(s);
            }
        }
        for _ in 0..hops {
            let mut next = Vec::new();
            for &u in &frontier {
                for &v in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        next.push(v);
                    }
                }
            }
            frontier = next;
        }
        seen
    }

    /// Weighted propagation operator for the given scheme.
    pub fn normalize(&self, scheme: Normalization) -> Propagation {
        let mut offsets = Vec::with_capacity(self.n + 1);
        let mut cols = Vec::with_capacity(self.neighbors.len() + self.n);
        let mut weights = Vec::with_capacity(self.neighbors.len() + self.n);
        offsets.push(0);
        // Degrees with the self-loop included.
        let deg: Vec<f64> = (0..self.n).map(|v| (self.degree(v) + 1) as f64).collect();
        for v in 0..self.n {
            let nbrs = self.neighbors(v);
            let split = nbrs.partition_point(|&u| u < v);
            let with_self = nbrs[..split]
                .iter()
                .copied()
                .chain(std::iter::once(v))
                .chain(nbrs[split..].iter().copied());
            for u in with_self {
                let w = match scheme {
                    Normalization::GcnSymmetric => 1.0 / (deg[u] * deg[v]).sqrt(),
                    Normalization::Mean => 1.0 / deg[v],
                };
                cols.push(u);
                weights.push(w);
            }
            offsets.push(cols.len());
        }
        Propagation {
            n: self.n,
            offsets,
            cols,
            weights,
        }
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::Dimension(format!(
            "permutation has {} entries for {n} nodes",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::Dimension("not a permutation".into()));
        }
    }
    Ok(())
}

/// Neighbor weighting used by a propagation operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `1 / sqrt(deg(u) deg(v))` with self-loops added before counting degrees.
    GcnSymmetric,
    /// `1 / (deg(v) + 1)` over the neighbors of `v` and `v` itself.
    Mean,
}

/// Row-indexed weighted neighbor lists: `(P x)[v] = sum_u w(v, u) x[u]`.
/// Every row contains its own node.
#[derive(Clone, Debug, PartialEq)]
pub struct Propagation {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl Propagation {
    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// `(column, weight)` pairs of row `v`, sorted by column.
    pub fn row(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[v]..self.offsets[v + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }

    pub fn weight(&self, v: usize, u: usize) -> Option<f64> {
        let r = self.offsets[v]..self.offsets[v + 1];
        self.cols[r.clone()]
            .binary_search(&u)
            .ok()
            .map(|k| self.weights[r.start + k])
    }

    pub fn transpose(&self) -> Propagation {
        let mut count = vec![0usize; self.n + 1];
        for &c in &self.cols {
            count[c + 1] += 1;
        }
        for i in 0..self.n {
            count[i + 1] += count[i];
        }
        let offsets = count.clone();
        let mut cursor = count;
        let mut cols = vec![0; self.cols.len()];
        let mut weights = vec![0.0; self.weights.len()];
        for v in 0..self.n {
            for (u, w) in self.row(v) {
                let slot = cursor[u];
                cols[slot] = v;
                weights[slot] = w;
                cursor[u] += 1;
            }
        }
        Propagation {
            n: self.n,
            offsets,
            cols,
            weights,
        }
    }

    /// `P x`.
    pub fn apply(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.rows(), self.n, "propagation row count");
        let mut out = Matrix::zeros(self.n, x.cols());
        let cols = x.cols();
        par::rows_mut(out.as_mut_slice(), cols, |v, row| self.accumulate(v, x, row));
        out
    }

    /// Sequential form of [`Propagation::apply`].
    pub fn apply_seq(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.rows(), self.n, "propagation row count");
        let mut out = Matrix::zeros(self.n, x.cols());
        let cols = x.cols();
        par::rows_mut_seq(out.as_mut_slice(), cols, |v, row| self.accumulate(v, x, row));
        out
    }

    /// Rows `rows` of `P x` only.
    pub fn apply_rows(&self, x: &Matrix, rows: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(rows.len(), x.cols());
        for (i, &v) in rows.iter().enumerate() {
            self.accumulate(v, x, out.row_mut(i));
        }
        out
    }

    #[inline]
    fn accumulate(&self, v: usize, x: &Matrix, out: &mut [f64]) {
        for (u, w) in self.row(v) {
            for (o, &a) in out.iter_mut().zip(x.row(u)) {
                *o += w * a;
            }
        }
    }
}
