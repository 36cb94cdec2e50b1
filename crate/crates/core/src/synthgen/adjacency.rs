use alloc::string::String;
use alloc::vec::Vec;

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};

/// Undirected simple graph stored as one bit row per node. Symmetric with an
/// empty diagonal by construction.
#[derive(Clone, PartialEq, Eq)]
pub struct Adjacency {
    rows: Vec<FixedBitSet>,
}

impl core::fmt::Debug for Adjacency {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Adjacency")
            .field("nodes", &self.len())
            .field("edges", &self.edge_count())
            .finish()
    }
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Adjacency {
            rows: (0..n).map(|_| FixedBitSet::with_capacity(n)).collect(),
        }
    }

    /// Builds a graph from an edge list; self-loops are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = Self::empty(n);
        for &(i, j) in edges {
            if i == j || i >= n || j >= n {
                return Err(Error::param("edges", alloc::format!("invalid edge ({i}, {j})")));
            }
            a.add_edge(i, j);
        }
        Ok(a)
    }

    /// Parses a row-major 0/1 matrix, rejecting asymmetric or looped input.
    pub fn from_bits(rows: &[Vec<bool>]) -> Result<Self> {
        let n = rows.len();
        let mut a = Self::empty(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Layout(alloc::format!("adjacency row {i} has {} entries, expected {n}", row.len())));
            }
            if row[i] {
                return Err(Error::Layout(alloc::format!("adjacency has a self-loop at {i}")));
            }
            for (j, &bit) in row.iter().enumerate() {
                if bit != rows[j][i] {
                    return Err(Error::Layout(alloc::format!("adjacency is asymmetric at ({i}, {j})")));
                }
                if bit {
                    a.rows[i].insert(j);
                }
            }
        }
        Ok(a)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.rows[i].contains(j)
    }

    /// Adds `{i, j}`. Returns false when the edge already existed.
    pub fn add_edge(&mut self, i: usize, j: usize) -> bool {
        debug_assert_ne!(i, j);
        let fresh = !self.rows[i].put(j);
        self.rows[j].insert(i);
        fresh
    }

    pub fn degree(&self, i: usize) -> usize {
        self.rows[i].count_ones(..)
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.degree(i)).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones(..)).sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[i].ones()
    }

    /// Edges as `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |i| self.rows[i].ones().filter(move |&j| j > i).map(move |j| (i, j)))
    }

    pub fn common_neighbors(&self, i: usize, j: usize) -> usize {
        self.rows[i].intersection_count(&self.rows[j])
    }

    /// True when every edge of `self` is also an edge of `other`.
    pub fn is_subgraph_of(&self, other: &Adjacency) -> bool {
        self.len() == other.len() && self.rows.iter().zip(&other.rows).all(|(a, b)| a.is_subset(b))
    }

    /// Row `i` as a `'0'`/`'1'` string.
    pub fn row_bits(&self, i: usize) -> String {
        (0..self.len()).map(|j| if self.has_edge(i, j) { '1' } else { '0' }).collect()
    }

    /// Row `i` as 0.0/1.0 values.
    pub fn row_values(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|j| if self.has_edge(i, j) { 1.0 } else { 0.0 }).collect()
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Adjacency {
        let mut out = Self::empty(self.len());
        for (i, j) in self.edges() {
            out.add_edge(perm[i], perm[j]);
        }
        out
    }
}
