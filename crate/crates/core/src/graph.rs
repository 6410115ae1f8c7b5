//! Fully connected directed particle graphs and their implicit one-hot
//! receiver/sender matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ColMatrix;

/// Graph dimensions: `n_o` nodes with `p` features each, every ordered pair connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct GraphConfig {
    n_o: usize,
    p: usize,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    n_o: usize,
    p: usize,
}

impl TryFrom<RawGraph> for GraphConfig {
    type Error = Error;
    fn try_from(raw: RawGraph) -> Result<Self> {
        GraphConfig::new(raw.n_o, raw.p)
    }
}

impl From<GraphConfig> for RawGraph {
    fn from(g: GraphConfig) -> Self {
        RawGraph { n_o: g.n_o, p: g.p }
    }
}

impl GraphConfig {
    pub fn new(n_o: usize, p: usize) -> Result<Self> {
        if n_o < 2 {
            return Err(Error::Config(format!("graph needs at least 2 nodes, got {n_o}")));
        }
        if p < 1 {
            return Err(Error::Config("graph needs at least 1 feature per node".into()));
        }
        Ok(Self { n_o, p })
    }

    #[inline]
    pub fn n_o(&self) -> usize {
        self.n_o
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    /// Directed edge count, `n_o * (n_o - 1)`.
    #[inline]
    pub fn n_e(&self) -> usize {
        self.n_o * (self.n_o - 1)
    }
}

/// Receiver-major edge numbering.
///
/// Edges are grouped in contiguous blocks of `n_o - 1` per receiver; inside
/// block `i` the senders run `0..n_o` ascending with `i` skipped. Nothing is
/// stored: both maps are closed-form in the edge index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdjacencyStructure {
    graph: GraphConfig,
}

impl AdjacencyStructure {
    pub fn new(graph: GraphConfig) -> Self {
        Self { graph }
    }

    #[inline]
    pub fn graph(&self) -> GraphConfig {
        self.graph
    }

    /// Edges per receiver block.
    #[inline]
    pub fn block_len(&self) -> usize {
        self.graph.n_o - 1
    }

    #[inline]
    pub fn receiver(&self, e: usize) -> usize {
        debug_assert!(e < self.graph.n_e());
        e / self.block_len()
    }

    #[inline]
    pub fn sender(&self, e: usize) -> usize {
        debug_assert!(e < self.graph.n_e());
        let r = e / self.block_len();
        let j = e % self.block_len();
        if j < r {
            j
        } else {
            j + 1
        }
    }

    /// Edge index of the `j`-th incoming edge of receiver `i`.
    #[inline]
    pub fn edge(&self, receiver: usize, j: usize) -> usize {
        receiver * self.block_len() + j
    }

    /// Dense binary `R_r` (`n_o x n_e`). Only meant for oracle checks.
    pub fn materialize_rr<T: Copy>(&self, zero: T, one: T) -> ColMatrix<T> {
        self.materialize(zero, one, |e| self.receiver(e))
    }

    /// Dense binary `R_s` (`n_o x n_e`). Only meant for oracle checks.
    pub fn materialize_rs<T: Copy>(&self, zero: T, one: T) -> ColMatrix<T> {
        self.materialize(zero, one, |e| self.sender(e))
    }

    fn materialize<T: Copy>(&self, zero: T, one: T, row_of: impl Fn(usize) -> usize) -> ColMatrix<T> {
        let n_o = self.graph.n_o;
        let n_e = self.graph.n_e();
        let mut data = vec![zero; n_o * n_e];
        for e in 0..n_e {
            data[e * n_o + row_of(e)] = one;
        }
        ColMatrix::from_col_major(n_o, n_e, data).expect("sizes agree by construction")
    }
}

/// Builds the implicit adjacency of a fully connected graph. Construction is total.
pub fn make_adjacency(graph: GraphConfig) -> AdjacencyStructure {
    AdjacencyStructure::new(graph)
}
