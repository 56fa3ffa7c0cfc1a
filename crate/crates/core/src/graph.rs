//! Dual-graph data model: one node set, a spatial edge set and an
//! origin–destination (OD) edge set, plus per-node attributes.
//!
//! Graphs are undirected and simple. Adjacency is 0/1; edge weights are kept
//! alongside and only used where a caller asks for them (weighted walks).

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Which of the two edge sets an operation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GraphView {
    Spatial,
    Od,
}

impl GraphView {
    pub const ALL: [GraphView; 2] = [GraphView::Spatial, GraphView::Od];

    pub fn index(self) -> usize {
        match self {
            GraphView::Spatial => 0,
            GraphView::Od => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GraphView::Spatial => "spatial",
            GraphView::Od => "od",
        }
    }
}

impl std::str::FromStr for GraphView {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" | "s" => Ok(GraphView::Spatial),
            "od" | "o" => Ok(GraphView::Od),
            other => Err(invalid(format!(
                "unknown graph view `{other}` (expected spatial|od)"
            ))),
        }
    }
}

impl std::fmt::Display for GraphView {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Undirected simple graph with nonnegative edge weights.
///
/// Neighbor lists are kept sorted by index, so iteration order is
/// deterministic everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    adj: Vec<Vec<(usize, f64)>>,
    edge_count: usize,
}

impl Graph {
    pub fn empty(node_count: usize) -> Self {
        Self {
            adj: vec![Vec::new(); node_count],
            edge_count: 0,
        }
    }

    /// Builds a graph from `(u, v, weight)` triples.
    ///
    /// Self-loops, out-of-range endpoints and negative or non-finite weights
    /// are rejected. Repeated pairs (in either orientation) keep the first
    /// weight; the number of dropped duplicates is returned alongside.
    pub fn from_weighted_edges<I>(node_count: usize, edges: I) -> Result<(Self, usize)>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut g = Graph::empty(node_count);
        let mut duplicates = 0;
        for (u, v, w) in edges {
            if u >= node_count || v >= node_count {
                return Err(invalid(format!(
                    "edge ({u}, {v}) out of range for {node_count} nodes"
                )));
            }
            if u == v {
                return Err(invalid(format!("self-loop on node {u}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(invalid(format!("edge ({u}, {v}) has invalid weight {w}")));
            }
            if !g.insert_edge(u, v, w) {
                duplicates += 1;
            }
        }
        Ok((g, duplicates))
    }

    /// Unit-weight convenience constructor; duplicates are silently merged.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::from_weighted_edges(node_count, edges.iter().map(|&(u, v)| (u, v, 1.0)))
            .map(|(g, _)| g)
    }

    /// Inserts `{u, v}`; returns false (and changes nothing) if present.
    pub(crate) fn insert_edge(&mut self, u: usize, v: usize, w: f64) -> bool {
        debug_assert!(u != v);
        match self.adj[u].binary_search_by_key(&v, |&(x, _)| x) {
            Ok(_) => false,
            Err(pos) => {
                self.adj[u].insert(pos, (v, w));
                let pos_v = self.adj[v]
                    .binary_search_by_key(&u, |&(x, _)| x)
                    .unwrap_err();
                self.adj[v].insert(pos_v, (u, w));
                self.edge_count += 1;
                true
            }
        }
    }

    pub(crate) fn remove_edge(&mut self, u: usize, v: usize) -> bool {
        match self.adj[u].binary_search_by_key(&v, |&(x, _)| x) {
            Ok(pos) => {
                self.adj[u].remove(pos);
                let pos_v = self.adj[v].binary_search_by_key(&u, |&(x, _)| x).unwrap();
                self.adj[v].remove(pos_v);
                self.edge_count -= 1;
                true
            }
            Err(_) => false,
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adj[node].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    /// Neighbors of `node` with their weights, ascending by index.
    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adj[node]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search_by_key(&v, |&(x, _)| x).is_ok()
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        self.adj[u]
            .binary_search_by_key(&v, |&(x, _)| x)
            .ok()
            .map(|p| self.adj[u][p].1)
    }

    /// All edges as `(u, v, w)` with `u < v`, lexicographically sorted.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for (u, nbrs) in self.adj.iter().enumerate() {
            for &(v, w) in nbrs {
                if u < v {
                    out.push((u, v, w));
                }
            }
        }
        out
    }

    /// Dense symmetric 0/1 adjacency matrix.
    pub fn adjacency(&self) -> Array2<f64> {
        let n = self.node_count();
        let mut a = Array2::zeros((n, n));
        for (u, nbrs) in self.adj.iter().enumerate() {
            for &(v, _) in nbrs {
                a[[u, v]] = 1.0;
            }
        }
        a
    }

    /// Subgraph induced by `nodes`, relabelled `0..nodes.len()` in the given
    /// order. Duplicate entries in `nodes` are rejected.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Graph> {
        let n = self.node_count();
        let mut local = vec![usize::MAX; n];
        for (i, &v) in nodes.iter().enumerate() {
            if v >= n {
                return Err(invalid(format!(
                    "subset node {v} out of range for {n} nodes"
                )));
            }
            if local[v] != usize::MAX {
                return Err(invalid(format!("subset lists node {v} twice")));
            }
            local[v] = i;
        }
        let mut g = Graph::empty(nodes.len());
        for (i, &v) in nodes.iter().enumerate() {
            for &(u, w) in &self.adj[v] {
                let j = local[u];
                if j != usize::MAX && i < j {
                    g.insert_edge(i, j, w);
                }
            }
        }
        Ok(g)
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2}` as a dense matrix.
    pub fn normalized_adjacency(&self) -> Array2<f64> {
        self.normalized_sparse().to_dense()
    }

    /// Sparse form of [`Graph::normalized_adjacency`].
    pub fn normalized_sparse(&self) -> SparseMatrix {
        let n = self.node_count();
        let deg: Vec<f64> = self
            .adj
            .iter()
            .map(|nbrs| (nbrs.len() + 1) as f64)
            .collect();
        let entry = |i: usize, j: usize| 1.0 / (deg[i] * deg[j]).sqrt();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(2 * self.edge_count + n);
        let mut values = Vec::with_capacity(2 * self.edge_count + n);
        indptr.push(0);
        for (i, nbrs) in self.adj.iter().enumerate() {
            let mut self_done = false;
            for &(j, _) in nbrs {
                if !self_done && j > i {
                    indices.push(i);
                    values.push(entry(i, i));
                    self_done = true;
                }
                indices.push(j);
                values.push(entry(i, j));
            }
            if !self_done {
                indices.push(i);
                values.push(entry(i, i));
            }
            indptr.push(indices.len());
        }
        SparseMatrix {
            n,
            indptr,
            indices,
            values,
        }
    }
}

/// Square CSR matrix; row products accumulate in column order so results are
/// reproducible bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b]
            .iter()
            .copied()
            .zip(self.values[a..b].iter().copied())
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// `self · rhs` for a dense right-hand side.
    pub fn mul_dense(&self, rhs: &Array2<f64>) -> Array2<f64> {
        assert_eq!(rhs.nrows(), self.n, "sparse product dimension mismatch");
        let cols = rhs.ncols();
        let mut out = Array2::zeros((self.n, cols));
        for i in 0..self.n {
            let mut acc = out.row_mut(i);
            for (j, v) in self.row(i) {
                acc.scaled_add(v, &rhs.row(j));
            }
        }
        out
    }
}

/// Two edge sets over one node set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrbanGraph {
    pub spatial: Graph,
    pub od: Graph,
}

impl UrbanGraph {
    pub fn new(spatial: Graph, od: Graph) -> Result<Self> {
        if spatial.node_count() != od.node_count() {
            return Err(Error::DimensionMismatch(format!(
                "spatial graph has {} nodes, OD graph has {}",
                spatial.node_count(),
                od.node_count()
            )));
        }
        if spatial.node_count() == 0 {
            return Err(invalid("graph must have at least one node"));
        }
        Ok(Self { spatial, od })
    }

    pub fn node_count(&self) -> usize {
        self.spatial.node_count()
    }

    pub fn view(&self, which: GraphView) -> &Graph {
        match which {
            GraphView::Spatial => &self.spatial,
            GraphView::Od => &self.od,
        }
    }

    pub fn view_mut(&mut self, which: GraphView) -> &mut Graph {
        match which {
            GraphView::Spatial => &mut self.spatial,
            GraphView::Od => &mut self.od,
        }
    }

    pub fn normalized_adjacency(&self, which: GraphView) -> Array2<f64> {
        self.view(which).normalized_adjacency()
    }

    /// Weighted neighbors of `node` in ascending index order.
    pub fn neighbor_list(&self, which: GraphView, node: usize) -> Result<Vec<(usize, f64)>> {
        let g = self.view(which);
        if node >= g.node_count() {
            return Err(invalid(format!("node {node} out of range")));
        }
        Ok(g.neighbors(node)
            .iter()
            .copied()
            .filter(|&(_, w)| w > 0.0)
            .collect())
    }
}

/// Per-node attributes and segregation annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTable {
    pub features: Array2<f64>,
    pub socio: Array2<f64>,
    pub seg_score: Array1<f64>,
    pub seg_label: Vec<usize>,
}

impl NodeTable {
    /// Builds a table from features and socioeconomic rows, computing
    /// segregation scores and quantile labels.
    pub fn from_attributes(features: Array2<f64>, socio: Array2<f64>, split: f64) -> Result<Self> {
        if features.nrows() != socio.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows vs {} socioeconomic rows",
                features.nrows(),
                socio.nrows()
            )));
        }
        let c = socio.ncols();
        let mut scores = Array1::zeros(socio.nrows());
        for (i, row) in socio.rows().into_iter().enumerate() {
            let tau: Vec<f64> = row.to_vec();
            scores[i] = crate::segregation::segregation_index(&tau, c)
                .map_err(|e| invalid(format!("node {i}: {e}")))?;
        }
        let labels = crate::segregation::label_by_quantile(scores.as_slice().unwrap(), split);
        Ok(Self {
            features,
            socio,
            seg_score: scores,
            seg_label: labels,
        })
    }

    pub fn node_count(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.seg_label
            .iter()
            .copied()
            .max()
            .map_or(0, |m| m + 1)
            .max(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn path3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn normalized_single_node() {
        let g = Graph::empty(1);
        assert_eq!(g.normalized_adjacency(), ndarray::arr2(&[[1.0]]));
    }

    #[test]
    fn normalized_single_edge() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(
            g.normalized_adjacency(),
            ndarray::arr2(&[[0.5, 0.5], [0.5, 0.5]])
        );
    }

    #[test]
    fn normalized_path() {
        let a = path3().normalized_adjacency();
        assert_abs_diff_eq!(a[[0, 1]], 1.0 / 6f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(a[[1, 1]], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a[[0, 0]], 0.5, epsilon = 1e-15);
        assert_eq!(a[[0, 2]], 0.0);
        assert_eq!(a, a.t());
    }

    #[test]
    fn neighbor_lists() {
        let star = Graph::from_edges(4, &[(0, 3), (0, 1), (0, 2)]).unwrap();
        let g = UrbanGraph::new(star.clone(), star).unwrap();
        assert_eq!(
            g.neighbor_list(GraphView::Spatial, 0).unwrap(),
            vec![(1, 1.0), (2, 1.0), (3, 1.0)]
        );
        let iso = Graph::empty(2);
        let g = UrbanGraph::new(iso.clone(), iso).unwrap();
        assert!(g.neighbor_list(GraphView::Od, 1).unwrap().is_empty());
        let (w, _) = Graph::from_weighted_edges(2, [(0, 1, 2.5)]).unwrap();
        let g = UrbanGraph::new(w.clone(), w).unwrap();
        assert_eq!(
            g.neighbor_list(GraphView::Spatial, 0).unwrap(),
            vec![(1, 2.5)]
        );
        assert!(g.neighbor_list(GraphView::Spatial, 2).is_err());
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Graph::from_edges(2, &[(0, 0)]).is_err());
        assert!(Graph::from_edges(2, &[(0, 2)]).is_err());
        assert!(Graph::from_weighted_edges(2, [(0, 1, -1.0)]).is_err());
        let (g, dups) =
            Graph::from_weighted_edges(3, [(0, 1, 1.0), (1, 0, 3.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(dups, 1);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.weight(0, 1), Some(1.0));
    }

    #[test]
    fn sparse_matches_dense_product() {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 0), (3, 4)]).unwrap();
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i * 3 + j) as f64 * 0.1 - 0.4);
        let dense = g.normalized_adjacency().dot(&x);
        let sparse = g.normalized_sparse().mul_dense(&x);
        for (a, b) in dense.iter().zip(sparse.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn induced_subgraph_relabels() {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (1, 4)]).unwrap();
        let sub = g.induced_subgraph(&[4, 1, 2]).unwrap();
        assert_eq!(sub.edges(), vec![(0, 1, 1.0), (1, 2, 1.0)]);
        assert!(g.induced_subgraph(&[1, 1]).is_err());
    }
}
