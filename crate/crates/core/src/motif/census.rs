//! Exact induced-subgraph census.
//!
//! Connected vertex sets are enumerated with ESU (each set visited once,
//! rooted at its smallest vertex) and classified by their induced edge
//! pattern. When the only 5-vertex pattern is the star, 5-sets are counted
//! directly as independent 4-subsets of a neighborhood, which avoids walking
//! every connected 5-set of dense graphs.

use serde::{Deserialize, Serialize};

use super::catalog::{pair_count, MotifCatalog, NO_PATTERN};
use crate::error::{invalid, Result};
use crate::graph::{Graph, GraphView, UrbanGraph};

/// Pseudo-count added to every bin before normalising.
pub const SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifDistribution {
    pub counts: Vec<u64>,
    pub normalized: Vec<f64>,
}

impl MotifDistribution {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total: f64 = counts.iter().map(|&c| c as f64 + SMOOTHING).sum();
        let normalized = counts
            .iter()
            .map(|&c| (c as f64 + SMOOTHING) / total)
            .collect();
        Self { counts, normalized }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Row-bitset adjacency for O(1) pair tests.
struct AdjBits {
    words: usize,
    bits: Vec<u64>,
}

impl AdjBits {
    fn new(g: &Graph) -> Self {
        let n = g.node_count();
        let words = n.div_ceil(64).max(1);
        let mut bits = vec![0u64; n * words];
        for u in 0..n {
            for &(v, _) in g.neighbors(u) {
                bits[u * words + v / 64] |= 1 << (v % 64);
            }
        }
        Self { words, bits }
    }

    #[inline]
    fn has(&self, u: usize, v: usize) -> bool {
        self.bits[u * self.words + v / 64] >> (v % 64) & 1 == 1
    }
}

struct Esu<'a> {
    g: &'a Graph,
    adj: &'a AdjBits,
    catalog: &'a MotifCatalog,
    max_size: usize,
    record: [bool; 6],
    sub: [usize; 5],
    mark: Vec<u32>,
    counts: Vec<u64>,
}

impl Esu<'_> {
    fn run_root(&mut self, root: usize) {
        self.sub[0] = root;
        self.mark[root] += 1;
        for &(u, _) in self.g.neighbors(root) {
            self.mark[u] += 1;
        }
        let ext: Vec<usize> = self
            .g
            .neighbors(root)
            .iter()
            .map(|&(u, _)| u)
            .filter(|&u| u > root)
            .collect();
        self.extend(1, 0, ext, root);
        for &(u, _) in self.g.neighbors(root) {
            self.mark[u] -= 1;
        }
        self.mark[root] -= 1;
    }

    fn extend(&mut self, size: usize, bits: u16, mut ext: Vec<usize>, root: usize) {
        if self.record[size] {
            let idx = self.catalog.lookup(size)[bits as usize];
            if idx != NO_PATTERN {
                self.counts[idx as usize] += 1;
            }
        }
        if size == self.max_size {
            return;
        }
        while let Some(w) = ext.pop() {
            let mut next = ext.clone();
            for &(u, _) in self.g.neighbors(w) {
                if u > root && self.mark[u] == 0 {
                    next.push(u);
                }
            }
            let base = pair_count(size);
            let mut nb = bits;
            for j in 0..size {
                if self.adj.has(self.sub[j], w) {
                    nb |= 1 << (base + j);
                }
            }
            self.sub[size] = w;
            for &(u, _) in self.g.neighbors(w) {
                self.mark[u] += 1;
            }
            self.extend(size + 1, nb, next, root);
            for &(u, _) in self.g.neighbors(w) {
                self.mark[u] -= 1;
            }
        }
    }
}

/// Number of pairwise non-adjacent 4-subsets of each vertex neighborhood,
/// i.e. induced 5-vertex stars.
fn count_induced_stars(g: &Graph, adj: &AdjBits) -> u64 {
    fn independent(adj: &AdjBits, cands: &[usize], need: usize) -> u64 {
        if need == 0 {
            return 1;
        }
        if cands.len() < need {
            return 0;
        }
        let mut total = 0;
        for (i, &a) in cands.iter().enumerate() {
            let rest: Vec<usize> = cands[i + 1..]
                .iter()
                .copied()
                .filter(|&b| !adj.has(a, b))
                .collect();
            total += independent(adj, &rest, need - 1);
        }
        total
    }
    (0..g.node_count())
        .map(|c| {
            let nbrs: Vec<usize> = g.neighbors(c).iter().map(|&(u, _)| u).collect();
            independent(adj, &nbrs, 4)
        })
        .sum()
}

/// Counts induced occurrences of every catalog pattern in `g`.
pub fn census_graph(g: &Graph, catalog: &MotifCatalog) -> MotifDistribution {
    let adj = AdjBits::new(g);
    let star5 = catalog.star5_only();
    let mut record = [false; 6];
    for (k, r) in record.iter_mut().enumerate().skip(1) {
        *r = catalog.has_size(k);
    }
    if star5.is_some() {
        record[5] = false;
    }
    let max_size = (1..=5).rev().find(|&k| record[k]).unwrap_or(0);
    let mut esu = Esu {
        g,
        adj: &adj,
        catalog,
        max_size,
        record,
        sub: [0; 5],
        mark: vec![0; g.node_count()],
        counts: vec![0; catalog.len()],
    };
    if max_size >= 1 {
        for root in 0..g.node_count() {
            esu.run_root(root);
        }
    }
    let mut counts = esu.counts;
    if let Some(idx) = star5 {
        counts[idx] = count_induced_stars(g, &adj);
    }
    MotifDistribution::from_counts(counts)
}

/// Census of one view, optionally restricted to the subgraph induced by
/// `nodes`.
pub fn census(
    g: &UrbanGraph,
    which: GraphView,
    nodes: Option<&[usize]>,
    catalog: &MotifCatalog,
) -> Result<MotifDistribution> {
    let view = g.view(which);
    match nodes {
        None => Ok(census_graph(view, catalog)),
        Some(subset) => {
            if subset.iter().any(|&v| v >= view.node_count()) {
                return Err(invalid("census subset contains an out-of-range node"));
            }
            Ok(census_graph(&view.induced_subgraph(subset)?, catalog))
        }
    }
}

/// Triangles through each vertex.
pub fn triangles_per_node(g: &Graph) -> Vec<u64> {
    let adj = AdjBits::new(g);
    (0..g.node_count())
        .map(|u| {
            let nbrs = g.neighbors(u);
            let mut t = 0;
            for (i, &(a, _)) in nbrs.iter().enumerate() {
                for &(b, _) in &nbrs[i + 1..] {
                    if adj.has(a, b) {
                        t += 1;
                    }
                }
            }
            t
        })
        .collect()
}
