//! Weighted random walks and the walk-bundle fragments built from them.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::Graph;
use crate::rng::RngState;

/// `r` walks of `t` nodes each, all starting at `root`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkBundle {
    pub root: usize,
    pub walks: Vec<Vec<usize>>,
    /// Set when some walk hit a node without neighbors and repeated it.
    pub padded: bool,
}

impl WalkBundle {
    pub fn walk_count(&self) -> usize {
        self.walks.len()
    }

    pub fn walk_length(&self) -> usize {
        self.walks.first().map_or(0, Vec::len)
    }
}

/// Picks a neighbor of `node` with probability proportional to edge weight.
fn weighted_step<R: Rng>(g: &Graph, node: usize, rng: &mut R) -> Option<usize> {
    let nbrs = g.neighbors(node);
    let total: f64 = nbrs.iter().map(|&(_, w)| w).sum();
    if nbrs.is_empty() || total <= 0.0 {
        return None;
    }
    let mut x = rng.random::<f64>() * total;
    for &(v, w) in nbrs {
        if x < w {
            return Some(v);
        }
        x -= w;
    }
    // Rounding left a sliver past the last bucket.
    nbrs.iter().rev().find(|&&(_, w)| w > 0.0).map(|&(v, _)| v)
}

/// Samples `r` weighted walks of `t` nodes from `root`. Dead ends repeat
/// the current node.
pub fn random_walks(
    g: &Graph,
    root: usize,
    r: usize,
    t: usize,
    rng: RngState,
) -> Result<WalkBundle> {
    if root >= g.node_count() {
        return Err(invalid(format!("walk root {root} out of range")));
    }
    if t == 0 {
        return Err(invalid("walk length must be positive"));
    }
    let mut rng = rng.rng();
    let mut padded = false;
    let walks = (0..r)
        .map(|_| {
            let mut walk = Vec::with_capacity(t);
            walk.push(root);
            let mut cur = root;
            for _ in 1..t {
                cur = match weighted_step(g, cur, &mut rng) {
                    Some(next) => next,
                    None => {
                        padded = true;
                        cur
                    }
                };
                walk.push(cur);
            }
            walk
        })
        .collect();
    Ok(WalkBundle {
        root,
        walks,
        padded,
    })
}

/// One bundle per root; root `v` draws from `rng.child(v)`.
pub fn walks_for_roots(
    g: &Graph,
    roots: &[usize],
    r: usize,
    t: usize,
    rng: RngState,
) -> Result<Vec<WalkBundle>> {
    roots
        .par_iter()
        .map(|&v| random_walks(g, v, r, t, rng.child(v as u64)))
        .collect()
}

/// The graph traced by a bundle: visited nodes and traversed edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    /// Distinct visited nodes, ascending; local index `i` is `nodes[i]`.
    pub nodes: Vec<usize>,
    /// Traversed edges in global ids, `u < v`, sorted.
    pub edges: Vec<(usize, usize)>,
}

impl Fragment {
    pub fn local_graph(&self) -> Graph {
        let local = |v: usize| self.nodes.binary_search(&v).expect("fragment node");
        let e: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(u, v)| (local(u), local(v)))
            .collect();
        Graph::from_edges(self.nodes.len(), &e).expect("fragment edges are valid")
    }
}

/// Union of consecutive-pair edges over all walks; self-repeats are skipped.
pub fn bundle_to_subgraph(bundle: &WalkBundle) -> Fragment {
    let mut nodes: Vec<usize> = bundle.walks.iter().flatten().copied().collect();
    nodes.push(bundle.root);
    nodes.sort_unstable();
    nodes.dedup();
    let mut edges: Vec<(usize, usize)> = bundle
        .walks
        .iter()
        .flat_map(|w| w.windows(2))
        .filter(|p| p[0] != p[1])
        .map(|p| (p[0].min(p[1]), p[0].max(p[1])))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    Fragment { nodes, edges }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial_ok(hits: usize, trials: usize, p: f64) -> bool {
        let mean = trials as f64 * p;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        (hits as f64 - mean).abs() <= 3.0 * sd
    }

    #[test]
    fn forced_bounce() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let b = random_walks(&g, 0, 5, 3, RngState::new(1)).unwrap();
        assert!(b.walks.iter().all(|w| w == &vec![0, 1, 0]));
        assert!(!b.padded);
        let f = bundle_to_subgraph(&b);
        assert_eq!(f.nodes, vec![0, 1]);
        assert_eq!(f.edges, vec![(0, 1)]);
    }

    #[test]
    fn star_leaves_uniform() {
        let k = 4;
        let g = Graph::from_edges(k + 1, &(1..=k).map(|l| (0, l)).collect::<Vec<_>>()).unwrap();
        let b = random_walks(&g, 0, 10_000, 2, RngState::new(2)).unwrap();
        for leaf in 1..=k {
            let hits = b.walks.iter().filter(|w| w[1] == leaf).count();
            assert!(
                binomial_ok(hits, 10_000, 1.0 / k as f64),
                "leaf {leaf}: {hits}"
            );
        }
    }

    #[test]
    fn weighted_step_frequency() {
        let (g, _) = Graph::from_weighted_edges(3, [(0, 1, 2.0), (0, 2, 1.0)]).unwrap();
        let b = random_walks(&g, 0, 10_000, 2, RngState::new(3)).unwrap();
        let hits = b.walks.iter().filter(|w| w[1] == 1).count();
        assert!(binomial_ok(hits, 10_000, 2.0 / 3.0), "{hits}");
    }

    #[test]
    fn isolated_root_pads() {
        let g = Graph::empty(3);
        let b = random_walks(&g, 2, 3, 4, RngState::new(0)).unwrap();
        assert!(b.padded);
        assert!(b.walks.iter().all(|w| w == &vec![2, 2, 2, 2]));
        let f = bundle_to_subgraph(&b);
        assert_eq!(f.nodes, vec![2]);
        assert!(f.edges.is_empty());
        assert!(random_walks(&g, 3, 1, 1, RngState::new(0)).is_err());
    }

    #[test]
    fn triangle_cover() {
        let b = WalkBundle {
            root: 0,
            walks: vec![vec![0, 1, 2], vec![0, 2, 1]],
            padded: false,
        };
        let f = bundle_to_subgraph(&b);
        assert_eq!(f.edges, vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(f.local_graph().edge_count(), 3);
    }

    #[test]
    fn deterministic_per_stream() {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)]).unwrap();
        let a = walks_for_roots(&g, &[0, 1, 2], 4, 6, RngState::new(8)).unwrap();
        let b = walks_for_roots(&g, &[0, 1, 2], 4, 6, RngState::new(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn steps_follow_edges() {
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (1, 4)]).unwrap();
        let b = random_walks(&g, 1, 20, 10, RngState::new(4)).unwrap();
        for w in &b.walks {
            assert_eq!(w[0], 1);
            for p in w.windows(2) {
                assert!(g.has_edge(p[0], p[1]));
            }
        }
        for (u, v) in bundle_to_subgraph(&b).edges {
            assert!(g.has_edge(u, v));
        }
    }

    #[test]
    fn regular_graph_visits_uniformly() {
        // Circulant 4-regular graph on 12 nodes: stationary law is uniform.
        let n = 12;
        let edges: Vec<_> = (0..n)
            .flat_map(|i| [(i, (i + 1) % n), (i, (i + 2) % n)])
            .collect();
        let g = Graph::from_edges(n, &edges).unwrap();
        let b = random_walks(&g, 0, 200, 400, RngState::new(6)).unwrap();
        let mut visits = vec![0usize; n];
        let mut total = 0;
        for w in &b.walks {
            for &v in &w[100..] {
                visits[v] += 1;
                total += 1;
            }
        }
        // Steps within a walk are correlated; use the walk count for the
        // variance of per-walk visit fractions.
        for (v, &c) in visits.iter().enumerate() {
            let frac = c as f64 / total as f64;
            let per_walk: Vec<f64> = b
                .walks
                .iter()
                .map(|w| w[100..].iter().filter(|&&x| x == v).count() as f64 / 300.0)
                .collect();
            let m = per_walk.iter().sum::<f64>() / per_walk.len() as f64;
            let sd = (per_walk.iter().map(|x| (x - m).powi(2)).sum::<f64>()
                / (per_walk.len() - 1) as f64)
                .sqrt();
            let se = sd / (per_walk.len() as f64).sqrt();
            assert!(
                (frac - 1.0 / n as f64).abs() <= 3.0 * se,
                "node {v}: {frac}"
            );
        }
    }
}
