#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use segmotif::graph::Graph;

/// Induced pattern counts by direct subset enumeration, in standard catalog
/// order. Four-node graphs are told apart by edge count and degree sequence,
/// which is enough for the six connected ones.
pub fn brute_census(g: &Graph) -> Vec<u64> {
    let n = g.node_count();
    assert!(n <= 20);
    let mut counts = vec![0u64; 9];
    for mask in 0u32..(1 << n) {
        let k = mask.count_ones() as usize;
        if !(3..=5).contains(&k) {
            continue;
        }
        let nodes: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let mut deg = vec![0usize; k];
        let mut edges = 0;
        for a in 0..k {
            for b in a + 1..k {
                if g.has_edge(nodes[a], nodes[b]) {
                    deg[a] += 1;
                    deg[b] += 1;
                    edges += 1;
                }
            }
        }
        if !connected(g, &nodes) {
            continue;
        }
        deg.sort_unstable();
        let slot = match (k, edges, deg.as_slice()) {
            (3, 2, _) => Some(0),
            (3, 3, _) => Some(1),
            (4, 3, [1, 1, 2, 2]) => Some(2),
            (4, 3, [1, 1, 1, 3]) => Some(3),
            (4, 4, [1, 2, 2, 3]) => Some(4),
            (4, 4, [2, 2, 2, 2]) => Some(5),
            (4, 5, _) => Some(6),
            (4, 6, _) => Some(7),
            (5, 4, [1, 1, 1, 1, 4]) => Some(8),
            _ => None,
        };
        if let Some(s) = slot {
            counts[s] += 1;
        }
    }
    counts
}

fn connected(g: &Graph, nodes: &[usize]) -> bool {
    let mut seen = vec![false; nodes.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(a) = stack.pop() {
        for b in 0..nodes.len() {
            if !seen[b] && g.has_edge(nodes[a], nodes[b]) {
                seen[b] = true;
                stack.push(b);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

pub fn gnp(n: usize, p: f64, seed: u64) -> Graph {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

/// Uniform graph with exactly `m` edges.
pub fn gnm(n: usize, m: usize, seed: u64) -> Graph {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut set = std::collections::BTreeSet::new();
    while set.len() < m {
        let (u, v) = (r.random_range(0..n), r.random_range(0..n));
        if u != v {
            set.insert((u.min(v), u.max(v)));
        }
    }
    Graph::from_edges(n, &set.into_iter().collect::<Vec<_>>()).unwrap()
}
