//! Canonical labelling of small undirected graphs and the fixed motif
//! catalog used throughout the pipeline.
//!
//! Graphs on at most five vertices are encoded as upper-triangle bit strings:
//! the pair `(i, j)` with `i < j` lives at bit `j(j-1)/2 + i`. Appending a
//! vertex therefore only appends bits, which lets the census extend codes
//! incrementally. The canonical code is the minimum bit string over all
//! vertex orders, made cheap by precomputed permutation tables.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::error::{invalid, Result};

pub const MAX_PATTERN_SIZE: usize = 5;

/// Marker for "no catalog pattern" in lookup tables.
pub(crate) const NO_PATTERN: u8 = u8::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalCode {
    pub size: u8,
    pub bits: u16,
}

#[inline]
pub(crate) fn pair_bit(i: usize, j: usize) -> u16 {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    1 << (b * (b - 1) / 2 + a)
}

pub(crate) fn pair_count(k: usize) -> usize {
    k * (k - 1) / 2
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                go(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

/// For each size k, the canonical bit string of every raw bit string.
fn canonical_tables() -> &'static [Vec<u16>; MAX_PATTERN_SIZE + 1] {
    static TABLES: OnceLock<[Vec<u16>; MAX_PATTERN_SIZE + 1]> = OnceLock::new();
    TABLES.get_or_init(|| {
        std::array::from_fn(|k| {
            if k < 2 {
                return vec![0];
            }
            let perms = permutations(k);
            let pairs: Vec<(usize, usize)> =
                (0..k).flat_map(|j| (0..j).map(move |i| (i, j))).collect();
            // Each permutation as a map from source bit to target bit.
            let bit_maps: Vec<Vec<u16>> = perms
                .iter()
                .map(|p| pairs.iter().map(|&(i, j)| pair_bit(p[i], p[j])).collect())
                .collect();
            (0..1u32 << pairs.len())
                .map(|raw| {
                    bit_maps
                        .iter()
                        .map(|m| {
                            m.iter()
                                .enumerate()
                                .filter(|(b, _)| raw >> b & 1 == 1)
                                .fold(0u16, |acc, (_, &t)| acc | t)
                        })
                        .min()
                        .unwrap()
                })
                .collect()
        })
    })
}

fn bits_connected(k: usize, bits: u16) -> bool {
    if k <= 1 {
        return true;
    }
    let mut seen = 1u32;
    let mut frontier = vec![0usize];
    while let Some(u) = frontier.pop() {
        for v in 0..k {
            if v != u && seen >> v & 1 == 0 && bits & pair_bit(u, v) != 0 {
                seen |= 1 << v;
                frontier.push(v);
            }
        }
    }
    seen == (1 << k) - 1
}

pub(crate) fn canonical_bits(k: usize, raw: u16) -> u16 {
    canonical_tables()[k][raw as usize]
}

fn bits_from_edges(k: usize, edges: &[(usize, usize)]) -> Result<u16> {
    let mut bits = 0;
    for &(u, v) in edges {
        if u >= k || v >= k || u == v {
            return Err(invalid(format!(
                "pattern edge ({u}, {v}) invalid for {k} vertices"
            )));
        }
        bits |= pair_bit(u, v);
    }
    Ok(bits)
}

/// Isomorphism-invariant code of a connected graph on at most five vertices.
///
/// `adj` must be a square symmetric 0/1 matrix with zero diagonal.
pub fn canonical_code(adj: &Array2<u8>) -> Result<CanonicalCode> {
    let k = adj.nrows();
    if adj.ncols() != k {
        return Err(invalid("adjacency must be square"));
    }
    if k == 0 || k > MAX_PATTERN_SIZE {
        return Err(invalid(format!(
            "canonical codes cover 1..={MAX_PATTERN_SIZE} vertices, got {k}"
        )));
    }
    let mut bits = 0u16;
    for i in 0..k {
        if adj[[i, i]] != 0 {
            return Err(invalid("adjacency has a self-loop"));
        }
        for j in 0..k {
            let a = adj[[i, j]];
            if a > 1 || a != adj[[j, i]] {
                return Err(invalid("adjacency must be symmetric 0/1"));
            }
            if i < j && a == 1 {
                bits |= pair_bit(i, j);
            }
        }
    }
    if !bits_connected(k, bits) {
        return Err(invalid("canonical_code requires a connected graph"));
    }
    Ok(CanonicalCode {
        size: k as u8,
        bits: canonical_bits(k, bits),
    })
}

/// One catalog entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub id: String,
    pub size: usize,
    pub edges: Vec<(usize, usize)>,
    pub code: CanonicalCode,
}

impl Pattern {
    pub fn new(id: &str, size: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if !(2..=MAX_PATTERN_SIZE).contains(&size) {
            return Err(invalid(format!("pattern {id}: size {size} unsupported")));
        }
        let bits = bits_from_edges(size, edges)?;
        if !bits_connected(size, bits) {
            return Err(invalid(format!("pattern {id} is not connected")));
        }
        Ok(Self {
            id: id.to_string(),
            size,
            edges: edges.to_vec(),
            code: CanonicalCode {
                size: size as u8,
                bits: canonical_bits(size, bits),
            },
        })
    }

    fn is_star(&self) -> bool {
        self.edges.len() == self.size - 1
            && (0..self.size).any(|c| self.edges.iter().all(|&(u, v)| u == c || v == c))
    }
}

/// Ordered list of connected patterns; position in the list is the bin index
/// of every motif distribution built against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Pattern>", into = "Vec<Pattern>")]
pub struct MotifCatalog {
    patterns: Vec<Pattern>,
    #[serde(skip)]
    lookup: [Vec<u8>; MAX_PATTERN_SIZE + 1],
}

impl TryFrom<Vec<Pattern>> for MotifCatalog {
    type Error = crate::error::Error;

    fn try_from(patterns: Vec<Pattern>) -> Result<Self> {
        let rebuilt = patterns
            .iter()
            .map(|p| Pattern::new(&p.id, p.size, &p.edges))
            .collect::<Result<Vec<_>>>()?;
        MotifCatalog::new(rebuilt)
    }
}

impl From<MotifCatalog> for Vec<Pattern> {
    fn from(c: MotifCatalog) -> Self {
        c.patterns
    }
}

impl MotifCatalog {
    pub fn new(patterns: Vec<Pattern>) -> Result<Self> {
        if patterns.is_empty() {
            return Err(invalid("motif catalog is empty"));
        }
        if patterns.len() >= NO_PATTERN as usize {
            return Err(invalid("motif catalog too large"));
        }
        let mut lookup: [Vec<u8>; MAX_PATTERN_SIZE + 1] = Default::default();
        for (idx, p) in patterns.iter().enumerate() {
            let k = p.size;
            if lookup[k].is_empty() {
                lookup[k] = vec![NO_PATTERN; 1 << pair_count(k)];
            }
            for raw in 0..lookup[k].len() {
                if canonical_bits(k, raw as u16) == p.code.bits {
                    if lookup[k][raw] != NO_PATTERN {
                        return Err(invalid(format!(
                            "patterns {} and {} are isomorphic",
                            patterns[lookup[k][raw] as usize].id, p.id
                        )));
                    }
                    lookup[k][raw] = idx as u8;
                }
            }
        }
        Ok(Self { patterns, lookup })
    }

    /// The nine-pattern catalog: both connected 3-node graphs, all six
    /// connected 4-node graphs and the 5-node star.
    pub fn standard() -> Self {
        let spec: [(&str, usize, &[(usize, usize)]); 9] = [
            ("M3,1", 3, &[(0, 1), (1, 2)]),
            ("M3,2", 3, &[(0, 1), (1, 2), (0, 2)]),
            ("M4,1", 4, &[(0, 1), (1, 2), (2, 3)]),
            ("M4,2", 4, &[(0, 1), (0, 2), (0, 3)]),
            ("M4,3", 4, &[(0, 1), (1, 2), (0, 2), (2, 3)]),
            ("M4,4", 4, &[(0, 1), (1, 2), (2, 3), (3, 0)]),
            ("M4,5", 4, &[(0, 1), (0, 2), (0, 3), (1, 2), (2, 3)]),
            ("M4,6", 4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]),
            ("M5,1", 5, &[(0, 1), (0, 2), (0, 3), (0, 4)]),
        ];
        let patterns = spec
            .iter()
            .map(|(id, k, e)| Pattern::new(id, *k, e).expect("built-in pattern"))
            .collect();
        Self::new(patterns).expect("built-in catalog")
    }

    /// Sub-catalog keeping only the listed ids, in catalog order.
    pub fn subset(&self, ids: &[&str]) -> Result<Self> {
        for id in ids {
            if self.index_of(id).is_none() {
                return Err(invalid(format!("unknown pattern id {id}")));
            }
        }
        Self::new(
            self.patterns
                .iter()
                .filter(|p| ids.contains(&p.id.as_str()))
                .cloned()
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn ids(&self) -> Vec<&str> {
        self.patterns.iter().map(|p| p.id.as_str()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.patterns.iter().position(|p| p.id == id)
    }

    pub fn max_size(&self) -> usize {
        self.patterns.iter().map(|p| p.size).max().unwrap_or(0)
    }

    pub(crate) fn lookup(&self, size: usize) -> &[u8] {
        &self.lookup[size]
    }

    pub(crate) fn has_size(&self, size: usize) -> bool {
        !self.lookup[size].is_empty()
    }

    /// Index of the 5-node star if it is the only 5-node pattern.
    pub(crate) fn star5_only(&self) -> Option<usize> {
        let five: Vec<usize> = (0..self.patterns.len())
            .filter(|&i| self.patterns[i].size == 5)
            .collect();
        match five.as_slice() {
            [i] if self.patterns[*i].is_star() => Some(*i),
            _ => None,
        }
    }

    /// Classifies a connected vertex set given its raw pair bits.
    pub fn classify(&self, size: usize, raw_bits: u16) -> Option<usize> {
        self.lookup
            .get(size)
            .and_then(|t| t.get(raw_bits as usize))
            .filter(|&&i| i != NO_PATTERN)
            .map(|&i| i as usize)
    }
}

impl Default for MotifCatalog {
    fn default() -> Self {
        Self::standard()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use rand::seq::SliceRandom;

    fn adj(k: usize, edges: &[(usize, usize)]) -> Array2<u8> {
        let mut a = Array2::zeros((k, k));
        for &(u, v) in edges {
            a[[u, v]] = 1;
            a[[v, u]] = 1;
        }
        a
    }

    fn relabel(k: usize, edges: &[(usize, usize)], perm: &[usize]) -> Array2<u8> {
        let e: Vec<_> = edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        adj(k, &e)
    }

    #[test]
    fn triangle_is_order_free() {
        let base = canonical_code(&adj(3, &[(0, 1), (1, 2), (0, 2)])).unwrap();
        for p in permutations(3) {
            assert_eq!(
                canonical_code(&relabel(3, &[(0, 1), (1, 2), (0, 2)], &p)).unwrap(),
                base
            );
        }
    }

    #[test]
    fn path_reversal() {
        let a = canonical_code(&adj(4, &[(0, 1), (1, 2), (2, 3)])).unwrap();
        let b = canonical_code(&adj(4, &[(3, 2), (2, 1), (1, 0)])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn paw_differs_from_cycle() {
        let paw = canonical_code(&adj(4, &[(0, 1), (1, 2), (0, 2), (2, 3)])).unwrap();
        let c4 = canonical_code(&adj(4, &[(0, 1), (1, 2), (2, 3), (3, 0)])).unwrap();
        assert_ne!(paw, c4);
    }

    #[test]
    fn rejects_disconnected_and_malformed() {
        assert!(canonical_code(&adj(4, &[(0, 1), (2, 3)])).is_err());
        let mut a = adj(3, &[(0, 1), (1, 2)]);
        a[[0, 1]] = 0;
        assert!(canonical_code(&a).is_err());
        assert!(canonical_code(&Array2::zeros((6, 6))).is_err());
    }

    /// Brute-force isomorphism: some permutation maps one edge set onto the other.
    fn isomorphic(k: usize, a: &[(usize, usize)], b: &[(usize, usize)]) -> bool {
        let target = adj(k, b);
        permutations(k).iter().any(|p| relabel(k, a, p) == target)
    }

    #[test]
    fn codes_agree_with_brute_force_isomorphism() {
        let mut rng = RngState::new(3).rng();
        for k in 3..=5 {
            let pairs: Vec<(usize, usize)> =
                (0..k).flat_map(|j| (0..j).map(move |i| (i, j))).collect();
            let graphs: Vec<Vec<(usize, usize)>> = (0..40)
                .map(|_| {
                    let mut e = pairs.clone();
                    e.shuffle(&mut rng);
                    e.truncate(k + (e.len() - k) / 2);
                    e
                })
                .filter(|e| bits_connected(k, bits_from_edges(k, e).unwrap()))
                .collect();
            for a in &graphs {
                for b in &graphs {
                    let same =
                        canonical_code(&adj(k, a)).unwrap() == canonical_code(&adj(k, b)).unwrap();
                    assert_eq!(same, isomorphic(k, a, b));
                }
            }
        }
    }

    #[test]
    fn standard_catalog_shape() {
        let c = MotifCatalog::standard();
        assert_eq!(c.len(), 9);
        assert_eq!(c.max_size(), 5);
        assert_eq!(c.star5_only(), Some(8));
        let mut codes: Vec<_> = c.patterns().iter().map(|p| p.code).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), 9);
        // Every connected 4-vertex graph is in the catalog.
        let connected4 = (0u16..64)
            .filter(|&b| bits_connected(4, b))
            .map(|b| canonical_bits(4, b))
            .collect::<std::collections::BTreeSet<_>>();
        assert_eq!(connected4.len(), 6);
        for b in connected4 {
            assert!(c.classify(4, b).is_some());
        }
    }

    #[test]
    fn catalog_rejects_duplicates() {
        let a = Pattern::new("a", 3, &[(0, 1), (1, 2)]).unwrap();
        let b = Pattern::new("b", 3, &[(0, 2), (2, 1)]).unwrap();
        assert!(MotifCatalog::new(vec![a, b]).is_err());
        assert!(Pattern::new("x", 4, &[(0, 1), (2, 3)]).is_err());
    }

    #[test]
    fn catalog_serde_round_trip() {
        let c = MotifCatalog::standard();
        let s = serde_json::to_string(&c).unwrap();
        let back: MotifCatalog = serde_json::from_str(&s).unwrap();
        assert_eq!(back.ids(), c.ids());
        assert_eq!(back.classify(3, 0b111), Some(1));
    }
}
