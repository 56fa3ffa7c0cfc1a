//! Motif-guided rewiring of one graph view.
//!
//! Every node in scope is matched to the prototype library by its local motif
//! distribution. Its adjacency row is then pulled toward the row of a target
//! node with weight `clamp(alpha * KL, 0, 1)` and thresholded at `beta`.
//! Motif matching and KL are computed once against the original graph.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, GraphView};
use crate::model::ProjectionRecord;
use crate::motif::{MotifCatalog, MotifDistribution};
use crate::segregation::{morans_i, MoranWeights};
use crate::walk::fragment_distribution;

/// Tolerance on the unit sum of a probability vector.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Class index of the low-segregation label.
pub const LOW_CLASS: usize = 0;
/// Class index of the high-segregation label.
pub const HIGH_CLASS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SimilarityKind {
    #[default]
    Cosine,
    NegKl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TargetPolicy {
    /// Root of the low-segregation prototype that best matches the node.
    #[default]
    Auto,
    Node(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Scope {
    #[default]
    High,
    Low,
    All,
    Nodes(Vec<usize>),
}

/// How the row-wise result is turned back into an undirected edge set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SymmetryRule {
    /// Edge present if either endpoint's row has it.
    #[default]
    Or,
    /// Edge present only if both rows have it.
    And,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructConfig {
    pub alpha: f64,
    pub beta: f64,
    pub target: TargetPolicy,
    pub scope: Scope,
    pub symmetry: SymmetryRule,
    pub similarity: SimilarityKind,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            beta: 0.3,
            target: TargetPolicy::Auto,
            scope: Scope::High,
            symmetry: SymmetryRule::Or,
            similarity: SimilarityKind::Cosine,
        }
    }
}

impl ReconstructConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        check_beta(self.beta)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("beta must lie in (0, 1), got {beta}")));
    }
    Ok(())
}

/// A prototype's motif profile and the node its projection landed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub prototype: usize,
    pub class: usize,
    pub root: usize,
    pub distribution: MotifDistribution,
}

/// Library for one view, built from projection records.
pub fn build_library(
    records: &[ProjectionRecord],
    view: GraphView,
    catalog: &MotifCatalog,
) -> Vec<LibraryEntry> {
    records
        .iter()
        .filter(|r| r.view == view)
        .map(|r| LibraryEntry {
            prototype: r.prototype,
            class: r.class,
            root: r.root,
            distribution: fragment_distribution(&r.bundle, catalog),
        })
        .collect()
}

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    if p.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(invalid(format!("{name} must be strictly positive")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(invalid(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

/// `sum p_k ln(p_k / q_k)` over smoothed, normalised vectors.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} bins",
            p.len(),
            q.len()
        )));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    let kl: f64 = p.iter().zip(q).map(|(&a, &b)| a * (a / b).ln()).sum();
    Ok(kl.max(0.0))
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn similarity(kind: SimilarityKind, node: &[f64], entry: &[f64]) -> Result<f64> {
    match kind {
        SimilarityKind::Cosine => Ok(cosine_similarity(node, entry)),
        SimilarityKind::NegKl => kl_divergence(node, entry).map(|d| -d),
    }
}

/// Index into `library` of the best match; ties go to the earlier entry.
pub fn match_motif(
    node: &MotifDistribution,
    library: &[LibraryEntry],
    kind: SimilarityKind,
) -> Result<usize> {
    best_match(node, library.iter().enumerate(), kind)?
        .ok_or_else(|| invalid("empty prototype library"))
}

fn best_match<'a>(
    node: &MotifDistribution,
    entries: impl Iterator<Item = (usize, &'a LibraryEntry)>,
    kind: SimilarityKind,
) -> Result<Option<usize>> {
    let mut best: Option<(usize, f64)> = None;
    for (k, e) in entries {
        if e.distribution.len() != node.len() {
            return Err(Error::DimensionMismatch(format!(
                "node distribution has {} bins, prototype {} has {}",
                node.len(),
                e.prototype,
                e.distribution.len()
            )));
        }
        let s = similarity(kind, &node.normalized, &e.distribution.normalized)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    Ok(best.map(|(k, _)| k))
}

/// The real-valued update of one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowBlend {
    pub node: usize,
    /// Library index of `m_i`.
    pub matched: usize,
    /// Library index supplying `m_tar`.
    pub target_entry: usize,
    pub target_node: usize,
    pub kl: f64,
    /// `clamp(alpha * kl, 0, 1)`.
    pub weight: f64,
    /// Blended row as sparse `(column, value)` pairs, zeros omitted, sorted.
    pub blended: Vec<(usize, f64)>,
}

impl RowBlend {
    /// Columns whose blended value exceeds `beta`, excluding the diagonal.
    pub fn thresholded(&self, beta: f64) -> Vec<usize> {
        self.blended
            .iter()
            .filter(|&&(j, v)| j != self.node && v > beta)
            .map(|&(j, _)| j)
            .collect()
    }
}

/// Per-row blends for one view; independent of `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionPlan {
    pub view: GraphView,
    pub alpha: f64,
    pub rows: Vec<RowBlend>,
    /// Scoped nodes whose motif census was empty.
    pub zero_count_nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub view: GraphView,
    pub alpha: f64,
    pub beta: f64,
    pub original_edges: usize,
    pub added: usize,
    pub removed: usize,
    pub unchanged: usize,
    pub aep: f64,
    pub rep: f64,
    pub uep: f64,
    /// Moran's I of the segregation scores, edge-weighted.
    pub morans_before: f64,
    pub morans_after: f64,
    /// Moran's I of the class labels, edge-weighted.
    pub morans_label_before: f64,
    pub morans_label_after: f64,
    /// Moran's I of the segregation scores with unit weights.
    pub morans_binary_before: f64,
    pub morans_binary_after: f64,
    pub changed_rows: Vec<usize>,
}

/// Node attributes needed to scope a rewrite and score it.
#[derive(Debug, Clone, Copy)]
pub struct NodeValues<'a> {
    pub seg_score: &'a [f64],
    pub labels: &'a [usize],
}

pub fn scope_nodes(scope: &Scope, labels: &[usize]) -> Result<Vec<usize>> {
    let n = labels.len();
    let pick = |c: usize| (0..n).filter(|&i| labels[i] == c).collect();
    Ok(match scope {
        Scope::High => pick(HIGH_CLASS),
        Scope::Low => pick(LOW_CLASS),
        Scope::All => (0..n).collect(),
        Scope::Nodes(nodes) => {
            if let Some(&bad) = nodes.iter().find(|&&i| i >= n) {
                return Err(invalid(format!(
                    "scope node {bad} outside graph of {n} nodes"
                )));
            }
            nodes
                .iter()
                .copied()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        }
    })
}

fn adjacency_row(g: &Graph, i: usize) -> impl Iterator<Item = usize> + '_ {
    g.neighbors(i).iter().map(|&(j, _)| j)
}

/// Computes the blend of every scoped row. `node_dists[i]` is the local motif
/// distribution of node `i` in `g`.
pub fn plan(
    g: &Graph,
    view: GraphView,
    node_dists: &[MotifDistribution],
    library: &[LibraryEntry],
    labels: &[usize],
    cfg: &ReconstructConfig,
) -> Result<ReconstructionPlan> {
    cfg.validate()?;
    let n = g.node_count();
    if node_dists.len() != n || labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} distributions and {} labels for {n} nodes",
            node_dists.len(),
            labels.len()
        )));
    }
    if library.is_empty() {
        return Err(invalid("empty prototype library"));
    }
    let explicit = match cfg.target {
        TargetPolicy::Node(t) if t >= n => {
            return Err(invalid(format!(
                "target node {t} outside graph of {n} nodes"
            )));
        }
        TargetPolicy::Node(t) => Some((t, match_motif(&node_dists[t], library, cfg.similarity)?)),
        TargetPolicy::Auto => None,
    };
    if explicit.is_none() && !library.iter().any(|e| e.class == LOW_CLASS) {
        return Err(invalid(
            "library has no low-segregation prototype to target",
        ));
    }
    if let Some(e) = library.iter().find(|e| e.root >= n) {
        return Err(invalid(format!(
            "prototype {} rooted outside the graph",
            e.prototype
        )));
    }

    let mut rows = Vec::new();
    let mut zero_count_nodes = Vec::new();
    for i in scope_nodes(&cfg.scope, labels)? {
        let dist = &node_dists[i];
        if dist.total() == 0 {
            zero_count_nodes.push(i);
        }
        let matched = match_motif(dist, library, cfg.similarity)?;
        let (target_node, target_entry) = match explicit {
            Some(t) => t,
            None => {
                let low = library
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.class == LOW_CLASS);
                let k = best_match(dist, low, cfg.similarity)?.expect("low prototypes exist");
                (library[k].root, k)
            }
        };
        let kl = kl_divergence(
            &library[matched].distribution.normalized,
            &library[target_entry].distribution.normalized,
        )?;
        let weight = (cfg.alpha * kl).clamp(0.0, 1.0);
        rows.push(RowBlend {
            node: i,
            matched,
            target_entry,
            target_node,
            kl,
            weight,
            blended: blend(g, i, target_node, weight),
        });
    }
    if !zero_count_nodes.is_empty() {
        log::warn!(
            "{} nodes have an empty motif census and were matched on the smoothed uniform profile",
            zero_count_nodes.len()
        );
    }
    Ok(ReconstructionPlan {
        view,
        alpha: cfg.alpha,
        rows,
        zero_count_nodes,
    })
}

fn blend(g: &Graph, i: usize, tar: usize, w: f64) -> Vec<(usize, f64)> {
    let own: BTreeSet<usize> = adjacency_row(g, i).collect();
    let other: BTreeSet<usize> = adjacency_row(g, tar).collect();
    own.union(&other)
        .map(|&j| {
            let a = if own.contains(&j) { 1.0 } else { 0.0 };
            let b = if other.contains(&j) { 1.0 } else { 0.0 };
            (j, (1.0 - w) * a + w * b)
        })
        .filter(|&(_, v)| v != 0.0)
        .collect()
}

/// Applies a plan at threshold `beta`. Surviving edges keep their weight; a
/// new edge takes the weight of the target-row edge it was copied from.
pub fn apply(g: &Graph, plan: &ReconstructionPlan, beta: f64, rule: SymmetryRule) -> Result<Graph> {
    check_beta(beta)?;
    let n = g.node_count();
    let mut rows: Vec<Option<BTreeSet<usize>>> = vec![None; n];
    let mut inherited: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for r in &plan.rows {
        if r.node >= n || r.target_node >= n {
            return Err(invalid(format!("plan row {} outside graph", r.node)));
        }
        let set: BTreeSet<usize> = r.thresholded(beta).into_iter().collect();
        for &j in &set {
            if let Some(w) = g
                .weight(r.target_node, j)
                .filter(|_| !g.has_edge(r.node, j))
            {
                let e = inherited.entry((r.node.min(j), r.node.max(j))).or_insert(w);
                *e = e.max(w);
            }
        }
        rows[r.node] = Some(set);
    }
    let has = |i: usize, j: usize| match &rows[i] {
        Some(set) => set.contains(&j),
        None => g.has_edge(i, j),
    };
    let mut candidates: BTreeSet<(usize, usize)> = g
        .edges()
        .iter()
        .map(|&(u, v, _)| (u.min(v), u.max(v)))
        .collect();
    candidates.extend(inherited.keys().copied());
    let kept = candidates.into_iter().filter(|&(u, v)| match rule {
        SymmetryRule::Or => has(u, v) || has(v, u),
        SymmetryRule::And => has(u, v) && has(v, u),
    });
    let edges: Vec<(usize, usize, f64)> = kept
        .map(|(u, v)| {
            (
                u,
                v,
                g.weight(u, v)
                    .or_else(|| inherited.get(&(u, v)).copied())
                    .unwrap_or(1.0),
            )
        })
        .collect();
    Graph::from_weighted_edges(n, edges).map(|(g, _)| g)
}

/// Edge-set difference `(added, removed, unchanged)`.
pub fn edge_diff(before: &Graph, after: &Graph) -> (usize, usize, usize) {
    let unchanged = before
        .edges()
        .iter()
        .filter(|&&(u, v, _)| after.has_edge(u, v))
        .count();
    (
        after.edge_count() - unchanged,
        before.edge_count() - unchanged,
        unchanged,
    )
}

fn percent(k: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * k as f64 / total as f64
    }
}

pub fn report(
    before: &Graph,
    after: &Graph,
    plan: &ReconstructionPlan,
    beta: f64,
    values: NodeValues<'_>,
) -> Result<ReconstructionReport> {
    let (added, removed, unchanged) = edge_diff(before, after);
    let m = before.edge_count();
    let labels: Vec<f64> = values.labels.iter().map(|&l| l as f64).collect();
    let moran = |g: &Graph, v: &[f64]| morans_i(g, v, MoranWeights::EdgeWeight);
    let binary = |g: &Graph, v: &[f64]| morans_i(g, v, MoranWeights::Binary);
    let changed_rows = plan
        .rows
        .iter()
        .filter(|r| {
            let new = r.thresholded(beta);
            !new.iter().copied().eq(adjacency_row(before, r.node))
        })
        .map(|r| r.node)
        .collect();
    Ok(ReconstructionReport {
        view: plan.view,
        alpha: plan.alpha,
        beta,
        original_edges: m,
        added,
        removed,
        unchanged,
        aep: percent(added, m),
        rep: percent(removed, m),
        uep: percent(unchanged, m),
        morans_before: moran(before, values.seg_score)?,
        morans_after: moran(after, values.seg_score)?,
        morans_label_before: moran(before, &labels)?,
        morans_label_after: moran(after, &labels)?,
        morans_binary_before: binary(before, values.seg_score)?,
        morans_binary_after: binary(after, values.seg_score)?,
        changed_rows,
    })
}

/// One plan, applied at `cfg.beta`.
pub fn reconstruct(
    g: &Graph,
    view: GraphView,
    node_dists: &[MotifDistribution],
    library: &[LibraryEntry],
    values: NodeValues<'_>,
    cfg: &ReconstructConfig,
) -> Result<(Graph, ReconstructionReport)> {
    let p = plan(g, view, node_dists, library, values.labels, cfg)?;
    let out = apply(g, &p, cfg.beta, cfg.symmetry)?;
    let rep = report(g, &out, &p, cfg.beta, values)?;
    Ok((out, rep))
}

/// One report per threshold, all from the same plan.
pub fn sweep(
    g: &Graph,
    view: GraphView,
    node_dists: &[MotifDistribution],
    library: &[LibraryEntry],
    values: NodeValues<'_>,
    cfg: &ReconstructConfig,
    betas: &[f64],
) -> Result<Vec<ReconstructionReport>> {
    let p = plan(g, view, node_dists, library, values.labels, cfg)?;
    betas
        .iter()
        .map(|&b| {
            let out = apply(g, &p, b, cfg.symmetry)?;
            report(g, &out, &p, b, values)
        })
        .collect()
}

/// Writes reports as `alpha,beta,AEP,REP,UEP,morans_before,morans_after`.
pub fn write_sweep_csv<W: std::io::Write>(reports: &[ReconstructionReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "alpha",
        "beta",
        "AEP",
        "REP",
        "UEP",
        "morans_before",
        "morans_after",
    ])?;
    for r in reports {
        w.write_record(
            [
                r.alpha,
                r.beta,
                r.aep,
                r.rep,
                r.uep,
                r.morans_before,
                r.morans_after,
            ]
            .map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dist(counts: &[u64]) -> MotifDistribution {
        MotifDistribution::from_counts(counts.to_vec())
    }

    fn entry(prototype: usize, class: usize, root: usize, counts: &[u64]) -> LibraryEntry {
        LibraryEntry {
            prototype,
            class,
            root,
            distribution: dist(counts),
        }
    }

    #[test]
    fn kl_examples() {
        let p = [0.9, 0.1];
        let q = [0.5, 0.5];
        assert_abs_diff_eq!(kl_divergence(&p, &q).unwrap(), 0.3681, epsilon = 1e-4);
        assert_abs_diff_eq!(kl_divergence(&q, &p).unwrap(), 0.5108, epsilon = 1e-4);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let e = 1e-12;
        assert_abs_diff_eq!(
            kl_divergence(&[1.0 - e, e], &q).unwrap(),
            2f64.ln(),
            epsilon = 1e-9
        );
        assert!(kl_divergence(&[0.5, 0.4], &q).is_err());
        assert!(kl_divergence(&[1.0, 0.0], &q).is_err());
        assert!(kl_divergence(&[1.0], &q).is_err());
    }

    #[test]
    fn matching_examples() {
        let chain = entry(0, LOW_CLASS, 0, &[10, 0, 6, 0]);
        let cycle = entry(1, HIGH_CLASS, 1, &[2, 8, 1, 5]);
        let lib = vec![chain.clone(), cycle.clone()];
        assert_eq!(
            match_motif(&dist(&[12, 1, 5, 0]), &lib, SimilarityKind::Cosine).unwrap(),
            0
        );
        assert_eq!(
            match_motif(&cycle.distribution, &lib, SimilarityKind::NegKl).unwrap(),
            1
        );
        assert_eq!(
            match_motif(&dist(&[0, 9, 0, 0]), &lib[1..], SimilarityKind::Cosine).unwrap(),
            0
        );
        let twins = vec![cycle.clone(), cycle];
        assert_eq!(
            match_motif(&dist(&[1, 1, 1, 1]), &twins, SimilarityKind::Cosine).unwrap(),
            0
        );
        assert!(match_motif(&dist(&[1, 1, 1, 1]), &[], SimilarityKind::Cosine).is_err());
    }

    /// 0-1-2-3-4-5 path plus a triangle 6-7-8 joined at 5-6.
    fn toy() -> (Graph, Vec<usize>) {
        let g = Graph::from_edges(
            9,
            &[
                (0, 1),
                (1, 2),
                (2, 3),
                (3, 4),
                (4, 5),
                (5, 6),
                (6, 7),
                (7, 8),
                (8, 6),
            ],
        )
        .unwrap();
        (g, vec![0, 0, 0, 0, 0, 0, 1, 1, 1])
    }

    fn toy_library() -> Vec<LibraryEntry> {
        vec![
            entry(0, LOW_CLASS, 2, &[9, 0, 3, 0]),
            entry(1, HIGH_CLASS, 7, &[1, 6, 0, 2]),
        ]
    }

    fn toy_dists() -> Vec<MotifDistribution> {
        (0..9)
            .map(|i| {
                if i >= 6 {
                    dist(&[1, 5, 0, 1])
                } else {
                    dist(&[8, 0, 2, 0])
                }
            })
            .collect()
    }

    fn scores() -> Vec<f64> {
        vec![0.1, 0.2, 0.1, 0.3, 0.2, 0.4, 0.9, 0.8, 0.95]
    }

    #[test]
    fn alpha_zero_is_identity() {
        let (g, labels) = toy();
        let cfg = ReconstructConfig {
            alpha: 0.0,
            ..ReconstructConfig::default()
        };
        let s = scores();
        let v = NodeValues {
            seg_score: &s,
            labels: &labels,
        };
        let (out, rep) = reconstruct(
            &g,
            GraphView::Spatial,
            &toy_dists(),
            &toy_library(),
            v,
            &cfg,
        )
        .unwrap();
        assert_eq!(out, g);
        assert_eq!((rep.aep, rep.rep, rep.uep), (0.0, 0.0, 100.0));
        assert!(rep.changed_rows.is_empty());
    }

    #[test]
    fn full_weight_copies_target_row() {
        let (g, labels) = toy();
        let cfg = ReconstructConfig {
            alpha: 1.0,
            beta: 0.5,
            ..ReconstructConfig::default()
        };
        let p = plan(
            &g,
            GraphView::Spatial,
            &toy_dists(),
            &toy_library(),
            &labels,
            &cfg,
        )
        .unwrap();
        assert_eq!(p.rows.len(), 3);
        for r in &p.rows {
            assert!(r.kl >= 1.0);
            assert_eq!(r.weight, 1.0);
            assert_eq!(r.target_node, 2);
            let expect: Vec<usize> = adjacency_row(&g, 2).filter(|&j| j != r.node).collect();
            assert_eq!(r.thresholded(cfg.beta), expect);
        }
    }

    #[test]
    fn zero_kl_leaves_rows_untouched() {
        let (g, labels) = toy();
        let lib = vec![
            entry(0, LOW_CLASS, 2, &[1, 6, 0, 2]),
            entry(1, HIGH_CLASS, 7, &[1, 6, 0, 2]),
        ];
        let cfg = ReconstructConfig {
            alpha: 1.0,
            ..ReconstructConfig::default()
        };
        let p = plan(&g, GraphView::Spatial, &toy_dists(), &lib, &labels, &cfg).unwrap();
        for r in &p.rows {
            assert_eq!(r.kl, 0.0);
            assert!(r.thresholded(0.3).into_iter().eq(adjacency_row(&g, r.node)));
        }
        assert_eq!(apply(&g, &p, 0.3, SymmetryRule::Or).unwrap(), g);
    }

    #[test]
    fn rewiring_lowers_clustering_of_scores() {
        let (g, labels) = toy();
        let s = scores();
        let cfg = ReconstructConfig {
            alpha: 1.0,
            beta: 0.5,
            ..ReconstructConfig::default()
        };
        let v = NodeValues {
            seg_score: &s,
            labels: &labels,
        };
        let (out, rep) = reconstruct(
            &g,
            GraphView::Spatial,
            &toy_dists(),
            &toy_library(),
            v,
            &cfg,
        )
        .unwrap();
        // Triangle rows become {1, 3}; the or rule keeps edges whose other end is out of scope.
        for i in 6..9 {
            assert!(out.has_edge(i, 1) && out.has_edge(i, 3));
        }
        assert!(!out.has_edge(6, 7) && !out.has_edge(7, 8) && out.has_edge(5, 6));
        let (a, r, u) = edge_diff(&g, &out);
        assert_eq!((a, r, u), (6, 3, 6));
        assert_abs_diff_eq!(rep.aep, 100.0 * 6.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.rep + rep.uep, 100.0, epsilon = 1e-12);
        assert!(rep.morans_after < rep.morans_before);
        assert_eq!(rep.changed_rows, vec![6, 7, 8]);

        let and = ReconstructConfig {
            symmetry: SymmetryRule::And,
            ..cfg
        };
        let (out_and, _) = reconstruct(
            &g,
            GraphView::Spatial,
            &toy_dists(),
            &toy_library(),
            v,
            &and,
        )
        .unwrap();
        assert!(!out_and.has_edge(6, 1) && !out_and.has_edge(5, 6));
    }

    #[test]
    fn new_edges_inherit_target_weights() {
        let (g, labels) = toy();
        let (g, _) = Graph::from_weighted_edges(
            9,
            g.edges()
                .into_iter()
                .map(|(u, v, w)| (u, v, if (u, v) == (2, 3) { 0.25 } else { w })),
        )
        .unwrap();
        let cfg = ReconstructConfig {
            alpha: 1.0,
            beta: 0.5,
            ..ReconstructConfig::default()
        };
        let p = plan(
            &g,
            GraphView::Spatial,
            &toy_dists(),
            &toy_library(),
            &labels,
            &cfg,
        )
        .unwrap();
        let out = apply(&g, &p, 0.5, SymmetryRule::Or).unwrap();
        assert_eq!(out.weight(6, 3), Some(0.25));
        assert_eq!(out.weight(6, 1), Some(1.0));
        assert_eq!(out.weight(5, 6), Some(1.0));
    }

    #[test]
    fn explicit_target_and_scope() {
        let (g, labels) = toy();
        let cfg = ReconstructConfig {
            alpha: 1.0,
            beta: 0.5,
            target: TargetPolicy::Node(4),
            scope: Scope::Nodes(vec![7, 7]),
            ..ReconstructConfig::default()
        };
        let p = plan(
            &g,
            GraphView::Spatial,
            &toy_dists(),
            &toy_library(),
            &labels,
            &cfg,
        )
        .unwrap();
        assert_eq!(p.rows.len(), 1);
        assert_eq!(p.rows[0].thresholded(0.5), vec![3, 5]);
        let bad = ReconstructConfig {
            target: TargetPolicy::Node(40),
            ..cfg.clone()
        };
        assert!(plan(
            &g,
            GraphView::Spatial,
            &toy_dists(),
            &toy_library(),
            &labels,
            &bad
        )
        .is_err());
        let bad = ReconstructConfig { beta: 1.0, ..cfg };
        assert!(plan(
            &g,
            GraphView::Spatial,
            &toy_dists(),
            &toy_library(),
            &labels,
            &bad
        )
        .is_err());
    }

    #[test]
    fn empty_census_matches_uniform() {
        let (g, labels) = toy();
        let mut d = toy_dists();
        d[7] = dist(&[0, 0, 0, 0]);
        let cfg = ReconstructConfig::default();
        let p = plan(&g, GraphView::Spatial, &d, &toy_library(), &labels, &cfg).unwrap();
        assert_eq!(p.zero_count_nodes, vec![7]);
    }

    fn arb_case() -> impl Strategy<Value = (Graph, Vec<usize>, Vec<MotifDistribution>, f64)> {
        (
            6usize..16,
            prop::collection::vec((0usize..16, 0usize..16), 5..40),
            any::<u64>(),
            0.0f64..=1.0,
        )
            .prop_map(|(n, pairs, bits, alpha)| {
                let edges: Vec<(usize, usize)> = pairs
                    .into_iter()
                    .map(|(u, v)| (u % n, v % n))
                    .filter(|(u, v)| u != v)
                    .collect();
                let g = Graph::from_edges(n, &edges).unwrap();
                let labels: Vec<usize> = (0..n).map(|i| ((bits >> i) & 1) as usize).collect();
                let dists = (0..n)
                    .map(|i| dist(&[(i % 3) as u64, (i % 5) as u64, 1, (i % 2) as u64]))
                    .collect();
                (g, labels, dists, alpha)
            })
    }

    fn lib_for(n: usize) -> Vec<LibraryEntry> {
        vec![
            entry(0, LOW_CLASS, 0, &[5, 0, 2, 0]),
            entry(1, LOW_CLASS, 1 % n, &[2, 1, 2, 1]),
            entry(2, HIGH_CLASS, 2 % n, &[0, 6, 1, 3]),
        ]
    }

    proptest! {
        #[test]
        fn rows_outside_scope_are_untouched((g, labels, dists, alpha) in arb_case()) {
            let cfg = ReconstructConfig { alpha, ..ReconstructConfig::default() };
            let p = plan(&g, GraphView::Spatial, &dists, &lib_for(g.node_count()), &labels, &cfg).unwrap();
            let scoped: Vec<usize> = p.rows.iter().map(|r| r.node).collect();
            prop_assert_eq!(scoped, scope_nodes(&Scope::High, &labels).unwrap());
            for r in &p.rows {
                prop_assert!(r.blended.iter().all(|&(_, v)| (0.0..=1.0).contains(&v)));
                prop_assert!(!r.thresholded(0.2).contains(&r.node));
            }
            // every unscoped node keeps all its original edges under the or rule
            let out = apply(&g, &p, 0.2, SymmetryRule::Or).unwrap();
            for i in (0..g.node_count()).filter(|&i| labels[i] != HIGH_CLASS) {
                for j in adjacency_row(&g, i) {
                    prop_assert!(out.has_edge(i, j));
                }
            }
        }

        #[test]
        fn lower_beta_keeps_added_edges((g, labels, dists, alpha) in arb_case(), b1 in 0.05f64..0.95, b2 in 0.05f64..0.95) {
            let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
            let cfg = ReconstructConfig { alpha, ..ReconstructConfig::default() };
            let p = plan(&g, GraphView::Spatial, &dists, &lib_for(g.node_count()), &labels, &cfg).unwrap();
            for r in &p.rows {
                let a: BTreeSet<usize> = r.thresholded(lo).into_iter().collect();
                prop_assert!(r.thresholded(hi).iter().all(|j| a.contains(j)));
            }
        }

        #[test]
        fn report_matches_edge_diff((g, labels, dists, alpha) in arb_case(), beta in 0.05f64..0.95) {
            let cfg = ReconstructConfig { alpha, beta, ..ReconstructConfig::default() };
            let p = plan(&g, GraphView::Spatial, &dists, &lib_for(g.node_count()), &labels, &cfg).unwrap();
            let out = apply(&g, &p, beta, SymmetryRule::Or).unwrap();
            let scores: Vec<f64> = (0..g.node_count()).map(|i| i as f64).collect();
            let v = NodeValues { seg_score: &scores, labels: &labels };
            if g.edge_count() > 0 && out.edge_count() > 0 && labels.iter().any(|&l| l != labels[0]) {
                let rep = report(&g, &out, &p, beta, v).unwrap();
                let (a, r, u) = edge_diff(&g, &out);
                prop_assert_eq!((rep.added, rep.removed, rep.unchanged), (a, r, u));
                prop_assert!((rep.uep + rep.rep - 100.0).abs() < 1e-9);
                prop_assert_eq!(out.edge_count(), g.edge_count() + a - r);
            }
        }

        #[test]
        fn kl_is_nonnegative(a in prop::collection::vec(0u64..50, 4), b in prop::collection::vec(0u64..50, 4)) {
            let (p, q) = (dist(&a), dist(&b));
            let kl = kl_divergence(&p.normalized, &q.normalized).unwrap();
            prop_assert!(kl >= 0.0);
            prop_assert_eq!(kl_divergence(&p.normalized, &p.normalized).unwrap(), 0.0);
        }
    }
}
