//! Planted synthetic cities and CSV ingestion.
//!
//! Each node gets a planted class (high or low segregation) and, per view, a
//! structure type. With contrast `s`, a high node takes the "segregated"
//! structure with probability `(1 + s) / 2` and a low node with probability
//! `(1 - s) / 2`, so `s = 0` draws both classes from one generator.
//!
//! Spatial view: segregated nodes sit on small rings with a triangle every
//! other position; the rest sit on long open chains with sparser triangles. OD view: segregated nodes form
//! long commute chains hooked onto a few hub blocks; the rest have short
//! links to random partners. Structured edges carry weight 1. Light filler
//! edges (weight `filler_weight`) bring each view to its edge target; they
//! barely influence walks but set the global degree scale.

use std::path::Path;

use ndarray::Array2;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, GraphView, NodeTable, UrbanGraph};
use crate::io;
use crate::rng::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_nodes: usize,
    pub spatial_edges_target: usize,
    pub od_edges_target: usize,
    pub frac_high: f64,
    pub structure_contrast: f64,
    pub feature_noise: f64,
    /// Per-coordinate class offset of the feature means.
    pub feature_signal: f64,
    pub feature_dim: usize,
    pub c: usize,
    /// Ring size for segregated spatial neighborhoods.
    pub community_size: usize,
    /// A triangle-closing chord starts at every `period`-th ring position;
    /// each ring draws its period uniformly from this list.
    pub ring_chord_periods: Vec<usize>,
    pub chain_length: usize,
    pub chain_chord_period: usize,
    /// Every `chain_leg_period`-th chain node is a pendant off the spine.
    pub chain_leg_period: usize,
    pub od_hubs: usize,
    pub od_hub_links: usize,
    pub od_chain_length: usize,
    pub od_diverse_links: usize,
    pub filler_weight: f64,
    /// Probability that a filler edge joins two nodes of the same class.
    pub spatial_homophily: f64,
    pub od_homophily: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_nodes: 842,
            spatial_edges_target: 6132,
            od_edges_target: 36334,
            frac_high: 0.5,
            structure_contrast: 1.0,
            feature_noise: 0.1,
            feature_signal: 0.05,
            feature_dim: 256,
            c: 3,
            community_size: 10,
            ring_chord_periods: vec![2],
            chain_length: 40,
            chain_chord_period: 5,
            chain_leg_period: 2,
            od_hubs: 12,
            od_hub_links: 2,
            od_chain_length: 20,
            od_diverse_links: 3,
            filler_weight: 1e-4,
            spatial_homophily: 0.5,
            od_homophily: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes;
        if n < 4 {
            return Err(invalid("synthetic city needs at least 4 nodes"));
        }
        let max_edges = n * (n - 1) / 2;
        for (name, target) in [
            ("spatial", self.spatial_edges_target),
            ("od", self.od_edges_target),
        ] {
            if target > max_edges {
                return Err(invalid(format!(
                    "infeasible {name} edge target {target}: at most {max_edges} edges on {n} nodes"
                )));
            }
        }
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(invalid(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        if self.ring_chord_periods.is_empty() {
            return Err(invalid("ring_chord_periods must not be empty"));
        }
        unit("frac_high", self.frac_high)?;
        unit("structure_contrast", self.structure_contrast)?;
        unit("spatial_homophily", self.spatial_homophily)?;
        unit("od_homophily", self.od_homophily)?;
        let n_high = self.high_count();
        if n_high == 0 || n_high == n {
            return Err(invalid("frac_high must leave both classes nonempty"));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(invalid("feature_noise must be finite and nonnegative"));
        }
        if !self.feature_signal.is_finite() || self.feature_dim == 0 {
            return Err(invalid(
                "feature_signal must be finite and feature_dim positive",
            ));
        }
        if self.c < 2 {
            return Err(invalid("c must be at least 2"));
        }
        if self.community_size < 3 || self.chain_length < 2 || self.od_chain_length < 2 {
            return Err(invalid(
                "community_size >= 3 and chain lengths >= 2 required",
            ));
        }
        if self.od_hubs == 0 || self.od_hub_links > self.od_hubs {
            return Err(invalid("need od_hubs >= 1 and od_hub_links <= od_hubs"));
        }
        if !(self.filler_weight > 0.0 && self.filler_weight.is_finite()) {
            return Err(invalid("filler_weight must be positive"));
        }
        Ok(())
    }

    pub fn high_count(&self) -> usize {
        (self.frac_high * self.n_nodes as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialMotif {
    Clustered,
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdMotif {
    HubChain,
    Diverse,
}

impl SpatialMotif {
    pub fn name(self) -> &'static str {
        match self {
            SpatialMotif::Clustered => "clustered",
            SpatialMotif::Chain => "chain",
        }
    }
}

impl OdMotif {
    pub fn name(self) -> &'static str {
        match self {
            OdMotif::HubChain => "hub_chain",
            OdMotif::Diverse => "diverse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// 1 = planted high segregation.
    pub planted_class: Vec<usize>,
    pub spatial_motif: Vec<SpatialMotif>,
    pub od_motif: Vec<OdMotif>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCity {
    pub graph: UrbanGraph,
    pub table: NodeTable,
    pub truth: GroundTruth,
}

/// Quantile split that labels exactly `n_high` of `n` nodes as high.
pub fn split_for(n: usize, n_high: usize) -> f64 {
    ((n - n_high) as f64 + 0.5) / n as f64
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCity> {
    cfg.validate()?;
    let n = cfg.n_nodes;
    let root = RngState::new(cfg.seed);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut root.named("classes").rng());
    let n_high = cfg.high_count();
    let mut class = vec![0usize; n];
    for &v in &order[..n_high] {
        class[v] = 1;
    }

    let mut trng = root.named("types").rng();
    let segregated_prob = |c: usize| {
        let sign = if c == 1 { 1.0 } else { -1.0 };
        (1.0 + sign * cfg.structure_contrast) / 2.0
    };
    let spatial_motif: Vec<SpatialMotif> = class
        .iter()
        .map(|&c| {
            if trng.random::<f64>() < segregated_prob(c) {
                SpatialMotif::Clustered
            } else {
                SpatialMotif::Chain
            }
        })
        .collect();
    let od_motif: Vec<OdMotif> = class
        .iter()
        .map(|&c| {
            if trng.random::<f64>() < segregated_prob(c) {
                OdMotif::HubChain
            } else {
                OdMotif::Diverse
            }
        })
        .collect();

    let spatial = spatial_graph(cfg, &class, &spatial_motif, root.named("spatial"))?;
    let od = od_graph(cfg, &class, &od_motif, root.named("od"))?;
    let socio = socio_rows(cfg, &class, root.named("socio"))?;
    let features = feature_rows(cfg, &class, root.named("features"));

    let table = NodeTable::from_attributes(features, socio, split_for(n, n_high))?;
    debug_assert_eq!(table.seg_label, class);
    Ok(SynthCity {
        graph: UrbanGraph::new(spatial, od)?,
        table,
        truth: GroundTruth {
            planted_class: class,
            spatial_motif,
            od_motif,
        },
    })
}

/// Adds `u–v` with weight 1 unless it is a loop or already present.
fn link(g: &mut Graph, u: usize, v: usize) {
    if u != v {
        g.insert_edge(u, v, 1.0);
    }
}

/// Splits `items` into groups of `size`, folding a short tail into the
/// previous group.
fn chunks(items: &[usize], size: usize, min_tail: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = items.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|c| c.len() < min_tail) {
        let tail = out.pop().unwrap();
        out.last_mut().unwrap().extend(tail);
    }
    out
}

/// Path (or cycle when `closed`) through `nodes`, with a chord across two
/// positions at every `period`-th node. Each chord closes one triangle. Open
/// paths also get a chord at their far end so no stretch is triangle-free.
fn band(g: &mut Graph, nodes: &[usize], closed: bool, period: usize) {
    let m = nodes.len();
    for k in 0..m {
        if k + 1 < m || (closed && m > 2) {
            link(g, nodes[k], nodes[(k + 1) % m]);
        }
        let at_end = !closed && m >= 3 && k == m - 3;
        if period > 0
            && (k % period == 0 || at_end)
            && (k + 2 < m || (closed && m > 4 && k + 2 <= m))
        {
            link(g, nodes[k], nodes[(k + 2) % m]);
        }
    }
}

/// Splits a chain group into a spine and pendant legs: every
/// `leg_period`-th node hangs off the spine node placed just before it.
fn caterpillar(nodes: &[usize], leg_period: usize) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut spine: Vec<usize> = Vec::with_capacity(nodes.len());
    let mut legs = Vec::new();
    for (j, &v) in nodes.iter().enumerate() {
        match spine.last() {
            Some(&anchor) if leg_period > 0 && (j + 1) % leg_period == 0 => legs.push((v, anchor)),
            _ => spine.push(v),
        }
    }
    (spine, legs)
}

fn spatial_graph(
    cfg: &SynthConfig,
    class: &[usize],
    motif: &[SpatialMotif],
    rng: RngState,
) -> Result<Graph> {
    let n = class.len();
    let mut r = rng.rng();
    let mut g = Graph::empty(n);
    let mut clustered: Vec<usize> = (0..n)
        .filter(|&v| motif[v] == SpatialMotif::Clustered)
        .collect();
    let mut chained: Vec<usize> = (0..n)
        .filter(|&v| motif[v] == SpatialMotif::Chain)
        .collect();
    clustered.shuffle(&mut r);
    chained.shuffle(&mut r);

    for ring in chunks(&clustered, cfg.community_size, 3) {
        let period = match cfg.ring_chord_periods.as_slice() {
            [only] => *only,
            many => *many.choose(&mut r).expect("validated nonempty"),
        };
        band(&mut g, &ring, true, period);
    }
    for chain in chunks(&chained, cfg.chain_length, 2) {
        let (spine, legs) = caterpillar(&chain, cfg.chain_leg_period);
        band(&mut g, &spine, false, cfg.chain_chord_period);
        for (leg, anchor) in legs {
            link(&mut g, leg, anchor);
        }
    }
    fill(
        &mut g,
        class,
        cfg.spatial_edges_target,
        cfg.spatial_homophily,
        cfg.filler_weight,
        true,
        &mut r,
        "spatial",
    )?;
    Ok(g)
}

fn od_graph(cfg: &SynthConfig, class: &[usize], motif: &[OdMotif], rng: RngState) -> Result<Graph> {
    let n = class.len();
    let mut r = rng.rng();
    let mut g = Graph::empty(n);
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(&mut r);
    let hubs: Vec<usize> = all[..cfg.od_hubs.min(n)].to_vec();
    let mut commuters: Vec<usize> = (0..n).filter(|&v| motif[v] == OdMotif::HubChain).collect();
    let diverse: Vec<usize> = (0..n).filter(|&v| motif[v] == OdMotif::Diverse).collect();
    commuters.shuffle(&mut r);

    for chain in chunks(&commuters, cfg.od_chain_length, 2) {
        for w in chain.windows(2) {
            link(&mut g, w[0], w[1]);
        }
    }
    for &v in &commuters {
        for &h in hubs.choose_multiple(&mut r, cfg.od_hub_links) {
            link(&mut g, v, h);
        }
    }
    if diverse.len() > 1 {
        for &v in &diverse {
            for _ in 0..cfg.od_diverse_links {
                let u = diverse[r.random_range(0..diverse.len())];
                link(&mut g, v, u);
            }
        }
    }
    fill(
        &mut g,
        class,
        cfg.od_edges_target,
        cfg.od_homophily,
        cfg.filler_weight,
        false,
        &mut r,
        "od",
    )?;
    Ok(g)
}

/// Adds random filler edges until `g` has `target` edges.
///
/// Filler only joins nodes on opposite sides of a random bipartition, so it
/// closes no triangles among itself. With `triangle_free`, candidates that
/// would close a triangle with any existing edges are skipped as well, which
/// keeps planted triangle counts readable in the full graph.
#[allow(clippy::too_many_arguments)]
fn fill<R: Rng>(
    g: &mut Graph,
    class: &[usize],
    target: usize,
    homophily: f64,
    weight: f64,
    triangle_free: bool,
    r: &mut R,
    name: &str,
) -> Result<()> {
    if g.edge_count() > target {
        return Err(invalid(format!(
            "infeasible {name} edge target {target}: planted structure alone has {} edges",
            g.edge_count()
        )));
    }
    let n = class.len();
    let side: Vec<usize> = (0..n).map(|_| r.random_range(0..2)).collect();
    let mut pools: [[Vec<usize>; 2]; 2] = Default::default();
    for v in 0..n {
        pools[class[v]][side[v]].push(v);
    }
    let max_attempts = 200 * target + 10_000;
    let mut attempts = 0;
    while g.edge_count() < target {
        attempts += 1;
        if attempts > max_attempts {
            return Err(invalid(format!(
                "could not place {target} {name} edges; lower the target"
            )));
        }
        let u = r.random_range(0..n);
        let same = r.random::<f64>() < homophily;
        let c = if same { class[u] } else { 1 - class[u] };
        let pool = &pools[c][1 - side[u]];
        if pool.is_empty() {
            continue;
        }
        let v = pool[r.random_range(0..pool.len())];
        if u == v || g.has_edge(u, v) || (triangle_free && shares_neighbor(g, u, v)) {
            continue;
        }
        g.insert_edge(u, v, weight);
    }
    Ok(())
}

fn shares_neighbor(g: &Graph, u: usize, v: usize) -> bool {
    let (a, b) = (g.neighbors(u), g.neighbors(v));
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// High nodes get one dominant category; low nodes a near-uniform mix.
fn socio_rows(cfg: &SynthConfig, class: &[usize], rng: RngState) -> Result<Array2<f64>> {
    let c = cfg.c;
    let mut r = rng.rng();
    let gamma = Gamma::new(40.0, 1.0).map_err(|e| invalid(e.to_string()))?;
    let mut socio = Array2::zeros((class.len(), c));
    for (i, &y) in class.iter().enumerate() {
        let mut row: Vec<f64> = if y == 1 {
            let dominant = r.random_range(0..c);
            let top = r.random_range(0.6..0.9);
            let rest: Vec<f64> = (0..c - 1).map(|_| r.random::<f64>() + 1e-3).collect();
            let rest_sum: f64 = rest.iter().sum();
            let mut it = rest.iter();
            (0..c)
                .map(|k| {
                    if k == dominant {
                        top
                    } else {
                        (1.0 - top) * it.next().unwrap() / rest_sum
                    }
                })
                .collect()
        } else {
            (0..c).map(|_| gamma.sample(&mut r)).collect()
        };
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
        for k in 0..c {
            socio[[i, k]] = row[k];
        }
    }
    Ok(socio)
}

fn feature_rows(cfg: &SynthConfig, class: &[usize], rng: RngState) -> Array2<f64> {
    let mut r = rng.rng();
    let d = cfg.feature_dim;
    let dir: Vec<f64> = (0..d)
        .map(|_| if r.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut x = Array2::zeros((class.len(), d));
    for (i, &y) in class.iter().enumerate() {
        let sign = if y == 1 { 1.0 } else { -1.0 };
        for k in 0..d {
            let z: f64 = StandardNormal.sample(&mut r);
            x[[i, k]] = sign * cfg.feature_signal * dir[k] + cfg.feature_noise * z;
        }
    }
    x
}

pub const NODES_FILE: &str = "nodes.csv";
pub const SPATIAL_FILE: &str = "spatial.csv";
pub const OD_FILE: &str = "od.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";

/// Writes the node table, both edge lists and the ground truth into `dir`.
pub fn export(city: &SynthCity, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let nodes = dir.join(NODES_FILE);
    let spatial = dir.join(SPATIAL_FILE);
    let od = dir.join(OD_FILE);
    let truth = dir.join(GROUND_TRUTH_FILE);
    io::write_node_table(&city.table.features, &city.table.socio, io::create(&nodes)?)?;
    io::write_edge_list(city.graph.view(GraphView::Spatial), io::create(&spatial)?)?;
    io::write_edge_list(city.graph.view(GraphView::Od), io::create(&od)?)?;
    let mut w = csv::Writer::from_writer(io::create(&truth)?);
    w.write_record(["node_id", "planted_class", "spatial_motif", "od_motif"])?;
    for i in 0..city.truth.planted_class.len() {
        w.write_record([
            i.to_string(),
            city.truth.planted_class[i].to_string(),
            city.truth.spatial_motif[i].name().to_string(),
            city.truth.od_motif[i].name().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(vec![nodes, spatial, od, truth])
}

/// Duplicate edge rows dropped while ingesting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub spatial_duplicates: usize,
    pub od_duplicates: usize,
}

/// Loads a city from the three CSV files; segregation scores and labels are
/// computed with `quantile_split`.
pub fn ingest(
    node_csv: &Path,
    spatial_csv: &Path,
    od_csv: &Path,
    quantile_split: f64,
) -> Result<(UrbanGraph, NodeTable, IngestReport)> {
    let name = |p: &Path| p.display().to_string();
    let (features, socio) = io::read_node_table(io::open(node_csv)?, &name(node_csv))?;
    let n = features.nrows();
    if n == 0 {
        return Err(Error::InvalidInput(format!("{}: no nodes", name(node_csv))));
    }
    let (spatial, spatial_duplicates) =
        io::read_edge_list(io::open(spatial_csv)?, &name(spatial_csv), n)?;
    let (od, od_duplicates) = io::read_edge_list(io::open(od_csv)?, &name(od_csv), n)?;
    for (file, dups) in [(spatial_csv, spatial_duplicates), (od_csv, od_duplicates)] {
        if dups > 0 {
            log::warn!("{}: dropped {dups} duplicate edge rows", file.display());
        }
    }
    let table = NodeTable::from_attributes(features, socio, quantile_split)?;
    Ok((
        UrbanGraph::new(spatial, od)?,
        table,
        IngestReport {
            spatial_duplicates,
            od_duplicates,
        },
    ))
}

/// Default quantile split used for a city of `cfg`'s shape.
pub fn default_split(cfg: &SynthConfig) -> f64 {
    split_for(cfg.n_nodes, cfg.high_count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_nodes: 120,
            spatial_edges_target: 600,
            od_edges_target: 1500,
            feature_dim: 16,
            od_hubs: 4,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn hits_targets_and_class_sizes() {
        let cfg = small();
        let city = generate(&cfg).unwrap();
        assert_eq!(city.graph.view(GraphView::Spatial).edge_count(), 600);
        assert_eq!(city.graph.view(GraphView::Od).edge_count(), 1500);
        assert_eq!(
            city.truth.planted_class.iter().filter(|&&c| c == 1).count(),
            60
        );
        assert_eq!(city.table.seg_label, city.truth.planted_class);
        for i in 0..cfg.n_nodes {
            let s: f64 = city.table.socio.row(i).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SynthConfig { seed: 1, ..small() };
        assert_ne!(
            generate(&small()).unwrap().graph,
            generate(&other).unwrap().graph
        );
    }

    #[test]
    fn contrast_one_separates_structure_types() {
        let city = generate(&small()).unwrap();
        for (i, &c) in city.truth.planted_class.iter().enumerate() {
            let expect = if c == 1 {
                SpatialMotif::Clustered
            } else {
                SpatialMotif::Chain
            };
            assert_eq!(city.truth.spatial_motif[i], expect);
        }
    }

    #[test]
    fn infeasible_targets() {
        let cfg = SynthConfig {
            spatial_edges_target: 120 * 119 / 2 + 1,
            ..small()
        };
        assert!(generate(&cfg).is_err());
        let cfg = SynthConfig {
            spatial_edges_target: 10,
            ..small()
        };
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn uneven_split_labels_exactly() {
        let cfg = SynthConfig {
            frac_high: 0.3,
            ..small()
        };
        let city = generate(&cfg).unwrap();
        assert_eq!(city.table.seg_label, city.truth.planted_class);
    }
}
