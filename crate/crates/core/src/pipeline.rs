//! End-to-end composition: train, read motif profiles off the projected
//! prototypes, rewire one view, and ablation retraining.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::{Graph, GraphView, NodeTable, UrbanGraph};
use crate::model::{evaluate, train, Metrics, TrainConfig, TrainData, TrainOutcome};
use crate::motif::{MotifCatalog, MotifDistribution};
use crate::reconstruct::{
    apply, build_library, plan, report, LibraryEntry, NodeValues, ReconstructConfig,
    ReconstructionReport,
};
use crate::rng::RngState;
use crate::walk::local_distributions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub reconstruct: ReconstructConfig,
    /// View that gets rewired.
    pub reconstruct_view: GraphView,
    /// Thresholds evaluated from the same plan; `reconstruct.beta` is
    /// appended when missing.
    pub betas: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            reconstruct: ReconstructConfig::default(),
            reconstruct_view: GraphView::Spatial,
            betas: vec![0.3, 0.2, 0.1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub train: Metrics,
    pub val: Metrics,
    pub test: Metrics,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub outcome: TrainOutcome,
    pub metrics: SplitMetrics,
    /// Per view, one entry per prototype.
    pub libraries: [Vec<LibraryEntry>; 2],
    /// Local motif distribution of every node in the rewired view.
    pub node_distributions: Vec<MotifDistribution>,
    pub sweep: Vec<ReconstructionReport>,
    /// The rewired view at `reconstruct.beta`.
    pub reconstructed: Graph,
}

/// Normalised motif distributions of a library, one row per prototype.
pub fn motif_matrix(library: &[LibraryEntry], catalog: &MotifCatalog) -> Array2<f64> {
    let mut m = Array2::zeros((library.len(), catalog.len()));
    for (k, e) in library.iter().enumerate() {
        for (j, &v) in e.distribution.normalized.iter().enumerate() {
            m[[k, j]] = v;
        }
    }
    m
}

/// Writes `prototype,class,root,<pattern ids...>`.
pub fn write_motif_matrix<W: std::io::Write>(
    library: &[LibraryEntry],
    catalog: &MotifCatalog,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["prototype".to_string(), "class".into(), "root".into()];
    header.extend(catalog.ids().iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for e in library {
        let mut row = vec![
            e.prototype.to_string(),
            e.class.to_string(),
            e.root.to_string(),
        ];
        row.extend(e.distribution.normalized.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn split_metrics(outcome: &TrainOutcome, data: &TrainData) -> Result<SplitMetrics> {
    Ok(SplitMetrics {
        train: evaluate(&outcome.model, data, &data.split.train)?,
        val: evaluate(&outcome.model, data, &data.split.val)?,
        test: evaluate(&outcome.model, data, &data.split.test)?,
    })
}

/// Named pipeline stage, used to attribute failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Train,
    Census,
    Reconstruct,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Train => "train",
            Stage::Census => "census",
            Stage::Reconstruct => "reconstruct",
        }
    }
}

/// Local motif distribution of every node of `view`, drawn from the stream
/// reserved for it under `cfg.seed`.
pub fn local_census(
    graph: &UrbanGraph,
    view: GraphView,
    cfg: &TrainConfig,
    catalog: &MotifCatalog,
) -> Result<Vec<MotifDistribution>> {
    let rng = RngState::new(cfg.seed)
        .named("local-census")
        .child(view.index() as u64);
    local_distributions(graph.view(view), cfg.walks, cfg.walk_length, catalog, rng)
}

/// One plan, applied at every threshold of `betas` plus `cfg.beta`.
/// Returns the reports in that order and the graph rewired at `cfg.beta`.
pub fn reconstruct_sweep(
    g: &Graph,
    view: GraphView,
    node_dists: &[MotifDistribution],
    library: &[LibraryEntry],
    table: &NodeTable,
    cfg: &ReconstructConfig,
    betas: &[f64],
) -> Result<(Vec<ReconstructionReport>, Graph)> {
    let values = NodeValues {
        seg_score: table.seg_score.as_slice().expect("contiguous"),
        labels: &table.seg_label,
    };
    let p = plan(g, view, node_dists, library, &table.seg_label, cfg)?;
    let mut betas = betas.to_vec();
    if !betas.contains(&cfg.beta) {
        betas.push(cfg.beta);
    }
    let mut sweep = Vec::new();
    let mut reconstructed = None;
    for &beta in &betas {
        let out = apply(g, &p, beta, cfg.symmetry)?;
        sweep.push(report(g, &out, &p, beta, values)?);
        if beta == cfg.beta {
            reconstructed = Some(out);
        }
    }
    Ok((sweep, reconstructed.expect("configured beta is swept")))
}

/// Runs every stage after ingestion; errors carry the failing stage.
pub fn run(
    graph: &UrbanGraph,
    table: &NodeTable,
    catalog: &MotifCatalog,
    cfg: &PipelineConfig,
) -> std::result::Result<PipelineResult, (Stage, crate::error::Error)> {
    let tc = &cfg.train;
    let data = TrainData::from_table(graph, table, tc).map_err(|e| (Stage::Train, e))?;
    let outcome = train(tc, &data).map_err(|e| (Stage::Train, e))?;
    let metrics = split_metrics(&outcome, &data).map_err(|e| (Stage::Train, e))?;

    let libraries = GraphView::ALL.map(|v| build_library(&outcome.projection, v, catalog));
    let view = cfg.reconstruct_view;
    let node_distributions =
        local_census(graph, view, tc, catalog).map_err(|e| (Stage::Census, e))?;
    let (sweep, reconstructed) = reconstruct_sweep(
        graph.view(view),
        view,
        &node_distributions,
        &libraries[view.index()],
        table,
        &cfg.reconstruct,
        &cfg.betas,
    )
    .map_err(|e| (Stage::Reconstruct, e))?;
    Ok(PipelineResult {
        outcome,
        metrics,
        libraries,
        node_distributions,
        sweep,
        reconstructed,
    })
}

/// Inputs that an ablation can remove.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ablation {
    Od,
    Spatial,
    /// Street-view-like feature block.
    Sv,
    /// Flow-like feature block.
    Fl,
    Poi,
}

/// Column ranges of the attribute blocks in 256-column feature tables.
pub const FEATURE_BLOCKS: [(Ablation, std::ops::Range<usize>); 3] = [
    (Ablation::Sv, 0..211),
    (Ablation::Fl, 211..235),
    (Ablation::Poi, 235..256),
];

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Od,
        Ablation::Spatial,
        Ablation::Sv,
        Ablation::Fl,
        Ablation::Poi,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Ablation::Od => "G_o",
            Ablation::Spatial => "G_s",
            Ablation::Sv => "X_SV",
            Ablation::Fl => "X_FL",
            Ablation::Poi => "X_POI",
        }
    }

    pub fn parse(key: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.key().eq_ignore_ascii_case(key))
            .ok_or_else(|| invalid(format!("unknown ablation key {key:?}")))
    }
}

/// Copies of the inputs with the named graphs made edgeless and the named
/// feature blocks zeroed.
pub fn ablated_inputs(
    graph: &UrbanGraph,
    table: &NodeTable,
    drop: &[Ablation],
) -> Result<(UrbanGraph, NodeTable)> {
    let n = graph.node_count();
    let blocks: Vec<_> = FEATURE_BLOCKS
        .iter()
        .filter(|(a, _)| drop.contains(a))
        .collect();
    if !blocks.is_empty() && table.feature_dim() != 256 {
        return Err(invalid(format!(
            "feature blocks are defined for 256 columns, table has {}",
            table.feature_dim()
        )));
    }
    if drop.contains(&Ablation::Od)
        && drop.contains(&Ablation::Spatial)
        && blocks.len() == FEATURE_BLOCKS.len()
    {
        return Err(invalid(
            "dropping both graphs and every feature block leaves nothing to learn from",
        ));
    }
    let pick = |v: GraphView, a: Ablation| {
        if drop.contains(&a) {
            Graph::empty(n)
        } else {
            graph.view(v).clone()
        }
    };
    let g = UrbanGraph::new(
        pick(GraphView::Spatial, Ablation::Spatial),
        pick(GraphView::Od, Ablation::Od),
    )?;
    let mut t = table.clone();
    for (_, range) in blocks {
        t.features
            .slice_mut(ndarray::s![.., range.clone()])
            .fill(0.0);
    }
    Ok((g, t))
}

/// Retrains with `drop` removed and reports test metrics.
pub fn ablate(
    graph: &UrbanGraph,
    table: &NodeTable,
    cfg: &TrainConfig,
    drop: &[Ablation],
) -> Result<Metrics> {
    let (g, t) = ablated_inputs(graph, table, drop)?;
    let data = TrainData::from_table(&g, &t, cfg)?;
    let out = train(cfg, &data)?;
    evaluate(&out.model, &data, &data.split.test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn inputs(d: usize) -> (UrbanGraph, NodeTable) {
        let s = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let o = Graph::from_edges(4, &[(0, 2)]).unwrap();
        let x = Array2::from_elem((4, d), 1.0);
        let socio =
            Array2::from_shape_vec((4, 2), vec![1.0, 0.0, 0.5, 0.5, 0.9, 0.1, 0.4, 0.6]).unwrap();
        (
            UrbanGraph::new(s, o).unwrap(),
            NodeTable::from_attributes(x, socio, 0.5).unwrap(),
        )
    }

    #[test]
    fn ablation_zeroes_named_inputs() {
        let (g, t) = inputs(256);
        let (g2, t2) = ablated_inputs(&g, &t, &[Ablation::Spatial, Ablation::Fl]).unwrap();
        assert_eq!(g2.view(GraphView::Spatial).edge_count(), 0);
        assert_eq!(g2.view(GraphView::Od), g.view(GraphView::Od));
        assert!(t2.features.column(211).iter().all(|&v| v == 0.0));
        assert!(t2.features.column(210).iter().all(|&v| v == 1.0));
        assert!(t2.features.column(235).iter().all(|&v| v == 1.0));
        let (g3, t3) = ablated_inputs(&g, &t, &[]).unwrap();
        assert_eq!((g3, t3), (g.clone(), t.clone()));
        assert!(ablated_inputs(&g, &t, &Ablation::ALL).is_err());
        let (g, t) = inputs(8);
        assert!(ablated_inputs(&g, &t, &[Ablation::Poi]).is_err());
        assert!(ablated_inputs(&g, &t, &[Ablation::Od]).is_ok());
    }

    #[test]
    fn ablation_keys_round_trip() {
        for a in Ablation::ALL {
            assert_eq!(Ablation::parse(a.key()).unwrap(), a);
        }
        assert!(Ablation::parse("X_NONE").is_err());
    }
}
