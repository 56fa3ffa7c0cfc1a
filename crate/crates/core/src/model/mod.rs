//! Dual-graph prototype network.
//!
//! Two GCN encoders (spatial and OD) share one fused latent space. Each graph
//! view owns a prototype set; a node's log-similarities to all prototypes
//! feed a linear classifier. Gradients are computed by hand in
//! [`objective`]; [`train`] runs full-batch gradient descent with periodic
//! prototype projection onto encoded walk bundles.

mod objective;
mod train;

pub use objective::{
    forward, loss, loss_and_gradient, similarity, softmax_rows, Forward, LossBreakdown,
};
pub use train::{
    evaluate, predict, project_prototypes, project_with, train, training_bundles, write_log,
    LogRow, Metrics, ProjectionRecord, TrainOutcome,
};

use ndarray::{Array1, Array2, ArrayViewMut2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, GraphView, SparseMatrix, UrbanGraph};
use crate::rng::RngState;
use crate::walk::encoder::glorot;
use crate::walk::LocalEncoderWeights;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Optimizer {
    Sgd,
    /// Adam with betas 0.9 / 0.999.
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub optimizer: Optimizer,
    pub max_epochs: usize,
    pub projection_interval: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub epsilon: f64,
    pub latent_dim: usize,
    pub d_in: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub gru_hidden: usize,
    pub n_proto: usize,
    pub walks: usize,
    pub walk_length: usize,
    /// Epochs without a validation-accuracy gain before stopping; 0 disables.
    pub patience: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    pub nonneg_class_weights: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            optimizer: Optimizer::Adam,
            max_epochs: 3000,
            projection_interval: 50,
            lambda1: 0.4,
            lambda2: 0.2,
            lambda3: 2.0,
            epsilon: 1e-4,
            latent_dim: 128,
            d_in: 256,
            hidden_dim: 64,
            layers: 2,
            gru_hidden: 16,
            n_proto: 5,
            walks: 8,
            walk_length: 8,
            patience: 300,
            train_frac: 0.6,
            val_frac: 0.2,
            nonneg_class_weights: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("epsilon", self.epsilon),
            ("train_frac", self.train_frac),
            ("val_frac", self.val_frac),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("{name} must be nonnegative, got {v}")));
            }
        }
        let sizes = [
            ("projection_interval", self.projection_interval),
            ("latent_dim", self.latent_dim),
            ("d_in", self.d_in),
            ("hidden_dim", self.hidden_dim),
            ("layers", self.layers),
            ("gru_hidden", self.gru_hidden),
            ("n_proto", self.n_proto),
            ("walks", self.walks),
            ("walk_length", self.walk_length),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if self.train_frac + self.val_frac >= 1.0 {
            return Err(invalid("train_frac + val_frac must leave a test share"));
        }
        Ok(())
    }
}

/// Stratified node partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Shuffles each class and cuts it by the given fractions; the test part
    /// takes the remainder. Index lists come back sorted.
    pub fn stratified(labels: &[usize], train_frac: f64, val_frac: f64, rng: RngState) -> Self {
        let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut r = rng.rng();
        let mut split = Split {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for c in 0..classes {
            let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            members.shuffle(&mut r);
            let n = members.len() as f64;
            let n_train = (train_frac * n).floor() as usize;
            let n_val = (val_frac * n).floor() as usize;
            split.train.extend_from_slice(&members[..n_train]);
            split
                .val
                .extend_from_slice(&members[n_train..n_train + n_val]);
            split.test.extend_from_slice(&members[n_train + n_val..]);
        }
        split.train.sort_unstable();
        split.val.sort_unstable();
        split.test.sort_unstable();
        split
    }
}

/// Everything the model reads: both graphs with their normalized
/// adjacencies, features, labels and the split.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub graphs: [Graph; 2],
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub split: Split,
    pub(crate) a_hat: [SparseMatrix; 2],
    pub(crate) ax: [Array2<f64>; 2],
}

impl TrainData {
    pub fn new(
        graph: &UrbanGraph,
        x: Array2<f64>,
        labels: Vec<usize>,
        split: Split,
    ) -> Result<Self> {
        let n = graph.node_count();
        if x.nrows() != n || labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "graph has {n} nodes, features {} rows, labels {}",
                x.nrows(),
                labels.len()
            )));
        }
        let class_count = labels.iter().copied().max().map_or(0, |m| m + 1).max(2);
        if split
            .train
            .iter()
            .chain(&split.val)
            .chain(&split.test)
            .any(|&i| i >= n)
        {
            return Err(invalid("split references a node outside the graph"));
        }
        let graphs = [graph.spatial.clone(), graph.od.clone()];
        let a_hat = [graphs[0].normalized_sparse(), graphs[1].normalized_sparse()];
        let ax = [a_hat[0].mul_dense(&x), a_hat[1].mul_dense(&x)];
        Ok(Self {
            graphs,
            x,
            labels,
            class_count,
            split,
            a_hat,
            ax,
        })
    }

    pub fn node_count(&self) -> usize {
        self.x.nrows()
    }

    pub fn graph(&self, view: GraphView) -> &Graph {
        &self.graphs[view.index()]
    }

    /// Training nodes of class `c`, the candidate pool for projection.
    pub fn train_nodes_of(&self, c: usize) -> Vec<usize> {
        self.split
            .train
            .iter()
            .copied()
            .filter(|&i| self.labels[i] == c)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderWeights {
    /// Per view (spatial, OD): layer matrices d_in → hidden → … → hidden.
    pub layers: [Vec<Array2<f64>>; 2],
    pub fuse_w: Array2<f64>,
    pub fuse_b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub p: Array2<f64>,
    pub class_of: Vec<usize>,
}

impl PrototypeSet {
    pub fn len(&self) -> usize {
        self.class_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_of.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeModel {
    pub format_version: u32,
    pub config: TrainConfig,
    pub class_count: usize,
    pub encoder: EncoderWeights,
    /// Indexed by [`GraphView::index`].
    pub prototypes: [PrototypeSet; 2],
    /// Rows: spatial prototypes then OD prototypes; columns: classes.
    pub fc: Array2<f64>,
    pub local: [LocalEncoderWeights; 2],
    /// Node whose walk bundle each prototype was last projected onto.
    pub roots: [Vec<Option<usize>>; 2],
}

impl PrototypeModel {
    /// Fresh weights. Each prototype starts as the local encoding of a
    /// random training node of its class.
    pub fn init(cfg: &TrainConfig, data: &TrainData) -> Result<Self> {
        Self::init_with_records(cfg, data).map(|(m, _)| m)
    }

    pub(crate) fn init_with_records(
        cfg: &TrainConfig,
        data: &TrainData,
    ) -> Result<(Self, Vec<ProjectionRecord>)> {
        cfg.validate()?;
        if data.x.ncols() != cfg.d_in {
            return Err(Error::DimensionMismatch(format!(
                "config expects d_in = {}, features have {} columns",
                cfg.d_in,
                data.x.ncols()
            )));
        }
        let base = RngState::new(cfg.seed).named("init");
        let mut r = base.rng();
        let mut view_layers = || {
            let mut ws = vec![glorot(cfg.d_in, cfg.hidden_dim, &mut r)];
            for _ in 1..cfg.layers {
                ws.push(glorot(cfg.hidden_dim, cfg.hidden_dim, &mut r));
            }
            ws
        };
        let layers = [view_layers(), view_layers()];
        let concat = 2 * cfg.layers * cfg.hidden_dim;
        let encoder = EncoderWeights {
            layers,
            fuse_w: glorot(concat, cfg.latent_dim, &mut r),
            fuse_b: Array1::zeros(cfg.latent_dim),
        };
        let c = data.class_count;
        let q = cfg.n_proto * c;
        let class_of: Vec<usize> = (0..q).map(|k| k / cfg.n_proto).collect();
        let fc = glorot(2 * q, c, &mut r);
        let local = [
            LocalEncoderWeights::init(
                cfg.d_in,
                cfg.gru_hidden,
                cfg.latent_dim,
                base.named("local-spatial"),
            ),
            LocalEncoderWeights::init(
                cfg.d_in,
                cfg.gru_hidden,
                cfg.latent_dim,
                base.named("local-od"),
            ),
        ];
        let placeholder = PrototypeSet {
            p: Array2::zeros((q, cfg.latent_dim)),
            class_of: class_of.clone(),
        };
        let mut model = Self {
            format_version: MODEL_FORMAT_VERSION,
            config: cfg.clone(),
            class_count: c,
            encoder,
            prototypes: [placeholder.clone(), placeholder],
            fc,
            local,
            roots: [vec![None; q], vec![None; q]],
        };
        let records = train::seed_prototypes(&mut model, data, base.named("prototypes"))?;
        Ok((model, records))
    }

    pub fn prototype_count(&self) -> usize {
        self.prototypes[0].len()
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub(crate) fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, mut t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Every trainable tensor with a stable name, biases as 1-row views.
    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMut2<'_, f64>)> {
        let mut out = Vec::new();
        let [ls, lo] = &mut self.encoder.layers;
        for (view, ws) in [("spatial", ls), ("od", lo)] {
            for (l, w) in ws.iter_mut().enumerate() {
                out.push((format!("gcn.{view}.{l}"), w.view_mut()));
            }
        }
        out.push(("fuse.w".to_string(), self.encoder.fuse_w.view_mut()));
        let nb = self.encoder.fuse_b.len();
        out.push((
            "fuse.b".to_string(),
            self.encoder
                .fuse_b
                .view_mut()
                .into_shape_with_order((1, nb))
                .expect("bias view"),
        ));
        let [ps, po] = &mut self.prototypes;
        out.push(("proto.spatial".to_string(), ps.p.view_mut()));
        out.push(("proto.od".to_string(), po.p.view_mut()));
        out.push(("fc".to_string(), self.fc.view_mut()));
        let [gs, go] = &mut self.local;
        for (view, g) in [("spatial", gs), ("od", go)] {
            for (name, t) in g.tensors_mut() {
                out.push((format!("local.{view}.{name}"), t));
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(invalid(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                model.format_version
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests;
